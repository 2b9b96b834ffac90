from .autodiff import Tensor, backward, cosine_t, parameter, softmax_rows
from .checkpoint import load_checkpoint, save_checkpoint
from .fdcheck import FdReport, finite_diff_check, relative_error
from .model import (FULL_SCALE, TRAINABLE_NAMES, TokenSeq, ToyModelConfig,
                    caption_loss, caption_loss_t, cross_modal_attention,
                    decode_logits, extract_patches, init_params, patch_embed,
                    split_param_groups, total_loss)
from .schedule import TrainConfig, lr_at
from .synth import TrainItem, generate_dataset, planted_alphabet, split_dataset
from .train import TrainReport, group_checksum, train

__all__ = [
    "Tensor", "backward", "cosine_t", "parameter", "softmax_rows",
    "load_checkpoint", "save_checkpoint",
    "FdReport", "finite_diff_check", "relative_error",
    "FULL_SCALE", "TRAINABLE_NAMES", "TokenSeq", "ToyModelConfig",
    "caption_loss", "caption_loss_t", "cross_modal_attention", "decode_logits",
    "extract_patches", "init_params", "patch_embed", "split_param_groups",
    "total_loss",
    "TrainConfig", "lr_at",
    "TrainItem", "generate_dataset", "planted_alphabet", "split_dataset",
    "TrainReport", "group_checksum", "train",
]
