from .config import ENV_PREFIX, RunConfig, load_config, parse_config_text
from .embed import hash_text_embedding
from .formats import read_grid, write_grid
from .records import (AnnotationRecord, ingest, parse_record, read_records,
                      rle_decode, rle_encode, write_records)
from .selfcheck import CheckResult, run_selfcheck

__all__ = [
    "ENV_PREFIX", "RunConfig", "load_config", "parse_config_text",
    "hash_text_embedding", "read_grid", "write_grid",
    "AnnotationRecord", "ingest", "parse_record", "read_records",
    "rle_decode", "rle_encode", "write_records",
    "CheckResult", "run_selfcheck",
]
