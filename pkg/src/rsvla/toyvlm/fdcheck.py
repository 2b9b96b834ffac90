"""Central finite-difference gradient verification.

This is the independent oracle for every analytic gradient in the package;
it never feeds the production path.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Mapping

import numpy as np


@dataclass(frozen=True)
class FdReport:
    max_rel_err: float
    mean_rel_err: float
    worst_param: str
    n_coords: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < 1e-4


def relative_error(analytic: float, numeric: float) -> float:
    diff = abs(analytic - numeric)
    denom = max(abs(analytic), abs(numeric))
    # treat near-zero pairs on an absolute scale
    return diff if denom < 1e-6 else diff / denom


def finite_diff_check(loss_fn: Callable[[Mapping[str, np.ndarray]], float],
                      params: Mapping[str, np.ndarray],
                      analytic: Mapping[str, np.ndarray],
                      step: float = 1e-5) -> FdReport:
    """Compare analytic gradients against (f(x+h) - f(x-h)) / 2h per coordinate."""
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    errs = []
    worst = ("", -1.0)
    for name, grad in analytic.items():
        arr = work[name]
        flat = arr.reshape(-1)
        gflat = np.asarray(grad, dtype=np.float64).reshape(-1)
        if gflat.size != flat.size:
            raise ValueError(f"gradient/parameter size mismatch for {name!r}")
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = loss_fn(work)
            flat[i] = orig - step
            f_minus = loss_fn(work)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = relative_error(float(gflat[i]), numeric)
            errs.append(err)
            if err > worst[1]:
                worst = (f"{name}[{i}]", err)
    return FdReport(max_rel_err=float(max(errs)),
                    mean_rel_err=float(np.mean(errs)),
                    worst_param=worst[0],
                    n_coords=len(errs))
