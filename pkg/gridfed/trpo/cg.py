"""
Conjugate gradient for damped Fisher systems
"""

import logging
from typing import Callable, NamedTuple

import numpy as np

logger = logging.getLogger(__name__)


class CgSolution(NamedTuple):
    x: np.ndarray
    residual: float
    iterations: int


def conjugate_gradient(fvp: Callable[[np.ndarray], np.ndarray], b: np.ndarray,
                       iters: int = 10, tol: float = 1e-10) -> CgSolution:
    """Approximately solve H x = b for symmetric positive-definite H; returns the best iterate"""
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    rr = float(r @ r)
    best = CgSolution(x.copy(), float(np.sqrt(rr)), 0)

    for i in range(iters):
        if np.sqrt(rr) <= tol:
            break
        hp = fvp(p)
        curvature = float(p @ hp)
        if not np.isfinite(curvature) or curvature <= 0.0:
            logger.warning(f"⚠️ CG stopped at iteration {i}: curvature {curvature}")
            break
        alpha = rr / curvature
        x = x + alpha * p
        r = r - alpha * hp
        rr_new = float(r @ r)
        if np.sqrt(rr_new) < best.residual:
            best = CgSolution(x.copy(), float(np.sqrt(rr_new)), i + 1)
        p = r + (rr_new / rr) * p
        rr = rr_new

    logger.debug(f"CG residual {best.residual:.3e} after {best.iterations} iterations")
    return best
