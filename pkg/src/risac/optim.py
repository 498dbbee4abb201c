"""Shared solver plumbing: projected gradient, alternating driver, FD oracle.

The projected-gradient routine runs Armijo backtracking on the ambient
(pre-projection) objective and accepts a step only if the projected point
does not increase the objective, which keeps the accepted trace monotone on
nonconvex feasible sets such as the unit-modulus torus.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SolverConfig",
    "SolverResult",
    "projected_gradient",
    "alternating_minimize",
    "finite_difference_gradient",
]


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    tol_rel: float = 1e-8
    max_iter: int = 2000
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    restarts: int = 8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack must lie in (0, 1)")
        if not self.tol_rel > 0:
            raise ValueError("tol_rel must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


@dataclasses.dataclass(eq=False)
class SolverResult:
    x: np.ndarray
    objective: float
    trace: np.ndarray
    converged: bool
    iterations: int


def _relative_drop(prev: float, new: float) -> float:
    return (prev - new) / max(abs(prev), 1e-300)


def projected_gradient(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    projection: Callable[[np.ndarray], np.ndarray],
    init: np.ndarray,
    cfg: SolverConfig = SolverConfig(),
) -> SolverResult:
    """Minimize ``objective`` over the set fixed by ``projection``.

    ``gradient`` is the conjugate (Wirtinger) gradient for complex variables,
    the ordinary gradient for real ones. The trace holds the objective at the
    accepted iterates and is non-increasing.
    """
    x = projection(np.asarray(init))
    f = float(objective(x))
    trace = [f]
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        g = np.asarray(gradient(x))
        gnorm_sq = float(np.real(np.vdot(g, g)))
        if gnorm_sq == 0.0:
            converged = True
            break
        step = cfg.initial_step
        accepted = False
        while step > 1e-20:
            y = x - step * g
            # Armijo sufficient decrease on the ambient point, acceptance on
            # the projected one.
            if float(objective(y)) <= f - cfg.armijo_c * step * gnorm_sq:
                y_proj = projection(y)
                f_proj = float(objective(y_proj))
                if f_proj <= f:
                    x, f_new = y_proj, f_proj
                    accepted = True
                    break
            step *= cfg.backtrack
        if not accepted:
            converged = True
            break
        trace.append(f_new)
        if _relative_drop(f, f_new) < cfg.tol_rel:
            f = f_new
            converged = True
            break
        f = f_new
    return SolverResult(x, f, np.asarray(trace), converged, it)


def alternating_minimize(
    blocks: Sequence[Callable[[], float]],
    cfg: SolverConfig = SolverConfig(),
) -> SolverResult:
    """Cycle through block updates until the shared objective stalls.

    Each block closure updates its own variables in place and returns the
    objective value after the update; blocks must not increase the objective.
    """
    if not blocks:
        raise ValueError("need at least one block")
    trace = []
    prev = np.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        for block in blocks:
            prev_block = trace[-1] if trace else np.inf
            val = float(block())
            if trace and val > prev_block + 1e-12 * max(1.0, abs(prev_block)):
                raise RuntimeError("block update increased the objective")
            trace.append(val)
        current = trace[-1]
        if np.isfinite(prev) and _relative_drop(prev, current) < cfg.tol_rel:
            converged = True
            break
        prev = current
    x = np.asarray([])  # blocks own the variables
    obj = trace[-1] if trace else np.inf
    return SolverResult(x, obj, np.asarray(trace), converged, it)


def finite_difference_gradient(
    objective: Callable[[np.ndarray], float],
    x: np.ndarray,
    step: float = 1e-6,
) -> np.ndarray:
    """Central-difference gradient; complex inputs get the Wirtinger d/dconj(x).

    For real x this is the plain central difference. For complex x the real
    and imaginary parts are perturbed independently and combined as
    (df/dRe + j df/dIm) / 2, matching the conjugate-gradient convention used
    by the analytic gradients in this package.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.asarray(x)
    flat = x.ravel()
    is_complex = np.iscomplexobj(x)
    out = np.zeros(flat.shape, dtype=complex if is_complex else float)

    def df(delta):
        return (objective((flat + delta).reshape(x.shape))
                - objective((flat - delta).reshape(x.shape))) / (2.0 * step)

    for k in range(flat.size):
        delta = np.zeros(flat.shape, dtype=flat.dtype)
        delta[k] = step
        d_re = df(delta)
        if is_complex:
            delta[k] = 1j * step
            d_im = df(delta)
            out[k] = 0.5 * (d_re + 1j * d_im)
        else:
            out[k] = d_re
    return out.reshape(x.shape)
