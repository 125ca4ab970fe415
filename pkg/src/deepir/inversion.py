"""Gradient-based feature inversion: find level-(L-1) features whose
forward image matches given level-L features.

The default solver is limited-memory BFGS (two-loop recursion, history 10)
with Armijo backtracking, falling back to steepest descent whenever the
quasi-Newton direction is not a descent direction. Accepted iterates never
increase the loss, so the returned trace is nonincreasing.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import backbone
from .backbone import WeightsBundle
from .errors import DeepirError
from .tensors import FeatureMap

_ARMIJO_C1 = 1e-4
_BACKTRACK = 0.5
_MAX_TRIALS = 30


@dataclass(frozen=True)
class InversionConfig:
    max_iterations: int = 200
    tolerance: float = 1e-5  # relative loss change
    optimizer: str = "lbfgs"  # "lbfgs" | "gd"
    history: int = 10
    init: str = "resized"  # "resized" | "random"
    random_init_range: tuple = (0.0, 1.0)
    project_nonneg: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.optimizer not in ("lbfgs", "gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.init not in ("resized", "random"):
            raise ValueError(f"unknown init mode {self.init!r}")


class _Objective:
    """Loss/gradient of the reconstruction residual, with a cached forward
    pass so a line-search evaluation can be reused for the gradient."""

    def __init__(self, target: FeatureMap, bundle: WeightsBundle, level: int):
        self._chain = backbone._LEVEL_CHAINS[level + 1]
        self._target = target.data
        self._bundle = bundle
        self._level = level

    def loss(self, x: np.ndarray):
        out, cache = backbone._run_chain(x, self._chain, self._bundle)
        if out.shape != self._target.shape:
            raise ValueError(
                f"forward output shape {out.shape} does not match target "
                f"{self._target.shape}"
            )
        residual = out - self._target.astype(out.dtype, copy=False)
        r64 = residual.ravel().astype(np.float64, copy=False)
        return float(r64 @ r64), (residual, cache)

    def gradient(self, state) -> np.ndarray:
        residual, cache = state
        return backbone._chain_input_grad(2.0 * residual, cache)


def invert(
    target: FeatureMap,
    bundle: WeightsBundle,
    init: FeatureMap,
    cfg: InversionConfig = InversionConfig(),
):
    """Minimize ||forward_between(x) - target||_F^2 starting from init.

    Returns (features, loss_trace); the trace holds the initial loss and one
    entry per accepted step, and is nonincreasing.
    """
    obj = _Objective(target, bundle, init.layer)
    x = init.data.astype(np.float32) if init.data.dtype != np.float64 else init.data.copy()
    if cfg.project_nonneg:
        x = np.maximum(x, 0)
    f, state = obj.loss(x)
    if not np.isfinite(f):
        raise DeepirError("inversion aborted: non-finite loss at the initial point")
    g = obj.gradient(state)
    trace = [f]

    mem: deque = deque(maxlen=cfg.history)
    for it in range(cfg.max_iterations):
        gnorm = float(np.abs(g).max())
        if gnorm <= 1e-12 or f <= 1e-30:
            break

        d = _direction(g, mem) if cfg.optimizer == "lbfgs" else -g.astype(np.float64)
        gd = float(g.ravel().astype(np.float64) @ d.ravel())
        if gd >= 0:
            d = -g.astype(np.float64)
            gd = -float(
                g.ravel().astype(np.float64) @ g.ravel().astype(np.float64)
            )

        step = 1.0 if mem else min(1.0, 1.0 / max(1.0, np.sqrt(-gd)))
        accepted = None
        for _ in range(_MAX_TRIALS):
            x_new = (x + step * d).astype(x.dtype)
            if cfg.project_nonneg:
                x_new = np.maximum(x_new, 0)
            f_new, state_new = obj.loss(x_new)
            # a non-finite trial just means the step was too long
            if np.isfinite(f_new) and f_new <= f + _ARMIJO_C1 * step * gd:
                accepted = (x_new, f_new, state_new)
                break
            step *= _BACKTRACK
        if accepted is None:
            break
        x_new, f_new, state_new = accepted
        g_new = obj.gradient(state_new)

        s = (x_new.astype(np.float64) - x.astype(np.float64)).ravel()
        y = (g_new.astype(np.float64) - g.astype(np.float64)).ravel()
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            mem.append((s, y, 1.0 / sy))

        converged = abs(f - f_new) <= cfg.tolerance * max(abs(f), 1e-30)
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        if converged:
            break

    return FeatureMap(x, layer=init.layer), trace


def _direction(g: np.ndarray, mem: deque) -> np.ndarray:
    """L-BFGS two-loop recursion; returns minus the approximate Newton step."""
    q = -g.ravel().astype(np.float64)
    if not mem:
        return q.reshape(g.shape)
    alphas = []
    for s, y, rho in reversed(mem):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    s_last, y_last, _ = mem[-1]
    q *= float(s_last @ y_last) / float(y_last @ y_last)
    for (s, y, rho), a in zip(mem, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q.reshape(g.shape)
