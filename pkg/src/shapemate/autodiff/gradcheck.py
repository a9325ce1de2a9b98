"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries from dominating."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def numeric_grad(
    fn: Callable[[], Tensor], param: Tensor, h: float = 1e-6, entries: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of scalar ``fn()`` w.r.t. selected flat entries of ``param``."""
    flat = param.data.reshape(-1)
    idx = np.arange(flat.size) if entries is None else np.asarray(entries)
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn().item()
        flat[i] = orig - h
        fm = fn().item()
        flat[i] = orig
        out[j] = (fp - fm) / (2 * h)
    return idx, out


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-6,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-7,
    refine_steps: Sequence[float] = (),
    refine_above: float = 1e-5,
) -> float:
    """Max relative error between backprop and finite differences over ``params``.

    ``fn`` must be a pure function of the parameter values (no state updates).
    With ``max_entries`` a random subset of each tensor's entries is checked.

    Piecewise-linear nets (ReLU, max pooling) have switch points; a central
    difference whose step straddles one is not a derivative estimate. Entries
    whose error at ``h`` exceeds ``refine_above`` are re-differenced at each of
    ``refine_steps`` and scored against the closest estimate. A wrong gradient
    still fails: away from a switch every step size agrees with the others.
    """
    for p in params:
        p.grad = None
    fn().backward()
    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        entries = None
        if max_entries is not None and p.data.size > max_entries:
            entries = rng.choice(p.data.size, size=max_entries, replace=False)
        idx, numeric = numeric_grad(fn, p, h, entries)
        a = analytic.reshape(-1)[idx]
        err = relative_error(a, numeric, floor)
        for step in refine_steps:
            redo = err > refine_above
            if not redo.any():
                break
            _, again = numeric_grad(fn, p, step, idx[redo])
            err[redo] = np.minimum(err[redo], relative_error(a[redo], again, floor))
        worst = max(worst, float(err.max(initial=0.0)))
    return worst
