"""Central finite-difference check of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor


def numeric_gradients(fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5, coords=None) -> list[np.ndarray]:
    """Central differences ``(f(x+h) - f(x-h)) / 2h``; coordinates not in ``coords`` stay NaN."""
    out = [np.full(p.data.shape, np.nan) for p in params]
    if coords is None:
        coords = [(i, j) for i, p in enumerate(params) for j in range(p.data.size)]
    for i, j in coords:
        flat = params[i].data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + h
        up = fn().item()
        flat[j] = orig - h
        down = fn().item()
        flat[j] = orig
        out[i].reshape(-1)[j] = (up - down) / (2.0 * h)
    return out


def grad_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
    per: str = "tensor",
) -> float:
    """Largest relative error between analytic and numeric gradients.

    ``per="tensor"`` measures each parameter tensor as a whole,
    ``max|a - n| / max(max|a|, max|n|)``, so a coordinate whose true gradient is
    below the finite-difference noise floor cannot dominate. ``per="entry"`` is
    the stricter ``|a - n| / max(|a|, |n|, 1e-8)`` per coordinate.
    ``max_coords`` subsamples coordinates (seeded) for very large models.
    """
    if per not in ("tensor", "entry"):
        raise ValueError(f"per must be 'tensor' or 'entry', got {per!r}")
    for p in params:
        p.zero_grad()
    fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    coords = [(i, j) for i, p in enumerate(params) for j in range(p.data.size)]
    if max_coords is not None and len(coords) > max_coords:
        pick = np.random.default_rng(seed).choice(len(coords), size=max_coords, replace=False)
        coords = [coords[k] for k in sorted(pick)]
    numeric = numeric_gradients(fn, params, h, coords)

    worst = 0.0
    for a, n in zip(analytic, numeric):
        seen = ~np.isnan(n)
        if not seen.any():
            continue
        a, n = a[seen], n[seen]
        diff = np.abs(a - n)
        if per == "entry":
            err = float(np.max(diff / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)))
        else:
            scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))))
            err = float(np.max(diff)) / scale if scale > 1e-12 else float(np.max(diff))
        worst = max(worst, err)
    return worst
