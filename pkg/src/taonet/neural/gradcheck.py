"""Central finite-difference validation of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def gradient_check(loss_fn, params: dict[str, Tensor], epsilon: float = 1e-4,
                   rng: np.random.Generator | None = None,
                   entries_per_param: int = 4) -> float:
    """Max relative error between backprop and (f(x+e)-f(x-e))/2e.

    `loss_fn` must be a pure scalar function of `params` so it can be
    re-evaluated under perturbation. A random subset of entries per
    parameter is probed.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ValueError("epsilon must lie in (0, 1e-2]")
    rng = rng or np.random.Generator(np.random.PCG64(0))

    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}

    worst = 0.0
    for name, p in params.items():
        size = p.data.size
        count = min(entries_per_param, size)
        flat_indices = rng.choice(size, size=count, replace=False)
        for i in flat_indices:
            original = p.data.flat[i]
            p.data.flat[i] = original + epsilon
            f_plus = float(loss_fn().data)
            p.data.flat[i] = original - epsilon
            f_minus = float(loss_fn().data)
            p.data.flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            a = float(analytic[name].flat[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, rel)

    for p in params.values():
        p.grad = None
    return worst
