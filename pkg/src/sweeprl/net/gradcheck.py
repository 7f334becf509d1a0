"""Central finite-difference gradient checking.

The check probes the network through a fixed random linear functional of
its output, L = sum(forward(x) * probe), computes analytic parameter
gradients via backward(probe), and compares them against central
differences (L(p + h) - L(p - h)) / (2h) on a random subset of parameter
coordinates. This path is completely independent of the backward
implementations it audits.
"""
from __future__ import annotations

import numpy as np

from .layers import Network

DEFAULT_COORDS = 200
DEFAULT_STEP = 1e-5
# Gradients this small are compared absolutely; relative error on values at
# the finite-difference noise floor is meaningless.
SMALL_GRAD = 1e-7


def grad_check(
    network: Network,
    x: np.ndarray,
    rng: np.random.Generator | None = None,
    coords: int = DEFAULT_COORDS,
    step: float = DEFAULT_STEP,
) -> float:
    """Return the max (mostly relative) error between backprop and central differences."""
    rng = rng or np.random.default_rng(0)
    out = network.forward(x)
    probe = rng.standard_normal(out.shape).astype(network.dtype)
    network.zero_gradients()
    network.backward(probe)
    params = network.parameters()
    analytic = [g.copy() for g in network.gradients()]

    sizes = [p.size for p in params]
    total = int(np.sum(sizes))
    count = min(coords, total)
    chosen = rng.choice(total, size=count, replace=False)

    worst = 0.0
    offsets = np.cumsum([0] + sizes)
    for flat_index in chosen:
        which = int(np.searchsorted(offsets, flat_index, side="right") - 1)
        local = int(flat_index - offsets[which])
        param = params[which].reshape(-1)
        original = param[local]
        param[local] = original + step
        loss_hi = float(np.sum(network.forward(x) * probe))
        param[local] = original - step
        loss_lo = float(np.sum(network.forward(x) * probe))
        param[local] = original
        numeric = (loss_hi - loss_lo) / (2.0 * step)
        ana = float(analytic[which].reshape(-1)[local])
        scale = max(abs(numeric), abs(ana))
        if scale < SMALL_GRAD:
            error = abs(numeric - ana)
        else:
            error = abs(numeric - ana) / scale
        worst = max(worst, error)
    return worst
