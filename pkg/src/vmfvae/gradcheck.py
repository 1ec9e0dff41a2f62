"""Central finite-difference checks of tape gradients."""
from dataclasses import dataclass

import numpy as np

from . import tensor as T


@dataclass(frozen=True)
class GradMismatch:
    name: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


def relative_error(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def numeric_gradient(loss_fn, tensor, index, step=1e-6):
    original = tensor.values[index]
    with T.no_grad():
        tensor.values[index] = original + step
        up = loss_fn().item()
        tensor.values[index] = original - step
        down = loss_fn().item()
    tensor.values[index] = original
    return (up - down) / (2.0 * step)


def check_gradients(loss_fn, tensors, rel_tol, step=1e-6, max_entries=None, rng=None, floor=1e-6):
    """Compare ``backward`` gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must rebuild the loss deterministically (fixed sampler noise).
    With ``max_entries`` only that many randomly chosen entries per tensor are
    probed. Returns the list of :class:`GradMismatch` above ``rel_tol``.
    """
    for t in tensors:
        t.grad = None
    T.reset_tape()
    T.backward(loss_fn())
    analytic = {id(t): (np.zeros_like(t.values) if t.grad is None else t.grad.copy()) for t in tensors}
    for t in tensors:
        t.grad = None
    failures = []
    for k, t in enumerate(tensors):
        indices = list(np.ndindex(t.shape))
        if max_entries is not None and len(indices) > max_entries:
            pick = (rng or np.random.default_rng(k)).choice(len(indices), size=max_entries, replace=False)
            indices = [indices[i] for i in sorted(pick)]
        for idx in indices:
            a = float(analytic[id(t)][idx])
            n = numeric_gradient(loss_fn, t, idx, step)
            err = relative_error(a, n, floor)
            if err > rel_tol:
                failures.append(GradMismatch(t.name or f"tensor{k}", idx, a, n, err))
    return failures
