"""Shared numerical check helpers."""
import numpy as np

from shotline import autodiff as ad

GRAD_H = 1e-3
GRAD_TOL = 1e-3


def rel_err(a, b) -> float:
    """Max elementwise |a-b| / max(|a|, |b|, 1e-6)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float((np.abs(a - b) / denom).max())


def check_gradients(build_loss, params, h=GRAD_H, tol=GRAD_TOL) -> float:
    """Compare tape gradients of build_loss() against central differences.

    build_loss must rebuild the graph from the current parameter values
    on every call. Returns the worst relative error seen.
    """
    for p in params:
        p.grad = None
    loss = build_loss()
    loss.backward()
    tape = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    worst = 0.0
    for p, got in zip(params, tape):
        fd = ad.finite_difference_gradient(lambda _x: build_loss(), p, h)
        worst = max(worst, rel_err(got, fd))
    assert worst <= tol, f"gradient mismatch: rel err {worst:.3e} > {tol}"
    return worst
