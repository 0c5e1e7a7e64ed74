"""Finite-difference gradient checking against recorded gradients."""

from __future__ import annotations

import numpy as np

from revar import neuro
from revar.neuro import Tape, Tensor

EPSILON = 1e-6
TOLERANCE = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.abs(analytic - numeric)
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((diff / scale).max()) if diff.size else 0.0


def gradcheck(make_loss, tensors: dict[str, Tensor], tol: float = TOLERANCE) -> float:
    """Compare recorded gradients of `make_loss()` against central finite
    differences over every entry of every tensor in `tensors`.

    `make_loss` must rebuild the loss from the live tensor objects so data
    perturbations take effect. Returns the worst relative error.
    """
    for t in tensors.values():
        t.grad = None
    loss = make_loss()
    topo_backward(loss)
    worst = 0.0
    for name, t in tensors.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        with neuro.no_grad():
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + EPSILON
                up = make_loss().item()
                flat[i] = original - EPSILON
                down = make_loss().item()
                flat[i] = original
                num_flat[i] = (up - down) / (2 * EPSILON)
        err = relative_error(analytic, numeric)
        worst = max(worst, err)
        assert err < tol, f"gradient mismatch on '{name}': {err:.3e}"
    return worst


def topo_backward(loss: Tensor) -> None:
    """Backward pass without a Tape (for checking free tensors)."""
    tape = Tape()
    tape.backward(loss)
