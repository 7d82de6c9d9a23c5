from __future__ import annotations

import numpy as np

from .tensor import backward


def analytic_grads(f, params):
    for p in params:
        p.zero_grad()
    out = f()
    backward(out)
    return [p.grad.copy() for p in params]


def numeric_grads(f, params, h=1e-5):
    """Central differences of the scalar ``f()`` with respect to every entry of ``params``."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"non-finite objective near entry {i} of {p.name or p.shape}")
            g.reshape(-1)[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def grad_check(f, params, h=1e-5):
    """Largest ``|analytic - fd| / max(1, |fd|)`` over all entries of ``params``.

    ``f`` takes no arguments and builds its scalar output from the tensors in
    ``params``, which must have ``requires_grad`` set.
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    exact = analytic_grads(f, params)
    approx = numeric_grads(f, params, h)
    worst = 0.0
    for ga, gf in zip(exact, approx):
        if ga.size:
            worst = max(worst, float(np.max(np.abs(ga - gf) / np.maximum(1.0, np.abs(gf)))))
    return worst
