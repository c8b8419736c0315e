"""Pure NumPy versions of the logistic-loss kernels.

Same signatures and semantics as the compiled ``_kernels`` module; used when
the extension is not built or ``FORCINGSET_PURE_PYTHON`` is set.
"""

import numpy as np


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def logits(X1, theta):
    return X1 @ theta


def sample_losses(X1, y, theta):
    z = X1 @ theta
    return _softplus((1.0 - 2.0 * y) * z)


def sample_grads(X1, y, theta):
    r = _sigmoid(X1 @ theta) - y
    return r[:, None] * X1


def loss_grad(X1, y, theta):
    z = X1 @ theta
    n = X1.shape[0]
    loss = float(np.sum(_softplus((1.0 - 2.0 * y) * z))) / n
    grad = X1.T @ (_sigmoid(z) - y) / n
    return loss, grad


def hessian(X1, theta):
    s = _sigmoid(X1 @ theta)
    w = s * (1.0 - s)
    H = (X1.T * w) @ X1 / X1.shape[0]
    # force exact symmetry
    return np.triu(H) + np.triu(H, 1).T
