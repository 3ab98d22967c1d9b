"""Hot numeric kernels: masked softmax, layer norm, Adam, cross-entropy,
embedding-gradient scatter.

Every kernel comes in two interchangeable implementations:

* ``<name>_numpy`` - vectorized numpy, always available;
* ``<name>_jit``   - loop-style source compiled with ``numba.njit``
                     (``None`` when numba is missing).

The public name ``<name>`` is bound to one of the two at import time, see
:mod:`pivotnmt.accel`. Matrix products are deliberately left to numpy/BLAS;
these kernels cover the memory-bound elementwise/reduction work where fusing
loops pays off.

Masking convention: boolean masks are True at positions that participate.
Masked-out attention scores are replaced by ``-inf`` before the softmax, so
their weights are exactly ``0.0`` (not merely small), which in turn makes
decoder causality hold to bit-exact equality. Rows with no allowed position
yield all-zero weight rows.
"""

import numpy as np

from . import accel

# --------------------------------------------------------------------------
# masked softmax over rows
# --------------------------------------------------------------------------


def masked_softmax_numpy(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise softmax of ``scores`` (N, C) restricted to ``mask`` (N, C)."""
    neg = np.where(mask, scores, -np.inf)
    row_max = neg.max(axis=1, keepdims=True)
    # exp(-inf - finite) == 0.0 exactly; guard fully-masked rows against nan
    safe_max = np.where(np.isfinite(row_max), row_max, 0.0)
    e = np.exp(neg - safe_max)
    z = e.sum(axis=1, keepdims=True)
    return e / np.where(z == 0.0, 1.0, z)


def _masked_softmax_loops(scores, mask):
    n, c = scores.shape
    out = np.zeros((n, c), dtype=np.float64)
    for i in range(n):
        row_max = -np.inf
        for j in range(c):
            if mask[i, j] and scores[i, j] > row_max:
                row_max = scores[i, j]
        if row_max == -np.inf:
            continue
        z = 0.0
        for j in range(c):
            if mask[i, j]:
                e = np.exp(scores[i, j] - row_max)
                out[i, j] = e
                z += e
        for j in range(c):
            out[i, j] /= z
    return out


def masked_softmax_backward_numpy(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """Jacobian-vector product of the softmax; masked columns have probs==0
    and therefore gradient exactly 0."""
    inner = (probs * dprobs).sum(axis=1, keepdims=True)
    return probs * (dprobs - inner)


def _masked_softmax_backward_loops(probs, dprobs):
    n, c = probs.shape
    out = np.empty((n, c), dtype=np.float64)
    for i in range(n):
        inner = 0.0
        for j in range(c):
            inner += probs[i, j] * dprobs[i, j]
        for j in range(c):
            out[i, j] = probs[i, j] * (dprobs[i, j] - inner)
    return out


# --------------------------------------------------------------------------
# layer norm over the last dimension
# --------------------------------------------------------------------------


def layer_norm_numpy(x, gain, bias, eps):
    """Normalize rows of ``x`` (N, D); returns (y, mean, rstd) for backward."""
    mean = x.mean(axis=1)
    var = ((x - mean[:, None]) ** 2).mean(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mean[:, None]) * rstd[:, None] * gain + bias
    return y, mean, rstd


def _layer_norm_loops(x, gain, bias, eps):
    n, d = x.shape
    y = np.empty((n, d), dtype=np.float64)
    mean = np.empty(n, dtype=np.float64)
    rstd = np.empty(n, dtype=np.float64)
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += x[i, j]
        mu = s / d
        v = 0.0
        for j in range(d):
            t = x[i, j] - mu
            v += t * t
        r = 1.0 / np.sqrt(v / d + eps)
        mean[i] = mu
        rstd[i] = r
        for j in range(d):
            y[i, j] = (x[i, j] - mu) * r * gain[j] + bias[j]
    return y, mean, rstd


def layer_norm_backward_numpy(dy, x, mean, rstd, gain):
    xhat = (x - mean[:, None]) * rstd[:, None]
    a = dy * gain
    s1 = a.mean(axis=1, keepdims=True)
    s2 = (a * xhat).mean(axis=1, keepdims=True)
    dx = rstd[:, None] * (a - s1 - xhat * s2)
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    return dx, dgain, dbias


def _layer_norm_backward_loops(dy, x, mean, rstd, gain):
    n, d = x.shape
    dx = np.empty((n, d), dtype=np.float64)
    dgain = np.zeros(d, dtype=np.float64)
    dbias = np.zeros(d, dtype=np.float64)
    for i in range(n):
        s1 = 0.0
        s2 = 0.0
        for j in range(d):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            a = dy[i, j] * gain[j]
            s1 += a
            s2 += a * xhat
            dgain[j] += dy[i, j] * xhat
            dbias[j] += dy[i, j]
        s1 /= d
        s2 /= d
        for j in range(d):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            a = dy[i, j] * gain[j]
            dx[i, j] = rstd[i] * (a - s1 - xhat * s2)
    return dx, dgain, dbias


# --------------------------------------------------------------------------
# Adam update (in place, flat views)
# --------------------------------------------------------------------------


def adam_update_numpy(param, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """One bias-corrected Adam step; bc1/bc2 are 1 - beta**t."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    param -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def _adam_update_loops(param, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    for i in range(param.shape[0]):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        mhat = m[i] / bc1
        vhat = v[i] / bc2
        param[i] -= lr * mhat / (np.sqrt(vhat) + eps)


# --------------------------------------------------------------------------
# token-level cross entropy
# --------------------------------------------------------------------------


def cross_entropy_loss_numpy(logits, targets, mask):
    """Mean negative log-likelihood over rows where ``mask`` is True."""
    count = int(mask.sum())
    row_max = logits.max(axis=1, keepdims=True)
    lse = row_max[:, 0] + np.log(np.exp(logits - row_max).sum(axis=1))
    nll = lse - logits[np.arange(logits.shape[0]), targets]
    return float((nll * mask).sum() / count)


def _cross_entropy_loss_loops(logits, targets, mask):
    n, vsize = logits.shape
    total = 0.0
    count = 0
    for i in range(n):
        if not mask[i]:
            continue
        count += 1
        row_max = logits[i, 0]
        for j in range(1, vsize):
            if logits[i, j] > row_max:
                row_max = logits[i, j]
        z = 0.0
        for j in range(vsize):
            z += np.exp(logits[i, j] - row_max)
        total += row_max + np.log(z) - logits[i, targets[i]]
    return total / count


def cross_entropy_grad_numpy(logits, targets, mask):
    """Returns (loss, dlogits) in one pass."""
    count = int(mask.sum())
    row_max = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - row_max)
    z = e.sum(axis=1, keepdims=True)
    p = e / z
    rows = np.arange(logits.shape[0])
    nll = np.log(z[:, 0]) + row_max[:, 0] - logits[rows, targets]
    loss = float((nll * mask).sum() / count)
    dlogits = p
    dlogits[rows, targets] -= 1.0
    dlogits *= mask[:, None] / count
    return loss, dlogits


def _cross_entropy_grad_loops(logits, targets, mask):
    n, vsize = logits.shape
    dlogits = np.zeros((n, vsize), dtype=np.float64)
    count = 0
    for i in range(n):
        if mask[i]:
            count += 1
    total = 0.0
    inv = 1.0 / count
    for i in range(n):
        if not mask[i]:
            continue
        row_max = logits[i, 0]
        for j in range(1, vsize):
            if logits[i, j] > row_max:
                row_max = logits[i, j]
        z = 0.0
        for j in range(vsize):
            z += np.exp(logits[i, j] - row_max)
        total += row_max + np.log(z) - logits[i, targets[i]]
        for j in range(vsize):
            dlogits[i, j] = np.exp(logits[i, j] - row_max) / z * inv
        dlogits[i, targets[i]] -= inv
    return total * inv, dlogits


# --------------------------------------------------------------------------
# embedding gradient scatter-add
# --------------------------------------------------------------------------


def embedding_grad_numpy(ids, dout, demb):
    """Accumulate ``dout`` rows into ``demb`` at positions ``ids`` (in place)."""
    np.add.at(demb, ids, dout)


def _embedding_grad_loops(ids, dout, demb):
    n, d = dout.shape
    for i in range(n):
        row = ids[i]
        for j in range(d):
            demb[row, j] += dout[i, j]


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

if accel.HAS_NUMBA:
    masked_softmax_jit = accel.njit(_masked_softmax_loops)
    masked_softmax_backward_jit = accel.njit(_masked_softmax_backward_loops)
    layer_norm_jit = accel.njit(_layer_norm_loops)
    layer_norm_backward_jit = accel.njit(_layer_norm_backward_loops)
    adam_update_jit = accel.njit(_adam_update_loops)
    cross_entropy_loss_jit = accel.njit(_cross_entropy_loss_loops)
    cross_entropy_grad_jit = accel.njit(_cross_entropy_grad_loops)
    embedding_grad_jit = accel.njit(_embedding_grad_loops)
else:  # pragma: no cover
    masked_softmax_jit = None
    masked_softmax_backward_jit = None
    layer_norm_jit = None
    layer_norm_backward_jit = None
    adam_update_jit = None
    cross_entropy_loss_jit = None
    cross_entropy_grad_jit = None
    embedding_grad_jit = None

if accel.JIT_ENABLED:
    masked_softmax = masked_softmax_jit
    masked_softmax_backward = masked_softmax_backward_jit
    layer_norm = layer_norm_jit
    layer_norm_backward = layer_norm_backward_jit
    adam_update = adam_update_jit
    cross_entropy_loss = cross_entropy_loss_jit
    cross_entropy_grad = cross_entropy_grad_jit
    embedding_grad = embedding_grad_jit
else:
    masked_softmax = masked_softmax_numpy
    masked_softmax_backward = masked_softmax_backward_numpy
    layer_norm = layer_norm_numpy
    layer_norm_backward = layer_norm_backward_numpy
    adam_update = adam_update_numpy
    cross_entropy_loss = cross_entropy_loss_numpy
    cross_entropy_grad = cross_entropy_grad_numpy
    embedding_grad = embedding_grad_numpy
