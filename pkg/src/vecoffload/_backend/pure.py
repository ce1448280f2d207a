"""Reference numpy implementation of the dense-network kernels.

The compiled extension (`_fast`) mirrors this module exactly; the two must
stay numerically interchangeable (same op order, same rectifier subgradient
convention: slope 0 at exactly zero).  Shapes: weights are (fan_in, fan_out),
inputs are (batch, features); gradients are summed over the batch.
"""

import numpy as np

LOG_FLOOR = 1e-12


def _forward_hidden(ws, bs, x):
    """Activations per layer and the raw output-layer preactivation."""
    acts = [x]
    for w, b in zip(ws[:-1], bs[:-1]):
        x = np.maximum(x @ w + b, 0.0)
        acts.append(x)
    return acts, x @ ws[-1] + bs[-1]


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def policy_forward(ws, bs, x):
    """Action probabilities, shape (batch, actions)."""
    _, z = _forward_hidden(ws, bs, x)
    return _softmax(z)


def value_forward(ws, bs, x):
    """State values, shape (batch,)."""
    _, z = _forward_hidden(ws, bs, x)
    return z[:, 0]


def _backprop(ws, acts, delta):
    """Push an output-layer delta back through the stack; sums over batch."""
    dws = [None] * len(ws)
    dbs = [None] * len(ws)
    for layer in range(len(ws) - 1, -1, -1):
        dws[layer] = acts[layer].T @ delta
        dbs[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ ws[layer].T) * (acts[layer] > 0.0)
    return dws, dbs


def actor_backward(ws, bs, x, actions, advantages, entropy_coef):
    """Summed ascent gradient of sum_n [A_n log pi(a_n) + delta H_n].

    The advantage is treated as a constant.  Returns (dws, dbs) in ascent
    direction; callers descending must negate.
    """
    acts, z = _forward_hidden(ws, bs, x)
    probs = _softmax(z)
    logp = np.log(np.maximum(probs, LOG_FLOOR))
    entropy = -(probs * logp).sum(axis=1, keepdims=True)
    # d/dz of the entropy term is -p (log p + H); of the log-likelihood term,
    # A (onehot(a) - p)
    delta = -entropy_coef * probs * (logp + entropy)
    delta[np.arange(x.shape[0]), actions] += advantages
    delta -= probs * advantages[:, None]
    return _backprop(ws, acts, delta)


def critic_backward(ws, bs, x, targets):
    """Summed gradient of sum_n (G_n - V(s_n))^2, plus that loss value.

    Gradient is in descent-ready form (apply as params - lr * grad).
    """
    acts, z = _forward_hidden(ws, bs, x)
    residual = targets - z[:, 0]
    loss = float(residual @ residual)
    delta = (-2.0 * residual)[:, None]
    dws, dbs = _backprop(ws, acts, delta)
    return dws, dbs, loss
