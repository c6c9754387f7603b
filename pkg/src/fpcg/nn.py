"""Minimal neural machinery: Adam, an MLP, and a recurrent bin embedder.

Everything is float64 numpy with analytic gradients; the test suite checks
every gradient against central finite differences. No autograd, no GPU.
"""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam optimizer over a flat list of parameter arrays (updated in place)."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Mlp:
    """Fully connected net, tanh hidden layers, linear output, MSE loss."""

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        self.sizes = list(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x: np.ndarray) -> list[np.ndarray]:
        """All layer activations, input first, output last."""
        acts = [x]
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else np.tanh(z)
            acts.append(a)
        return acts

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[-1]

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
        """Mean squared error over all batch entries and output dims."""
        acts = self.forward(x)
        yhat = acts[-1]
        diff = yhat - y
        loss = float(np.mean(diff**2))
        denom = diff.size
        delta = 2.0 * diff / denom
        grads: list[np.ndarray] = []
        for i in range(len(self.weights) - 1, -1, -1):
            a_prev = acts[i]
            grads.append(delta.sum(axis=0))            # bias
            grads.append(a_prev.T @ delta)             # weight
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - acts[i] ** 2)
        grads.reverse()
        return loss, grads


def dc_loss(v: np.ndarray, y: np.ndarray) -> float:
    """Affinity-matching loss |V V^T - Y Y^T|_F^2 in O(n d^2).

    Expanded as |V^T V|^2 - 2 |V^T Y|^2 + |Y^T Y|^2 so the n x n affinity
    matrices are never materialized.
    """
    v = np.asarray(v, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if v.ndim != 2 or y.ndim != 2 or v.shape[0] != y.shape[0]:
        from .errors import ShapeMismatchError
        raise ShapeMismatchError(
            f"embeddings {v.shape} and assignments {y.shape} must share rows"
        )
    vtv = v.T @ v
    vty = v.T @ y
    yty = y.T @ y
    return float((vtv**2).sum() - 2.0 * (vty**2).sum() + (yty**2).sum())


def dc_loss_grad(v: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of :func:`dc_loss` with respect to the embedding rows."""
    return 4.0 * (v @ (v.T @ v) - y @ (y.T @ v))


class RnnEmbedder:
    """Recurrent frame encoder with a per-bin linear projection to embeddings.

    For a (frames, bins) feature matrix S the hidden state follows
    ``h_t = tanh(s_t W_xh + h_{t-1} W_hh + b_h)`` and every bin f of frame t
    gets the unit-normalized embedding of ``h_t W_p[f] + b_p[f]``.
    """

    def __init__(self, n_bins: int, hidden: int, embed_dim: int, rng: np.random.Generator):
        self.n_bins = n_bins
        self.hidden = hidden
        self.embed_dim = embed_dim
        lim_x = np.sqrt(6.0 / (n_bins + hidden))
        lim_h = np.sqrt(6.0 / (2 * hidden))
        lim_p = np.sqrt(6.0 / (hidden + embed_dim))
        self.w_xh = rng.uniform(-lim_x, lim_x, size=(n_bins, hidden))
        self.w_hh = rng.uniform(-lim_h, lim_h, size=(hidden, hidden))
        self.b_h = np.zeros(hidden)
        self.w_p = rng.uniform(-lim_p, lim_p, size=(n_bins, hidden, embed_dim))
        self.b_p = np.zeros((n_bins, embed_dim))

    @property
    def params(self) -> list[np.ndarray]:
        return [self.w_xh, self.w_hh, self.b_h, self.w_p, self.b_p]

    def _hidden_states(self, s: np.ndarray) -> np.ndarray:
        t_frames = s.shape[0]
        h = np.zeros((t_frames, self.hidden))
        prev = np.zeros(self.hidden)
        xw = s @ self.w_xh
        for t in range(t_frames):
            prev = np.tanh(xw[t] + prev @ self.w_hh + self.b_h)
            h[t] = prev
        return h

    def embed(self, s: np.ndarray) -> np.ndarray:
        """Unit-norm embeddings, shape (frames * bins, embed_dim)."""
        h = self._hidden_states(s)
        u = np.einsum("th,fhd->tfd", h, self.w_p) + self.b_p[None, :, :]
        r = np.sqrt((u**2).sum(axis=2, keepdims=True) + 1e-24)
        return (u / r).reshape(-1, self.embed_dim)

    def loss_and_grads(self, s: np.ndarray, y: np.ndarray,
                       scale: float = 1.0) -> tuple[float, list[np.ndarray]]:
        """dc_loss (times ``scale``) and gradients for one (frames, bins) input."""
        t_frames, n_bins = s.shape
        h = self._hidden_states(s)
        u = np.einsum("th,fhd->tfd", h, self.w_p) + self.b_p[None, :, :]
        r = np.sqrt((u**2).sum(axis=2, keepdims=True) + 1e-24)
        v = u / r
        flat_v = v.reshape(-1, self.embed_dim)
        loss = scale * dc_loss(flat_v, y)
        dv = (scale * dc_loss_grad(flat_v, y)).reshape(t_frames, n_bins, self.embed_dim)
        # through the row normalization: du = (dv - v (v . dv)) / r
        dot = (v * dv).sum(axis=2, keepdims=True)
        du = (dv - v * dot) / r
        g_wp = np.einsum("th,tfd->fhd", h, du)
        g_bp = du.sum(axis=0)
        dh = np.einsum("fhd,tfd->th", self.w_p, du)
        # backprop through time
        g_wxh = np.zeros_like(self.w_xh)
        g_whh = np.zeros_like(self.w_hh)
        g_bh = np.zeros_like(self.b_h)
        dz_next = np.zeros(self.hidden)
        for t in range(t_frames - 1, -1, -1):
            total = dh[t] + dz_next @ self.w_hh.T
            dz = total * (1.0 - h[t] ** 2)
            g_wxh += np.outer(s[t], dz)
            g_bh += dz
            if t > 0:
                g_whh += np.outer(h[t - 1], dz)
            dz_next = dz
        return loss, [g_wxh, g_whh, g_bh, g_wp, g_bp]


def kmeans_two(x: np.ndarray, seed: int, iters: int = 30) -> np.ndarray:
    """Deterministic 2-means assignment of rows; seeded farthest-pair init."""
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    d = ((x - x[first]) ** 2).sum(axis=1)
    second = int(np.argmax(d))
    centers = np.stack([x[first], x[second]])
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d0 = ((x - centers[0]) ** 2).sum(axis=1)
        d1 = ((x - centers[1]) ** 2).sum(axis=1)
        new_assign = (d1 < d0).astype(np.int64)
        if np.array_equal(new_assign, assign) and _ > 0:
            break
        assign = new_assign
        for c in (0, 1):
            mask = assign == c
            if mask.any():
                centers[c] = x[mask].mean(axis=0)
    return assign
