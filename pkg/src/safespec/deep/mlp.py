"""Small fully connected networks with hand-written backpropagation."""

from __future__ import annotations

import numpy as np

TOPS = {
    "identity": (None, None),
    "clamp01": (0.0, 1.0),
    "clamp_log": (-10.0, 6.0),
    "tanh": (-1.0, 1.0),
}


class Mlp:
    """ReLU hidden layers and one of the ``TOPS`` output activations.

    Weights are stored as ``(fan_in, fan_out)`` so a batch ``x`` of shape
    ``(n, fan_in)`` maps through ``x @ W + b``.
    """

    def __init__(self, sizes, top="identity", rng=None, bias=0.0, final_scale=3e-3):
        if top not in TOPS:
            raise ValueError(f"unknown top activation {top!r}")
        rng = np.random.default_rng(rng)
        self.sizes = tuple(int(n) for n in sizes)
        self.top = top
        self.weights, self.biases = [], []
        last = len(self.sizes) - 2
        for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = final_scale if k == last else 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.full(fan_out, float(bias)))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "Mlp":
        new = Mlp.__new__(Mlp)
        new.sizes, new.top = self.sizes, self.top
        new.weights = [W.copy() for W in self.weights]
        new.biases = [b.copy() for b in self.biases]
        return new

    def load_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def forward(self, x):
        """Returns ``(output, cache)``; ``cache`` feeds :meth:`backward`."""
        h = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [h]
        n = len(self.weights)
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            if k < n - 1:
                h = np.maximum(z, 0.0)
                acts.append(h)
        out = self._top(z)
        return out, (acts, z)

    def __call__(self, x):
        return self.forward(x)[0]

    def raw(self, x):
        """Pre-activation output of the top layer."""
        return self.forward(x)[1][1]

    def _top(self, z):
        if self.top == "identity":
            return z
        if self.top == "tanh":
            return np.tanh(z)
        lo, hi = TOPS[self.top]
        return np.clip(z, lo, hi)

    def _top_grad(self, z):
        if self.top == "identity":
            return np.ones_like(z)
        if self.top == "tanh":
            return 1.0 - np.tanh(z) ** 2
        lo, hi = TOPS[self.top]
        return ((z > lo) & (z < hi)).astype(float)

    def backward(self, cache, grad_out, need_params=True, raw=False):
        """Gradients of ``sum(grad_out * output)``.

        With ``raw`` the top activation is skipped, i.e. the gradient is that of
        ``sum(grad_out * pre_activation)``. Returns ``(param_grads, grad_input)``
        with ``param_grads`` aligned to :attr:`params` (``None`` when
        ``need_params`` is false).
        """
        acts, z = cache
        g = np.asarray(grad_out, dtype=float).reshape(z.shape)
        if not raw:
            g = g * self._top_grad(z)
        grads = [None] * (2 * len(self.weights)) if need_params else None
        for k in range(len(self.weights) - 1, -1, -1):
            h = acts[k]
            if need_params:
                grads[2 * k] = h.T @ g
                grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k].T
            if k > 0:
                g = g * (h > 0)
        return grads, g


class Adam:
    """Adaptive moment estimation over a list of arrays updated in place."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        """Descent step along ``grads``."""
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def soft_update(target: Mlp, source: Mlp, tau: float) -> None:
    """``target <- tau * source + (1 - tau) * target``."""
    if not 0.0 < tau < 1.0:
        raise ValueError("soft-update coefficient must lie in (0, 1)")
    for t, s in zip(target.params, source.params):
        t *= 1.0 - tau
        t += tau * s


def grad_norm(grads) -> float:
    return float(np.sqrt(sum(np.sum(g * g) for g in grads)))
