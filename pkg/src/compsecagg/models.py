"""Small differentiable models with hand-written gradients.

Both use a softmax cross-entropy head so two-class toy data and ten-class IDX
data go through the same code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _xent(probs: np.ndarray, y: np.ndarray) -> float:
    return float(-np.mean(np.log(probs[np.arange(y.size), y] + 1e-300)))


@dataclass(frozen=True)
class ToyModel:
    arch: str  # "logreg" | "mlp"
    n_features: int
    n_classes: int = 2
    hidden: int = 16

    def __post_init__(self):
        if self.arch not in ("logreg", "mlp"):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.n_features < 1 or self.n_classes < 2 or self.hidden < 1:
            raise ValueError("need n_features >= 1, n_classes >= 2, hidden >= 1")

    def _shapes(self):
        d, k, h = self.n_features, self.n_classes, self.hidden
        if self.arch == "logreg":
            return [(d, k), (k,)]
        return [(d, h), (h,), (h, k), (k,)]

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self._shapes())

    def unpack(self, theta: np.ndarray) -> list[np.ndarray]:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        out, pos = [], 0
        for s in self._shapes():
            size = int(np.prod(s))
            out.append(theta[pos:pos + size].reshape(s))
            pos += size
        return out

    def init(self, rng, scale: float = 0.1) -> np.ndarray:
        parts = []
        for s in self._shapes():
            if len(s) == 2:
                parts.append(rng.normal(0.0, scale / np.sqrt(s[0]), size=s).ravel())
            else:
                parts.append(np.zeros(s))
        return np.concatenate(parts)

    def logits(self, theta, X):
        p = self.unpack(theta)
        if self.arch == "logreg":
            W, b = p
            return X @ W + b
        W1, b1, W2, b2 = p
        return np.tanh(X @ W1 + b1) @ W2 + b2

    def loss(self, theta, X, y) -> float:
        return _xent(_softmax(self.logits(theta, X)), y)

    def loss_and_grad(self, theta, X, y) -> tuple[float, np.ndarray]:
        p = self.unpack(theta)
        n = y.size
        if self.arch == "logreg":
            W, b = p
            probs = _softmax(X @ W + b)
            g = probs.copy()
            g[np.arange(n), y] -= 1.0
            g /= n
            return _xent(probs, y), np.concatenate([(X.T @ g).ravel(), g.sum(axis=0)])
        W1, b1, W2, b2 = p
        a = np.tanh(X @ W1 + b1)
        probs = _softmax(a @ W2 + b2)
        g = probs.copy()
        g[np.arange(n), y] -= 1.0
        g /= n
        gW2 = a.T @ g
        gb2 = g.sum(axis=0)
        ga = (g @ W2.T) * (1.0 - a**2)
        gW1 = X.T @ ga
        gb1 = ga.sum(axis=0)
        return _xent(probs, y), np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])

    def predict(self, theta, X) -> np.ndarray:
        return np.argmax(self.logits(theta, X), axis=1)

    def accuracy(self, theta, X, y) -> float:
        return float(np.mean(self.predict(theta, X) == y))
