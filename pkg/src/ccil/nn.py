"""Small numpy MLP: forward, reverse-mode gradients, input Jacobians, Adam,
spectral-norm projection and JSON checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class Mlp:
    """ReLU hidden layers, identity output. ``weights[i]`` is (out, in)."""

    widths: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.weights) != len(self.widths) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match widths")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.widths[i + 1], self.widths[i]) or b.shape != (self.widths[i + 1],):
                raise ValueError(f"layer {i}: shape mismatch with widths {self.widths}")

    @property
    def d_in(self) -> int:
        return self.widths[0]

    @property
    def d_out(self) -> int:
        return self.widths[-1]

    @property
    def params(self) -> list[np.ndarray]:
        return [p for W, b in zip(self.weights, self.biases) for p in (W, b)]

    def with_params(self, params: list[np.ndarray]) -> "Mlp":
        return Mlp(self.widths, list(params[0::2]), list(params[1::2]), self.activation)

    def copy(self) -> "Mlp":
        return self.with_params([p.copy() for p in self.params])

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d_in:
            raise ValueError(f"input dimension {x.shape[-1]} != {self.d_in}")
        return x

    def forward(self, x) -> np.ndarray:
        x = self._check(x)
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W.T + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    __call__ = forward

    def forward_cache(self, x):
        """Forward pass keeping layer inputs for :meth:`backward`."""
        x = np.atleast_2d(self._check(x))
        inputs = []
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            h = h @ W.T + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h, inputs

    def backward(self, inputs, dy):
        """Backpropagate ``dy`` (dL/dy for each row).

        Returns (param_grads, dx); param grads are summed over rows and
        ordered like :attr:`params`.
        """
        grads = [None] * (2 * len(self.weights))
        g = np.asarray(dy, dtype=float)
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = inputs[i]
            grads[2 * i] = g.T @ h_in
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i]
            if i > 0:
                # h_in is a post-ReLU activation; subgradient 0 at the kink
                g = g * (h_in > 0)
        return grads, g

    def jacobian(self, x) -> np.ndarray:
        """d forward / d x; (d_out, d_in) for one point, (N, d_out, d_in) for a batch."""
        x = self._check(x)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        J = np.broadcast_to(self.weights[0], (len(X),) + self.weights[0].shape)
        h = X @ self.weights[0].T + self.biases[0]
        for W, b in zip(self.weights[1:], self.biases[1:]):
            mask = (h > 0).astype(float)
            J = np.einsum("oh,nh,nhi->noi", W, mask, J)
            h = np.maximum(h, 0.0) @ W.T + b
        J = np.array(J)
        return J[0] if single else J


def init(widths, seed: int = 0) -> Mlp:
    """Gaussian weights scaled by 1/sqrt(fan_in), zero biases."""
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2 or any(w <= 0 for w in widths):
        raise ValueError("need at least two positive widths")
    gen = np.random.Generator(np.random.PCG64(seed))
    weights = [gen.standard_normal((o, i)) / np.sqrt(i) for i, o in zip(widths[:-1], widths[1:])]
    biases = [np.zeros(o) for o in widths[1:]]
    return Mlp(widths, weights, biases)


def forward(m: Mlp, x) -> np.ndarray:
    return m.forward(x)


def grad_input(m: Mlp, x) -> np.ndarray:
    return m.jacobian(x)


def grad_params(m: Mlp, x, target, loss: str = "mse", weights=None):
    """Mean loss over the batch and its exact parameter gradients.

    ``mse`` is the squared L2 error per row; ``weights`` optionally scales
    each row (the mean stays over rows).
    """
    if loss != "mse":
        raise ValueError(f"unknown loss {loss!r}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    target = np.asarray(target, dtype=float).reshape(len(x), -1)
    if len(x) == 0:
        raise ValueError("empty batch")
    y, inputs = m.forward_cache(x)
    err = y - target
    per_row = np.sum(err**2, axis=1)
    w = np.ones(len(x)) if weights is None else np.asarray(weights, dtype=float)
    value = float(np.mean(w * per_row))
    if not np.isfinite(value):
        raise FloatingPointError("non-finite loss")
    dy = (2.0 / len(x)) * w[:, None] * err
    grads, _ = m.backward(inputs, dy)
    return value, grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params, grads, state: AdamState, lr: float = 1e-3):
    """One Adam update; returns new parameter arrays and the new state."""
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_m = [b1 * m + (1 - b1) * g for m, g in zip(state.m, grads)]
    new_v = [b2 * v + (1 - b2) * g * g for v, g in zip(state.v, grads)]
    c1 = 1 - b1**t
    c2 = 1 - b2**t
    new_params = [
        p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps) for p, m, v in zip(params, new_m, new_v)
    ]
    return new_params, AdamState(new_m, new_v, t, b1, b2, state.eps)


def spectral_norm(W, iters: int = 1000, tol: float = 1e-13, u0=None):
    """Largest singular value of ``W`` by power iteration on W^T W.

    Returns ``(sigma, v)``; pass ``v`` back as ``u0`` to warm-start.
    """
    W = np.asarray(W, dtype=float)
    if not np.any(W):
        return 0.0, np.ones(W.shape[1]) / np.sqrt(W.shape[1])
    if u0 is None:
        v = np.random.Generator(np.random.PCG64(0)).standard_normal(W.shape[1])
    else:
        v = np.asarray(u0, dtype=float).copy()
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        wv = W @ v
        new_sigma = float(np.linalg.norm(wv))
        v = W.T @ wv
        nv = np.linalg.norm(v)
        if nv == 0:
            break
        v /= nv
        if abs(new_sigma - sigma) <= tol * new_sigma:
            sigma = new_sigma
            break
        sigma = new_sigma
    sigma = max(sigma, float(np.linalg.norm(W @ v)))
    return sigma, v


def exact_spectral_norm(W) -> float:
    """Largest singular value from a full SVD (LAPACK)."""
    W = np.asarray(W, dtype=float)
    return float(np.linalg.norm(W, 2)) if W.size else 0.0


def spectral_project(W, bound: float, iters: int = 1000, tol: float = 1e-13, u0=None, return_vector=False,
                     exact: bool = False):
    """``W / max(||W||_2 / bound, 1)``.

    Power iteration can underestimate the norm slightly when the top two
    singular values nearly coincide; ``exact=True`` uses an SVD instead.
    """
    if bound <= 0:
        raise ValueError("bound must be positive")
    if exact:
        sigma, v = exact_spectral_norm(W), u0
    else:
        sigma, v = spectral_norm(W, iters=iters, tol=tol, u0=u0)
    out = np.asarray(W, dtype=float) / max(sigma / bound, 1.0)
    return (out, v) if return_vector else out


def save_mlp(m: Mlp, path, metadata: dict | None = None) -> None:
    doc = {
        "widths": list(m.widths),
        "activation": m.activation,
        "weights": [W.tolist() for W in m.weights],
        "biases": [b.tolist() for b in m.biases],
        "metadata": metadata or {},
    }
    Path(path).write_text(json.dumps(doc, allow_nan=False, sort_keys=True) + "\n", encoding="utf-8")


def load_mlp(path, expected_widths=None) -> tuple[Mlp, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        widths = tuple(doc["widths"])
        weights = [np.array(W, dtype=float).reshape(o, i) for W, i, o in zip(doc["weights"], widths[:-1], widths[1:])]
        biases = [np.array(b, dtype=float).reshape(o) for b, o in zip(doc["biases"], widths[1:])]
        m = Mlp(widths, weights, biases, doc.get("activation", "relu"))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: corrupt checkpoint ({exc})") from None
    if m.activation != "relu":
        raise ValueError(f"{path}: unsupported activation {m.activation!r}")
    if expected_widths is not None and tuple(expected_widths) != m.widths:
        raise ValueError(f"{path}: widths {m.widths} != expected {tuple(expected_widths)}")
    return m, doc.get("metadata", {})


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 500
    patience: int = 50
    seed: int = 0
    optimizer: str = "adam"
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("lr, batch_size and epochs must be positive")
        if self.optimizer != "adam":
            raise ValueError("only adam is supported")
        self.hidden = tuple(int(h) for h in self.hidden)

    def to_dict(self) -> dict:
        return {"lr": self.lr, "batch_size": self.batch_size, "epochs": self.epochs,
                "patience": self.patience, "seed": self.seed, "optimizer": self.optimizer,
                "hidden": list(self.hidden)}
