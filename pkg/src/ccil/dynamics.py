"""Residual dynamics models with local-Lipschitz regularization, the sampled
Lipschitz estimator, and bound-based model selection."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .data import Dataset, RngStream, residual_scale

logger = logging.getLogger(__name__)

MODES = ("none", "spectral", "hinge", "slack", "weighted")

# sweep grid used for model selection
SWEEP_PER_LAYER = (2.0, 3.0, 5.0, 10.0)
SWEEP_LAMBDA = (0.3, 0.5)
SWEEP_SIGMA = (1e-4, 3e-4, 5e-4)


@dataclass
class RegConfig:
    """Regularization settings.

    ``L`` is the target local Lipschitz bound (in standardized coordinates);
    when only ``per_layer_bound`` is given, ``L = per_layer_bound ** 2``.
    """

    mode: str = "none"
    L: float | None = None
    per_layer_bound: float | None = None
    lam: float = 0.5
    sigma: float = 3e-4
    n_perturb: int = 1
    beta: float = 10.0
    lambda_bar: float = 0.1
    indicator: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown regularization mode {self.mode!r}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.mode in ("spectral", "weighted") and not self.per_layer_bound:
            raise ValueError(f"{self.mode} mode needs per_layer_bound")
        if self.mode in ("hinge", "slack"):
            if self.effective_L is None or self.effective_L <= 0:
                raise ValueError(f"{self.mode} mode needs a positive L or per_layer_bound")
            if self.sigma <= 0:
                raise ValueError("sigma must be positive")
        if self.n_perturb < 1:
            raise ValueError("n_perturb must be at least 1")

    @property
    def effective_L(self) -> float | None:
        if self.L is not None:
            return float(self.L)
        if self.per_layer_bound is not None:
            return float(self.per_layer_bound) ** 2
        return None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RegConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown regularization keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class DynamicsModel:
    """``f(s, a) ~ s' - s`` through a standardized MLP.

    The net sees ``(concat(s, a) - in_mean) / in_std`` and predicts
    ``(residual - out_mean) / out_std``.
    """

    net: nn.Mlp
    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray
    d_s: int
    d_a: int
    reg: RegConfig = field(default_factory=RegConfig)
    eps_val: float = float("nan")
    lipschitz_report: dict = field(default_factory=dict)
    train_info: dict = field(default_factory=dict)

    @classmethod
    def unnormalized(cls, net: nn.Mlp, d_s: int, d_a: int, **kw) -> "DynamicsModel":
        return cls(net, np.zeros(d_s + d_a), np.ones(d_s + d_a), np.zeros(d_s), np.ones(d_s), d_s, d_a, **kw)

    @property
    def L(self) -> float | None:
        return self.reg.effective_L

    def standardize(self, s, a) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        a = np.broadcast_to(a, s.shape[:-1] + (self.d_a,))
        return (np.concatenate([s, a], axis=-1) - self.in_mean) / self.in_std

    def predict(self, s, a) -> np.ndarray:
        return self.net.forward(self.standardize(s, a)) * self.out_std + self.out_mean

    __call__ = predict

    def next_state(self, s, a) -> np.ndarray:
        return np.asarray(s, dtype=float) + self.predict(s, a)

    def jacobian(self, s, a) -> np.ndarray:
        """Raw-space Jacobian of the residual w.r.t. ``concat(s, a)``, (N, d_s, d_s + d_a)."""
        J = self.net.jacobian(np.atleast_2d(self.standardize(s, a)))
        return self.out_std[None, :, None] * J / self.in_std[None, None, :]

    def jacobian_state(self, s, a) -> np.ndarray:
        return self.jacobian(s, a)[..., : self.d_s]

    def point_errors(self, s, a, s_next) -> np.ndarray:
        return np.linalg.norm(self.predict(s, a) + np.asarray(s) - np.asarray(s_next), axis=-1)

    def layer_norms(self) -> list[float]:
        return [nn.exact_spectral_norm(W) for W in self.net.weights]

    def product_bounds(self) -> dict:
        """Per-layer spectral-norm product bounds, standardized and raw.

        The state and action constants use the first layer's column blocks.
        Raw values rescale by ``max(out_std) / min(in_std[block])``.
        """
        W1 = self.net.weights[0]
        rest = float(np.prod([nn.exact_spectral_norm(W) for W in self.net.weights[1:]]))
        joint = nn.exact_spectral_norm(W1) * rest
        state = nn.exact_spectral_norm(W1[:, : self.d_s]) * rest
        action = nn.exact_spectral_norm(W1[:, self.d_s:]) * rest
        out = float(np.max(self.out_std))
        return {
            "joint": joint,
            "state": state,
            "action": action,
            "joint_raw": joint * out / float(np.min(self.in_std)),
            "state_raw": state * out / float(np.min(self.in_std[: self.d_s])),
            "action_raw": action * out / float(np.min(self.in_std[self.d_s:])),
        }

    def metadata(self) -> dict:
        return {
            "kind": "dynamics",
            "d_s": self.d_s,
            "d_a": self.d_a,
            "mode": self.reg.mode,
            "per_layer_bound": self.reg.per_layer_bound,
            "L": self.L,
            "lambda": self.reg.lam,
            "sigma": self.reg.sigma,
            "reg": self.reg.to_dict(),
            "eps_val": self.eps_val,
            "normalization": {
                "in_mean": self.in_mean.tolist(),
                "in_std": self.in_std.tolist(),
                "out_mean": self.out_mean.tolist(),
                "out_std": self.out_std.tolist(),
            },
            "lipschitz_report": self.lipschitz_report,
            "train_info": self.train_info,
        }

    def save(self, path) -> None:
        nn.save_mlp(self.net, path, self.metadata())

    @classmethod
    def load(cls, path) -> "DynamicsModel":
        net, meta = nn.load_mlp(path)
        if meta.get("kind") != "dynamics":
            raise ValueError(f"{path}: not a dynamics checkpoint")
        norm = meta["normalization"]
        return cls(
            net,
            np.array(norm["in_mean"], dtype=float),
            np.array(norm["in_std"], dtype=float),
            np.array(norm["out_mean"], dtype=float),
            np.array(norm["out_std"], dtype=float),
            int(meta["d_s"]),
            int(meta["d_a"]),
            RegConfig.from_dict(meta["reg"]),
            float(meta["eps_val"]),
            meta.get("lipschitz_report", {}),
            meta.get("train_info", {}),
        )


def _batch_arrays(batch):
    if isinstance(batch, Dataset):
        return batch.s, batch.a, batch.s_next
    s, a, s_next = batch
    return np.atleast_2d(s), np.atleast_2d(a), np.atleast_2d(s_next)


def mse_loss(model, batch) -> float:
    """Mean squared L2 norm of ``f(s, a) + s - s_next``."""
    s, a, s_next = _batch_arrays(batch)
    err = model.predict(s, a) + s - s_next
    return float(np.mean(np.sum(err**2, axis=-1)))


def validation_error(model, batch) -> float:
    """Mean (unsquared) L2 prediction error, the ``eps`` of the bounds."""
    s, a, s_next = _batch_arrays(batch)
    return float(np.mean(model.point_errors(s, a, s_next)))


def _draw_deltas(gen, shape):
    delta = gen.standard_normal(shape)
    norms = np.linalg.norm(delta, axis=-1)
    while np.any(norms == 0):
        bad = norms == 0
        delta[bad] = gen.standard_normal((int(bad.sum()), shape[-1]))
        norms = np.linalg.norm(delta, axis=-1)
    return delta


def lipschitz_quotients(model, s, a, sigma, n, rng: RngStream, space="raw", wrt="state") -> np.ndarray:
    """Difference quotients ``|f(x + d) - f(x)| / |d|`` for ``n`` Gaussian draws.

    ``space='std'`` perturbs the standardized input and compares net
    outputs; ``wrt`` selects the perturbed block. Returns (N, n).
    """
    if sigma <= 0 or n < 1:
        raise ValueError("sigma must be positive and n >= 1")
    s = np.atleast_2d(np.asarray(s, dtype=float))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    a = np.broadcast_to(a, (len(s), a.shape[-1]))
    gen = rng.generator()
    if space == "std":
        x = model.standardize(s, a)
        lo, hi = (0, model.d_s) if wrt == "state" else (model.d_s, model.d_s + model.d_a)
        delta = sigma * _draw_deltas(gen, (len(x), n, hi - lo))
        xp = np.repeat(x[:, None, :], n, axis=1)
        xp[..., lo:hi] += delta
        y0 = model.net.forward(x)
        y1 = model.net.forward(xp.reshape(-1, x.shape[-1])).reshape(len(x), n, -1)
        diff = y1 - y0[:, None, :]
    elif space == "raw":
        base = s if wrt == "state" else a
        delta = sigma * _draw_deltas(gen, (len(s), n, base.shape[-1]))
        y0 = model.predict(s, a)
        if wrt == "state":
            sp = (s[:, None, :] + delta).reshape(-1, s.shape[-1])
            y1 = model.predict(sp, np.repeat(a, n, axis=0))
        else:
            ap = (a[:, None, :] + delta).reshape(-1, a.shape[-1])
            y1 = model.predict(np.repeat(s, n, axis=0), ap)
        diff = y1.reshape(len(s), n, -1) - y0[:, None, :]
    else:
        raise ValueError(f"unknown space {space!r}")
    return np.linalg.norm(diff, axis=-1) / np.linalg.norm(delta, axis=-1)


def estimate_local_lipschitz(model, s, a, sigma: float = 3e-4, n: int = 16, rng: RngStream | None = None,
                             space: str = "raw", wrt: str = "state", reduce: str = "max"):
    """Sampled local Lipschitz estimate at each point (max over draws by default)."""
    rng = rng or RngStream(0, "lipschitz")
    q = lipschitz_quotients(model, s, a, sigma, n, rng, space=space, wrt=wrt)
    out = q.max(axis=1) if reduce == "max" else q.mean(axis=1)
    return float(out[0]) if np.ndim(s) == 1 else out


def hinge_penalty(model, batch, L: float, sigma: float = 3e-4, n: int = 1, rng: RngStream | None = None,
                  space: str = "std") -> float:
    """Mean over points and draws of ``max(q - L, 0)`` (no lambda factor)."""
    if L <= 0:
        raise ValueError("L must be positive")
    s, a = batch[0], batch[1]
    q = lipschitz_quotients(model, s, a, sigma, n, rng or RngStream(0, "hinge"), space=space)
    return float(np.mean(np.maximum(q - L, 0.0)))


def l0_surrogate(x, beta: float):
    return 1.0 - np.exp(-beta * np.abs(x))


def slack_loss(model, slack, batch, L: float, beta: float = 10.0, lambda_bar: float = 0.1,
               sigma: float = 3e-4, n: int = 1, rng: RngStream | None = None, space: str = "std") -> float:
    """Per-point ``MSE_j + slack_j * Lip_j + (1 - exp(-beta |slack_j - lambda_bar|))``, averaged."""
    s, a, s_next = _batch_arrays(batch)
    slack = np.asarray(slack, dtype=float)
    mse = np.sum((model.predict(s, a) + s - s_next) ** 2, axis=-1)
    q = lipschitz_quotients(model, s, a, sigma, n, rng or RngStream(0, "slack"), space=space)
    lip = np.mean(np.maximum(q - L, 0.0), axis=1)
    return float(np.mean(mse + slack * lip + l0_surrogate(slack - lambda_bar, beta)))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def weighted_loss(model, weights, batch) -> float:
    """``mean_j sigmoid(w_j) * MSE_j + sum_j sigmoid(w_j)``."""
    s, a, s_next = _batch_arrays(batch)
    mse = np.sum((model.predict(s, a) + s - s_next) ** 2, axis=-1)
    sw = _sigmoid(np.asarray(weights, dtype=float))
    return float(np.mean(sw * mse) + np.sum(sw))


class _LazyAdam:
    """Adam over a per-sample vector where each step touches a subset."""

    def __init__(self, n, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = np.zeros(n)
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps

    def step(self, x, idx, g):
        self.t[idx] += 1
        self.m[idx] = self.b1 * self.m[idx] + (1 - self.b1) * g
        self.v[idx] = self.b2 * self.v[idx] + (1 - self.b2) * g * g
        mh = self.m[idx] / (1 - self.b1 ** self.t[idx])
        vh = self.v[idx] / (1 - self.b2 ** self.t[idx])
        x[idx] -= self.lr * mh / (np.sqrt(vh) + self.eps)


def _normalization(train: Dataset):
    x = np.concatenate([train.s, train.a], axis=1)
    y = train.s_next - train.s
    in_std = x.std(axis=0)
    out_std = y.std(axis=0)
    in_std = np.where(in_std > 1e-8, in_std, 1.0)
    out_std = np.where(out_std > 1e-8, out_std, 1.0)
    return x.mean(axis=0), in_std, y.mean(axis=0), out_std


def _project_all(weights, bound, vectors, iters=1000, tol=1e-10, exact=False):
    out, vecs = [], []
    for W, v in zip(weights, vectors):
        Wp, v = nn.spectral_project(W, bound, iters=iters, tol=tol, u0=v, return_vector=True, exact=exact)
        out.append(Wp)
        vecs.append(v)
    return out, vecs


def _step_objective(net, reg, x, y, per_point, gen, d_s):
    """Loss value, param grads and per-point aux grads for one minibatch."""
    B = len(x)
    L = reg.effective_L
    needs_lip = reg.mode in ("hinge", "slack")
    if needs_lip:
        n = reg.n_perturb
        delta = reg.sigma * _draw_deltas(gen, (B, n, d_s))
        xp = np.repeat(x[:, None, :], n, axis=1)
        xp[..., :d_s] += delta
        stacked = np.concatenate([x, xp.reshape(B * n, -1)])
    else:
        stacked = x
    out, inputs = net.forward_cache(stacked)
    y0 = out[:B]
    err = y0 - y
    mse = np.sum(err**2, axis=1)
    dy = np.zeros_like(out)
    aux_grad = None
    if reg.mode == "weighted":
        sw = _sigmoid(per_point)
        value = float(np.mean(sw * mse) + np.sum(sw))
        dy[:B] = (2.0 / B) * sw[:, None] * err
        aux_grad = sw * (1 - sw) * (mse / B + 1.0)
    else:
        value = float(np.mean(mse))
        dy[:B] = (2.0 / B) * err
    if needs_lip:
        y1 = out[B:].reshape(B, n, -1)
        diff = y1 - y0[:, None, :]
        nd = np.linalg.norm(diff, axis=-1)
        dn = np.linalg.norm(delta, axis=-1)
        q = nd / dn
        viol = np.maximum(q - L, 0.0)
        active = (q > L).astype(float)
        weight = reg.lam * np.ones(B) if reg.mode == "hinge" else per_point
        if reg.mode == "hinge" and reg.indicator:
            value += float(np.mean(weight[:, None] * active))
        else:
            value += float(np.mean(weight[:, None] * viol))
        # straight-through: the indicator uses the hinge gradient
        coef = (weight[:, None] * active / (B * n)) / (np.where(nd > 0, nd, 1.0) * dn)
        g1 = coef[..., None] * diff
        dy[B:] = g1.reshape(B * n, -1)
        dy[:B] -= g1.sum(axis=1)
        if reg.mode == "slack":
            lip = viol.mean(axis=1)
            gap = per_point - reg.lambda_bar
            value += float(np.mean(l0_surrogate(gap, reg.beta)))
            aux_grad = lip + reg.beta * np.exp(-reg.beta * np.abs(gap)) * np.sign(gap)
    grads, _ = net.backward(inputs, dy)
    return value, grads, aux_grad


def train_dynamics(train: Dataset, val: Dataset, reg: RegConfig | None = None,
                   tc: nn.TrainConfig | None = None, report_points: int = 2000) -> DynamicsModel:
    """Fit a residual dynamics model with the given regularization mode."""
    reg = reg or RegConfig()
    tc = tc or nn.TrainConfig()
    if train.d_s != val.d_s or train.d_a != val.d_a:
        raise ValueError("train/val dimension mismatch")
    if len(train) == 0 or len(val) == 0:
        raise ValueError("empty train or validation set")
    d_s, d_a = train.d_s, train.d_a
    in_mean, in_std, out_mean, out_std = _normalization(train)
    x_all = (np.concatenate([train.s, train.a], axis=1) - in_mean) / in_std
    y_all = (train.s_next - train.s - out_mean) / out_std
    net = nn.init((d_s + d_a,) + tc.hidden + (d_s,), seed=tc.seed)
    model = DynamicsModel(net, in_mean, in_std, out_mean, out_std, d_s, d_a, reg)
    stream = RngStream(tc.seed, f"dynamics/{reg.mode}")
    shuffle_gen = stream.child("shuffle").generator()
    noise_gen = stream.child("perturb").generator()

    N = len(x_all)
    per_point = None
    aux_opt = None
    if reg.mode == "slack":
        per_point = np.full(N, reg.lambda_bar)
        aux_opt = _LazyAdam(N, lr=1e-2)
    elif reg.mode == "weighted":
        per_point = np.zeros(N)
        aux_opt = _LazyAdam(N, lr=1e-2)
    project = reg.mode in ("spectral", "weighted")
    vectors = [None] * len(net.weights)
    if project:
        ws, vectors = _project_all(net.weights, reg.per_layer_bound, vectors)
        net = net.with_params([p for W, b in zip(ws, net.biases) for p in (W, b)])

    params = net.params
    opt = nn.AdamState.zeros_like(params)
    best = (math.inf, [p.copy() for p in params], None if per_point is None else per_point.copy(), 0)
    stale = 0
    history = []
    for epoch in range(tc.epochs):
        perm = shuffle_gen.permutation(N)
        total = 0.0
        for start in range(0, N, tc.batch_size):
            idx = perm[start : start + tc.batch_size]
            cur = net.with_params(params)
            pp = None if per_point is None else per_point[idx]
            value, grads, aux_grad = _step_objective(cur, reg, x_all[idx], y_all[idx], pp, noise_gen, d_s)
            if not np.isfinite(value):
                raise FloatingPointError(f"dynamics training diverged at epoch {epoch}")
            total += value * len(idx)
            params, opt = nn.adam_step(params, grads, opt, tc.lr)
            if aux_opt is not None:
                aux_opt.step(per_point, idx, aux_grad)
                if reg.mode == "slack":
                    np.maximum(per_point, 0.0, out=per_point)
            if project:
                ws, vectors = _project_all(params[0::2], reg.per_layer_bound, vectors, iters=50)
                params = [p for W, b in zip(ws, params[1::2]) for p in (W, b)]
        net = net.with_params(params)
        model.net = net
        val_loss = mse_loss(model, val)
        if not np.isfinite(val_loss):
            raise FloatingPointError(f"dynamics training diverged at epoch {epoch}")
        history.append((total / N, val_loss))
        if val_loss < best[0]:
            best = (val_loss, [p.copy() for p in params], None if per_point is None else per_point.copy(), epoch)
            stale = 0
        else:
            stale += 1
            if tc.patience and stale >= tc.patience:
                break
    params = best[1]
    if project:
        ws, _ = _project_all(params[0::2], reg.per_layer_bound, [None] * len(ws), exact=True)
        params = [p for W, b in zip(ws, params[1::2]) for p in (W, b)]
    model.net = net.with_params(params)
    model.eps_val = validation_error(model, val)
    model.train_info = {
        "train_config": tc.to_dict(),
        "epochs_run": len(history),
        "best_epoch": best[3],
        "best_val_mse": best[0],
        "final_train_loss": history[-1][0] if history else None,
        "n_train": len(train),
        "n_val": len(val),
    }
    if reg.mode == "weighted":
        sw = _sigmoid(best[2])
        frac = float(np.mean(sw < 1e-2))
        model.train_info["weighted_degenerate_fraction"] = frac
        if frac > 0.5:
            logger.warning("weighted loss: %.0f%% of sample weights collapsed below 0.01", 100 * frac)
    if reg.mode == "slack":
        model.train_info["slack_mean"] = float(np.mean(best[2]))
        model.train_info["slack_nonbar_fraction"] = float(np.mean(np.abs(best[2] - reg.lambda_bar) > 1e-3))
    model.lipschitz_report = lipschitz_report(model, train, n_points=report_points, seed=tc.seed)
    return model


def lipschitz_report(model: DynamicsModel, data: Dataset, n_points: int = 2000, seed: int = 0,
                     sigma: float | None = None, n: int = 16) -> dict:
    """Per-layer norms, product bounds and sampled estimates at expert points."""
    gen = RngStream(seed, "lipschitz-report").generator()
    idx = np.arange(len(data)) if len(data) <= n_points else np.sort(gen.choice(len(data), n_points, replace=False))
    sigma = sigma or model.reg.sigma or 3e-4
    rng = RngStream(seed, "lipschitz-report/estimate")
    q_std = lipschitz_quotients(model, data.s[idx], data.a[idx], sigma, n, rng, space="std")
    est = q_std.max(axis=1)
    report = {
        "layer_spectral_norms": model.layer_norms(),
        "product_bounds": model.product_bounds(),
        "sampled_std": {
            "max": float(est.max()),
            "mean_of_max": float(est.mean()),
            "mean": float(q_std.mean()),
            "n_points": int(len(idx)),
            "sigma": sigma,
        },
    }
    if model.L is not None:
        report["sampled_std"]["fraction_within_L"] = float(np.mean(est <= model.L))
    return report


def model_selection_score(model, criterion: str, res_scale: float | None = None) -> float:
    """Bound-based score, lower is better.

    backtrack: ``eps + 2 L |C|``; disturbed: ``0.001 L + (1 + L) eps``.
    """
    L = getattr(model, "L", None)
    if L is None:
        raise ValueError("model has no effective Lipschitz bound L")
    eps = model.eps_val
    if criterion == "backtrack":
        if res_scale is None:
            raise ValueError("backtrack score needs the residual scale |C|")
        return float(eps + 2.0 * L * res_scale)
    if criterion == "disturbed":
        return float(0.001 * L + (1.0 + L) * eps)
    raise ValueError(f"unknown criterion {criterion!r}")


def select_best(models, criterion: str, res_scale: float | None = None):
    if not models:
        raise ValueError("no candidate models")
    scored = [
        (model_selection_score(m, criterion, res_scale), m.eps_val, i) for i, m in enumerate(models)
    ]
    return models[min(scored)[2]]


def sweep_grid(per_layer=SWEEP_PER_LAYER, lams=SWEEP_LAMBDA, sigmas=SWEEP_SIGMA, mode="hinge", **extra):
    return [
        RegConfig(mode=mode, per_layer_bound=pl, lam=lam, sigma=sg, **extra)
        for pl, lam, sg in itertools.product(per_layer, lams, sigmas)
    ]


def run_sweep(train: Dataset, val: Dataset, grid, tc: nn.TrainConfig | None = None, out_dir=None):
    """Train one model per grid cell; optionally write checkpoints and ``sweep.csv``."""
    tc = tc or nn.TrainConfig()
    res = residual_scale(train)
    models = []
    rows = []
    for i, reg in enumerate(grid):
        m = train_dynamics(train, val, reg, tc)
        models.append(m)
        name = f"model_{i:02d}.json"
        rows.append({
            "index": i,
            "checkpoint": name,
            "mode": reg.mode,
            "per_layer_bound": reg.per_layer_bound,
            "L": reg.effective_L,
            "lambda": reg.lam,
            "sigma": reg.sigma,
            "eps_val": m.eps_val,
            "score_backtrack": model_selection_score(m, "backtrack", res),
            "score_disturbed": model_selection_score(m, "disturbed"),
        })
        if out_dir is not None:
            m.save(Path(out_dir) / name)
    if out_dir is not None:
        write_sweep_csv(rows, Path(out_dir) / "sweep.csv")
    return models, rows


def write_sweep_csv(rows, path) -> None:
    fields = ["index", "checkpoint", "mode", "per_layer_bound", "L", "lambda", "sigma",
              "eps_val", "score_backtrack", "score_disturbed"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
