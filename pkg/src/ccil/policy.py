"""Behavior cloning on expert pairs, optionally augmented with corrective
labels, and the input-noise (NoiseBC) baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields

import numpy as np

from . import nn
from .data import Dataset, RngStream

logger = logging.getLogger(__name__)


@dataclass
class BcConfig:
    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 50
    patience: int = 50
    seed: int = 0
    optimizer: str = "adam"
    hidden: tuple[int, ...] = (64, 64)
    noise_bc_std: float = 0.0  # standardized state units; 0 disables NoiseBC
    aug_weight: float = 1.0
    # "expert": an epoch is len(expert) samples drawn from the union, so
    # augmentation does not change the number of updates; "union": full pass
    epoch_size: str = "expert"

    def __post_init__(self):
        if self.epoch_size not in ("expert", "union"):
            raise ValueError(f"unknown epoch_size {self.epoch_size!r}")
        if self.noise_bc_std < 0:
            raise ValueError("noise_bc_std must be non-negative")
        if self.aug_weight < 0:
            raise ValueError("aug_weight must be non-negative")
        self.hidden = tuple(int(h) for h in self.hidden)
        # reuse the generic validation
        self.train_config()

    def train_config(self) -> nn.TrainConfig:
        return nn.TrainConfig(self.lr, self.batch_size, self.epochs, self.patience, self.seed,
                              self.optimizer, self.hidden)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BcConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown policy config keys: {sorted(unknown)}")
        return cls(**d)


class Policy:
    """State -> action network with input standardization and output clamping."""

    def __init__(self, net: nn.Mlp, in_mean, in_std, low, high, metadata: dict | None = None):
        self.net = net
        self.in_mean = np.asarray(in_mean, dtype=float)
        self.in_std = np.asarray(in_std, dtype=float)
        self.low = np.broadcast_to(np.asarray(low, dtype=float), (net.d_out,)).copy()
        self.high = np.broadcast_to(np.asarray(high, dtype=float), (net.d_out,)).copy()
        self.metadata = dict(metadata or {})

    @property
    def d_s(self) -> int:
        return self.net.d_in

    @property
    def d_a(self) -> int:
        return self.net.d_out

    def act(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.shape[-1] != self.d_s:
            raise ValueError(f"state dimension {s.shape[-1]} != {self.d_s}")
        out = self.net.forward((s - self.in_mean) / self.in_std)
        return np.clip(out, self.low, self.high)

    __call__ = act

    def save(self, path) -> None:
        meta = dict(self.metadata)
        meta.update({"kind": "policy", "in_mean": self.in_mean.tolist(), "in_std": self.in_std.tolist(),
                     "low": self.low.tolist(), "high": self.high.tolist()})
        nn.save_mlp(self.net, path, meta)

    @classmethod
    def load(cls, path) -> "Policy":
        net, meta = nn.load_mlp(path)
        if meta.get("kind") != "policy":
            raise ValueError(f"{path}: not a policy checkpoint")
        meta = dict(meta)
        args = [meta.pop(k) for k in ("in_mean", "in_std", "low", "high")]
        meta.pop("kind")
        return cls(net, *args, metadata=meta)


def act(p: Policy, s) -> np.ndarray:
    return p.act(s)


def train_bc(d: Dataset, aug=None, cfg: BcConfig | None = None, rng: RngStream | None = None,
             action_bounds=(-3.0, 3.0), metadata: dict | None = None) -> Policy:
    """Squared-error regression over expert pairs plus label pairs.

    Label rows are weighted by ``cfg.aug_weight``; with weight 0 they are
    left out entirely. Input statistics come from the expert states only.
    """
    cfg = cfg or BcConfig()
    rng = rng or RngStream(cfg.seed, "bc")
    if len(d) == 0:
        raise ValueError("empty training set")
    n_exp = len(d)
    X, Y = d.s, d.a
    w = np.ones(n_exp)
    n_aug = 0
    if aug is not None and len(aug) and cfg.aug_weight > 0:
        if aug.s_g.shape[1] != d.d_s or aug.a_g.shape[1] != d.d_a:
            raise ValueError("label dimensions do not match the dataset")
        X = np.concatenate([X, aug.s_g])
        Y = np.concatenate([Y, aug.a_g])
        w = np.concatenate([w, np.full(len(aug), cfg.aug_weight)])
        n_aug = len(aug)
    in_mean = d.s.mean(axis=0)
    in_std = d.s.std(axis=0)
    in_std = np.where(in_std > 1e-8, in_std, 1.0)
    Xs = (X - in_mean) / in_std
    weighted = n_aug > 0 and cfg.aug_weight != 1.0

    net = nn.init((d.d_s, *cfg.hidden, d.d_a), seed=rng.child("init").mixed_seed)
    params = net.params
    state = nn.AdamState.zeros_like(params)
    shuffle = rng.child("shuffle").generator()
    noise = rng.child("noise").generator()
    n = len(Xs)
    per_epoch = n_exp if cfg.epoch_size == "expert" else n
    losses = []
    for epoch in range(cfg.epochs):
        Xe = Xs
        if cfg.noise_bc_std > 0:
            Xe = Xs.copy()
            Xe[:n_exp] += noise.standard_normal((n_exp, d.d_s)) * cfg.noise_bc_std
        order = shuffle.permutation(n)[:per_epoch]
        total = 0.0
        for i in range(0, per_epoch, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            try:
                loss, grads = nn.grad_params(net, Xe[idx], Y[idx], weights=w[idx] if weighted else None)
            except FloatingPointError:
                raise FloatingPointError(f"BC training diverged at epoch {epoch}") from None
            params, state = nn.adam_step(params, grads, state, cfg.lr)
            net = net.with_params(params)
            total += loss * len(idx)
        losses.append(total / per_epoch)
    meta = {"config": cfg.to_dict(), "n_expert": n_exp, "n_aug": n_aug, "final_loss": losses[-1],
            "updates": state.t}
    meta.update(metadata or {})
    logger.info("bc: %d expert + %d labels, final loss %.3e", n_exp, n_aug, losses[-1])
    return Policy(net, in_mean, in_std, action_bounds[0], action_bounds[1], meta)
