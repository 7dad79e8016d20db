"""Noisy policy evaluation, empirical checks of the corrective-label error
bounds against the analytic dynamics, and run comparisons."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import RngStream


@dataclass
class EvalConfig:
    episodes: int = 100
    T: int = 500
    obs_noise_std: float = 0.05
    act_noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1 or self.T < 1:
            raise ValueError("episodes and T must be at least 1")
        if self.obs_noise_std < 0 or self.act_noise_std < 0:
            raise ValueError("noise stds must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(policy, env, cfg: EvalConfig | None = None, rng: RngStream | None = None) -> dict:
    """Mean and sample std of episode returns under sensor and actuator noise."""
    cfg = cfg or EvalConfig()
    rng = rng or RngStream(cfg.seed, "eval")
    if getattr(policy, "d_s", env.d_s) != env.d_s or getattr(policy, "d_a", env.d_a) != env.d_a:
        raise ValueError("policy and environment dimensions differ")
    _, returns = env.rollout_batch(policy, cfg.T, cfg.episodes, cfg.obs_noise_std, cfg.act_noise_std, rng)
    returns = np.asarray(returns, dtype=float)
    std = float(np.std(returns, ddof=1)) if len(returns) > 1 else 0.0
    return {"env": env.name, "config": cfg.to_dict(), "episodes": len(returns),
            "mean": math.fsum(returns) / len(returns), "std": std, "returns": returns.tolist()}


def aggregate_seeds(runs: list[dict]) -> dict:
    """Treat per-seed mean returns as the samples of a combined run.

    Runs may differ only in their seed.
    """
    if not runs:
        raise ValueError("no runs to aggregate")

    def unseeded(r):
        return {k: v for k, v in r["config"].items() if k != "seed"}

    cfg = unseeded(runs[0])
    if any(unseeded(r) != cfg or r["env"] != runs[0]["env"] for r in runs):
        raise ValueError("runs use different evaluation configs")
    means = np.array([r["mean"] for r in runs])
    return {"env": runs[0]["env"], "config": cfg, "episodes": len(means),
            "mean": math.fsum(means) / len(means),
            "std": float(np.std(means, ddof=1)) if len(means) > 1 else 0.0,
            "returns": means.tolist()}


def compare(run_a: dict, run_b: dict) -> dict:
    """Difference of means (a - b) with pooled std and standard error."""
    if run_a["config"] != run_b["config"] or run_a["env"] != run_b["env"]:
        raise ValueError("cannot compare runs with different evaluation configs")
    na, nb = run_a["episodes"], run_b["episodes"]
    va, vb = run_a["std"] ** 2, run_b["std"] ** 2
    diff = run_a["mean"] - run_b["mean"]
    dof = na + nb - 2
    pooled = math.sqrt(((na - 1) * va + (nb - 1) * vb) / dof) if dof > 0 else 0.0
    se = math.sqrt(va / na + vb / nb)
    return {"mean_a": run_a["mean"], "mean_b": run_b["mean"], "diff": diff, "pooled_std": pooled,
            "se": se, "a_ge_b": bool(diff >= 0), "a_ge_b_within_noise": bool(diff >= -se),
            "a_gt_b_by_se": bool(diff > se)}


@dataclass
class BoundReport:
    empirical_model_error: np.ndarray
    bound: np.ndarray
    corrective_error: np.ndarray
    opt_residual: np.ndarray
    violated: np.ndarray

    @property
    def n(self) -> int:
        return len(self.bound)

    @property
    def mean_corrective_error(self) -> float:
        return float(np.mean(self.corrective_error)) if self.n else 0.0

    @property
    def mean_bound(self) -> float:
        return float(np.mean(self.bound)) if self.n else 0.0

    @property
    def mean_model_error(self) -> float:
        return float(np.mean(self.empirical_model_error)) if self.n else 0.0

    @property
    def violation_rate(self) -> float:
        return float(np.mean(self.violated)) if self.n else 0.0

    def summary(self) -> dict:
        return {"labels": self.n, "mean_corrective_error": self.mean_corrective_error,
                "mean_model_error": self.mean_model_error, "mean_bound": self.mean_bound,
                "violation_rate": self.violation_rate}


class TrueDynamicsModel:
    """Adapter exposing an environment's analytic residual through the model interface."""

    def __init__(self, env):
        if not hasattr(env, "true_residual"):
            raise ValueError("environment has no analytic dynamics")
        self.env = env
        self.d_s, self.d_a = env.d_s, env.d_a
        self.eps_val = 0.0

    def predict(self, s, a):
        return self.env.true_residual(s, a, project=True)

    __call__ = predict


def verify_bounds(labels, model, env, bound=None) -> BoundReport:
    """Compare each label's bound with the model's true one-step error at ``(s_g, a_g)``.

    ``bound`` overrides the bounds stored on the labels (e.g. recomputed
    with other constants).
    """
    if not hasattr(env, "true_residual"):
        raise ValueError("environment has no analytic dynamics to verify against")
    s_g, a_g = labels.s_g, labels.a_g
    true = env.true_residual(s_g, a_g, project=True)
    pred = model.predict(s_g, a_g)
    model_err = np.linalg.norm(true - pred, axis=1)
    corr = np.linalg.norm(s_g + true - labels.s_target, axis=1)
    b = labels.bound if bound is None else np.asarray(bound, dtype=float)
    return BoundReport(model_err, b, corr, labels.opt_residual.copy(), model_err > b)


def write_metrics_csv(metrics: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "return"])
        for i, r in enumerate(metrics["returns"]):
            w.writerow([i, repr(float(r))])
        w.writerow(["mean", repr(metrics["mean"])])
        w.writerow(["std", repr(metrics["std"])])


def write_bounds_csv(report: BoundReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "empirical_model_error", "bound", "corrective_error", "opt_residual", "violated"])
        for i in range(report.n):
            w.writerow([i, repr(float(report.empirical_model_error[i])), repr(float(report.bound[i])),
                        repr(float(report.corrective_error[i])), repr(float(report.opt_residual[i])),
                        int(report.violated[i])])
        for k, v in report.summary().items():
            w.writerow([k, repr(v)])


def write_comparison_csv(rows: list[dict], path) -> None:
    if not rows:
        raise ValueError("no comparison rows")
    keys = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
