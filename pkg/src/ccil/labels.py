"""Corrective label generation: root solving, BackTrack and DisturbedAction
labels with rejection sampling and per-label error bounds, plus the
known-dynamics generator."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .data import Dataset, RngStream
from .dynamics import estimate_local_lipschitz

TECHNIQUES = ("backtrack", "disturbed", "oracle")


@dataclass
class CorrectiveLabel:
    s_g: np.ndarray
    a_g: np.ndarray
    s_target: np.ndarray
    technique: str
    opt_residual: float
    anchor_distance: float
    delta_norm: float
    bound: float
    source: tuple[int, int]


@dataclass
class LabelSet:
    """Column-wise storage of corrective labels."""

    s_g: np.ndarray
    a_g: np.ndarray
    s_target: np.ndarray
    technique: np.ndarray
    opt_residual: np.ndarray
    anchor_distance: np.ndarray
    delta_norm: np.ndarray
    bound: np.ndarray
    traj: np.ndarray
    t: np.ndarray

    @classmethod
    def empty(cls, d_s: int, d_a: int) -> "LabelSet":
        z = np.zeros(0)
        return cls(np.zeros((0, d_s)), np.zeros((0, d_a)), np.zeros((0, d_s)), np.zeros(0, dtype="<U9"),
                   z, z.copy(), z.copy(), z.copy(), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.bound)

    def __iter__(self) -> Iterator[CorrectiveLabel]:
        for i in range(len(self)):
            yield CorrectiveLabel(
                self.s_g[i], self.a_g[i], self.s_target[i], str(self.technique[i]),
                float(self.opt_residual[i]), float(self.anchor_distance[i]), float(self.delta_norm[i]),
                float(self.bound[i]), (int(self.traj[i]), int(self.t[i])),
            )

    def to_list(self) -> list[CorrectiveLabel]:
        return list(self)

    def subset(self, mask) -> "LabelSet":
        return LabelSet(**{k: v[mask] for k, v in self.__dict__.items()})

    @classmethod
    def concatenate(cls, parts: list["LabelSet"]) -> "LabelSet":
        return cls(**{k: np.concatenate([getattr(p, k) for p in parts]) for k in parts[0].__dict__})

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelSet):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in self.__dict__)


@dataclass
class GenConfig:
    techniques: tuple[str, ...] = ("disturbed",)
    delta_std: float = 1e-5
    eps_rej: float = 0.01
    eps_opt_tol: float = 1e-6
    max_iters: int = 100
    labels_per_transition: int = 1
    k_source: str = "per-layer-product"
    eps_source: str = "val"
    drop_wall_crossing: bool | None = None
    clamp_tolerance: float = 0.1
    k_sigma: float = 1e-4
    k_points: int = 5000
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.techniques, str):
            self.techniques = ("backtrack", "disturbed") if self.techniques == "both" else (self.techniques,)
        self.techniques = tuple(self.techniques)
        for tech in self.techniques:
            if tech not in ("backtrack", "disturbed"):
                raise ValueError(f"unknown technique {tech!r}")
        if self.delta_std <= 0 or self.eps_rej < 0 or self.eps_opt_tol <= 0:
            raise ValueError("delta_std and eps_opt_tol must be positive, eps_rej non-negative")
        if self.k_source not in ("per-layer-product", "sampled"):
            raise ValueError(f"unknown k_source {self.k_source!r}")
        if self.eps_source not in ("val", "point"):
            raise ValueError(f"unknown eps_source {self.eps_source!r}")
        if self.labels_per_transition < 1 or self.max_iters < 1:
            raise ValueError("labels_per_transition and max_iters must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["techniques"] = list(self.techniques)
        return d


def _model_jacobian_state(model, s, a, h=1e-6):
    if hasattr(model, "jacobian_state"):
        return model.jacobian_state(s, a)
    d = s.shape[-1]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols.append((model.predict(s + e, a) - model.predict(s - e, a)) / (2 * h))
    return np.stack(cols, axis=-1)


def solve_root(model, a_g, s_target, tol: float = 1e-6, max_iters: int = 100,
               gd_steps: int = 200, gd_step: float = 0.5):
    """Solve ``s + f(s, a_g) = s_target`` for ``s``.

    Fixed-point iteration ``s <- s_target - f(s, a_g)`` from ``s_target``;
    rows that miss ``tol`` continue with gradient descent on the squared
    residual (step 0.5, halved until the residual decreases). Returns
    ``(s_g, residual_norm, iterations)``; non-convergence is reported through
    the residual, not raised.
    """
    single = np.ndim(s_target) == 1
    T = np.atleast_2d(np.asarray(s_target, dtype=float))
    A = np.atleast_2d(np.asarray(a_g, dtype=float))
    A = np.broadcast_to(A, (len(T), A.shape[-1]))
    s = T.copy()
    f = model.predict(s, A)
    best_s = s.copy()
    best_r = np.full(len(T), np.inf)
    iters = np.zeros(len(T), dtype=np.int64)
    active = np.ones(len(T), dtype=bool)
    for k in range(1, max_iters + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        s_new = T[idx] - f[idx]
        f_new = model.predict(s_new, A[idx])
        r = np.linalg.norm(s_new + f_new - T[idx], axis=1)
        if not np.all(np.isfinite(r)):
            raise FloatingPointError("non-finite residual in root solve")
        s[idx], f[idx] = s_new, f_new
        iters[idx] = k
        better = r < best_r[idx]
        best_s[idx[better]] = s_new[better]
        best_r[idx[better]] = r[better]
        active[idx[r <= tol]] = False

    idx = np.flatnonzero(best_r > tol)
    if idx.size:
        x = best_s[idx].copy()
        r_vec = x + model.predict(x, A[idx]) - T[idx]
        phi = 0.5 * np.sum(r_vec**2, axis=1)
        for _ in range(gd_steps):
            J = _model_jacobian_state(model, x, A[idx])
            grad = r_vec + np.einsum("nij,ni->nj", J, r_vec)
            step = np.full(len(idx), gd_step)
            accepted = np.zeros(len(idx), dtype=bool)
            x_new, r_new, phi_new = x.copy(), r_vec.copy(), phi.copy()
            for _ in range(30):
                todo = ~accepted
                if not todo.any():
                    break
                cand = x[todo] - step[todo, None] * grad[todo]
                rc = cand + model.predict(cand, A[idx][todo]) - T[idx][todo]
                pc = 0.5 * np.sum(rc**2, axis=1)
                ok = pc < phi[todo]
                sel = np.flatnonzero(todo)[ok]
                x_new[sel], r_new[sel], phi_new[sel] = cand[ok], rc[ok], pc[ok]
                accepted[sel] = True
                step[todo & ~accepted] *= 0.5
            x, r_vec, phi = x_new, r_new, phi_new
            iters[idx] += 1
            if np.all(np.sqrt(2 * phi) <= tol):
                break
        r = np.sqrt(2 * phi)
        if not np.all(np.isfinite(r)):
            raise FloatingPointError("non-finite residual in root solve")
        better = r < best_r[idx]
        best_s[idx[better]] = x[better]
        best_r[idx[better]] = r[better]
    if single:
        return best_s[0], float(best_r[0]), int(iters[0])
    return best_s, best_r, iters


def compute_constants(model, data: Dataset, source: str = "per-layer-product", env=None,
                      sigma: float = 1e-4, n: int = 16, max_points: int = 5000, seed: int = 0) -> dict:
    """Lipschitz constants entering the label bounds (raw coordinates).

    ``state``/``action`` describe the learned model; ``true_state`` is the
    environment's analytic bound when available.
    """
    if source == "per-layer-product":
        pb = model.product_bounds()
        consts = {"state": pb["state_raw"], "action": pb["action_raw"]}
    elif source == "sampled":
        gen = RngStream(seed, "constants").generator()
        idx = np.arange(len(data))
        if len(idx) > max_points:
            idx = np.sort(gen.choice(len(data), max_points, replace=False))
        ks = estimate_local_lipschitz(model, data.s[idx], data.a[idx], sigma, n,
                                      RngStream(seed, "constants/state"), space="raw", wrt="state")
        ka = estimate_local_lipschitz(model, data.s[idx], data.a[idx], sigma, n,
                                      RngStream(seed, "constants/action"), space="raw", wrt="action")
        consts = {"state": float(np.max(ks)), "action": float(np.max(ka))}
    else:
        raise ValueError(f"unknown constant source {source!r}")
    consts["source"] = source
    if env is not None and hasattr(env, "lipschitz_constants"):
        consts["true_state"] = env.lipschitz_constants["state"]
        consts["true_action"] = env.lipschitz_constants["action"]
    return consts


def backtrack_bound(eps, k_model, k_true, distance):
    return eps + (k_model + k_true) * distance


def disturbed_bound(k_action, delta_norm, k_state, distance, opt_residual):
    return k_action * delta_norm + (1.0 + k_state) * distance + opt_residual


@dataclass
class _Candidates:
    s_g: np.ndarray
    a_g: np.ndarray
    s_target: np.ndarray
    anchor: np.ndarray
    residual: np.ndarray
    delta_norm: np.ndarray
    src: np.ndarray  # row index into the dataset
    clamp_ok: np.ndarray


def _eps_for(model, data, idx, cfg):
    if cfg.eps_source == "point":
        return model.point_errors(data.s[idx], data.a[idx], data.s_next[idx])
    return np.full(len(idx), float(model.eps_val))


def _backtrack_candidates(model, data: Dataset, cfg: GenConfig) -> _Candidates:
    target = data.s
    s_g, res, _ = solve_root(model, data.a, target, cfg.eps_opt_tol, cfg.max_iters)
    n = len(data)
    return _Candidates(s_g, data.a.copy(), target.copy(), target.copy(), res, np.zeros(n),
                       np.arange(n), np.ones(n, dtype=bool))


def _disturbed_candidates(model, data: Dataset, cfg: GenConfig, rng: RngStream, low, high) -> _Candidates:
    k = cfg.labels_per_transition
    deltas = np.empty((len(data), k, data.d_a))
    # one stream per trajectory keeps draws independent of dataset order
    for tid in data.traj_ids:
        rows = np.flatnonzero(data.traj == tid)
        gen = rng.child(f"traj/{int(tid)}").generator()
        draws = gen.standard_normal((int(data.t[rows].max()) + 1, k, data.d_a))
        deltas[rows] = draws[data.t[rows]] * cfg.delta_std
    src = np.repeat(np.arange(len(data)), k)
    raw = deltas.reshape(-1, data.d_a)
    a_g = data.a[src] + raw
    if low is not None:
        a_g = np.clip(a_g, low, high)
    eff = a_g - data.a[src]
    raw_norm = np.linalg.norm(raw, axis=1)
    clamp_ok = np.linalg.norm(eff - raw, axis=1) <= cfg.clamp_tolerance * raw_norm
    target = data.s_next[src]
    s_g, res, _ = solve_root(model, a_g, target, cfg.eps_opt_tol, cfg.max_iters)
    return _Candidates(s_g, a_g, target, data.s[src].copy(), res, np.linalg.norm(eff, axis=1), src, clamp_ok)


def _summary(x):
    if len(x) == 0:
        return {"count": 0}
    return {"count": int(len(x)), "mean": float(np.mean(x)), "median": float(np.median(x)),
            "min": float(np.min(x)), "max": float(np.max(x))}


def generate_labels(model, data: Dataset, cfg: GenConfig | None = None, rng: RngStream | None = None,
                    env=None, constants: dict | None = None):
    """Apply the configured techniques to every transition.

    Returns ``(labels, report)``. Emitted labels satisfy
    ``anchor_distance <= eps_rej`` and ``opt_residual <= eps_opt_tol``.
    """
    cfg = cfg or GenConfig()
    rng = rng or RngStream(cfg.seed, "labels")
    if model.d_s != data.d_s or model.d_a != data.d_a:
        raise ValueError("model and dataset dimensions differ")
    if constants is None:
        constants = compute_constants(model, data, cfg.k_source, env, sigma=cfg.k_sigma,
                                      max_points=cfg.k_points, seed=cfg.seed)
    drop_walls = cfg.drop_wall_crossing
    if drop_walls is None:
        drop_walls = bool(env is not None and getattr(env.params, "walls", ()))
    low = getattr(env, "action_low", None) if env is not None else None
    high = getattr(env, "action_high", None) if env is not None else None

    parts, report = [], {"config": cfg.to_dict(), "constants": constants, "techniques": {}}
    for tech in cfg.techniques:
        if tech == "backtrack":
            c = _backtrack_candidates(model, data, cfg)
        else:
            c = _disturbed_candidates(model, data, cfg, rng.child("disturbed"), low, high)
        dist = np.linalg.norm(c.s_g - c.anchor, axis=1)
        eps = _eps_for(model, data, c.src, cfg)
        if tech == "backtrack":
            k_true = constants.get("true_state")
            if k_true is None:
                raise ValueError("backtrack bounds need the true-dynamics constant (pass env or constants)")
            bound = backtrack_bound(eps, constants["state"], k_true, dist)
        else:
            bound = disturbed_bound(constants["action"], c.delta_norm, constants["state"], dist, c.residual)
        converged = c.residual <= cfg.eps_opt_tol
        rej_clamp = ~c.clamp_ok
        rej_res = c.clamp_ok & ~converged
        rej_dist = c.clamp_ok & converged & (dist > cfg.eps_rej)
        keep = c.clamp_ok & converged & (dist <= cfg.eps_rej)
        rej_wall = np.zeros_like(keep)
        if drop_walls and env is not None:
            rej_wall = keep & env.crosses_wall(c.s_g, c.s_target)
            keep &= ~rej_wall
        report["techniques"][tech] = {
            "attempted": int(len(dist)),
            "converged": int(converged.sum()),
            "rejected_clamp": int(rej_clamp.sum()),
            "rejected_residual": int(rej_res.sum()),
            "rejected_distance": int(rej_dist.sum()),
            "rejected_wall": int(rej_wall.sum()),
            "emitted": int(keep.sum()),
            "anchor_distance": _summary(dist[keep]),
            "bound": _summary(bound[keep]),
            "anchor_distance_all": _summary(dist),
        }
        parts.append(LabelSet(
            c.s_g[keep], c.a_g[keep], c.s_target[keep], np.full(int(keep.sum()), tech, dtype="<U9"),
            c.residual[keep], dist[keep], c.delta_norm[keep], bound[keep],
            data.traj[c.src[keep]], data.t[c.src[keep]],
        ))
    labels = LabelSet.concatenate(parts) if parts else LabelSet.empty(data.d_s, data.d_a)
    totals = {k: sum(r[k] for r in report["techniques"].values())
              for k in ("attempted", "converged", "rejected_clamp", "rejected_residual",
                        "rejected_distance", "rejected_wall", "emitted")}
    report.update(totals)
    report["anchor_distance"] = _summary(labels.anchor_distance)
    report["bound"] = _summary(labels.bound)
    return labels, report


def recompute_bounds(labels: LabelSet, model, constants: dict, eps=None) -> np.ndarray:
    """Bounds for existing labels under other constants.

    ``eps`` defaults to the model's validation error; pass an array for
    per-label values.
    """
    eps = float(model.eps_val) if eps is None else np.asarray(eps, dtype=float)
    out = np.empty(len(labels))
    bt = labels.technique == "backtrack"
    if bt.any():
        if "true_state" not in constants:
            raise ValueError("backtrack bounds need the true-dynamics constant")
        e = eps if np.ndim(eps) == 0 else eps[bt]
        out[bt] = backtrack_bound(e, constants["state"], constants["true_state"], labels.anchor_distance[bt])
    dis = ~bt
    out[dis] = disturbed_bound(constants["action"], labels.delta_norm[dis], constants["state"],
                               labels.anchor_distance[dis], labels.opt_residual[dis])
    return out


def backtrack_label(model, tr, cfg: GenConfig | None = None, constants: dict | None = None):
    """BackTrack label for one transition, or ``None`` when rejected.

    Finds ``s_g`` with ``s_g + f(s_g, a) = s`` (the transition's own state),
    so executing the expert action from ``s_g`` lands on the expert state.
    """
    cfg = cfg or GenConfig(techniques=("backtrack",))
    s, a = np.asarray(tr.s, dtype=float), np.asarray(tr.a, dtype=float)
    s_g, res, _ = solve_root(model, a, s, cfg.eps_opt_tol, cfg.max_iters)
    dist = float(np.linalg.norm(s_g - s))
    if res > cfg.eps_opt_tol or dist > cfg.eps_rej:
        return None
    constants = constants or {}
    eps = float(model.eps_val) if cfg.eps_source == "val" else float(model.point_errors(s, a, tr.s_next))
    bound = backtrack_bound(eps, constants.get("state", 0.0), constants.get("true_state", 0.0), dist)
    return CorrectiveLabel(s_g, a.copy(), s.copy(), "backtrack", res, dist, 0.0, float(bound),
                           (int(tr.traj_id), int(tr.t)))


def disturbed_action_label(model, tr, rng: RngStream, cfg: GenConfig | None = None,
                           constants: dict | None = None, action_bounds=None, delta=None):
    """DisturbedAction label for one transition, or ``None`` when rejected.

    ``delta`` overrides the sampled perturbation.
    """
    cfg = cfg or GenConfig()
    a = np.asarray(tr.a, dtype=float)
    raw = rng.generator().standard_normal(a.shape) * cfg.delta_std if delta is None else np.asarray(delta, float)
    a_g = a + raw
    if action_bounds is not None:
        a_g = np.clip(a_g, *action_bounds)
    eff = a_g - a
    if np.linalg.norm(eff - raw) > cfg.clamp_tolerance * np.linalg.norm(raw):
        return None
    target = np.asarray(tr.s_next, dtype=float)
    s_g, res, _ = solve_root(model, a_g, target, cfg.eps_opt_tol, cfg.max_iters)
    dist = float(np.linalg.norm(s_g - np.asarray(tr.s, dtype=float)))
    if res > cfg.eps_opt_tol or dist > cfg.eps_rej:
        return None
    constants = constants or {}
    dn = float(np.linalg.norm(eff))
    bound = disturbed_bound(constants.get("action", 0.0), dn, constants.get("state", 0.0), dist, res)
    return CorrectiveLabel(s_g, a_g, target, "disturbed", res, dist, dn, float(bound),
                           (int(tr.traj_id), int(tr.t)))


def golden_section(fun, lo, hi, n_evals: int = 40):
    """Vectorized golden-section minimization over intervals ``[lo, hi]``.

    ``fun`` maps an array of points to objective values of the same shape.
    Returns the best evaluated point and its value.
    """
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    lo, hi = lo.copy(), hi.copy()
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = fun(c), fun(d)
    best_x = np.where(fc <= fd, c, d)
    best_f = np.minimum(fc, fd)
    for _ in range(max(0, n_evals - 2)):
        left = fc <= fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        x = np.where(left, hi - invphi * (hi - lo), lo + invphi * (hi - lo))
        fx = fun(x)
        c, d, fc, fd = (np.where(left, x, d), np.where(left, c, x),
                        np.where(left, fx, fd), np.where(left, fc, fx))
        better = fx < best_f
        best_x = np.where(better, x, best_x)
        best_f = np.where(better, fx, best_f)
    return best_x, best_f


def best_action_true_dynamics(env, s_g, s_target, n_evals: int = 40):
    """Scalar action minimizing ``||next_state(s_g, a) - s_target||`` over the torque range."""
    s_g = np.atleast_2d(s_g)
    s_target = np.atleast_2d(s_target)

    def miss(a):
        return np.linalg.norm(env.next_state(s_g, a[:, None], project=True) - s_target, axis=1)

    lo = np.full(len(s_g), float(env.action_low))
    hi = np.full(len(s_g), float(env.action_high))
    a, f = golden_section(miss, lo, hi, n_evals)
    return a[:, None], f


def nearest_expert(states, expert: Dataset, chunk: int = 2048):
    """Index of the nearest expert state (L2) for every row of ``states``."""
    states = np.atleast_2d(states)
    e2 = np.sum(expert.s**2, axis=1)
    out = np.empty(len(states), dtype=np.int64)
    for i in range(0, len(states), chunk):
        q = states[i:i + chunk]
        d2 = e2[None, :] - 2.0 * q @ expert.s.T
        out[i:i + chunk] = np.argmin(d2, axis=1)
    return out


def oracle_labels_known_dynamics(env, policy, expert: Dataset, n_rollouts: int = 10, T: int = 500,
                                 rng: RngStream | None = None, obs_noise_std: float = 0.0,
                                 states=None) -> LabelSet:
    """Labels from the analytic dynamics.

    Every state visited by ``policy`` (or each row of ``states`` when given)
    is steered toward the successor of its nearest expert state with the
    best single action found by golden-section search.
    """
    if env.d_a != 1:
        raise ValueError("golden-section action search needs a scalar action")
    if states is None:
        rng = rng or RngStream(0, "oracle")
        trajs, _ = env.rollout_batch(policy, T, n_rollouts, obs_noise_std=obs_noise_std, rng=rng)
        states = np.concatenate([tr.s for tr in trajs])
        src_traj = np.concatenate([np.full(len(tr.s), k) for k, tr in enumerate(trajs)])
        src_t = np.concatenate([np.arange(len(tr.s)) for tr in trajs])
    else:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        src_traj = np.full(len(states), -1)
        src_t = np.arange(len(states))
    near = nearest_expert(states, expert)
    target = expert.s_next[near]
    a_g, miss = best_action_true_dynamics(env, states, target)
    dist = np.linalg.norm(states - expert.s[near], axis=1)
    n = len(states)
    return LabelSet(states.copy(), a_g, target.copy(), np.full(n, "oracle", dtype="<U9"), miss, dist,
                    np.zeros(n), np.zeros(n), src_traj.astype(np.int64), src_t.astype(np.int64))


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_labels(labels: LabelSet, path, header: dict | None = None) -> None:
    """JSON lines: a header line, then one label per line."""
    d_s = labels.s_g.shape[1]
    d_a = labels.a_g.shape[1]
    head = {"kind": "corrective-labels", "d_s": d_s, "d_a": d_a, "count": len(labels)}
    head.update(header or {})
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(head, allow_nan=False, sort_keys=True) + "\n")
        for i in range(len(labels)):
            row = {
                "s_g": [float(x) for x in labels.s_g[i]],
                "a_g": [float(x) for x in labels.a_g[i]],
                "s_target": [float(x) for x in labels.s_target[i]],
                "technique": str(labels.technique[i]),
                "opt_residual": float(labels.opt_residual[i]),
                "anchor_distance": float(labels.anchor_distance[i]),
                "delta_norm": float(labels.delta_norm[i]),
                "bound": float(labels.bound[i]),
                "traj": int(labels.traj[i]),
                "t": int(labels.t[i]),
            }
            fh.write(json.dumps(row, allow_nan=False) + "\n")


def load_labels(path) -> tuple[LabelSet, dict]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty label file")
    try:
        head = json.loads(lines[0])
        d_s, d_a = int(head["d_s"]), int(head["d_a"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}:1: malformed header ({exc})") from None
    cols = {k: [] for k in ("s_g", "a_g", "s_target", "technique", "opt_residual", "anchor_distance",
                            "delta_norm", "bound", "traj", "t")}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            vals = {k: row[k] for k in cols}
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed label line ({exc})") from None
        if len(vals["s_g"]) != d_s or len(vals["s_target"]) != d_s or len(vals["a_g"]) != d_a:
            raise ValueError(f"{path}:{lineno}: dimension mismatch with header")
        for k, v in vals.items():
            cols[k].append(v)
    labels = LabelSet(
        np.array(cols["s_g"], dtype=float).reshape(-1, d_s),
        np.array(cols["a_g"], dtype=float).reshape(-1, d_a),
        np.array(cols["s_target"], dtype=float).reshape(-1, d_s),
        np.array(cols["technique"], dtype="<U9"),
        *(np.array(cols[k], dtype=float) for k in ("opt_residual", "anchor_distance", "delta_norm", "bound")),
        np.array(cols["traj"], dtype=np.int64), np.array(cols["t"], dtype=np.int64),
    )
    return labels, head
