"""Command-line interface: individual pipeline stages and a resumable
end-to-end ``pipeline`` command."""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, nn
from .data import RngStream, load_dataset, residual_scale, save_dataset, split
from .dynamics import (DynamicsModel, RegConfig, model_selection_score, select_best, sweep_grid,
                       train_dynamics, write_sweep_csv)
from .evaluation import (EvalConfig, aggregate_seeds, compare, evaluate, verify_bounds, write_bounds_csv,
                         write_comparison_csv, write_metrics_csv)
from .labels import (GenConfig, compute_constants, file_sha256, generate_labels, load_labels,
                     recompute_bounds, save_labels)
from .pendulum import PendulumEnv
from .policy import BcConfig, Policy, train_bc

log = logging.getLogger("ccil")

NOISE_BC_STD = 1e-2

DEFAULT_CONFIG = {
    "seed": 0,
    "out_dir": "ccil-run",
    "env": {"name": "pendulum", "walls": None, "params": {}},
    "demos": {"n_traj": 50, "T": 500, "val_fraction": 0.1},
    "dynamics": {
        "mode": "hinge",
        "per_layer_bounds": [2.0, 3.0, 5.0, 10.0],
        "lambdas": [0.3, 0.5],
        "sigmas": [1e-4, 3e-4, 5e-4],
        "train": {"lr": 1e-3, "batch_size": 256, "epochs": 150, "patience": 20, "hidden": [64, 64]},
    },
    "selection": {"criterion": "disturbed"},
    "labels": {
        "techniques": ["disturbed"], "delta_std": 1e-5, "eps_rej": 0.01, "eps_opt_tol": 1e-6,
        "max_iters": 100, "labels_per_transition": 1, "k_source": "per-layer-product",
        "eps_source": "val", "drop_wall_crossing": None,
    },
    "policy": {"lr": 1e-3, "batch_size": 256, "epochs": 50, "hidden": [64, 64], "noise_bc_std": 0.0,
               "aug_weight": 1.0, "epoch_size": "expert", "seeds": 1},
    "eval": {"episodes": 100, "T": 500, "obs_noise_std": 0.05, "act_noise_std": 0.05},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key != "params":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the JSON file, then command-line overrides."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        if "seed" not in doc and os.environ.get("CCIL_SEED"):
            doc["seed"] = int(os.environ["CCIL_SEED"])
        cfg = _merge(cfg, doc)
    elif os.environ.get("CCIL_SEED"):
        cfg["seed"] = int(os.environ["CCIL_SEED"])
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = cfg
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node[p]
        node[leaf] = value
    validate_config(cfg)
    return cfg


def _gen_config(cfg: dict) -> GenConfig:
    return GenConfig(**{**cfg["labels"], "techniques": tuple(cfg["labels"]["techniques"]), "seed": cfg["seed"]})


def _bc_config(cfg: dict, seed: int) -> BcConfig:
    block = {k: v for k, v in cfg["policy"].items() if k != "seeds"}
    return BcConfig(**block, seed=seed)


def _train_config(cfg: dict) -> nn.TrainConfig:
    return nn.TrainConfig(**cfg["dynamics"]["train"], seed=cfg["seed"])


def _eval_config(cfg: dict, seed: int) -> EvalConfig:
    return EvalConfig(**cfg["eval"], seed=seed)


def _grid(cfg: dict):
    dyn = cfg["dynamics"]
    return sweep_grid(dyn["per_layer_bounds"], dyn["lambdas"], dyn["sigmas"], mode=dyn["mode"])


def validate_config(cfg: dict) -> None:
    """Instantiate every block so bad values fail before any work starts."""
    try:
        make_env(cfg)
        if cfg["demos"]["n_traj"] < 2 or cfg["demos"]["T"] < 1:
            raise ValueError("demos.n_traj must be >= 2 and demos.T >= 1")
        _grid(cfg)
        _train_config(cfg)
        _gen_config(cfg)
        _bc_config(cfg, 0)
        _eval_config(cfg, 0)
        if cfg["selection"]["criterion"] not in ("backtrack", "disturbed"):
            raise ValueError("selection.criterion must be backtrack or disturbed")
        if int(cfg["policy"]["seeds"]) < 1:
            raise ValueError("policy.seeds must be >= 1")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def make_env(cfg: dict) -> PendulumEnv:
    e = cfg["env"]
    params = dict(e.get("params") or {})
    if e.get("walls") is not None:
        params["walls"] = tuple(e["walls"])
    return PendulumEnv.make(e["name"], **params)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


@contextmanager
def staged(path):
    """Write to ``<path>.partial`` and rename on success; the partial file is kept on failure."""
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    yield tmp
    os.replace(tmp, path)


def _sha(path) -> str:
    return file_sha256(path)


def _config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------- stage bodies

def stage_demos(env, n_traj, T, seed, out):
    d = env.gen_demos(n_traj, T, RngStream(seed, "demos"))
    with staged(out) as tmp:
        save_dataset(d, tmp)
    return d


def _train_one(args):
    train, val, reg, tc = args
    return train_dynamics(train, val, reg, tc)


def stage_sweep(data, grid, tc, val_fraction, seed, out_dir, workers=1):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, val = split(data, val_fraction, RngStream(seed, "split"))
    res = residual_scale(data)
    jobs = [(train, val, reg, tc) for reg in grid]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            models = list(ex.map(_train_one, jobs))
    else:
        models = [_train_one(j) for j in jobs]
    rows = []
    for i, (reg, m) in enumerate(zip(grid, models)):
        name = f"model_{i:02d}.json"
        with staged(out_dir / name) as tmp:
            m.save(tmp)
        rows.append({"index": i, "checkpoint": name, "mode": reg.mode, "per_layer_bound": reg.per_layer_bound,
                     "L": reg.effective_L, "lambda": reg.lam, "sigma": reg.sigma, "eps_val": m.eps_val,
                     "score_backtrack": model_selection_score(m, "backtrack", res),
                     "score_disturbed": model_selection_score(m, "disturbed")})
    with staged(out_dir / "sweep.csv") as tmp:
        write_sweep_csv(rows, tmp)
    return models, rows


def stage_select(sweep_dir, criterion, out, data=None):
    sweep_dir = Path(sweep_dir)
    paths = sorted(sweep_dir.glob("model_*.json"))
    if not paths:
        raise FileNotFoundError(f"no model_*.json checkpoints in {sweep_dir}")
    models = [DynamicsModel.load(p) for p in paths]
    res = None
    if criterion == "backtrack":
        if data is None:
            raise ValueError("backtrack selection needs the demonstration data (--data)")
        res = residual_scale(data)
    best = select_best(models, criterion, res)
    src = paths[models.index(best)]
    with staged(out) as tmp:
        shutil.copyfile(src, tmp)
    return best, src.name


def _hist_rows(name, values, bins=20):
    if len(values) == 0:
        return []
    counts, edges = np.histogram(values, bins=bins)
    return [[name, repr(float(lo)), repr(float(hi)), int(c)] for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def write_label_extras(labels, report, data, stem: Path):
    stem = Path(stem)
    with staged(stem.with_name(stem.name + "_report.json")) as tmp:
        tmp.write_text(_dumps(report), encoding="utf-8")
    with staged(stem.with_name(stem.name + "_hist.csv")) as tmp:
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["quantity", "bin_low", "bin_high", "count"])
            w.writerows(_hist_rows("anchor_distance", labels.anchor_distance))
            w.writerows(_hist_rows("bound", labels.bound))
    row_of = {(int(tr), int(t)): i for i, (tr, t) in enumerate(zip(data.traj, data.t))}
    d_s = labels.s_g.shape[1]
    with staged(stem.with_name(stem.name + "_scatter.csv")) as tmp:
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["technique"] + [f"sg_{j}" for j in range(d_s)] + [f"expert_{j}" for j in range(d_s)]
                       + [f"a_g_{j}" for j in range(labels.a_g.shape[1])])
            for i in range(len(labels)):
                anchor = data.s[row_of[(int(labels.traj[i]), int(labels.t[i]))]]
                w.writerow([labels.technique[i]] + [repr(float(x)) for x in labels.s_g[i]]
                           + [repr(float(x)) for x in anchor] + [repr(float(x)) for x in labels.a_g[i]])


def stage_labels(model_path, data_path, gen_cfg, env, seed, out):
    model = DynamicsModel.load(model_path)
    data = load_dataset(data_path)
    labels, report = generate_labels(model, data, gen_cfg, RngStream(seed, "labels"), env=env)
    header = {"model_sha256": _sha(model_path), "dataset_sha256": _sha(data_path), "config": gen_cfg.to_dict(),
              "constants": report["constants"], "eps_val": model.eps_val}
    with staged(out) as tmp:
        save_labels(labels, tmp, header)
    out = Path(out)
    write_label_extras(labels, report, data, out.with_suffix(""))
    return labels, report


def stage_policy(data_path, labels_path, bc_cfg, out, env):
    data = load_dataset(data_path)
    aug, meta = None, {"dataset_sha256": _sha(data_path)}
    if labels_path is not None:
        aug, _ = load_labels(labels_path)
        meta["labels_sha256"] = _sha(labels_path)
    p = train_bc(data, aug, bc_cfg, RngStream(bc_cfg.seed, "bc"),
                 action_bounds=(env.action_low, env.action_high), metadata=meta)
    with staged(out) as tmp:
        p.save(tmp)
    return p


def stage_evaluate(policy_path, env, eval_cfg, out):
    policy = env.expert_action if policy_path == "expert" else Policy.load(policy_path)
    metrics = evaluate(policy, env, eval_cfg, RngStream(eval_cfg.seed, "eval"))
    with staged(out) as tmp:
        write_metrics_csv(metrics, tmp)
    return metrics


def stage_verify(labels_path, model_path, env, out, data_path=None, k_source=None, seed=0):
    labels, head = load_labels(labels_path)
    want = head.get("model_sha256")
    have = _sha(model_path)
    if want is not None and want != have:
        raise ValueError(f"labels {labels_path} were generated from model sha256 {want[:12]}..., "
                         f"but {model_path} has sha256 {have[:12]}...")
    model = DynamicsModel.load(model_path)
    bound = None
    if k_source is not None:
        if data_path is None:
            raise ValueError("recomputing bounds with --k-source needs --data")
        consts = compute_constants(model, load_dataset(data_path), k_source, env, seed=seed)
        bound = recompute_bounds(labels, model, consts)
    report = verify_bounds(labels, model, env, bound)
    with staged(out) as tmp:
        write_bounds_csv(report, tmp)
    return report


# ---------------------------------------------------------------- pipeline

class Manifest:
    """Stage records (input hashes, parameters, output hashes) in ``manifest.json``."""

    def __init__(self, out_dir: Path, cfg: dict):
        self.path = out_dir / "manifest.json"
        self.out_dir = out_dir
        self.doc = {"config": cfg, "seed": cfg["seed"],
                    "versions": {"ccil": __version__, "numpy": np.__version__}, "stages": {}}
        if self.path.exists():
            try:
                old = json.loads(self.path.read_text(encoding="utf-8"))
                self.doc["stages"] = old.get("stages", {})
            except json.JSONDecodeError:
                log.warning("ignoring unreadable manifest %s", self.path)

    def _hashes(self, names):
        return {n: _sha(self.out_dir / n) for n in names}

    def done(self, stage, inputs, params) -> bool:
        rec = self.doc["stages"].get(stage)
        if not rec or rec["params"] != _config_hash(params):
            return False
        try:
            if self._hashes(inputs) != rec["inputs"]:
                return False
            return self._hashes(rec["outputs"]) == rec["outputs"]
        except FileNotFoundError:
            return False

    def record(self, stage, inputs, params, outputs):
        self.doc["stages"][stage] = {"inputs": self._hashes(inputs), "params": _config_hash(params),
                                     "outputs": self._hashes(outputs)}
        with staged(self.path) as tmp:
            tmp.write_text(_dumps(self.doc), encoding="utf-8")


def _policy_job(args):
    data_path, labels_path, bc_cfg, out, env_cfg = args
    return stage_policy(data_path, labels_path, bc_cfg, out, make_env({"env": env_cfg}))


def _eval_job(args):
    policy_path, env_cfg, eval_cfg, out = args
    return stage_evaluate(policy_path, make_env({"env": env_cfg}), eval_cfg, out)


def _pool_map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def run_pipeline(cfg: dict, workers: int = 1) -> dict:
    """Demos, dynamics sweep, selection, labels, BC and CCIL policies, evaluation, bound check."""
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    env = make_env(cfg)
    seed = int(cfg["seed"])
    man = Manifest(out, cfg)
    with staged(out / "config.json") as tmp:
        tmp.write_text(_dumps(cfg), encoding="utf-8")

    def run(stage, inputs, params, outputs, fn):
        if man.done(stage, inputs, params):
            log.info("%s: up to date, skipped", stage)
            return
        log.info("%s: running", stage)
        fn()
        man.record(stage, inputs, params, outputs)

    demos = "demos.jsonl"
    run("gen-demos", [], {"env": cfg["env"], "demos": cfg["demos"], "seed": seed}, [demos],
        lambda: stage_demos(env, cfg["demos"]["n_traj"], cfg["demos"]["T"], seed, out / demos))

    grid = _grid(cfg)
    sweep_outputs = [f"dynamics/model_{i:02d}.json" for i in range(len(grid))] + ["dynamics/sweep.csv"]
    run("train-dynamics", [demos], {"dynamics": cfg["dynamics"], "val": cfg["demos"]["val_fraction"], "seed": seed},
        sweep_outputs,
        lambda: stage_sweep(load_dataset(out / demos), grid, _train_config(cfg), cfg["demos"]["val_fraction"],
                            seed, out / "dynamics", workers))

    best = "best_model.json"
    run("select-model", sweep_outputs[:-1] + [demos], cfg["selection"], [best],
        lambda: stage_select(out / "dynamics", cfg["selection"]["criterion"], out / best,
                             load_dataset(out / demos)))

    gen_cfg = _gen_config(cfg)
    label_outputs = ["labels.jsonl", "labels_report.json", "labels_hist.csv", "labels_scatter.csv"]
    run("gen-labels", [best, demos], {"labels": gen_cfg.to_dict(), "env": cfg["env"]}, label_outputs,
        lambda: stage_labels(out / best, out / demos, gen_cfg, env, seed, out / "labels.jsonl"))

    n_seeds = int(cfg["policy"]["seeds"])
    names = {}
    jobs = []
    for i in range(n_seeds):
        suffix = "" if i == 0 else f"_seed{i}"
        for kind, lab in (("bc", None), ("ccil", out / "labels.jsonl")):
            name = f"{kind}{suffix}.json"
            names[(kind, i)] = name
            jobs.append((out / demos, lab, _bc_config(cfg, seed + i), out / name, cfg["env"]))
    policy_files = [names[k] for k in sorted(names)]
    run("train-policy", [demos, "labels.jsonl"], {"policy": cfg["policy"], "seed": seed}, policy_files,
        lambda: _pool_map(_policy_job, jobs, workers))

    metric_files = [f"metrics_{names[k][:-5]}.csv" for k in sorted(names)]
    eval_jobs = [(out / names[k], cfg["env"], _eval_config(cfg, seed + k[1]), out / f"metrics_{names[k][:-5]}.csv")
                 for k in sorted(names)]

    def do_eval():
        results = dict(zip(sorted(names), _pool_map(_eval_job, eval_jobs, workers)))
        rows = []
        for i in range(n_seeds):
            row = compare(results[("ccil", i)], results[("bc", i)])
            rows.append({"run": f"seed{i}", **row})
        if n_seeds > 1:
            agg = {kind: aggregate_seeds([results[(kind, i)] for i in range(n_seeds)]) for kind in ("bc", "ccil")}
            rows.append({"run": "across_seeds", **compare(agg["ccil"], agg["bc"])})
        with staged(out / "comparison.csv") as tmp:
            write_comparison_csv(rows, tmp)

    run("evaluate", policy_files, {"eval": cfg["eval"], "seed": seed}, metric_files + ["comparison.csv"], do_eval)

    def do_verify():
        rep = stage_verify(out / "labels.jsonl", out / best, env, out / "bounds.csv")
        with staged(out / "bounds_summary.json") as tmp:
            tmp.write_text(_dumps(rep.summary()), encoding="utf-8")

    run("verify-bounds", ["labels.jsonl", best], {"env": cfg["env"]}, ["bounds.csv", "bounds_summary.json"],
        do_verify)
    return man.doc


# ---------------------------------------------------------------- argparse

def _add_seed(p):
    p.add_argument("--seed", type=int, default=None, help="random seed (default: $CCIL_SEED or 0)")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("CCIL_SEED", 0))


def _add_label_flags(p):
    p.add_argument("--technique", choices=["backtrack", "disturbed", "both"])
    p.add_argument("--delta-std", type=float)
    p.add_argument("--reject-eps", type=float)
    p.add_argument("--labels-per-transition", type=int)
    p.add_argument("--k-source", choices=["per-layer-product", "sampled"])


def _add_policy_flags(p):
    # bare flag turns NoiseBC on at 1e-2 (standardized state units)
    p.add_argument("--noise-bc-std", type=float, nargs="?", const=NOISE_BC_STD)
    p.add_argument("--aug-weight", type=float)


def _label_overrides(args) -> dict:
    tech = args.technique
    if tech is not None:
        tech = ["backtrack", "disturbed"] if tech == "both" else [tech]
    return {"labels.techniques": tech, "labels.delta_std": args.delta_std, "labels.eps_rej": args.reject_eps,
            "labels.labels_per_transition": args.labels_per_transition, "labels.k_source": args.k_source}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ccil", description="Corrective labels for behavior cloning.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--workers", type=int, default=1, help="parallel worker processes (default 1)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-demos", help="roll out the expert")
    p.add_argument("--env", default="pendulum", choices=["pendulum", "pendulum-wall"])
    p.add_argument("--n", type=int, default=50, help="number of trajectories")
    p.add_argument("--T", type=int, default=500)
    p.add_argument("--out", default="demos.jsonl")
    _add_seed(p)

    p = sub.add_parser("train-dynamics", help="fit one dynamics model or a sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", default="hinge", choices=["none", "spectral", "hinge", "slack", "weighted"])
    p.add_argument("--per-layer-bound", type=float)
    p.add_argument("--L", type=float, dest="L")
    p.add_argument("--lam", type=float, default=0.5)
    p.add_argument("--sigma", type=float, default=3e-4)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--sweep", action="store_true", help="train the full grid into --out (a directory)")
    p.add_argument("--out", default="model.json")
    _add_seed(p)

    p = sub.add_parser("select-model", help="pick the sweep model with the smallest error bound")
    p.add_argument("--sweep-dir", required=True)
    p.add_argument("--criterion", default="disturbed", choices=["backtrack", "disturbed"])
    p.add_argument("--data", help="demonstrations (needed for the backtrack criterion)")
    p.add_argument("--out", default="best_model.json")

    p = sub.add_parser("gen-labels", help="generate corrective labels")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--env", default="pendulum", choices=["pendulum", "pendulum-wall"])
    p.add_argument("--out", default="labels.jsonl")
    _add_label_flags(p)
    _add_seed(p)

    p = sub.add_parser("train-policy", help="behavior cloning, optionally augmented")
    p.add_argument("--data", required=True)
    p.add_argument("--aug", help="labels file to add to the expert data")
    p.add_argument("--env", default="pendulum", choices=["pendulum", "pendulum-wall"])
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--out", default="policy.json")
    _add_policy_flags(p)
    _add_seed(p)

    p = sub.add_parser("evaluate", help="mean return under observation and action noise")
    p.add_argument("--policy", required=True, help="policy checkpoint or 'expert'")
    p.add_argument("--env", default="pendulum", choices=["pendulum", "pendulum-wall"])
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--T", type=int, default=500)
    p.add_argument("--obs-noise", type=float, default=0.05)
    p.add_argument("--act-noise", type=float, default=0.05)
    p.add_argument("--out", default="metrics.csv")
    _add_seed(p)

    p = sub.add_parser("verify-bounds", help="check label bounds against the analytic dynamics")
    p.add_argument("--labels", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--env", default="pendulum", choices=["pendulum", "pendulum-wall"])
    p.add_argument("--data", help="demonstrations (needed with --k-source)")
    p.add_argument("--k-source", choices=["per-layer-product", "sampled"],
                   help="recompute bounds with these constants instead of the stored ones")
    p.add_argument("--out", default="bounds.csv")
    _add_seed(p)

    p = sub.add_parser("pipeline", help="run every stage; resumes from manifest.json")
    p.add_argument("--config", help="JSON config; flags below override it")
    p.add_argument("--out-dir")
    p.add_argument("--episodes", type=int)
    _add_label_flags(p)
    _add_policy_flags(p)
    _add_seed(p)
    return ap


def _summary(obj):
    print(json.dumps(obj, sort_keys=True))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        return _dispatch(args)
    except (ConfigError, ValueError, FileNotFoundError, FloatingPointError, KeyError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "gen-demos":
        env = PendulumEnv.make(args.env)
        d = stage_demos(env, args.n, args.T, _seed(args), args.out)
        _summary({"out": args.out, "transitions": len(d)})
    elif cmd == "train-dynamics":
        data = load_dataset(args.data)
        seed = _seed(args)
        tc = nn.TrainConfig(epochs=args.epochs, patience=args.patience, seed=seed)
        if args.sweep:
            grid = sweep_grid(mode=args.mode)
            _, rows = stage_sweep(data, grid, tc, args.val_fraction, seed, args.out, args.workers)
            _summary({"out": args.out, "models": len(rows)})
        else:
            reg = RegConfig(args.mode, L=args.L, per_layer_bound=args.per_layer_bound, lam=args.lam, sigma=args.sigma)
            train, val = split(data, args.val_fraction, RngStream(seed, "split"))
            m = train_dynamics(train, val, reg, tc)
            with staged(args.out) as tmp:
                m.save(tmp)
            _summary({"out": args.out, "eps_val": m.eps_val})
    elif cmd == "select-model":
        data = load_dataset(args.data) if args.data else None
        m, name = stage_select(args.sweep_dir, args.criterion, args.out, data)
        _summary({"out": args.out, "selected": name, "eps_val": m.eps_val, "L": m.L})
    elif cmd == "gen-labels":
        cfg = load_config(None, {"seed": args.seed, **_label_overrides(args)})
        env = PendulumEnv.make(args.env)
        labels, report = stage_labels(args.model, args.data, _gen_config(cfg), env, cfg["seed"], args.out)
        _summary({"out": args.out, **{k: report[k] for k in ("attempted", "emitted", "rejected_distance",
                                                             "rejected_residual", "rejected_clamp", "rejected_wall")}})
    elif cmd == "train-policy":
        cfg = load_config(None, {"seed": args.seed, "policy.epochs": args.epochs,
                                 "policy.noise_bc_std": args.noise_bc_std, "policy.aug_weight": args.aug_weight})
        env = PendulumEnv.make(args.env)
        p = stage_policy(args.data, args.aug, _bc_config(cfg, cfg["seed"]), args.out, env)
        _summary({"out": args.out, "n_expert": p.metadata["n_expert"], "n_aug": p.metadata["n_aug"]})
    elif cmd == "evaluate":
        env = PendulumEnv.make(args.env)
        ec = EvalConfig(args.episodes, args.T, args.obs_noise, args.act_noise, _seed(args))
        m = stage_evaluate(args.policy, env, ec, args.out)
        _summary({"out": args.out, "mean": m["mean"], "std": m["std"], "episodes": m["episodes"]})
    elif cmd == "verify-bounds":
        env = PendulumEnv.make(args.env)
        rep = stage_verify(args.labels, args.model, env, args.out, args.data, args.k_source, _seed(args))
        _summary({"out": args.out, **rep.summary()})
    elif cmd == "pipeline":
        overrides = {"seed": args.seed, "out_dir": args.out_dir, "eval.episodes": args.episodes,
                     "policy.noise_bc_std": args.noise_bc_std, "policy.aug_weight": args.aug_weight,
                     **_label_overrides(args)}
        cfg = load_config(args.config, overrides)
        doc = run_pipeline(cfg, args.workers)
        _summary({"out_dir": cfg["out_dir"], "stages": sorted(doc["stages"])})
    return 0


if __name__ == "__main__":
    sys.exit(main())
