"""Transition datasets, JSON-lines serialization and seeded random streams."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

_MASK64 = (1 << 64) - 1


def label_hash(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, label)``.

    The generator seed is ``seed XOR hash(label)``. Every call to
    :meth:`generator` starts the sequence from the beginning, so operations
    taking a stream are pure. Use :meth:`child` to fan out sub-streams.
    """

    seed: int
    label: str = "root"

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)):
            raise TypeError("seed must be an integer")

    @property
    def mixed_seed(self) -> int:
        return (int(self.seed) & _MASK64) ^ label_hash(self.label)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.mixed_seed))

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{label}")


class Transition(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    traj_id: int
    t: int


def _rows(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2:
        return arr
    return arr.reshape(len(arr), -1) if arr.size else np.zeros((len(arr), 0))


@dataclass
class Dataset:
    """Expert transitions stored column-wise.

    ``s``/``s_next`` are ``(N, d_s)``, ``a`` is ``(N, d_a)``, ``traj`` and
    ``t`` are integer arrays of length ``N``. Rows of one trajectory are
    contiguous with consecutive ``t``.
    """

    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    traj: np.ndarray
    t: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.s = _rows(self.s)
        self.a = _rows(self.a)
        self.s_next = _rows(self.s_next)
        self.traj = np.asarray(self.traj, dtype=np.int64).reshape(-1)
        self.t = np.asarray(self.t, dtype=np.int64).reshape(-1)
        meta = dict(self.meta)
        meta.setdefault("d_s", self.s.shape[1] if len(self.s) else meta.get("d_s"))
        meta.setdefault("d_a", self.a.shape[1] if len(self.a) else meta.get("d_a"))
        self.meta = meta
        self.validate()

    @property
    def d_s(self) -> int:
        return int(self.meta["d_s"])

    @property
    def d_a(self) -> int:
        return int(self.meta["d_a"])

    def __len__(self) -> int:
        return len(self.t)

    def validate(self) -> None:
        n = len(self.t)
        if not (len(self.s) == len(self.a) == len(self.s_next) == len(self.traj) == n):
            raise ValueError("column lengths differ")
        if n == 0:
            self.s = np.zeros((0, self.meta.get("d_s") or 0))
            self.a = np.zeros((0, self.meta.get("d_a") or 0))
            self.s_next = np.zeros_like(self.s)
            return
        if self.s.shape[1] != self.d_s or self.s_next.shape[1] != self.d_s:
            raise ValueError(f"state dimension mismatch: expected d_s={self.d_s}")
        if self.a.shape[1] != self.d_a:
            raise ValueError(f"action dimension mismatch: expected d_a={self.d_a}")
        if np.any(self.t < 0):
            raise ValueError("negative step index")
        for name in ("s", "a", "s_next"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")
        # within each trajectory, t must be consecutive in storage order
        order = np.argsort(self.traj, kind="stable")
        tr, ts = self.traj[order], self.t[order]
        bad = (tr[1:] == tr[:-1]) & (np.diff(ts) != 1)
        if np.any(bad):
            tid = tr[1:][bad][0]
            raise ValueError(f"trajectory {tid}: step indices are not consecutive")

    def __iter__(self) -> Iterator[Transition]:
        for i in range(len(self)):
            yield Transition(self.s[i], self.a[i], self.s_next[i], int(self.traj[i]), int(self.t[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.meta == other.meta
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("s", "a", "s_next", "traj", "t")
            )
        )

    @property
    def traj_ids(self) -> np.ndarray:
        return np.unique(self.traj)

    def select_trajectories(self, ids) -> "Dataset":
        mask = np.isin(self.traj, np.asarray(list(ids), dtype=np.int64))
        return Dataset(
            self.s[mask], self.a[mask], self.s_next[mask], self.traj[mask], self.t[mask], dict(self.meta)
        )

    @classmethod
    def concatenate(cls, parts: list["Dataset"], meta: dict | None = None) -> "Dataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        return cls(
            np.concatenate([p.s for p in parts]),
            np.concatenate([p.a for p in parts]),
            np.concatenate([p.s_next for p in parts]),
            np.concatenate([p.traj for p in parts]),
            np.concatenate([p.t for p in parts]),
            dict(meta if meta is not None else parts[0].meta),
        )


def _floats(row) -> list[float]:
    return [float(x) for x in row]


def save_dataset(d: Dataset, path) -> None:
    """Write ``d`` as JSON lines: a meta line followed by one line per transition.

    Floats go through ``repr`` (shortest round-trip form), which reloads
    bit-exactly.
    """
    path = Path(path)
    meta = {"d_s": d.meta.get("d_s"), "d_a": d.meta.get("d_a"),
            "env": d.meta.get("env"), "seed": d.meta.get("seed")}
    extra = {k: v for k, v in d.meta.items() if k not in meta}
    meta.update(extra)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, allow_nan=False) + "\n")
        for i in range(len(d)):
            row = {
                "traj": int(d.traj[i]),
                "t": int(d.t[i]),
                "s": _floats(d.s[i]),
                "a": _floats(d.a[i]),
                "s_next": _floats(d.s_next[i]),
            }
            fh.write(json.dumps(row, allow_nan=False) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file, expected a meta line")
    try:
        meta = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:1: malformed meta line ({exc.msg})") from None
    if not isinstance(meta, dict) or "d_s" not in meta or "d_a" not in meta:
        raise ValueError(f"{path}:1: meta line must define d_s and d_a")
    d_s, d_a = int(meta["d_s"]), int(meta["d_a"])
    s, a, sn, traj, t = [], [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            rs, ra, rn = row["s"], row["a"], row["s_next"]
            traj.append(int(row["traj"]))
            t.append(int(row["t"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed transition line ({exc})") from None
        if len(rs) != d_s or len(rn) != d_s or len(ra) != d_a:
            raise ValueError(f"{path}:{lineno}: dimension mismatch with meta (d_s={d_s}, d_a={d_a})")
        s.append(rs)
        a.append(ra)
        sn.append(rn)
    return Dataset(
        np.array(s, dtype=float).reshape(-1, d_s),
        np.array(a, dtype=float).reshape(-1, d_a),
        np.array(sn, dtype=float).reshape(-1, d_s),
        np.array(traj, dtype=np.int64),
        np.array(t, dtype=np.int64),
        meta,
    )


def split(d: Dataset, val_fraction: float = 0.1, rng: RngStream | None = None) -> tuple[Dataset, Dataset]:
    """Split by whole trajectories.

    Each trajectory id (in ascending order) gets one uniform key from the
    stream; the ``round(val_fraction * n)`` smallest keys (at least one) form
    the validation set.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie in (0, 1)")
    ids = d.traj_ids
    if len(ids) < 2:
        raise ValueError("need at least 2 trajectories to split")
    rng = rng or RngStream(int(d.meta.get("seed") or 0), "split")
    keys = rng.generator().random(len(ids))
    n_val = min(max(1, int(round(val_fraction * len(ids)))), len(ids) - 1)
    order = np.argsort(keys, kind="stable")
    val_ids = np.sort(ids[order[:n_val]])
    train_ids = np.setdiff1d(ids, val_ids)
    return d.select_trajectories(train_ids), d.select_trajectories(val_ids)


def residual_scale(d: Dataset) -> float:
    """Mean L2 norm of ``s_next - s`` over the dataset."""
    if len(d) == 0:
        raise ValueError("residual_scale of an empty dataset")
    return float(np.mean(np.linalg.norm(d.s_next - d.s, axis=1)))


def add_gaussian_noise(v, std: float, rng: RngStream):
    if std < 0:
        raise ValueError("std must be non-negative")
    v = np.asarray(v, dtype=float)
    if std == 0:
        return v.copy()
    return v + std * rng.generator().standard_normal(v.shape)
