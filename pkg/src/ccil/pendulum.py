"""Torque-controlled pendulum with optional bouncing walls.

The simulator integrates the internal state ``(theta, theta_dot)`` with RK4
and emits observations ``(sin theta, cos theta, theta_dot)``. ``theta = 0``
is hanging down, ``theta = pi`` is upright. All functions broadcast over
leading batch dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np

from .data import Dataset, RngStream

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PendulumParams:
    g: float = 9.81
    l: float = 1.0
    dt: float = 0.02
    torque_min: float = -3.0
    torque_max: float = 3.0
    walls: tuple[float, ...] = ()

    def __post_init__(self):
        if self.l <= 0:
            raise ValueError("pendulum length must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not self.torque_min < self.torque_max:
            raise ValueError("torque_min must be below torque_max")
        object.__setattr__(self, "walls", tuple(float(w) % TWO_PI for w in self.walls))


DEFAULT_WALLS = (np.pi / 2,)


class PendulumState(NamedTuple):
    theta: np.ndarray
    theta_dot: np.ndarray


def wrap_angle(theta):
    out = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


def observe(x: PendulumState) -> np.ndarray:
    theta = np.asarray(x.theta, dtype=float)
    return np.stack([np.sin(theta), np.cos(theta), np.asarray(x.theta_dot, dtype=float)], axis=-1)


def angle_of(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return wrap_angle(np.arctan2(s[..., 0], s[..., 1]))


def internal_state(s, check: bool = True, tol: float = 1e-6) -> PendulumState:
    """Recover ``(theta, theta_dot)`` from an observation.

    With ``check=False`` off-circle observations are radially projected.
    """
    s = np.asarray(s, dtype=float)
    if check:
        radius = np.hypot(s[..., 0], s[..., 1])
        if np.any(np.abs(radius - 1.0) > tol):
            raise ValueError("invalid observation: (sin, cos) is not on the unit circle")
    return PendulumState(angle_of(s), s[..., 2].copy())


def clamp_action(a, params: PendulumParams = PendulumParams()):
    return np.clip(a, params.torque_min, params.torque_max)


def dynamics_continuous(s, a, params: PendulumParams = PendulumParams()) -> np.ndarray:
    """Time derivative of the observation vector."""
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    a = a[..., 0] if a.ndim and a.shape[-1:] == (1,) else a
    sin, cos, w = s[..., 0], s[..., 1], s[..., 2]
    return np.stack([w * cos, -w * sin, -(params.g / params.l) * sin + a], axis=-1)


def _accel(theta, a, params):
    return -(params.g / params.l) * np.sin(theta) + a


def _rk4(theta, w, a, params):
    dt = params.dt
    k1t, k1w = w, _accel(theta, a, params)
    k2t, k2w = w + 0.5 * dt * k1w, _accel(theta + 0.5 * dt * k1t, a, params)
    k3t, k3w = w + 0.5 * dt * k2w, _accel(theta + 0.5 * dt * k2t, a, params)
    k4t, k4w = w + dt * k3w, _accel(theta + dt * k3t, a, params)
    theta_new = theta + dt / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t)
    w_new = w + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
    return theta_new, w_new


def _rk4_jacobian(theta, w, a, params):
    """Exact derivative of the RK4 map w.r.t. (theta, theta_dot, a).

    Returns an array (..., 2, 3): rows (theta', theta_dot'), columns
    (theta, theta_dot, a).
    """
    dt, c = params.dt, params.g / params.l
    theta = np.asarray(theta, dtype=float)
    shape = np.broadcast(theta, w, a).shape
    eye = np.broadcast_to(np.eye(3), shape + (3, 3))
    x_t, x_w, x_a = eye[..., 0, :], eye[..., 1, :], eye[..., 2, :]

    def stage(th, dth, ww, dww):
        # returns (k_theta, k_w) values and their derivatives
        kt, dkt = ww, dww
        kw = -c * np.sin(th) + a
        dkw = -c * np.cos(th)[..., None] * dth + x_a
        return kt, dkt, kw, dkw

    k1t, d1t, k1w, d1w = stage(theta, x_t, w, x_w)
    k2t, d2t, k2w, d2w = stage(theta + 0.5 * dt * k1t, x_t + 0.5 * dt * d1t, w + 0.5 * dt * k1w, x_w + 0.5 * dt * d1w)
    k3t, d3t, k3w, d3w = stage(theta + 0.5 * dt * k2t, x_t + 0.5 * dt * d2t, w + 0.5 * dt * k2w, x_w + 0.5 * dt * d2w)
    k4t, d4t, k4w, d4w = stage(theta + dt * k3t, x_t + dt * d3t, w + dt * k3w, x_w + dt * d3w)
    dtheta = x_t + dt / 6.0 * (d1t + 2 * d2t + 2 * d3t + d4t)
    dw = x_w + dt / 6.0 * (d1w + 2 * d2w + 2 * d3w + d4w)
    return np.stack([dtheta, dw], axis=-2)


def _apply_walls(theta0, w0, theta1, w1, walls):
    """Snap to a wall and reverse velocity when a step reaches or crosses it.

    ``theta1`` is the unwrapped end angle. A state sitting on a wall belongs
    to the side its velocity points to.
    """
    theta0 = np.asarray(theta0, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    theta1 = np.asarray(theta1, dtype=float)
    hit = np.zeros(np.broadcast(theta0, theta1).shape, dtype=bool)
    hit_pos = np.zeros(hit.shape)
    hit_dist = np.full(hit.shape, np.inf)
    for wall in walls:
        below = wall + TWO_PI * np.floor((theta0 - wall) / TWO_PI)
        above = below + TWO_PI
        on_below = np.abs(theta0 - below) < 1e-12
        on_above = np.abs(above - theta0) < 1e-12
        on = on_below | on_above
        up = (theta1 > theta0) & ~on & (theta1 >= above)
        down = (theta1 < theta0) & ~on & (theta1 <= below)
        back = on & (theta1 != theta0) & (np.sign(theta1 - theta0) == -np.sign(w0)) & (w0 != 0)
        pos = np.where(up, above, np.where(down, below, theta0))
        cross = up | down | back
        dist = np.abs(pos - theta0)
        better = cross & (dist < hit_dist)
        hit |= cross
        hit_pos = np.where(better, pos, hit_pos)
        hit_dist = np.where(better, dist, hit_dist)
    return np.where(hit, hit_pos, theta1), np.where(hit, -np.asarray(w1), w1), hit


def step(x: PendulumState, a, params: PendulumParams = PendulumParams()) -> PendulumState:
    """One RK4 step of length ``params.dt``; actions are clamped first."""
    a = clamp_action(np.asarray(a, dtype=float), params)
    a = a[..., 0] if a.ndim and a.shape[-1:] == (1,) else a
    theta0 = np.asarray(x.theta, dtype=float)
    w0 = np.asarray(x.theta_dot, dtype=float)
    theta1, w1 = _rk4(theta0, w0, a, params)
    if params.walls:
        theta1, w1, _ = _apply_walls(theta0, w0, theta1, w1, params.walls)
    return PendulumState(wrap_angle(theta1), w1)


def reward(s, a) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    a = a[..., 0] if a.ndim and a.shape[-1:] == (1,) else a
    theta = angle_of(s)
    return -0.5 * ((theta - np.pi) ** 2 + s[..., 2] ** 2) - 0.5 * a**2


LQR_GAINS = (20.11, 7.08)


def expert_action(s, params: PendulumParams = PendulumParams()) -> np.ndarray:
    """LQR near the top, energy shaping elsewhere, clamped. Shape (..., 1)."""
    s = np.asarray(s, dtype=float)
    theta = angle_of(s)
    w = s[..., 2]
    err = theta - np.pi
    lqr = -LQR_GAINS[0] * err - LQR_GAINS[1] * w
    energy = -w * (0.5 * w**2 - params.g * np.cos(theta) - params.g)
    u = np.where(np.abs(err) < 0.1, lqr, energy)
    return clamp_action(u, params)[..., None]


@dataclass
class Trajectory:
    s: np.ndarray  # (T, d_s)
    a: np.ndarray  # (T, d_a)
    s_next: np.ndarray
    rewards: np.ndarray

    @property
    def ret(self) -> float:
        return math.fsum(self.rewards)


Policy = Callable[[np.ndarray], np.ndarray]


class PendulumEnv:
    """Ground-truth pendulum; name is ``pendulum`` or ``pendulum-wall``."""

    d_s = 3
    d_a = 1

    def __init__(self, params: PendulumParams | None = None, name: str = "pendulum"):
        if params is None:
            params = PendulumParams(walls=DEFAULT_WALLS if name == "pendulum-wall" else ())
        if name not in ("pendulum", "pendulum-wall"):
            raise ValueError(f"unknown environment {name!r}")
        self.params = params
        self.name = name

    @classmethod
    def make(cls, name: str, **overrides) -> "PendulumEnv":
        if name not in ("pendulum", "pendulum-wall"):
            raise ValueError(f"unknown environment {name!r}")
        if "walls" not in overrides or overrides["walls"] is None:
            overrides["walls"] = DEFAULT_WALLS if name == "pendulum-wall" else ()
        return cls(PendulumParams(**overrides), name)

    @property
    def action_low(self) -> float:
        return self.params.torque_min

    @property
    def action_high(self) -> float:
        return self.params.torque_max

    def observe(self, x: PendulumState) -> np.ndarray:
        return observe(x)

    def step(self, x: PendulumState, a) -> PendulumState:
        return step(x, a, self.params)

    def reward(self, s, a):
        return reward(s, a)

    def expert_action(self, s):
        return expert_action(s, self.params)

    def sample_initial(self, n: int, rng: RngStream) -> PendulumState:
        gen = rng.generator()
        theta = gen.uniform(0.0, TWO_PI, size=n)
        w = gen.uniform(-1.0, 1.0, size=n)
        return PendulumState(theta, w)

    def true_residual(self, s, a, project: bool = False) -> np.ndarray:
        """Ground-truth one-step residual ``s' - s``.

        ``project=True`` accepts observations off the unit circle and
        evaluates the transition from the radially projected state; the
        result is still relative to the given ``s``.
        """
        s = np.asarray(s, dtype=float)
        x = internal_state(s, check=not project)
        return observe(self.step(x, a)) - s

    def next_state(self, s, a, project: bool = False) -> np.ndarray:
        return np.asarray(s, dtype=float) + self.true_residual(s, a, project=project)

    def residual_jacobian(self, theta, theta_dot, a) -> np.ndarray:
        """Jacobian of the residual w.r.t. (theta, theta_dot, a), shape (..., 3, 3).

        Exact for the continuous variant; ignores wall contacts.
        """
        a = clamp_action(np.asarray(a, dtype=float), self.params)
        theta = np.asarray(theta, dtype=float)
        J = _rk4_jacobian(theta, np.asarray(theta_dot, dtype=float), a, self.params)
        th1, _ = _rk4(theta, np.asarray(theta_dot, dtype=float), a, self.params)
        d_theta1 = J[..., 0, :]
        d_w1 = J[..., 1, :]
        e_t = np.zeros(d_theta1.shape)
        e_t[..., 0] = 1.0
        e_w = np.zeros(d_theta1.shape)
        e_w[..., 1] = 1.0
        row_sin = np.cos(th1)[..., None] * d_theta1 - np.cos(theta)[..., None] * e_t
        row_cos = -np.sin(th1)[..., None] * d_theta1 + np.sin(theta)[..., None] * e_t
        row_w = d_w1 - e_w
        return np.stack([row_sin, row_cos, row_w], axis=-2)

    @cached_property
    def lipschitz_constants(self) -> dict:
        """Bounds on the residual's Lipschitz constants over |theta_dot| <= 8.

        The tangent map of the observation embedding is an isometry, so the
        state constant is the spectral norm of the (theta, theta_dot) block.
        A dense grid maximum is inflated by a margin covering the grid
        spacing (second derivatives are O(dt)).
        """
        theta = np.linspace(0.0, TWO_PI, 181)
        w = np.linspace(-8.0, 8.0, 81)
        a = np.linspace(self.params.torque_min, self.params.torque_max, 7)
        T, W, A = np.meshgrid(theta, w, a, indexing="ij")
        J = self.residual_jacobian(T, W, A)
        k_state = np.linalg.norm(J[..., :, :2], ord=2, axis=(-2, -1)).max()
        k_action = np.linalg.norm(J[..., :, 2], axis=-1).max()
        margin = 1.1
        return {"state": float(k_state * margin), "action": float(k_action * margin)}

    def rollout(self, policy: Policy, T: int, init=None, obs_noise_std: float = 0.0,
                act_noise_std: float = 0.0, rng: RngStream | None = None) -> tuple[Trajectory, float]:
        trajs, returns = self.rollout_batch(policy, T, 1 if init is None else init, obs_noise_std,
                                            act_noise_std, rng)
        return trajs[0], float(returns[0])

    def rollout_batch(self, policy: Policy, T: int, init, obs_noise_std: float = 0.0,
                      act_noise_std: float = 0.0, rng: RngStream | None = None):
        """Roll out ``policy`` for ``T`` steps on a batch of episodes.

        ``init`` is a :class:`PendulumState` (scalars or arrays) or an integer
        number of random initial states. Each episode draws its noise from its
        own sub-stream ``episode/<i>``.
        """
        if T <= 0:
            raise ValueError("T must be positive")
        rng = rng or RngStream(0, "rollout")
        if isinstance(init, (int, np.integer)):
            x = self.sample_initial(int(init), rng.child("init"))
        else:
            x = PendulumState(np.atleast_1d(np.asarray(init.theta, dtype=float)),
                              np.atleast_1d(np.asarray(init.theta_dot, dtype=float)))
            x = PendulumState(wrap_angle(x.theta), x.theta_dot)
        n = len(x.theta)
        obs_noise = act_noise = None
        if obs_noise_std > 0 or act_noise_std > 0:
            obs_noise = np.empty((n, T, self.d_s))
            act_noise = np.empty((n, T, self.d_a))
            for i in range(n):
                gen = rng.child(f"episode/{i}").generator()
                obs_noise[i] = gen.standard_normal((T, self.d_s)) * obs_noise_std
                act_noise[i] = gen.standard_normal((T, self.d_a)) * act_noise_std
        S = np.empty((T, n, self.d_s))
        A = np.empty((T, n, self.d_a))
        SN = np.empty((T, n, self.d_s))
        R = np.empty((T, n))
        s = observe(x)
        for k in range(T):
            obs = s if obs_noise is None else s + obs_noise[:, k]
            a = np.asarray(policy(obs), dtype=float).reshape(n, self.d_a)
            if not np.all(np.isfinite(a)):
                raise FloatingPointError(f"policy returned a non-finite action at step {k}")
            if act_noise is not None:
                a = a + act_noise[:, k]
            a = clamp_action(a, self.params)
            x = self.step(x, a)
            s_next = observe(x)
            S[k], A[k], SN[k] = s, a, s_next
            R[k] = reward(s, a)
            s = s_next
        trajs = [Trajectory(S[:, i], A[:, i], SN[:, i], R[:, i]) for i in range(n)]
        return trajs, np.array([tr.ret for tr in trajs])

    def gen_demos(self, n_traj: int, T: int = 500, rng: RngStream | None = None, seed: int = 0) -> Dataset:
        """Noiseless expert rollouts from random initial states."""
        if n_traj < 1:
            raise ValueError("n_traj must be at least 1")
        rng = rng or RngStream(seed, "demos")
        trajs, _ = self.rollout_batch(self.expert_action, T, n_traj, rng=rng)
        return Dataset(
            np.concatenate([tr.s for tr in trajs]),
            np.concatenate([tr.a for tr in trajs]),
            np.concatenate([tr.s_next for tr in trajs]),
            np.repeat(np.arange(n_traj), T),
            np.tile(np.arange(T), n_traj),
            {"d_s": self.d_s, "d_a": self.d_a, "env": self.name, "seed": int(rng.seed)},
        )

    def crosses_wall(self, s_from, s_to) -> np.ndarray:
        """True where the shorter arc between two observations passes a wall."""
        if not self.params.walls:
            return np.zeros(np.asarray(s_from).shape[:-1], dtype=bool)
        th0 = angle_of(s_from)
        th1 = angle_of(s_to)
        delta = np.mod(th1 - th0 + np.pi, TWO_PI) - np.pi
        out = np.zeros(th0.shape, dtype=bool)
        for wall in self.params.walls:
            rel = np.mod(wall - th0 + np.pi, TWO_PI) - np.pi
            out |= np.where(delta >= 0, (rel > 0) & (rel <= delta), (rel < 0) & (rel >= delta))
        return out


def make_env(name: str, **overrides) -> PendulumEnv:
    return PendulumEnv.make(name, **overrides)
