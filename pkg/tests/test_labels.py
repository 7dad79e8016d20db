import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccil import labels as lab
from ccil.data import Dataset, RngStream, Transition
from ccil.evaluation import TrueDynamicsModel
from ccil.labels import GenConfig, LabelSet
from ccil.pendulum import PendulumState, observe
from ccil.policy import BcConfig, train_bc

CONSTS = {"state": 2.0, "action": 3.0, "true_state": 5.0, "true_action": 1.0, "source": "test"}


class LinearModel:
    """f(s, a) = slope * s + shift, a stand-in for a learned residual model."""

    def __init__(self, slope, shift=0.0, d_s=3, d_a=1, eps_val=0.0):
        self.slope, self.shift = slope, np.asarray(shift, dtype=float)
        self.d_s, self.d_a, self.eps_val = d_s, d_a, eps_val

    def predict(self, s, a):
        return self.slope * np.asarray(s, dtype=float) + self.shift


def on_circle(s):
    # the analytic adapter only sees the angle, so roots are rays through the origin
    s = np.array(s, dtype=float)
    s[..., :2] /= np.linalg.norm(s[..., :2], axis=-1, keepdims=True)
    return s


def independent_forward(model, s, a):
    x = (np.concatenate([s, a]) - model.in_mean) / model.in_std
    last = len(model.net.weights) - 1
    for i, (W, b) in enumerate(zip(model.net.weights, model.net.biases)):
        x = np.array([sum(W[r, c] * x[c] for c in range(len(x))) + b[r] for r in range(W.shape[0])])
        if i < last:
            x = np.maximum(x, 0.0)
    return x * model.out_std + model.out_mean


# --- root solving ------------------------------------------------------------

def test_zero_model_is_a_one_step_fixed_point(gen):
    t = gen.normal(size=3)
    s_g, res, iters = lab.solve_root(LinearModel(0.0), np.zeros(1), t)
    assert np.array_equal(s_g, t) and res == 0.0 and iters == 1


def test_contraction_closed_form(gen):
    t = gen.normal(size=3)
    s_g, res, _ = lab.solve_root(LinearModel(-0.5), np.zeros(1), t, tol=1e-10)
    assert np.allclose(s_g, 2 * t, atol=1e-9)
    assert res <= 1e-10


def test_gradient_fallback_handles_expansive_map(gen):
    # s + f(s) = -s: the fixed-point map s <- t + 2 s diverges, descent does not
    t = gen.normal(size=(4, 3))
    s_g, res, iters = lab.solve_root(LinearModel(-2.0), np.zeros((4, 1)), t, tol=1e-8, max_iters=5)
    assert np.all(res <= 1e-8)
    assert np.allclose(s_g, -t, atol=1e-7)
    assert np.all(iters > 5)


def test_non_convergence_is_reported_not_raised():
    s_g, res, _ = lab.solve_root(LinearModel(-1.0, shift=[1.0, 0, 0]), np.zeros(1), np.zeros(3), tol=1e-9,
                                 max_iters=3, gd_steps=3)
    # s + f(s) = shift has no solution at all
    assert res >= 1.0 - 1e-12


def test_non_finite_residual_raises():
    class Bad(LinearModel):
        def predict(self, s, a):
            return np.full(np.shape(s), np.nan)

    with pytest.raises(FloatingPointError):
        lab.solve_root(Bad(0.0), np.zeros(1), np.zeros(3))


def test_trained_model_plug_back(small_model, small_demos):
    rows = list(small_demos)
    for i in (0, 57, 311):
        tr = rows[i]
        s_g, res, _ = lab.solve_root(small_model, tr.a, tr.s_next)
        assert res <= 1e-6
        f = independent_forward(small_model, s_g, tr.a)
        assert np.linalg.norm(s_g + f - tr.s_next) <= 1e-6 + 1e-12


# --- bounds and single labels -------------------------------------------------

def test_bound_arithmetic():
    assert lab.backtrack_bound(0.0, 12.0, 12.0, 0.005) == pytest.approx(0.12)
    assert lab.disturbed_bound(12.0, 1e-4, 12.0, 5e-3, 0.0) == pytest.approx(0.0662)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.floats(0, 50), st.floats(0, 50), st.floats(0, 0.1), st.floats(0, 0.1),
       st.floats(0, 1e-3))
def test_bounds_monotone(eps, k1, k2, d, extra, dn):
    assert lab.backtrack_bound(eps, k1, k2, d + extra) >= lab.backtrack_bound(eps, k1, k2, d)
    assert lab.disturbed_bound(k1, dn + extra, k2, d, eps) >= lab.disturbed_bound(k1, dn, k2, d, eps)
    assert lab.disturbed_bound(k1, dn, k2, d + extra, eps) >= lab.disturbed_bound(k1, dn, k2, d, eps)
    assert lab.disturbed_bound(k1, dn, k2, d, eps) >= 0


def test_disturbed_label_with_zero_delta_on_exact_model(env, small_demos):
    exact = TrueDynamicsModel(env)
    tr = list(small_demos)[20]
    cfg = GenConfig(eps_rej=np.inf)
    label = lab.disturbed_action_label(exact, tr, RngStream(0, "x"), cfg, CONSTS, delta=np.zeros(1))
    assert label is not None
    assert np.linalg.norm(on_circle(label.s_g) - tr.s) <= 1e-6
    assert np.array_equal(label.a_g, tr.a) and label.delta_norm == 0.0
    assert np.array_equal(label.s_target, tr.s_next)


def test_backtrack_label_lands_on_its_state(env, small_demos):
    exact = TrueDynamicsModel(env)
    tr = list(small_demos)[20]
    label = lab.backtrack_label(exact, tr, GenConfig(techniques="backtrack", eps_rej=np.inf), CONSTS)
    assert label is not None and label.technique == "backtrack"
    assert np.array_equal(label.s_target, tr.s) and np.array_equal(label.a_g, tr.a)
    landed = label.s_g + env.true_residual(label.s_g, label.a_g, project=True)
    assert np.linalg.norm(landed - tr.s) <= 1e-6
    assert label.bound == pytest.approx(0.0 + (2.0 + 5.0) * label.anchor_distance)


def test_distance_rejection():
    # s_g = t - shift is 0.02 away from the anchor
    m = LinearModel(0.0, shift=[0.02, 0, 0])
    tr = Transition(np.zeros(3), np.zeros(1), np.zeros(3), 0, 0)
    assert lab.backtrack_label(m, tr, GenConfig(techniques="backtrack", eps_rej=0.01)) is None
    kept = lab.backtrack_label(m, tr, GenConfig(techniques="backtrack", eps_rej=0.03))
    assert kept.anchor_distance == pytest.approx(0.02)


def test_disturbed_label_is_deterministic(small_model, small_demos):
    tr = list(small_demos)[5]
    runs = [[lab.disturbed_action_label(small_model, tr, RngStream(7, f"draw/{k}"), GenConfig(delta_std=1e-3))
             for k in range(100)] for _ in range(2)]
    for x, y in zip(*runs):
        assert (x is None) == (y is None)
        if x is not None:
            assert np.array_equal(x.s_g, y.s_g) and np.array_equal(x.a_g, y.a_g) and x.bound == y.bound


def test_clamped_delta_is_dropped():
    m = LinearModel(0.0)
    tr = Transition(np.zeros(3), np.array([3.0]), np.zeros(3), 0, 0)
    cfg = GenConfig()
    assert lab.disturbed_action_label(m, tr, RngStream(0, "c"), cfg, action_bounds=(-3, 3),
                                      delta=np.array([1e-5])) is None
    ok = lab.disturbed_action_label(m, tr, RngStream(0, "c"), cfg, action_bounds=(-3, 3),
                                    delta=np.array([-1e-5]))
    assert ok is not None and ok.delta_norm == pytest.approx(1e-5)


# --- batch generation --------------------------------------------------------

def test_generation_invariants(small_model, small_demos, env):
    cfg = GenConfig(techniques="both", delta_std=1e-5, labels_per_transition=2)
    labels, report = lab.generate_labels(small_model, small_demos, cfg, RngStream(0, "labels"), env=env)
    assert len(labels) == report["emitted"] > 0
    assert np.all(labels.anchor_distance <= cfg.eps_rej)
    assert np.all(labels.opt_residual <= cfg.eps_opt_tol)
    assert np.all(labels.bound >= 0)
    # plug-back
    again = np.linalg.norm(labels.s_g + small_model.predict(labels.s_g, labels.a_g) - labels.s_target, axis=1)
    assert np.allclose(again, labels.opt_residual, rtol=0, atol=1e-12)
    for tech, r in report["techniques"].items():
        assert r["attempted"] == (len(small_demos) * (2 if tech == "disturbed" else 1))
        assert r["attempted"] == (r["rejected_clamp"] + r["rejected_residual"] + r["rejected_distance"]
                                  + r["rejected_wall"] + r["emitted"])
        assert r["emitted"] == int(np.sum(labels.technique == tech))
    assert report["attempted"] == sum(r["attempted"] for r in report["techniques"].values())
    # stored bounds agree with a recomputation from the stored columns
    assert np.allclose(lab.recompute_bounds(labels, small_model, report["constants"]), labels.bound,
                       rtol=1e-12, atol=0)


def test_generation_is_deterministic(small_model, small_demos, env):
    cfg = GenConfig(techniques="both")
    a, ra = lab.generate_labels(small_model, small_demos, cfg, RngStream(0, "labels"), env=env)
    b, rb = lab.generate_labels(small_model, small_demos, cfg, RngStream(0, "labels"), env=env)
    assert a == b and ra == rb
    c, _ = lab.generate_labels(small_model, small_demos, cfg, RngStream(1, "labels"), env=env)
    assert not np.array_equal(a.a_g, c.a_g)


def test_draws_do_not_depend_on_trajectory_order(small_model, small_demos, env):
    ids = small_demos.traj_ids
    part = small_demos.select_trajectories(ids[3:5])
    full, _ = lab.generate_labels(small_model, small_demos, GenConfig(eps_rej=np.inf, eps_opt_tol=1.0),
                                  RngStream(0, "labels"), constants=CONSTS)
    sub, _ = lab.generate_labels(small_model, part, GenConfig(eps_rej=np.inf, eps_opt_tol=1.0),
                                 RngStream(0, "labels"), constants=CONSTS)
    mask = np.isin(full.traj, ids[3:5])
    assert np.array_equal(full.a_g[mask], sub.a_g)


def test_nothing_rejected_for_exact_model_without_distance_limit(env, small_demos):
    cfg = GenConfig(eps_rej=np.inf)
    labels, report = lab.generate_labels(TrueDynamicsModel(env), small_demos, cfg, RngStream(0, "l"),
                                         constants=CONSTS)
    # saturated expert actions that would be pushed outward are the only losses
    saturated = np.sum(np.abs(small_demos.a[:, 0]) >= 3.0)
    assert report["rejected_clamp"] <= saturated
    assert report["rejected_residual"] == report["rejected_distance"] == report["rejected_wall"] == 0
    assert report["emitted"] == report["attempted"] - report["rejected_clamp"]
    assert report["attempted"] == len(small_demos)


def test_zero_rejection_radius_keeps_only_exact_anchors():
    d = Dataset(np.zeros((4, 3)), np.zeros((4, 1)), np.array([[0.0, 0, 0], [0.1, 0, 0], [0, 0, 0], [0, 0.2, 0]]),
                np.zeros(4), np.arange(4))
    # backtrack anchors at s, and with f = 0 the root is s itself
    m = LinearModel(0.0)
    labels, report = lab.generate_labels(m, d, GenConfig(techniques="backtrack", eps_rej=0.0), constants=CONSTS)
    assert report["emitted"] == len(labels) == 4
    assert np.all(labels.anchor_distance == 0.0)
    labels, _ = lab.generate_labels(LinearModel(0.0, shift=[1e-9, 0, 0]), d,
                                    GenConfig(techniques="backtrack", eps_rej=0.0), constants=CONSTS)
    assert len(labels) == 0


def test_wall_crossing_labels_are_dropped(wall_env):
    # f = constant c puts s_g just below the wall while the target sits just above
    below = observe(PendulumState(np.pi / 2 - 0.001, 0.0))
    above = observe(PendulumState(np.pi / 2 + 0.002, 0.0))
    start = observe(PendulumState(np.pi / 2 - 0.002, 0.0))
    d = Dataset(start[None], np.zeros((1, 1)), above[None], [0], [0])
    m = LinearModel(0.0, shift=above - below)
    _, report = lab.generate_labels(m, d, GenConfig(), env=wall_env, constants=CONSTS)
    assert report["rejected_wall"] == 1 and report["emitted"] == 0
    _, report = lab.generate_labels(m, d, GenConfig(drop_wall_crossing=False), env=wall_env, constants=CONSTS)
    assert report["emitted"] == 1


def test_backtrack_needs_true_constant(small_model, small_demos):
    with pytest.raises(ValueError, match="true-dynamics"):
        lab.generate_labels(small_model, small_demos, GenConfig(techniques="backtrack"),
                            constants={"state": 1.0, "action": 1.0})


def test_gen_config_validation():
    assert GenConfig(techniques="both").techniques == ("backtrack", "disturbed")
    for bad in [dict(techniques="oracle"), dict(delta_std=0.0), dict(eps_opt_tol=0.0), dict(eps_rej=-1.0),
                dict(k_source="guess"), dict(labels_per_transition=0)]:
        with pytest.raises(ValueError):
            GenConfig(**bad)


def test_sampled_constants_do_not_exceed_product_bound(small_model, small_demos, env):
    prod = lab.compute_constants(small_model, small_demos, "per-layer-product", env)
    samp = lab.compute_constants(small_model, small_demos, "sampled", env, max_points=300)
    assert samp["state"] <= prod["state"] * (1 + 1e-9)
    assert samp["action"] <= prod["action"] * (1 + 1e-9)
    assert prod["true_state"] == env.lipschitz_constants["state"]


# --- known-dynamics generator ---------------------------------------------------

def test_golden_section_brackets_minimizer(gen):
    for x0 in gen.uniform(-2.5, 2.5, 20):
        x, f = lab.golden_section(lambda a: (a - x0) ** 2 + 1.0, np.array([-3.0]), np.array([3.0]), n_evals=40)
        assert abs(x[0] - x0) <= 1e-4
        assert f[0] == pytest.approx(1.0 + (x[0] - x0) ** 2)


def test_golden_section_counts_evaluations():
    calls = []

    def f(a):
        calls.append(1)
        return np.abs(a)

    lab.golden_section(f, np.array([-1.0]), np.array([2.0]), n_evals=40)
    assert len(calls) == 40


def test_expert_state_gets_expert_action(env, small_demos):
    rows = [0, 40, 120]
    labels = lab.oracle_labels_known_dynamics(env, None, small_demos, states=small_demos.s[rows])
    assert np.all(labels.anchor_distance == 0.0)
    assert np.all(labels.opt_residual <= 1e-4)
    expert_miss = np.linalg.norm(env.next_state(small_demos.s[rows], small_demos.a[rows], project=True)
                                 - small_demos.s_next[rows], axis=1)
    assert np.all(expert_miss <= 1e-12)


def test_nearest_expert_matches_brute_force(small_demos, gen):
    q = gen.normal(size=(50, 3))
    brute = [int(np.argmin(np.linalg.norm(small_demos.s - x, axis=1))) for x in q]
    assert list(lab.nearest_expert(q, small_demos, chunk=7)) == brute


def test_oracle_labels_beat_model_labels(env, small_model, small_demos):
    bt, _ = lab.generate_labels(small_model, small_demos, GenConfig(techniques="backtrack"), env=env)
    assert len(bt) > 100
    oracle = lab.oracle_labels_known_dynamics(env, None, small_demos, states=bt.s_g)
    err_bt = np.linalg.norm(bt.s_g + env.true_residual(bt.s_g, bt.a_g, project=True) - bt.s_target, axis=1)
    err_or = np.linalg.norm(oracle.s_g + env.true_residual(oracle.s_g, oracle.a_g, project=True)
                            - oracle.s_target, axis=1)
    assert np.allclose(err_or, oracle.opt_residual, atol=1e-12)
    assert np.mean(err_or <= err_bt) >= 0.8


def test_oracle_labels_from_rollouts(env, small_demos):
    pol = train_bc(small_demos, cfg=BcConfig(epochs=2, hidden=(16,)))
    labels = lab.oracle_labels_known_dynamics(env, pol, small_demos, n_rollouts=2, T=20, rng=RngStream(0, "o"))
    assert len(labels) == 40
    assert np.all((labels.a_g >= -3) & (labels.a_g <= 3))
    assert set(labels.technique) == {"oracle"}


# --- files -------------------------------------------------------------------

def test_label_file_round_trip(small_model, small_demos, env, tmp_path):
    labels, _ = lab.generate_labels(small_model, small_demos, GenConfig(techniques="both"), env=env)
    path = tmp_path / "labels.jsonl"
    lab.save_labels(labels, path, {"model_sha256": "abc"})
    back, head = lab.load_labels(path)
    assert back == labels
    assert head["count"] == len(labels) and head["model_sha256"] == "abc"
    assert head["kind"] == "corrective-labels"
    items = labels.to_list()
    assert len(items) == len(labels) and items[0].source == (int(labels.traj[0]), int(labels.t[0]))


def test_empty_label_file_round_trip(tmp_path):
    path = tmp_path / "none.jsonl"
    lab.save_labels(LabelSet.empty(3, 1), path)
    back, head = lab.load_labels(path)
    assert len(back) == 0 and back.s_g.shape == (0, 3) and head["count"] == 0


def test_malformed_label_file(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"d_s": 3, "d_a": 1}\n{"s_g": [1, 2]}\n')
    with pytest.raises(ValueError, match=":2:"):
        lab.load_labels(path)
    path.write_text("not json\n")
    with pytest.raises(ValueError, match=":1:"):
        lab.load_labels(path)
