import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ccil import nn


def loop_forward(m, x):
    h = list(x)
    for li, (W, b) in enumerate(zip(m.weights, m.biases)):
        out = []
        for i in range(W.shape[0]):
            v = b[i] + sum(W[i, j] * h[j] for j in range(W.shape[1]))
            out.append(max(v, 0.0) if li < len(m.weights) - 1 else v)
        h = out
    return np.array(h)


def test_forward_matches_loop_oracle(gen):
    m = nn.init((4, 5, 3, 2), seed=1)
    x = gen.normal(size=(6, 4))
    y = m(x)
    for i in range(6):
        assert np.allclose(y[i], loop_forward(m, x[i]), atol=1e-12)


def test_init_is_seeded():
    a, b = nn.init((3, 8, 2), seed=4), nn.init((3, 8, 2), seed=4)
    assert all(np.array_equal(p, q) for p, q in zip(a.params, b.params))
    assert all(not np.any(bias) for bias in a.biases)
    with pytest.raises(ValueError):
        nn.init((3,))


def test_shape_checks():
    m = nn.init((3, 4, 2))
    with pytest.raises(ValueError, match="input dimension"):
        m(np.zeros(4))
    with pytest.raises(ValueError):
        nn.Mlp((3, 2), [np.zeros((3, 2))], [np.zeros(2)])


def test_param_gradients_match_finite_differences(gen):
    m = nn.init((3, 6, 5, 2), seed=2)
    x = gen.normal(size=(8, 3))
    t = gen.normal(size=(8, 2))
    w = gen.uniform(0.5, 2.0, 8)
    _, grads = nn.grad_params(m, x, t, weights=w)
    h = 1e-6
    for k, p in enumerate(m.params):
        for idx in list(np.ndindex(p.shape))[:6]:
            plus = [q.copy() for q in m.params]
            minus = [q.copy() for q in m.params]
            plus[k][idx] += h
            minus[k][idx] -= h
            fd = (nn.grad_params(m.with_params(plus), x, t, weights=w)[0]
                  - nn.grad_params(m.with_params(minus), x, t, weights=w)[0]) / (2 * h)
            assert grads[k][idx] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_input_jacobian_matches_finite_differences(gen):
    m = nn.init((4, 7, 3), seed=3)
    x = gen.normal(size=(5, 4))
    J = m.jacobian(x)
    assert J.shape == (5, 3, 4)
    assert m.jacobian(x[0]).shape == (3, 4)
    h = 1e-6
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        assert np.allclose(J[:, :, j], (m(x + e) - m(x - e)) / (2 * h), atol=1e-7)
    assert np.array_equal(nn.grad_input(m, x), J)


def test_backward_input_gradient_agrees_with_jacobian(gen):
    m = nn.init((3, 9, 2), seed=5)
    x = gen.normal(size=(4, 3))
    dy = gen.normal(size=(4, 2))
    _, inputs = m.forward_cache(x)
    _, dx = m.backward(inputs, dy)
    assert np.allclose(dx, np.einsum("no,noi->ni", dy, m.jacobian(x)))


def test_non_finite_loss_raises():
    m = nn.init((2, 3, 1))
    with pytest.raises(FloatingPointError):
        nn.grad_params(m, np.array([[np.inf, 0.0]]), np.array([[0.0]]))


def test_adam_matches_hand_trace():
    p = [np.array([1.0, -2.0])]
    grads = [np.array([0.5, 0.1]), np.array([-0.2, 0.3]), np.array([0.4, -0.1])]
    state = nn.AdamState.zeros_like(p)
    m = v = np.zeros(2)
    x = p[0].copy()
    for t, g in enumerate(grads, start=1):
        p, state = nn.adam_step(p, [g], state, lr=0.1)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x = x - 0.1 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert np.allclose(p[0], x, rtol=0, atol=1e-15)
    assert state.t == 3


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
              elements=st.floats(-10, 10, allow_nan=False)))
def test_spectral_norm_matches_svd(W):
    sigma, _ = nn.spectral_norm(W)
    ref = np.linalg.svd(W, compute_uv=False)[0] if W.size else 0.0
    # power iteration approaches from below; a near-tie between the top two
    # singular values caps its accuracy at roughly 1/(4e*iters)
    assert sigma <= ref * (1 + 1e-12) + 1e-12
    assert sigma == pytest.approx(ref, rel=1e-3, abs=1e-9)
    assert nn.exact_spectral_norm(W) == pytest.approx(ref, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 5), elements=st.floats(-5, 5, allow_nan=False)), st.floats(0.1, 10))
def test_spectral_projection_bounds_norm(W, bound):
    P = nn.spectral_project(W, bound)
    top = np.linalg.svd(P, compute_uv=False)[0]
    assert top <= bound * (1 + 1e-9) + 1e-12
    if np.linalg.svd(W, compute_uv=False)[0] <= bound * (1 - 1e-6):
        assert np.array_equal(P, W)


def test_spectral_norm_on_large_random_matrices(gen):
    # close top singular values slow power iteration down; it never overshoots
    for _ in range(10):
        W = gen.normal(size=(64, 64))
        ref = np.linalg.svd(W, compute_uv=False)[0]
        est = nn.spectral_norm(W)[0]
        assert est <= ref * (1 + 1e-12)
        assert est == pytest.approx(ref, rel=1e-5)
        assert nn.exact_spectral_norm(W) == pytest.approx(ref, rel=1e-12)


def test_exact_projection_hits_the_bound(gen):
    W = gen.normal(size=(64, 64))
    P = nn.spectral_project(W, 3.0, exact=True)
    assert np.linalg.svd(P, compute_uv=False)[0] <= 3.0 + 1e-12


def test_spectral_project_rejects_bad_bound():
    with pytest.raises(ValueError):
        nn.spectral_project(np.eye(2), 0.0)


def test_checkpoint_round_trip(tmp_path):
    m = nn.init((3, 4, 2), seed=7)
    nn.save_mlp(m, tmp_path / "m.json", {"note": "x"})
    back, meta = nn.load_mlp(tmp_path / "m.json", expected_widths=(3, 4, 2))
    assert meta == {"note": "x"}
    assert all(np.array_equal(p, q) for p, q in zip(m.params, back.params))
    with pytest.raises(ValueError, match="widths"):
        nn.load_mlp(tmp_path / "m.json", expected_widths=(3, 5, 2))
    doc = json.loads((tmp_path / "m.json").read_text())
    doc["weights"][0] = doc["weights"][0][:-1]
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="corrupt"):
        nn.load_mlp(tmp_path / "bad.json")
    (tmp_path / "junk.json").write_text("{")
    with pytest.raises(ValueError, match="corrupt"):
        nn.load_mlp(tmp_path / "junk.json")


def test_train_config_validation():
    with pytest.raises(ValueError):
        nn.TrainConfig(lr=0)
    with pytest.raises(ValueError):
        nn.TrainConfig(optimizer="sgd")
    assert nn.TrainConfig(hidden=[8, 8]).to_dict()["hidden"] == [8, 8]
