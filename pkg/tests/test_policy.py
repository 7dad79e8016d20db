import numpy as np
import pytest

from ccil import nn
from ccil.data import Dataset, RngStream
from ccil.labels import LabelSet
from ccil.policy import BcConfig, Policy, act, train_bc

FAST = dict(epochs=3, hidden=(16, 16))


def fake_labels(n, gen, d_s=3, d_a=1):
    z = np.zeros(n)
    return LabelSet(gen.normal(size=(n, d_s)), gen.uniform(-3, 3, (n, d_a)), gen.normal(size=(n, d_s)),
                    np.full(n, "disturbed", dtype="<U9"), z, z.copy(), z.copy(), z.copy(),
                    np.zeros(n, dtype=np.int64), np.arange(n))


def same_params(p, q):
    return all(np.array_equal(x, y) for x, y in zip(p.net.params, q.net.params))


def test_overfits_a_single_repeated_pair():
    s0 = np.array([0.3, -0.9, 1.5])
    a0 = np.array([1.25])
    d = Dataset(np.tile(s0, (64, 1)), np.tile(a0, (64, 1)), np.tile(s0, (64, 1)), np.zeros(64), np.arange(64))
    pol = train_bc(d, cfg=BcConfig(epochs=400, batch_size=64, hidden=(16, 16)))
    assert abs(pol(s0)[0] - a0[0]) <= 1e-3


def test_training_is_bit_deterministic(small_demos, gen, tmp_path):
    aug = fake_labels(100, gen)
    a = train_bc(small_demos, aug, BcConfig(**FAST, seed=4))
    b = train_bc(small_demos, aug, BcConfig(**FAST, seed=4))
    a.save(tmp_path / "a.json")
    b.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    c = train_bc(small_demos, aug, BcConfig(**FAST, seed=5))
    assert not same_params(a, c)


def test_zero_aug_weight_equals_vanilla(small_demos, gen):
    vanilla = train_bc(small_demos, None, BcConfig(**FAST))
    weighted = train_bc(small_demos, fake_labels(200, gen), BcConfig(**FAST, aug_weight=0.0))
    assert same_params(vanilla, weighted)
    assert weighted.metadata["n_aug"] == 0


def test_zero_noise_equals_vanilla(small_demos):
    assert same_params(train_bc(small_demos, cfg=BcConfig(**FAST)),
                       train_bc(small_demos, cfg=BcConfig(**FAST, noise_bc_std=0.0)))
    noisy = train_bc(small_demos, cfg=BcConfig(**FAST, noise_bc_std=1e-2))
    assert not same_params(noisy, train_bc(small_demos, cfg=BcConfig(**FAST)))


def test_labels_keep_dimensions_and_update_count(small_demos, gen):
    aug = fake_labels(500, gen)
    plain = train_bc(small_demos, None, BcConfig(**FAST))
    mixed = train_bc(small_demos, aug, BcConfig(**FAST))
    assert (mixed.d_s, mixed.d_a) == (plain.d_s, plain.d_a) == (3, 1)
    assert mixed.metadata["updates"] == plain.metadata["updates"]
    union = train_bc(small_demos, aug, BcConfig(**FAST, epoch_size="union"))
    assert union.metadata["updates"] > plain.metadata["updates"]
    assert mixed.metadata["n_aug"] == 500


def test_weighted_labels_differ_from_plain_union(small_demos, gen):
    aug = fake_labels(300, gen)
    one = train_bc(small_demos, aug, BcConfig(**FAST))
    half = train_bc(small_demos, aug, BcConfig(**FAST, aug_weight=0.5))
    assert not same_params(one, half)


def test_label_dimension_mismatch(small_demos, gen):
    with pytest.raises(ValueError, match="dimensions"):
        train_bc(small_demos, fake_labels(10, gen, d_a=2), BcConfig(**FAST))


def test_empty_training_set():
    d = Dataset(np.zeros((0, 3)), np.zeros((0, 1)), np.zeros((0, 3)), [], [], meta={"d_s": 3, "d_a": 1})
    with pytest.raises(ValueError, match="empty"):
        train_bc(d)


def test_config_validation():
    for bad in [dict(noise_bc_std=-1.0), dict(aug_weight=-0.1), dict(epoch_size="all"), dict(lr=0.0)]:
        with pytest.raises(ValueError):
            BcConfig(**bad)
    cfg = BcConfig(hidden=[8, 8], noise_bc_std=0.01)
    assert BcConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError, match="unknown"):
        BcConfig.from_dict({"learning_rate": 1.0})


def zero_policy(low=-3.0, high=3.0):
    net = nn.init((3, 4, 1))
    net = net.with_params([np.zeros_like(p) for p in net.params])
    return Policy(net, np.zeros(3), np.ones(3), low, high)


def test_act_examples(gen):
    pol = zero_policy()
    s = gen.normal(size=3)
    assert np.array_equal(act(pol, s), np.zeros(1))
    big = zero_policy()
    big.net.biases[-1][:] = 10.0
    assert np.array_equal(big(s), [3.0])
    big.net.biases[-1][:] = -10.0
    assert np.array_equal(big(gen.normal(size=(5, 3))), np.full((5, 1), -3.0))
    with pytest.raises(ValueError, match="dimension"):
        pol(np.zeros(4))


def test_act_is_deterministic(small_demos):
    pol = train_bc(small_demos, cfg=BcConfig(**FAST))
    s = small_demos.s[:7]
    assert np.array_equal(pol(s), pol(s))
    assert np.all((pol(small_demos.s) >= -3.0) & (pol(small_demos.s) <= 3.0))


def test_checkpoint_round_trip(small_demos, tmp_path):
    pol = train_bc(small_demos, cfg=BcConfig(**FAST), metadata={"dataset_sha256": "xyz"})
    pol.save(tmp_path / "p.json")
    back = Policy.load(tmp_path / "p.json")
    assert np.array_equal(back(small_demos.s), pol(small_demos.s))
    assert back.metadata["dataset_sha256"] == "xyz"
    assert back.metadata["config"] == pol.metadata["config"]
    nn.save_mlp(pol.net, tmp_path / "other.json", {"kind": "dynamics"})
    with pytest.raises(ValueError, match="not a policy"):
        Policy.load(tmp_path / "other.json")


def test_default_stream_matches_explicit_one(small_demos):
    rng = RngStream(0, "bc")
    a = train_bc(small_demos, cfg=BcConfig(epochs=1, hidden=(8,)), rng=rng)
    b = train_bc(small_demos, cfg=BcConfig(epochs=1, hidden=(8,)))
    assert same_params(a, b)
