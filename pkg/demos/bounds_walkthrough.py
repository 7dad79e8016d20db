"""Checking the corrective-label error bounds against the true pendulum.

Each label comes with a certified upper bound on how far the true next state
can land from its target. Because the pendulum's dynamics are known, we can
measure the actual miss and see how often, and by how much, the bound holds.
Two sources for the Lipschitz constants are compared: the loose product of
per-layer spectral norms and a sampled local estimate at the expert states.

    python demos/bounds_walkthrough.py
"""
import numpy as np

from ccil.data import RngStream, split
from ccil.dynamics import RegConfig, train_dynamics
from ccil.evaluation import TrueDynamicsModel, verify_bounds
from ccil.labels import GenConfig, compute_constants, generate_labels, recompute_bounds
from ccil.nn import TrainConfig
from ccil.pendulum import PendulumEnv


def show(title, rep):
    s = rep.summary()
    print(f"{title:<28} model error {s['mean_model_error']:.2e}  miss {s['mean_corrective_error']:.2e}  "
          f"bound {s['mean_bound']:.2e}  "
          f"violations {100 * s['violation_rate']:.1f}%")


def main():
    env = PendulumEnv.make("pendulum")
    demos = env.gen_demos(50, 500, RngStream(0, "demos"))
    train, val = split(demos, 0.1, RngStream(0, "split"))
    model = train_dynamics(train, val, RegConfig("hinge", per_layer_bound=2.0, lam=0.5, sigma=3e-4),
                           TrainConfig(epochs=150, patience=20))
    print(f"validation error {model.eps_val:.4f}")
    print("layer spectral norms:", np.round(model.layer_norms(), 3))

    labels, report = generate_labels(model, demos, GenConfig(), RngStream(0, "labels"), env=env)
    print(f"{report['emitted']} labels; anchor distance median "
          f"{np.median(labels.anchor_distance):.1e}, max {labels.anchor_distance.max():.1e}")

    # Sanity check: with the true dynamics standing in for the model its error is exactly zero;
    # the miss is unchanged because it depends only on the labels.
    show("true dynamics as model", verify_bounds(labels, TrueDynamicsModel(env), env))

    for source in ("per-layer-product", "sampled"):
        k = compute_constants(model, demos, source, env)
        bound = recompute_bounds(labels, model, k)
        show(f"constants: {source}", verify_bounds(labels, model, env, bound))


if __name__ == "__main__":
    main()
