"""Small end-to-end run through the library API.

Generates expert demonstrations on the pendulum, fits a Lipschitz-regularized
residual dynamics model, synthesizes corrective labels, and compares plain
behavior cloning with the augmented policy under noisy evaluation.

Sizes are cut down so this finishes in a few minutes on one core; the numbers
it prints are illustrative, not a benchmark.

    python demos/quickstart.py
"""
from ccil.data import RngStream, split
from ccil.dynamics import RegConfig, train_dynamics
from ccil.evaluation import EvalConfig, aggregate_seeds, compare, evaluate
from ccil.labels import GenConfig, generate_labels
from ccil.nn import TrainConfig
from ccil.pendulum import PendulumEnv
from ccil.policy import BcConfig, train_bc

SEEDS = range(3)


def main():
    env = PendulumEnv.make("pendulum")
    demos = env.gen_demos(20, 500, RngStream(0, "demos"))
    train, val = split(demos, 0.1, RngStream(0, "split"))
    print(f"{len(demos)} expert transitions from 20 trajectories")

    reg = RegConfig("hinge", per_layer_bound=2.0, lam=0.5, sigma=3e-4)
    model = train_dynamics(train, val, reg, TrainConfig(epochs=60, patience=20))
    print(f"dynamics model: validation error {model.eps_val:.4f}")

    labels, report = generate_labels(model, demos, GenConfig(), RngStream(0, "labels"), env=env)
    print(f"corrective labels: {report['emitted']} emitted of {report['attempted']} attempted")

    ec = EvalConfig(episodes=20)

    def score(aug):
        return aggregate_seeds([evaluate(train_bc(demos, aug, BcConfig(seed=s)), env, ec) for s in SEEDS])

    bc, ccil = score(None), score(labels)
    print(f"BC   mean return {bc['mean']:9.1f} (std over seeds {bc['std']:.1f})")
    print(f"CCIL mean return {ccil['mean']:9.1f} (std over seeds {ccil['std']:.1f})")
    c = compare(ccil, bc)
    print(f"difference {c['diff']:+.1f}, standard error {c['se']:.1f}")
    expert = evaluate(env.expert_action, env, ec)
    print(f"expert reference {expert['mean']:9.1f}")


if __name__ == "__main__":
    main()
