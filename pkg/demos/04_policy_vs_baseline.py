"""Evaluate a trained policy against the diminishing-rigidity baseline.

Run:  python demos/04_policy_vs_baseline.py [policy.dlop]
Uses demo_out/demo_policy.dlop from demo 03 by default; writes the
comparison table and goal-vs-final overlays to demo_out/eval/.
"""
import sys

from dloshape import (
    BaselineRunner,
    PolicyRunner,
    SimConfig,
    emit_artifacts,
    load_policy,
    make_goal_sequence,
    run_eval,
)


def main():
    policy_path = sys.argv[1] if len(sys.argv) > 1 else "demo_out/demo_policy.dlop"
    sequence = make_goal_sequence(SimConfig(), "soft", seed=0)
    print("goal tags:", " ".join(sequence.tags))

    runners = [
        PolicyRunner(load_policy(policy_path)),
        BaselineRunner(),  # diminishing rigidity, k = 1
    ]
    reports = []
    for runner in runners:
        report = run_eval(runner, sequence, SimConfig(), "soft", seed=0)
        reports.append(({}, report))
        finals = " ".join(f"{v:.3f}" for v in report.finals)
        print(f"{report.runner:9s} finals [{finals}]  "
              f"mean {report.mean:.4f} +- {report.std:.4f} m")

    written = emit_artifacts(reports, "demo_out/eval")
    print(f"wrote {len(written)} files under demo_out/eval")


if __name__ == "__main__":
    main()
