"""Train a small offline policy on freshly collected rope data.

Run:  python demos/03_train_policy.py        (a few minutes)
Writes demo_out/demo_policy.dlop; prints training diagnostics.
"""
import logging
import time

from dloshape import (
    SimConfig,
    TrainConfig,
    collect,
    load_policy,
    relabel,
    save_policy,
    train,
)

logging.basicConfig(level=logging.INFO, format="%(message)s")


def main():
    dataset = relabel(collect(SimConfig(), "soft", 60, seed=11), "intra", 4, seed=1)
    config = TrainConfig(
        total_steps=5000,
        batch_size=128,
        dtype="float32",
        alpha=2.5,
        seed=11,
        log_every=1000,
    )
    t0 = time.perf_counter()
    params = train(dataset, config)
    print(f"trained {config.total_steps} steps in {time.perf_counter() - t0:.0f} s")

    save_policy(params, "demo_out/demo_policy.dlop",
                extra_manifest={"alpha": config.alpha, "steps": config.total_steps})
    back = load_policy("demo_out/demo_policy.dlop")
    import numpy as np

    assert np.array_equal(back.actor.flat_params, params.actor.flat_params)
    print("policy round-trips bit-exactly through demo_out/demo_policy.dlop")


if __name__ == "__main__":
    main()
