"""Collect a small dataset, relabel it, and inspect what changed.

Run:  python demos/02_dataset_pipeline.py
Writes demo_out/tiny_dataset/ in the manifest + jsonl format.
"""
import numpy as np

from dloshape import SimConfig, collect, relabel, save_dataset, split


def main():
    dataset = collect(SimConfig(), "soft", n_episodes=25, seed=7)
    durations = [ep.duration for ep in dataset]
    print(f"collected {len(dataset)} episodes, "
          f"durations {np.mean(durations):.1f} +- {np.std(durations):.1f} s")
    print("command seeds:", dataset.manifest["seeds"]["episodes"][:5], "...")

    train_set, test_set = split(dataset, 5)
    print(f"split: {len(train_set)} train / {len(test_set)} test")

    for mode in ("intra", "inter", "mixed"):
        aug = relabel(train_set, mode, ratio=2, seed=1)
        synth = aug.episodes[len(train_set):]
        lengths = [len(ep) for ep in synth]
        finals = [ep.steps[-1].reward for ep in synth]
        print(f"{mode:5s}: {len(train_set)} -> {len(aug)} episodes, "
              f"synthetic length {np.mean(lengths):.1f} steps, "
              f"final rewards all {'zero' if all(r == 0 for r in finals) else 'nonzero'}")

    aug = relabel(train_set, "intra", ratio=4, seed=1)
    save_dataset(aug, "demo_out/tiny_dataset")
    print(f"wrote demo_out/tiny_dataset ({len(aug)} episodes)")


if __name__ == "__main__":
    main()
