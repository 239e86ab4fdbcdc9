"""Dataset directory format: manifest.json plus episodes.jsonl.

One JSON object per line per episode; floats round-trip bit-exactly through
the standard library serializer.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .data import Dataset, Episode, Step
from .errors import DatasetFormatError
from .mdp import Action, GripperPose, Observation, Shape

MANIFEST_NAME = "manifest.json"
EPISODES_NAME = "episodes.jsonl"


def _episode_to_obj(ep: Episode) -> dict:
    return {
        "goal": ep.goal.points.tolist(),
        "material": ep.material_tag,
        "seed": ep.seed,
        "steps": [
            {
                "t": s.time,
                "shape": s.observation.shape.points.tolist(),
                "p_l": [s.observation.left.x, s.observation.left.y],
                "p_r": [s.observation.right.x, s.observation.right.y],
                "o_l": s.observation.left.theta,
                "o_r": s.observation.right.theta,
                "action": s.action.as_array().tolist(),
                "reward": s.reward,
            }
            for s in ep.steps
        ],
    }


def _episode_from_obj(obj: dict) -> Episode:
    steps = []
    for s in obj["steps"]:
        obs = Observation(
            shape=Shape(np.asarray(s["shape"], dtype=float)),
            left=GripperPose(s["p_l"][0], s["p_l"][1], s["o_l"]),
            right=GripperPose(s["p_r"][0], s["p_r"][1], s["o_r"]),
        )
        steps.append(
            Step(
                observation=obs,
                action=Action.from_array(np.asarray(s["action"], dtype=float)),
                reward=float(s["reward"]),
                time=float(s["t"]),
            )
        )
    return Episode(
        steps=tuple(steps),
        goal=Shape(np.asarray(obj["goal"], dtype=float)),
        material_tag=obj.get("material", "custom"),
        seed=int(obj.get("seed", 0)),
    )


def save_dataset(dataset: Dataset, path: str) -> None:
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(dataset.manifest, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(path, EPISODES_NAME), "w", encoding="utf-8") as fh:
        for ep in dataset.episodes:
            fh.write(json.dumps(_episode_to_obj(ep)))
            fh.write("\n")


def load_dataset(path: str) -> Dataset:
    manifest_path = os.path.join(path, MANIFEST_NAME)
    episodes_path = os.path.join(path, EPISODES_NAME)
    if not os.path.isfile(manifest_path) or not os.path.isfile(episodes_path):
        raise DatasetFormatError(f"{path} is not a dataset directory")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    episodes = []
    with open(episodes_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                episodes.append(_episode_from_obj(json.loads(line)))
            except (KeyError, ValueError) as err:
                raise DatasetFormatError(
                    f"bad episode at {episodes_path}:{line_no}: {err}"
                ) from err
    declared = manifest.get("episode_count")
    if declared is not None and declared != len(episodes):
        raise DatasetFormatError(
            f"manifest declares {declared} episodes, file has {len(episodes)}"
        )
    return Dataset(episodes=episodes, manifest=manifest)
