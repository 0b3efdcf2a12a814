"""Append-only JSONL trajectory store with fsync-on-append durability.

One line per trajectory; reward and judge verdicts ride along under their
own keys when present. Field order is stable so replay diffs are byte
exact. Appends are serialized by a lock; an acknowledged append has been
fsynced and survives process restart.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Iterator

from .rewards import JudgeVerdict, RewardSignal
from .session import SessionMode, Trajectory, trajectory_from_dict, trajectory_to_dict
from .util import canonical_json


class TrajectoryStore:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.touch(exist_ok=True)

    def append(
        self,
        trajectory: Trajectory,
        reward: RewardSignal | None = None,
        judge: JudgeVerdict | None = None,
    ) -> None:
        record = trajectory_to_dict(trajectory)
        if reward is not None:
            record["reward"] = reward.to_dict()
        if judge is not None:
            record["judge"] = judge.to_dict()
        line = canonical_json(record) + "\n"
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())

    def records(self) -> Iterator[dict]:
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)

    def trajectories(self) -> Iterator[Trajectory]:
        for record in self.records():
            yield trajectory_from_dict(record)

    def __len__(self) -> int:
        return sum(1 for _ in self.records())


def export_trajectories(
    store: TrajectoryStore,
    mode: SessionMode | None = None,
    user_id: str | None = None,
) -> Iterator[str]:
    """Yield stored JSONL lines matching the filter, schema untouched."""
    for record in store.records():
        if mode is not None and record.get("mode") != mode.value:
            continue
        if user_id is not None and record.get("user_id") != user_id:
            continue
        yield canonical_json(record)
