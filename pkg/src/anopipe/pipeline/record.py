"""Run record: an append-only JSON log binding every stage to its artifacts.

Each completed stage appends one entry with the config digest, wall-clock
time, artifact paths (relative to the run root) and content hashes of its
manifests and metrics. Readers use the latest entry per stage.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

__all__ = ["RunRecord", "file_sha256"]

RECORD_NAME = "run_record.json"


def file_sha256(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunRecord:
    root: Path
    entries: List[dict] = field(default_factory=list)

    @property
    def path(self) -> Path:
        return self.root / RECORD_NAME

    @classmethod
    def load(cls, root: Union[str, Path]) -> "RunRecord":
        root = Path(root)
        record = cls(root=root)
        if record.path.exists():
            with record.path.open() as f:
                data = json.load(f)
            record.entries = data.get("entries", [])
        return record

    def save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        with self.path.open("w") as f:
            json.dump({"entries": self.entries}, f, indent=2, sort_keys=True)
            f.write("\n")

    def append(
        self,
        stage: str,
        config_digest: str,
        wall_clock_s: float,
        artifacts: Dict[str, str],
        hashes: Dict[str, str],
        details: Optional[dict] = None,
    ) -> dict:
        entry = {
            "stage": stage,
            "config_digest": config_digest,
            "wall_clock_s": wall_clock_s,
            "artifacts": artifacts,
            "hashes": hashes,
            "details": details or {},
        }
        self.entries.append(entry)
        self.save()
        return entry

    def latest(self, stage: str) -> Optional[dict]:
        for entry in reversed(self.entries):
            if entry["stage"] == stage:
                return entry
        return None

    def artifact_path(self, stage: str, name: str) -> Optional[Path]:
        entry = self.latest(stage)
        if entry is None or name not in entry["artifacts"]:
            return None
        return self.root / entry["artifacts"][name]
