"""Dataset manifests: typed records binding image ids to domain, label, split.

Serialized as CSV with the fixed header ``image_id,domain,label,split``.
The label is never free: it is a function of the domain, and manifests are
rejected if a stored label disagrees with its domain.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Union

__all__ = [
    "Domain",
    "Label",
    "Split",
    "ManifestError",
    "ManifestEntry",
    "DatasetManifest",
    "label_for_domain",
    "ANOMALY_DOMAINS",
]

CSV_HEADER = ["image_id", "domain", "label", "split"]


class Domain(enum.Enum):
    REAL_NORMAL = "real_normal"
    CG_ANOMALY = "cg_anomaly"
    CONVERTED_ANOMALY = "converted_anomaly"
    PSEUDOREAL_NORMAL = "pseudoreal_normal"
    PSEUDOREAL_ANOMALY = "pseudoreal_anomaly"


class Label(enum.Enum):
    NORMAL = "normal"
    ANOMALY = "anomaly"


class Split(enum.Enum):
    TRAIN = "train"
    TEST = "test"


ANOMALY_DOMAINS = frozenset(
    {Domain.CG_ANOMALY, Domain.CONVERTED_ANOMALY, Domain.PSEUDOREAL_ANOMALY}
)


class ManifestError(Exception):
    """Raised on malformed manifests: duplicate ids, bad labels, bad CSV."""


def label_for_domain(domain: Domain) -> Label:
    return Label.ANOMALY if domain in ANOMALY_DOMAINS else Label.NORMAL


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    domain: Domain
    label: Label
    split: Split

    def __post_init__(self):
        if self.label is not label_for_domain(self.domain):
            raise ManifestError(
                f"{self.image_id}: label {self.label.value} inconsistent with "
                f"domain {self.domain.value}"
            )

    @classmethod
    def for_domain(cls, image_id: str, domain: Domain, split: Split) -> "ManifestEntry":
        """Build an entry with the label derived from the domain."""
        return cls(image_id, domain, label_for_domain(domain), split)


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.image_id in seen:
                raise ManifestError(f"duplicate image_id: {e.image_id}")
            seen.add(e.image_id)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def filter(self, *, domain: Domain = None, label: Label = None,
               split: Split = None) -> "DatasetManifest":
        out = [
            e for e in self.entries
            if (domain is None or e.domain is domain)
            and (label is None or e.label is label)
            and (split is None or e.split is split)
        ]
        return DatasetManifest(out)

    def merged_with(self, other: Iterable[ManifestEntry]) -> "DatasetManifest":
        return DatasetManifest(list(self.entries) + list(other))

    def image_ids(self) -> List[str]:
        return [e.image_id for e in self.entries]

    def to_csv(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_HEADER)
            for e in self.entries:
                writer.writerow([e.image_id, e.domain.value, e.label.value, e.split.value])

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise ManifestError(f"no such manifest: {path}")
        entries = []
        with path.open(newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != CSV_HEADER:
                raise ManifestError(f"{path}: bad header {header!r}, expected {CSV_HEADER!r}")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 4:
                    raise ManifestError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
                try:
                    entries.append(
                        ManifestEntry(row[0], Domain(row[1]), Label(row[2]), Split(row[3]))
                    )
                except ValueError as exc:
                    raise ManifestError(f"{path}:{lineno}: {exc}") from exc
        return cls(entries)
