"""Model-zoo registry, Pareto frontier, and feasibility sets.

The frontier is the object everything else operates on: the router serves
exclusively from it, the attacker reconstructs it, and the defense perturbs
queries against it.  Spec values are tracked at a configured granularity
(acc_g, lat_g): values closer than one step are indistinguishable to the
system, so all feasibility decisions happen on integer grid indices.  That
also sidesteps float-representation mismatches between, say, a profiled
``0.7`` and the probe value ``700 * 0.001``.
"""

from __future__ import annotations

import json
import math
from array import array
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import GranularityViolation, ZooFormatError

# Grid indices are clamped so that quantizing +/-inf stays in integer range.
_IDX_CAP = 1 << 62


@dataclass(frozen=True)
class ModelProfile:
    """One registered model: identity plus its profiled operating point."""

    id: str
    name: str
    accuracy: float
    latency: float  # milliseconds
    num_classes: int = 10

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must be in [0, 1], got {self.accuracy}")
        if not self.latency > 0.0:
            raise ValueError(f"latency must be positive, got {self.latency}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be positive, got {self.num_classes}")


@dataclass(frozen=True)
class GranularityConfig:
    """Spec resolution: accuracy step, latency step, and the latency ceiling."""

    acc_g: float
    lat_g: float
    l_up: float  # milliseconds

    def __post_init__(self) -> None:
        if not (self.acc_g > 0 and self.lat_g > 0 and self.l_up > 0):
            raise ValueError("acc_g, lat_g and l_up must all be positive")
        if self.acc_g > 1.0:
            raise ValueError(f"acc_g must be at most 1, got {self.acc_g}")
        if self.lat_g > self.l_up:
            raise ValueError(f"lat_g must not exceed l_up ({self.lat_g} > {self.l_up})")

    @staticmethod
    def _index(x: float, step: float) -> int:
        if x == math.inf:
            return _IDX_CAP
        if x == -math.inf:
            return -_IDX_CAP
        q = x / step + 0.5
        if q >= _IDX_CAP:
            return _IDX_CAP
        if q <= -_IDX_CAP:
            return -_IDX_CAP
        return math.floor(q)

    def acc_index(self, accuracy: float) -> int:
        """Nearest accuracy grid index (half-steps round up)."""
        return self._index(accuracy, self.acc_g)

    def lat_index(self, latency: float) -> int:
        return self._index(latency, self.lat_g)

    def acc_value(self, index: int) -> float:
        """Canonical float for a grid index; the single source of grid floats."""
        return index * self.acc_g

    def lat_value(self, index: int) -> float:
        return index * self.lat_g

    def snap_acc(self, accuracy: float) -> float:
        return self.acc_value(self.acc_index(accuracy))

    def snap_lat(self, latency: float) -> float:
        return self.lat_value(self.lat_index(latency))

    @property
    def acc_top_index(self) -> int:
        return self.acc_index(1.0)

    @property
    def lat_top_index(self) -> int:
        return self.lat_index(self.l_up)


class ParetoFrontier:
    """The dominance-maximal subset of a zoo, sorted ascending by latency.

    Immutable after construction; safe to share across threads.  Accuracy is
    strictly ascending along the same order (the accuracy-latency correlation
    that makes the fingerprinting search space sorted).
    """

    __slots__ = ("entries", "granularity", "lat_idx", "acc_idx", "accs", "lats", "ncls", "_by_id")

    def __init__(self, entries: Sequence[ModelProfile], granularity: GranularityConfig | None = None):
        self.entries: tuple[ModelProfile, ...] = tuple(entries)
        self.granularity = granularity
        lats = [m.latency for m in self.entries]
        accs = [m.accuracy for m in self.entries]
        if any(lats[i] >= lats[i + 1] for i in range(len(lats) - 1)):
            raise ValueError("frontier entries must be strictly ascending in latency")
        if any(accs[i] >= accs[i + 1] for i in range(len(accs) - 1)):
            raise ValueError("frontier entries must be strictly ascending in accuracy")
        if granularity is not None:
            self.lat_idx = array("q", (granularity.lat_index(l) for l in lats))
            self.acc_idx = array("q", (granularity.acc_index(a) for a in accs))
        else:
            self.lat_idx = None
            self.acc_idx = None
        self.accs = array("d", accs)
        self.lats = array("d", lats)
        self.ncls = array("q", (m.num_classes for m in self.entries))
        self._by_id = {m.id: m for m in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i: int) -> ModelProfile:
        return self.entries[i]

    def model(self, model_id: str) -> ModelProfile:
        return self._by_id[model_id]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.entries)

    def latency_range(self) -> float:
        if not self.entries:
            return 0.0
        return self.entries[-1].latency - self.entries[0].latency


@dataclass(frozen=True)
class FeasibilitySet:
    """Frontier members satisfying one query's (acc_req, lat_req)."""

    members: tuple[ModelProfile, ...]

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def empty(self) -> bool:
        return not self.members


def dominates(a: ModelProfile, b: ModelProfile) -> bool:
    """True iff ``a`` is strictly better than ``b`` on both axes."""
    return a.accuracy > b.accuracy and a.latency < b.latency


def build_frontier(models: Iterable[ModelProfile], granularity: GranularityConfig) -> ParetoFrontier:
    """Compute the dominance-maximal subset and validate it against the grid.

    Ties are resolved deterministically: of two models with identical
    (accuracy, latency) the lexicographically smaller id survives, and a model
    matched on one axis but beaten on the other is dropped (weak dominance),
    keeping the frontier strictly co-monotone.

    Raises ``GranularityViolation`` when two surviving entries sit within one
    granularity step of each other on either axis, or any latency exceeds
    l_up: such a zoo breaks the separation assumption the serving grid (and
    the attack's exactness) relies on.
    """
    models = list(models)
    seen: dict[str, ModelProfile] = {}
    for m in models:
        if m.id in seen:
            raise ValueError(f"duplicate model id {m.id!r}")
        seen[m.id] = m

    # Exact (accuracy, latency) ties: keep the lexicographically smallest id.
    by_point: dict[tuple[float, float], ModelProfile] = {}
    for m in models:
        key = (m.accuracy, m.latency)
        kept = by_point.get(key)
        if kept is None or m.id < kept.id:
            by_point[key] = m

    survivors = sorted(by_point.values(), key=lambda m: (m.latency, -m.accuracy, m.id))
    frontier: list[ModelProfile] = []
    best_acc = -math.inf
    for m in survivors:
        if m.accuracy > best_acc:
            frontier.append(m)
            best_acc = m.accuracy

    for prev, cur in zip(frontier, frontier[1:]):
        if cur.accuracy - prev.accuracy <= granularity.acc_g:
            raise GranularityViolation(
                f"frontier accuracies {prev.accuracy} and {cur.accuracy} are within acc_g={granularity.acc_g}"
            )
        if cur.latency - prev.latency <= granularity.lat_g:
            raise GranularityViolation(
                f"frontier latencies {prev.latency} and {cur.latency} are within lat_g={granularity.lat_g}"
            )
    for m in frontier:
        if m.latency > granularity.l_up:
            raise GranularityViolation(f"model {m.id!r} latency {m.latency} exceeds l_up={granularity.l_up}")

    return ParetoFrontier(frontier, granularity)


def feasibility_set(frontier: ParetoFrontier, acc_req: float, lat_req: float) -> FeasibilitySet:
    """Members meeting accuracy >= acc_req and latency <= lat_req; may be empty."""
    return FeasibilitySet(
        tuple(m for m in frontier if m.accuracy >= acc_req and m.latency <= lat_req)
    )


def load_zoo(path: str | Path) -> tuple[list[ModelProfile], GranularityConfig]:
    """Parse a zoo document: {"models": [...], "granularity": {...}}."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ZooFormatError(f"zoo file is not valid JSON: {exc}") from exc
    return parse_zoo(doc)


def parse_zoo(doc: object) -> tuple[list[ModelProfile], GranularityConfig]:
    if not isinstance(doc, dict):
        raise ZooFormatError("zoo document must be a JSON object")
    missing = {"models", "granularity"} - doc.keys()
    if missing:
        raise ZooFormatError(f"zoo document missing keys: {sorted(missing)}")
    raw_models = doc["models"]
    if not isinstance(raw_models, list):
        raise ZooFormatError('"models" must be a list')
    models = []
    for i, entry in enumerate(raw_models):
        if not isinstance(entry, dict):
            raise ZooFormatError(f"model #{i} must be an object")
        extra = entry.keys() - {"id", "name", "accuracy", "latency_ms", "num_classes"}
        if extra:
            raise ZooFormatError(f"model #{i} has unknown fields: {sorted(extra)}")
        try:
            models.append(
                ModelProfile(
                    id=str(entry["id"]),
                    name=str(entry["name"]),
                    accuracy=float(entry["accuracy"]),
                    latency=float(entry["latency_ms"]),
                    num_classes=int(entry["num_classes"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ZooFormatError(f"model #{i} is invalid: {exc}") from exc
    raw_g = doc["granularity"]
    if not isinstance(raw_g, dict):
        raise ZooFormatError('"granularity" must be an object')
    try:
        granularity = GranularityConfig(
            acc_g=float(raw_g["acc_g"]),
            lat_g=float(raw_g["lat_g"]),
            l_up=float(raw_g["l_up_ms"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ZooFormatError(f"granularity is invalid: {exc}") from exc
    return models, granularity


def zoo_document(models: Iterable[ModelProfile], granularity: GranularityConfig) -> dict:
    """The JSON-serializable form consumed by ``load_zoo``."""
    return {
        "models": [
            {
                "id": m.id,
                "name": m.name,
                "accuracy": m.accuracy,
                "latency_ms": m.latency,
                "num_classes": m.num_classes,
            }
            for m in models
        ],
        "granularity": {
            "acc_g": granularity.acc_g,
            "lat_g": granularity.lat_g,
            "l_up_ms": granularity.l_up,
        },
    }


def save_zoo(path: str | Path, models: Iterable[ModelProfile], granularity: GranularityConfig) -> None:
    Path(path).write_text(json.dumps(zoo_document(models, granularity), indent=2) + "\n")
