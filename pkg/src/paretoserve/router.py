"""The model-less serving engine.

Clients state (minimum accuracy, maximum latency); the router computes the
feasibility set over the frontier, picks a member uniformly at random, and
runs the simulated inference oracle for a label.  With the defense enabled it
first perturbs both specs with per-query Laplace noise, but never serves a
model whose latency exceeds the query's original latency spec, so the defense
can only ever violate the accuracy side.

Spec comparisons happen on granularity grid indices (values within one step
are indistinguishable to the system); the noise itself is continuous and is
added to the real-valued specs before re-quantization.

The simulated oracle for model m returns the ground-truth class of the input
with probability m.accuracy and otherwise a uniformly random wrong class.
Ground truth is a deterministic hash of (dataset seed, input id) mod k, so
attack and defense only ever observe labels and errors, never model internals.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from typing import Iterator

from .errors import EmptyFrontier, EmptyLog
from .kernels import laplace_quantile, serve_pick, stream_state, stream_uniform
from .noise import LaplaceParams, NoiseSource, sample
from .zoo import ParetoFrontier

PHASE_FINGERPRINTING = "fingerprinting"
PHASE_LABELING = "labeling"

_MASK = (1 << 64) - 1
# Stream ids under one server seed: 0 selects/labels, query i >= 1 gets noise stream i.
SELECTION_STREAM = 0


class ServeStatus(enum.Enum):
    SERVED = "served"
    INFEASIBLE_SET_ERROR = "infeasible_set"


@dataclass(frozen=True)
class QuerySpec:
    """A client query; acc_req is optional and defaults to 0 when absent."""

    lat_req: float  # milliseconds; the attacker's latency budget post-fingerprinting
    acc_req: float | None = None
    input_id: int = 0

    def __post_init__(self) -> None:
        if not self.lat_req > 0:
            raise ValueError(f"lat_req must be positive, got {self.lat_req}")
        if self.acc_req is not None and not 0.0 <= self.acc_req <= 1.0:
            raise ValueError(f"acc_req must be in [0, 1], got {self.acc_req}")

    @property
    def effective_acc(self) -> float:
        return 0.0 if self.acc_req is None else self.acc_req


@dataclass(frozen=True)
class DefenseConfig:
    """Laplace perturbation of incoming specs, scaled by sensitivity/epsilon."""

    enabled: bool
    epsilon: float = 0.0
    delta_acc: float = 0.0
    delta_lat: float = 0.0

    def __post_init__(self) -> None:
        if self.enabled:
            if not self.epsilon > 0:
                raise ValueError(f"epsilon must be positive, got {self.epsilon}")
            if not self.delta_acc > 0:
                raise ValueError(f"delta_acc must be positive, got {self.delta_acc}")
            if not self.delta_lat > 0:
                raise ValueError(f"delta_lat must be positive, got {self.delta_lat}")

    @property
    def acc_scale(self) -> float:
        return self.delta_acc / self.epsilon

    @property
    def lat_scale(self) -> float:
        return self.delta_lat / self.epsilon


@dataclass(frozen=True)
class ServeOutcome:
    """Per-query result; noisy_* are telemetry only and never reach the wire."""

    status: ServeStatus
    served_model_id: str | None = None
    label: int | None = None
    spec_satisfied: bool = False
    noisy_acc: float | None = None
    noisy_lat: float | None = None

    @property
    def served(self) -> bool:
        return self.status is ServeStatus.SERVED


@dataclass(frozen=True)
class LogRecord:
    spec: QuerySpec
    outcome: ServeOutcome
    phase: str


@dataclass(frozen=True)
class TelemetrySnapshot:
    total: int
    served: int
    satisfied: int
    infeasible: int
    per_model: dict[str, int]


class ServeLog:
    """Append-only per-query accounting; one record per query received.

    With ``retain_records=False`` only the aggregate counters (and per-model
    serve counts) are kept, which is what large experiment sweeps use.
    """

    def __init__(self, retain_records: bool = True) -> None:
        self.retain_records = retain_records
        self.records: list[LogRecord] = []
        self.total = 0
        self.served = 0
        self.satisfied = 0
        self.infeasible = 0
        self.latency_violations = 0
        self.per_model: dict[str, int] = {}

    def append(self, spec: QuerySpec, outcome: ServeOutcome, phase: str, served_latency: float | None) -> None:
        self.total += 1
        if outcome.served:
            self.served += 1
            if outcome.spec_satisfied:
                self.satisfied += 1
            self.per_model[outcome.served_model_id] = self.per_model.get(outcome.served_model_id, 0) + 1
            if served_latency is not None and served_latency > spec.lat_req:
                self.latency_violations += 1
        else:
            self.infeasible += 1
        if self.retain_records:
            self.records.append(LogRecord(spec, outcome, phase))

    def __len__(self) -> int:
        return self.total

    def __iter__(self) -> Iterator[LogRecord]:
        return iter(self.records)

    def snapshot(self) -> TelemetrySnapshot:
        return TelemetrySnapshot(
            total=self.total,
            served=self.served,
            satisfied=self.satisfied,
            infeasible=self.infeasible,
            per_model=dict(self.per_model),
        )


def compute_sensitivities(frontier: ParetoFrontier) -> tuple[float, float]:
    """(delta_acc, delta_lat): the full accuracy range and the frontier latency span."""
    if len(frontier) == 0:
        raise EmptyFrontier("cannot compute sensitivities of an empty frontier")
    return 1.0, frontier.latency_range()


def goodput(log: ServeLog) -> float:
    """Fraction of all received queries served while meeting their original specs."""
    if log.total == 0:
        raise EmptyLog("goodput is undefined over an empty log")
    return log.satisfied / log.total


def _pick_and_label(
    frontier: ParetoFrontier,
    acc_req_idx: int,
    lat_cap_idx: int,
    rng: "SelectionRng",
    dataset_seed: int,
    input_id: int,
) -> tuple[int, int]:
    pos, label = serve_pick(
        frontier.lat_idx,
        frontier.acc_idx,
        frontier.accs,
        frontier.ncls,
        acc_req_idx,
        lat_cap_idx,
        rng.state,
        rng.draws,
        dataset_seed & _MASK,
        input_id & _MASK,
    )
    if pos >= 0:
        rng.skip(3)
    return pos, label


class SelectionRng:
    """Counter-based uniform stream used for member selection and labels."""

    __slots__ = ("state", "draws")

    def __init__(self, seed: int, stream_id: int = SELECTION_STREAM) -> None:
        self.state = stream_state(seed & _MASK, stream_id & _MASK)
        self.draws = 0

    def skip(self, n: int) -> None:
        self.draws += n


def serve_plain(
    frontier: ParetoFrontier,
    q: QuerySpec,
    rng: SelectionRng,
    *,
    dataset_seed: int = 0,
) -> ServeOutcome:
    """Uniform random selection from the feasibility set of the stated specs."""
    g = frontier.granularity
    acc_idx = g.acc_index(q.effective_acc)
    lat_idx = g.lat_index(q.lat_req)
    pos, label = _pick_and_label(frontier, acc_idx, lat_idx, rng, dataset_seed, q.input_id)
    if pos < 0:
        return ServeOutcome(status=ServeStatus.INFEASIBLE_SET_ERROR)
    m = frontier[pos]
    return ServeOutcome(
        status=ServeStatus.SERVED,
        served_model_id=m.id,
        label=label,
        spec_satisfied=True,
    )


def serve_defended(
    frontier: ParetoFrontier,
    q: QuerySpec,
    d: DefenseConfig,
    noise: NoiseSource,
    rng: SelectionRng,
    *,
    dataset_seed: int = 0,
) -> ServeOutcome:
    """Serve with per-query Laplace perturbation of both specs.

    A member must satisfy all three of: accuracy >= noisy acc spec, latency <=
    noisy lat spec, latency <= original lat spec.  The last conjunct makes the
    latency spec inviolable; accuracy is the only side the noise can break.
    """
    if not d.enabled:
        raise ValueError("serve_defended requires an enabled DefenseConfig")
    g = frontier.granularity
    y_acc = sample(noise, LaplaceParams(d.acc_scale))
    y_lat = sample(noise, LaplaceParams(d.lat_scale))
    noisy_acc = q.effective_acc + y_acc
    noisy_lat = q.lat_req + y_lat
    orig_acc_idx = g.acc_index(q.effective_acc)
    lat_cap_idx = min(g.lat_index(noisy_lat), g.lat_index(q.lat_req))
    pos, label = _pick_and_label(
        frontier, g.acc_index(noisy_acc), lat_cap_idx, rng, dataset_seed, q.input_id
    )
    if pos < 0:
        # Indistinguishable from the plain infeasible error on the wire.
        return ServeOutcome(
            status=ServeStatus.INFEASIBLE_SET_ERROR, noisy_acc=noisy_acc, noisy_lat=noisy_lat
        )
    m = frontier[pos]
    return ServeOutcome(
        status=ServeStatus.SERVED,
        served_model_id=m.id,
        label=label,
        spec_satisfied=frontier.acc_idx[pos] >= orig_acc_idx,
        noisy_acc=noisy_acc,
        noisy_lat=noisy_lat,
    )


class Router:
    """Serving engine state: frontier, defense, RNG streams, and the log.

    Queries may arrive concurrently; the log and streams are updated under a
    lock in a total order consistent with reply order.  Deterministic replay
    holds in single-in-flight use (which the experiment harness relies on).
    Fresh noise is drawn per query from a stream keyed by the query ordinal.
    """

    def __init__(
        self,
        frontier: ParetoFrontier,
        *,
        seed: int = 0,
        defense: DefenseConfig | None = None,
        dataset_seed: int = 0,
        retain_records: bool = True,
    ) -> None:
        if frontier.granularity is None:
            raise ValueError("router requires a frontier built with a GranularityConfig")
        self.frontier = frontier
        self.seed = seed
        self.defense = defense if defense is not None else DefenseConfig(enabled=False)
        self.dataset_seed = dataset_seed
        self.log = ServeLog(retain_records=retain_records)
        self._rng = SelectionRng(seed)
        self._phase = PHASE_LABELING
        self._queries = 0
        self._lock = threading.Lock()
        if self.defense.enabled:
            self._b_acc = self.defense.acc_scale
            self._b_lat = self.defense.lat_scale

    def set_phase(self, phase: str) -> None:
        if phase not in (PHASE_FINGERPRINTING, PHASE_LABELING):
            raise ValueError(f"unknown phase {phase!r}")
        self._phase = phase

    def serve(self, q: QuerySpec) -> ServeOutcome:
        with self._lock:
            self._queries += 1
            if self.defense.enabled:
                noise = NoiseSource(self.seed, stream_id=self._queries)
                outcome = serve_defended(
                    self.frontier, q, self.defense, noise, self._rng, dataset_seed=self.dataset_seed
                )
            else:
                outcome = serve_plain(self.frontier, q, self._rng, dataset_seed=self.dataset_seed)
            served_latency = (
                self.frontier.model(outcome.served_model_id).latency if outcome.served else None
            )
            self.log.append(q, outcome, self._phase, served_latency)
            return outcome

    def serve_brief(self, acc_req: float | None, lat_req: float, input_id: int) -> tuple[bool, int | None]:
        """Hot-path serve: same routing, RNG draws, and log counters as
        ``serve``, without per-query outcome objects.

        Experiment sweeps and the brute-force oracle issue millions of
        queries; this keeps them cheap while staying outcome-identical to the
        full path (full records are still built when the log retains them).
        """
        if self.log.retain_records:
            outcome = self.serve(QuerySpec(lat_req=lat_req, acc_req=acc_req, input_id=input_id))
            return outcome.served, outcome.label
        frontier = self.frontier
        g = frontier.granularity
        log = self.log
        with self._lock:
            self._queries += 1
            acc = 0.0 if acc_req is None else acc_req
            orig_acc_idx = g.acc_index(acc)
            lat_idx = g.lat_index(lat_req)
            if self.defense.enabled:
                state = stream_state(self.seed & _MASK, self._queries)
                y_acc = laplace_quantile(stream_uniform(state, 0), self._b_acc)
                y_lat = laplace_quantile(stream_uniform(state, 1), self._b_lat)
                acc_idx = g.acc_index(acc + y_acc)
                noisy_lat_idx = g.lat_index(lat_req + y_lat)
                lat_cap_idx = noisy_lat_idx if noisy_lat_idx < lat_idx else lat_idx
            else:
                acc_idx = orig_acc_idx
                lat_cap_idx = lat_idx
            rng = self._rng
            pos, label = serve_pick(
                frontier.lat_idx,
                frontier.acc_idx,
                frontier.accs,
                frontier.ncls,
                acc_idx,
                lat_cap_idx,
                rng.state,
                rng.draws,
                self.dataset_seed & _MASK,
                input_id & _MASK,
            )
            log.total += 1
            if pos < 0:
                log.infeasible += 1
                return False, None
            rng.skip(3)
            log.served += 1
            if frontier.acc_idx[pos] >= orig_acc_idx:
                log.satisfied += 1
            mid = frontier.entries[pos].id
            log.per_model[mid] = log.per_model.get(mid, 0) + 1
            if frontier.lats[pos] > lat_req:
                log.latency_violations += 1
            return True, label

    def telemetry(self) -> TelemetrySnapshot:
        with self._lock:
            return self.log.snapshot()
