"""Attacker-side recovery of every (accuracy, latency) pair on the frontier.

The cross-hair interface leaks one bit per query (served vs infeasible-set
error), and the frontier's accuracy-latency correlation makes that bit
monotone along each axis.  Two interleaved binary searches therefore walk the
frontier top-down: find the best reachable accuracy under a latency ceiling,
find that model's exact latency, tighten both ceilings past it, repeat.

Searches run on the spec granularity grid; midpoints are snapped down to the
grid before querying, which keeps every probe a value the server can actually
distinguish and makes the recovered pairs exact against an undefended server.
Against a defended server the same procedure simply runs and may return
inconsistent rows; no repair is attempted.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Protocol

from .errors import BudgetExhausted
from .zoo import GranularityConfig


class QueryTarget(Protocol):
    """Anything that can answer one inference query (in-process or remote)."""

    def infer(self, acc_req: float | None, lat_req: float, input_id: int) -> tuple[bool, int | None]:
        """Returns (served, label)."""
        ...


# Fingerprinting probes carry a fixed dummy input; returned labels are discarded.
PROBE_INPUT_ID = 0


class QueryEndpoint:
    """Counts every inference attempt the attacker makes against a target.

    An optional hard limit enforces the campaign's query budget: the query
    raising the counter past the limit is not sent and ``BudgetExhausted``
    propagates to the caller.
    """

    def __init__(self, target: QueryTarget, limit: int | None = None) -> None:
        self.target = target
        self.limit = limit
        self.spent = 0

    def query(self, acc_req: float | None, lat_req: float, input_id: int = PROBE_INPUT_ID) -> tuple[bool, int | None]:
        if self.limit is not None and self.spent >= self.limit:
            raise BudgetExhausted(f"query budget of {self.limit} exhausted")
        self.spent += 1
        return self.target.infer(acc_req, lat_req, input_id)


@dataclass
class FrontierEstimate:
    """The recovered matrix: (accuracy, latency) rows in discovery order.

    Against an undefended server the rows are strictly decreasing on both
    axes (highest accuracy first); under the defense they may not be.
    """

    rows: list[tuple[float, float]] = field(default_factory=list)
    queries_spent: int = 0

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def is_monotone(self) -> bool:
        return all(
            a1 > a2 and l1 > l2 for (a1, l1), (a2, l2) in zip(self.rows, self.rows[1:])
        )

    def report(self, g: GranularityConfig, wall_clock_s: float | None = None) -> dict:
        doc = {
            "schema_version": 1,
            "rows": [{"accuracy": a, "latency_ms": l} for a, l in self.rows],
            "queries_spent": self.queries_spent,
            "monotone": self.is_monotone,
            "granularity": {"acc_g": g.acc_g, "lat_g": g.lat_g, "l_up_ms": g.l_up},
        }
        if wall_clock_s is not None:
            doc["wall_clock_s"] = wall_clock_s
        return doc


def _find_max_acc_idx(ep: QueryEndpoint, acc_up_idx: int, lat_up: float, g: GranularityConfig) -> int:
    """Largest feasible accuracy grid index under ``lat_up``; -1 when none is.

    A latency ceiling of 0 admits no model and is outside the wire's domain,
    so those probes are answered as errors locally without spending queries.
    """
    if lat_up <= 0.0:
        return -1
    lo = 0
    hi = acc_up_idx + 1
    while hi - lo >= 1:
        mid = (lo + hi) // 2
        ok, _ = ep.query(g.acc_value(mid), lat_up)
        if ok:
            lo = mid + 1
        else:
            hi = mid
    return lo - 1


def _find_lat_idx(ep: QueryEndpoint, acc: float, lat_hi_idx: int, g: GranularityConfig) -> int:
    """Smallest feasible latency grid index at accuracy ``acc``.

    Returns lat_hi_idx + 1 when no probe succeeds.  A latency-0 probe admits
    no model (latencies are positive) and lies outside the wire's domain, so
    it is answered as an error locally without spending a query.
    """
    lo = 0
    hi = lat_hi_idx + 1
    while hi - lo >= 1:
        mid = (lo + hi) // 2
        ok = False
        if mid > 0:
            # Accuracy below 0 filters nothing extra; clamp into the wire domain.
            ok, _ = ep.query(max(acc, 0.0), g.lat_value(mid))
        if ok:
            hi = mid
        else:
            lo = mid + 1
    return lo


def find_max_acc(ep: QueryEndpoint, acc_up: float, lat_up: float, g: GranularityConfig) -> float:
    """Maximum frontier accuracy among models with latency <= lat_up.

    Exact on the granularity grid; returns -acc_g when no model qualifies.
    """
    return g.acc_value(_find_max_acc_idx(ep, g.acc_index(acc_up), lat_up, g))


def find_lat(ep: QueryEndpoint, acc: float, g: GranularityConfig, *, lat_up: float | None = None) -> float:
    """Exact grid latency of the least-latency model with accuracy >= acc.

    Searches from the global l_up by default; passing ``lat_up`` narrows the
    start of the search (an optional optimization over the written procedure).
    """
    hi_idx = g.lat_top_index if lat_up is None else g.lat_index(lat_up)
    return g.lat_value(_find_lat_idx(ep, acc, hi_idx, g))


def fingerprint(
    ep: QueryEndpoint, g: GranularityConfig, *, tightened_lat_bound: bool = False
) -> FrontierEstimate:
    """Recover the full frontier, highest-accuracy model first.

    Against an undefended server obeying the granularity-and-boundary
    assumption the rows equal the true frontier pairs exactly, one per model.
    """
    start_spent = ep.spent
    rows: list[tuple[float, float]] = []
    acc_up_idx = g.acc_top_index
    lat_up_idx = g.lat_top_index
    while acc_up_idx >= 1:
        acc_idx = _find_max_acc_idx(ep, acc_up_idx, g.lat_value(lat_up_idx), g)
        acc = g.acc_value(acc_idx)
        lat_hi_idx = lat_up_idx if tightened_lat_bound else g.lat_top_index
        lat_idx = _find_lat_idx(ep, acc, lat_hi_idx, g)
        if acc_idx >= 1:
            rows.append((acc, g.lat_value(lat_idx)))
        acc_up_idx = acc_idx - 1
        lat_up_idx = lat_idx - 1
    return FrontierEstimate(rows=rows, queries_spent=ep.spent - start_spent)


def run_fingerprint(ep: QueryEndpoint, g: GranularityConfig) -> tuple[FrontierEstimate, float]:
    """Fingerprint and measure wall-clock, for report emission."""
    t0 = time.perf_counter()
    est = fingerprint(ep, g)
    return est, time.perf_counter() - t0
