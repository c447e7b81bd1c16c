"""Victim selection and the post-fingerprinting query campaign.

A campaign spends one fixed query budget in two phases: fingerprint the
frontier (skipped in naive mode), then pour the remaining queries into
labeling requests.  The fingerprinting attacker targets the recovered row
with the largest latency under its budget; the naive attacker states only its
latency budget and takes whatever the feasibility set serves.

Extraction quality is reported through label-quality surrogates: the
PMF-weighted accuracy of whichever models answered the labeling queries, and
a closed-form expected agreement between two independent oracles of given
accuracies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Mapping

from .errors import BudgetExhausted, DomainError, NoFeasibleVictim
from .fingerprint import FrontierEstimate, QueryEndpoint, fingerprint
from .zoo import GranularityConfig, ParetoFrontier

CampaignMode = Literal["fingerprint", "naive"]


@dataclass(frozen=True)
class AttackBudget:
    """Per-query latency budget L (ms) and the total query budget."""

    latency_budget: float
    query_budget: int

    def __post_init__(self) -> None:
        if not self.latency_budget > 0:
            raise ValueError(f"latency_budget must be positive, got {self.latency_budget}")
        if self.query_budget < 1:
            raise ValueError(f"query_budget must be at least 1, got {self.query_budget}")


@dataclass(frozen=True)
class VictimSpec:
    """The (accuracy, latency) specs every post-fingerprinting query states."""

    acc_spec: float
    lat_spec: float


@dataclass
class CampaignResult:
    labeled_examples: list[tuple[int, int]]
    trigger_histogram: dict[str, int] | None
    queries_fingerprinting: int
    queries_labeling: int
    queries_successful: int
    queries_failed: int
    mode: str
    estimate: FrontierEstimate | None = None
    victim: VictimSpec | None = None

    def pmf(self) -> dict[str, float] | None:
        """Trigger histogram normalized over served labeling queries."""
        if self.trigger_histogram is None:
            return None
        total = sum(self.trigger_histogram.values())
        if total == 0:
            return {}
        return {mid: c / total for mid, c in self.trigger_histogram.items()}


def select_victim(m: FrontierEstimate, budget: AttackBudget) -> VictimSpec:
    """The recovered row with the largest latency at or under the budget."""
    if not m.rows:
        raise NoFeasibleVictim("frontier estimate has no rows")
    best: tuple[float, float] | None = None
    for acc, lat in m.rows:
        if lat <= budget.latency_budget and (best is None or lat > best[1]):
            best = (acc, lat)
    if best is None:
        raise NoFeasibleVictim(
            f"no fingerprinted row has latency <= budget {budget.latency_budget}"
        )
    return VictimSpec(acc_spec=best[0], lat_spec=best[1])


def run_campaign(
    ep: QueryEndpoint,
    budget: AttackBudget,
    g: GranularityConfig,
    mode: CampaignMode = "fingerprint",
) -> CampaignResult:
    """Run one full attack campaign within ``budget.query_budget`` queries.

    The trigger histogram is recovered from server telemetry when the target
    exposes it (experiment mode); against a service-mode endpoint it is None.
    """
    start_spent = ep.spent
    prior_limit = ep.limit
    ep.limit = start_spent + budget.query_budget
    try:
        estimate: FrontierEstimate | None = None
        victim: VictimSpec | None = None
        if mode == "fingerprint":
            _set_phase(ep, "fingerprinting")
            estimate = fingerprint(ep, g)
            victim = select_victim(estimate, budget)
            if estimate.queries_spent >= budget.query_budget:
                raise BudgetExhausted(
                    f"fingerprinting spent {estimate.queries_spent} of {budget.query_budget} queries"
                )
            acc_spec: float | None = victim.acc_spec
            lat_spec = victim.lat_spec
        elif mode == "naive":
            # No accuracy spec: the server applies its default of 0.
            acc_spec = None
            lat_spec = budget.latency_budget
        else:
            raise ValueError(f"unknown campaign mode {mode!r}")

        before = _telemetry(ep)
        _set_phase(ep, "labeling")
        spent_fp = ep.spent - start_spent
        labeled: list[tuple[int, int]] = []
        successful = 0
        failed = 0
        for i in range(budget.query_budget - spent_fp):
            input_id = i + 1
            ok, label = ep.query(acc_spec, lat_spec, input_id=input_id)
            if ok:
                successful += 1
                labeled.append((input_id, label))
            else:
                failed += 1
        after = _telemetry(ep)

        histogram = None
        if before is not None and after is not None:
            histogram = {
                mid: after.per_model.get(mid, 0) - before.per_model.get(mid, 0)
                for mid in after.per_model
                if after.per_model.get(mid, 0) > before.per_model.get(mid, 0)
            }
        return CampaignResult(
            labeled_examples=labeled,
            trigger_histogram=histogram,
            queries_fingerprinting=spent_fp,
            queries_labeling=budget.query_budget - spent_fp,
            queries_successful=successful,
            queries_failed=failed,
            mode=mode,
            estimate=estimate,
            victim=victim,
        )
    finally:
        ep.limit = prior_limit


def _telemetry(ep: QueryEndpoint):
    fn = getattr(ep.target, "telemetry", None)
    return fn() if fn is not None else None


def _set_phase(ep: QueryEndpoint, phase: str) -> None:
    fn = getattr(ep.target, "set_phase", None)
    if fn is not None:
        fn(phase)


def expected_label_accuracy(pmf: Mapping[str, float], frontier: ParetoFrontier) -> float:
    """PMF-weighted model accuracy: the expected quality of collected labels."""
    total = sum(pmf.values())
    if abs(total - 1.0) > 1e-9:
        raise DomainError(f"pmf must sum to 1, got {total}")
    unknown = set(pmf) - set(frontier.ids)
    if unknown:
        raise DomainError(f"pmf references ids not on the frontier: {sorted(unknown)}")
    return sum(p * frontier.model(mid).accuracy for mid, p in pmf.items())


def expected_agreement(a_v: float, a_e: float, k: int) -> float:
    """Chance two independent k-class oracles of accuracies a_v, a_e agree.

    They agree when both are right, or both are wrong and land on the same of
    the k-1 wrong classes: a_v*a_e + (1-a_v)(1-a_e)/(k-1).
    """
    if k < 2:
        raise DomainError(f"k must be at least 2, got {k}")
    if not (0.0 <= a_v <= 1.0 and 0.0 <= a_e <= 1.0):
        raise DomainError(f"accuracies must be in [0, 1], got ({a_v}, {a_e})")
    return a_v * a_e + (1.0 - a_v) * (1.0 - a_e) / (k - 1)


def campaign_report(
    result: CampaignResult,
    *,
    frontier: ParetoFrontier | None = None,
    victim_id: str | None = None,
    seed: int | None = None,
) -> dict:
    """JSON-ready campaign summary: query breakdown, PMF, and surrogates."""
    doc: dict = {
        "schema_version": 1,
        "mode": result.mode,
        "queries": {
            "fingerprinting": result.queries_fingerprinting,
            "labeling": result.queries_labeling,
            "successful": result.queries_successful,
            "failed": result.queries_failed,
        },
        "labeled_examples": len(result.labeled_examples),
    }
    if seed is not None:
        doc["seed"] = seed
    if result.victim is not None:
        doc["victim_spec"] = {"accuracy": result.victim.acc_spec, "latency_ms": result.victim.lat_spec}
    if result.estimate is not None:
        doc["fingerprint"] = {
            "rows": [{"accuracy": a, "latency_ms": l} for a, l in result.estimate.rows],
            "queries_spent": result.estimate.queries_spent,
            "monotone": result.estimate.is_monotone,
        }
    pmf = result.pmf()
    if pmf is not None:
        doc["trigger_pmf"] = dict(sorted(pmf.items()))
        if frontier is not None and pmf:
            surrogate = expected_label_accuracy(pmf, frontier)
            doc["expected_label_accuracy"] = surrogate
            if victim_id is not None:
                victim_model = frontier.model(victim_id)
                doc["victim_model_id"] = victim_id
                doc["victim_pmf_mass"] = pmf.get(victim_id, 0.0)
                if victim_model.num_classes >= 2:
                    doc["expected_agreement_vs_victim"] = expected_agreement(
                        victim_model.accuracy, surrogate, victim_model.num_classes
                    )
    return doc
