"""Synthetic zoos, brute-force oracles, and the experiment suites.

Everything here is in-process and seeded: a row's seed reproduces that row,
and a rerun of a whole suite with the same seed reproduces the output files
byte for byte.  The grid-scan oracle is the independent ground truth for the
fingerprinting algorithm: it exhaustively probes the spec grid and needs no
search logic at all.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import kernels
from .attack import AttackBudget, expected_label_accuracy, run_campaign
from .errors import DomainError, InfeasibleSpec, NoFeasibleVictim
from .fingerprint import FrontierEstimate, QueryEndpoint
from .router import DefenseConfig, Router, compute_sensitivities, goodput
from .zoo import GranularityConfig, ModelProfile, ParetoFrontier, build_frontier

_MASK = (1 << 64) - 1


def derive_seed(seed: int, *keys: int) -> int:
    """Stable sub-seed for one trial; mixing keeps sibling trials independent."""
    state = kernels.stream_state(seed & _MASK, 0)
    for k in keys:
        state = kernels.stream_state(state, (k + 1) & _MASK)
    return state


@dataclass(frozen=True)
class ZooGenSpec:
    """Recipe for one random frontier-shaped zoo."""

    n: int
    acc_range: tuple[float, float]
    lat_range: tuple[float, float]
    granularity: GranularityConfig
    seed: int
    num_classes: int = 10
    id_prefix: str = "model"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")


def _spaced_indices(rng: random.Random, lo: int, hi: int, n: int) -> list[int]:
    """n indices in [lo, hi], uniformly random with pairwise gaps >= 2 steps."""
    span = hi - lo
    if span < 2 * (n - 1) or hi < lo:
        raise InfeasibleSpec(
            f"cannot place {n} grid points with 2-step separation in [{lo}, {hi}]"
        )
    compact = sorted(rng.sample(range(span - (n - 1) + 1), n))
    return [lo + y + i for i, y in enumerate(compact)]


def gen_random_zoo(spec: ZooGenSpec) -> list[ModelProfile]:
    """Random models forming a valid frontier: values on the grid, co-monotone.

    Accuracies and latencies are drawn uniformly on their grids with
    consecutive gaps of at least two steps (strictly more than one
    granularity), then paired sorted-to-sorted so accuracy and latency
    co-increase.  The output is its own Pareto frontier by construction.
    """
    g = spec.granularity
    rng = random.Random(spec.seed)
    acc_lo = max(1, g.acc_index(min(spec.acc_range)))
    acc_hi = min(g.acc_top_index, g.acc_index(max(spec.acc_range)))
    lat_lo = max(1, g.lat_index(min(spec.lat_range)))
    lat_hi = min(g.lat_top_index, g.lat_index(max(spec.lat_range)))
    acc_indices = _spaced_indices(rng, acc_lo, acc_hi, spec.n)
    lat_indices = _spaced_indices(rng, lat_lo, lat_hi, spec.n)
    return [
        ModelProfile(
            id=f"{spec.id_prefix}-{i:03d}",
            name=f"{spec.id_prefix}-{i:03d}",
            accuracy=g.acc_value(ai),
            latency=g.lat_value(li),
            num_classes=spec.num_classes,
        )
        for i, (ai, li) in enumerate(zip(acc_indices, lat_indices))
    ]


def grid_scan_oracle(ep: QueryEndpoint, g: GranularityConfig) -> FrontierEstimate:
    """Brute-force frontier recovery: probe every spec grid point.

    For each latency step the scan records the best accuracy step that still
    serves; the frontier is exactly the set of points where that best value
    jumps.  Costs (1/acc_g) * (l_up/lat_g) queries; exact by construction.
    Latency step 0 admits no model (latencies are positive), so that column
    is skipped rather than queried.
    """
    start_spent = ep.spent
    acc_top = g.acc_top_index
    rows_asc: list[tuple[float, float]] = []
    prev_best = -1
    for li in range(1, g.lat_top_index + 1):
        lat = g.lat_value(li)
        best = -1
        for ai in range(0, acc_top + 1):
            ok, _ = ep.query(g.acc_value(ai), lat)
            if ok and ai > best:
                best = ai
        if best > prev_best:
            rows_asc.append((g.acc_value(best), lat))
            prev_best = best
    return FrontierEstimate(rows=list(reversed(rows_asc)), queries_spent=ep.spent - start_spent)


def min_fidelity(a_v: float, a_e: float) -> float:
    """Floor on agreement between models of accuracies a_v and a_e: max(0, a_v + a_e - 1)."""
    if not (0.0 <= a_v <= 1.0 and 0.0 <= a_e <= 1.0):
        raise DomainError(f"accuracies must be in [0, 1], got ({a_v}, {a_e})")
    return max(0.0, a_v + a_e - 1.0)


def ols_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Ordinary least squares y = slope*x + intercept, plus R^2."""
    import numpy as np

    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


class InProcessTarget:
    """Attack target bound directly to a router (the experiment transport).

    Spec quantization inside the router matches the wire layer's snapping, so
    issuing raw values here routes identically to the TCP path.
    """

    def __init__(self, router: Router):
        self.router = router

    def infer(self, acc_req: float | None, lat_req: float, input_id: int) -> tuple[bool, int | None]:
        return self.router.serve_brief(acc_req, lat_req, input_id)

    def telemetry(self):
        return self.router.telemetry()

    def set_phase(self, phase: str) -> None:
        self.router.set_phase(phase)


# ---------------------------------------------------------------------------
# Experiment suites
# ---------------------------------------------------------------------------

COMPLEXITY_FIELDS = ("n", "trial", "queries", "acc_g", "lat_g", "seed")
TRADEOFF_FIELDS = (
    "L",
    "epsilon",
    "trial",
    "goodput",
    "victim_pmf",
    "expected_label_acc",
    "q_fingerprint",
    "q_label",
    "q_success",
    "q_fail",
    "seed",
)


@dataclass
class ComplexityResult:
    rows: list[dict] = field(default_factory=list)
    size_means: dict[int, float] = field(default_factory=dict)
    slope: float = 0.0
    intercept: float = 0.0
    r2: float = 0.0


def default_complexity_granularity() -> GranularityConfig:
    """Grid wide enough for 1000-model zoos with two-step separation."""
    return GranularityConfig(acc_g=0.0004, lat_g=1.0, l_up=4096.0)


def complexity_experiment(
    sizes: Sequence[int],
    trials: int,
    g: GranularityConfig,
    seed: int,
    acc_range: tuple[float, float] = (0.05, 0.95),
    lat_range: tuple[float, float] | None = None,
) -> ComplexityResult:
    """Fingerprinting cost versus frontier size on random zoos.

    Per (size, trial): generate a zoo, fingerprint it against an undefended
    router, record the queries spent.  The summary fits mean queries over n.
    """
    if not sizes:
        raise ValueError("sizes must be non-empty")
    if lat_range is None:
        lat_range = (g.lat_g, g.l_up * 0.98)
    result = ComplexityResult()
    from .fingerprint import fingerprint

    for n in sizes:
        per_size: list[int] = []
        for trial in range(trials):
            zseed = derive_seed(seed, n, trial)
            models = gen_random_zoo(
                ZooGenSpec(n=n, acc_range=acc_range, lat_range=lat_range, granularity=g, seed=zseed)
            )
            router = Router(
                build_frontier(models, g), seed=derive_seed(zseed, 1), retain_records=False
            )
            ep = QueryEndpoint(InProcessTarget(router))
            est = fingerprint(ep, g)
            per_size.append(est.queries_spent)
            result.rows.append(
                {
                    "n": n,
                    "trial": trial,
                    "queries": est.queries_spent,
                    "acc_g": g.acc_g,
                    "lat_g": g.lat_g,
                    "seed": zseed,
                }
            )
        result.size_means[n] = sum(per_size) / len(per_size)
    if len(result.size_means) >= 2:
        xs = sorted(result.size_means)
        result.slope, result.intercept, result.r2 = ols_fit(
            xs, [result.size_means[n] for n in xs]
        )
    return result


def worst_case_query_bound(n: int, g: GranularityConfig) -> int:
    """Fingerprinting upper bound: (n+1) * (ceil(lg acc steps) + ceil(lg lat steps) + 2)."""
    import math

    acc_term = math.ceil(math.log2((1.0 + g.acc_g) / g.acc_g))
    lat_term = math.ceil(math.log2((g.l_up + g.lat_g) / g.lat_g))
    return (n + 1) * (acc_term + lat_term + 2)


def true_victim(frontier: ParetoFrontier, latency_budget: float) -> ModelProfile:
    """Ground-truth victim: the max-latency frontier model within the budget."""
    candidates = [m for m in frontier if m.latency <= latency_budget]
    if not candidates:
        raise NoFeasibleVictim(f"no frontier model within budget {latency_budget}")
    return candidates[-1]


def tradeoff_experiment(
    models: Sequence[ModelProfile],
    g: GranularityConfig,
    budgets: Sequence[float],
    epsilons: Sequence[float],
    trials: int,
    seed: int,
    query_budget: int = 4000,
) -> list[dict]:
    """Protection-vs-goodput sweep: full defended campaigns per (L, eps, trial).

    Records goodput over the whole campaign log, the true victim's PMF mass
    among served labeling queries, the label-quality surrogate, and the query
    breakdown.  A campaign whose corrupted fingerprint leaves no row under
    the budget scores zero mass and zero label quality for that trial.
    """
    frontier = build_frontier(models, g)
    delta_acc, delta_lat = compute_sensitivities(frontier)
    rows: list[dict] = []
    for budget_idx, latency_budget in enumerate(budgets):
        victim = true_victim(frontier, latency_budget)
        for eps_idx, epsilon in enumerate(epsilons):
            for trial in range(trials):
                tseed = derive_seed(seed, budget_idx, eps_idx, trial)
                router = Router(
                    frontier,
                    seed=tseed,
                    defense=DefenseConfig(
                        enabled=True, epsilon=epsilon, delta_acc=delta_acc, delta_lat=delta_lat
                    ),
                    dataset_seed=derive_seed(tseed, 7),
                    retain_records=False,
                )
                ep = QueryEndpoint(InProcessTarget(router))
                budget = AttackBudget(latency_budget=latency_budget, query_budget=query_budget)
                try:
                    res = run_campaign(ep, budget, g, mode="fingerprint")
                    pmf = res.pmf() or {}
                    mass = pmf.get(victim.id, 0.0)
                    label_acc = expected_label_accuracy(pmf, frontier) if pmf else 0.0
                    q_fp, q_label = res.queries_fingerprinting, res.queries_labeling
                    q_succ, q_fail = res.queries_successful, res.queries_failed
                except NoFeasibleVictim:
                    mass, label_acc = 0.0, 0.0
                    q_fp, q_label, q_succ, q_fail = ep.spent, 0, 0, 0
                rows.append(
                    {
                        "L": latency_budget,
                        "epsilon": epsilon,
                        "trial": trial,
                        "goodput": goodput(router.log),
                        "victim_pmf": mass,
                        "expected_label_acc": label_acc,
                        "q_fingerprint": q_fp,
                        "q_label": q_label,
                        "q_success": q_succ,
                        "q_fail": q_fail,
                        "seed": tseed,
                    }
                )
    return rows


def reference_zoo() -> tuple[list[ModelProfile], GranularityConfig]:
    """The fixed 12-model synthetic zoo used by the tradeoff experiments.

    Shaped like a realistic image-classification frontier: accuracies spread
    well below saturation so small/medium victims exist, latencies 2..24 ms
    with medium-budget victim at 12 ms.
    """
    g = GranularityConfig(acc_g=0.005, lat_g=1.0, l_up=32.0)
    accs = [0.40, 0.46, 0.52, 0.58, 0.63, 0.68, 0.73, 0.78, 0.82, 0.86, 0.90, 0.93]
    lats = [2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24]
    names = [
        "mobilenet-xs",
        "mobilenet-s",
        "shufflenet",
        "squeezenet",
        "resnet-18",
        "resnet-34",
        "resnet-50",
        "resnet-101",
        "densenet-121",
        "wideresnet-28",
        "densenet-161",
        "densenet-201",
    ]
    models = [
        ModelProfile(id=f"m{i:02d}", name=names[i], accuracy=a, latency=float(l), num_classes=10)
        for i, (a, l) in enumerate(zip(accs, lats))
    ]
    return models, g


# Latency budgets mirroring small / medium / large extraction settings.
REFERENCE_BUDGETS = {"small": 5.0, "medium": 13.0, "large": 21.0}


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _format_value(v: object) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _csv_text(
    fields: Sequence[str],
    rows: Iterable[dict],
    header: dict[str, object],
    footer_lines: Sequence[str] = (),
) -> str:
    buf = io.StringIO()
    buf.write("# schema_version=1\n")
    for key, value in header.items():
        buf.write(f"# {key}={_format_value(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_format_value(row[f]) for f in fields])
    for line in footer_lines:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def complexity_csv(result: ComplexityResult, config: dict[str, object]) -> str:
    footer = [
        f"mean n={n} queries={_format_value(result.size_means[n])}"
        for n in sorted(result.size_means)
    ]
    footer.append(
        "ols slope="
        + _format_value(result.slope)
        + " intercept="
        + _format_value(result.intercept)
        + " r2="
        + _format_value(result.r2)
    )
    header = {"experiment": "complexity", **config}
    return _csv_text(COMPLEXITY_FIELDS, result.rows, header, footer)


def tradeoff_csv(rows: list[dict], config: dict[str, object]) -> str:
    header = {"experiment": "tradeoff", **config}
    return _csv_text(TRADEOFF_FIELDS, rows, header)
