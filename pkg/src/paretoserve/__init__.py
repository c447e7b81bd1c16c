"""paretoserve: a model-less inference-serving laboratory.

Serves queries stated as (minimum accuracy, maximum latency) from the Pareto
frontier of a model zoo, implements the frontier-fingerprinting extraction
attack against that interface, the Laplace spec-noise defense, and the
experiment harness measuring query complexity, trigger distributions, and the
protection-vs-goodput tradeoff.
"""

from .attack import (
    AttackBudget,
    CampaignResult,
    VictimSpec,
    expected_agreement,
    expected_label_accuracy,
    run_campaign,
    select_victim,
)
from .fingerprint import FrontierEstimate, QueryEndpoint, find_lat, find_max_acc, fingerprint
from .kernels import BACKEND as KERNEL_BACKEND
from .noise import LaplaceParams, NoiseSource, laplace_inverse_cdf, sample
from .router import (
    DefenseConfig,
    QuerySpec,
    Router,
    ServeLog,
    ServeOutcome,
    ServeStatus,
    compute_sensitivities,
    goodput,
    serve_defended,
    serve_plain,
)
from .simlab import (
    InProcessTarget,
    ZooGenSpec,
    complexity_experiment,
    gen_random_zoo,
    grid_scan_oracle,
    min_fidelity,
    reference_zoo,
    tradeoff_experiment,
)
from .zoo import (
    FeasibilitySet,
    GranularityConfig,
    ModelProfile,
    ParetoFrontier,
    build_frontier,
    dominates,
    feasibility_set,
    load_zoo,
    save_zoo,
)

__version__ = "0.1.0"

__all__ = [
    "AttackBudget",
    "CampaignResult",
    "DefenseConfig",
    "FeasibilitySet",
    "FrontierEstimate",
    "GranularityConfig",
    "InProcessTarget",
    "KERNEL_BACKEND",
    "LaplaceParams",
    "ModelProfile",
    "NoiseSource",
    "ParetoFrontier",
    "QueryEndpoint",
    "QuerySpec",
    "Router",
    "ServeLog",
    "ServeOutcome",
    "ServeStatus",
    "VictimSpec",
    "ZooGenSpec",
    "build_frontier",
    "complexity_experiment",
    "compute_sensitivities",
    "dominates",
    "expected_agreement",
    "expected_label_accuracy",
    "feasibility_set",
    "find_lat",
    "find_max_acc",
    "fingerprint",
    "gen_random_zoo",
    "goodput",
    "grid_scan_oracle",
    "laplace_inverse_cdf",
    "load_zoo",
    "min_fidelity",
    "reference_zoo",
    "run_campaign",
    "sample",
    "save_zoo",
    "select_victim",
    "serve_defended",
    "serve_plain",
    "tradeoff_experiment",
]
