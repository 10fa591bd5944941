"""MEC network planning from enriched cellular demand traces."""

from .errors import (
    BudgetExceededError,
    ConfigError,
    DegenerateFitError,
    InvalidAssignmentError,
    MecPlanError,
    NoCostModelError,
    ShapeError,
    UnknownNodeError,
)
from .metrics import EfficiencyReport, LatencyModel, bs_latency, deployment_latency, efficiency, level_breakdown
from .oracle import OracleSolution, gap_report, solve_optimal
from .planner import (
    CategoryConfig,
    CombinedPlan,
    Deployment,
    IterationLog,
    Mode,
    PlannerRun,
    ScoreKind,
    candidate_pairs,
    consolidate,
    greedy_design,
    initial_deployment,
    multi_category_plan,
    score,
)
from .topology import Level, Node, Topology, build_fat_tree
from .trace import (
    Category,
    CostModel,
    DEFAULT_COST_MODELS,
    DemandRecord,
    DemandSeries,
    EnrichedSeries,
    SyntheticConfig,
    TaggingRules,
    aggregate,
    enrich,
    fit_cost_model,
    generate_bs_positions,
    generate_synthetic_trace,
    tag_app,
)

__version__ = "0.1.0"
