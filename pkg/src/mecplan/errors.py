"""Exception types shared across the planning toolkit."""


class MecPlanError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(MecPlanError):
    """Invalid or inconsistent experiment configuration."""


class DegenerateFitError(MecPlanError):
    """Cost-model fit attempted on data with fewer than two distinct traffic values."""


class NoCostModelError(MecPlanError):
    """Enrichment requested for a category that carries no cost model."""


class UnknownNodeError(MecPlanError):
    """Node or base-station id not present in the topology."""


class InvalidAssignmentError(MecPlanError):
    """Serving node is not an ancestor of the base station."""


class ShapeError(MecPlanError):
    """Time-series operands do not share the same number of steps."""


class BudgetExceededError(MecPlanError):
    """Instance too large for the exhaustive oracle."""
