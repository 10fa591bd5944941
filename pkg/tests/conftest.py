import pytest

from mecplan.topology import Topology, build_fat_tree
from mecplan.trace import (
    AggregatedTrace,
    SyntheticConfig,
    TaggingRules,
    aggregate,
    generate_bs_positions,
    generate_synthetic_trace,
)


def make_instance(n_bs: int, seed: int, days: int = 2,
                  **cfg_overrides) -> tuple[Topology, AggregatedTrace]:
    """Synthetic trace plus matching fat-tree, the standard test instance."""
    cfg = SyntheticConfig(n_bs=n_bs, days=days, **cfg_overrides)
    topology = build_fat_tree(generate_bs_positions(cfg, seed=seed))
    records = generate_synthetic_trace(cfg, seed=seed)
    return topology, aggregate(records, TaggingRules.default())


@pytest.fixture(scope="session")
def instance_25():
    return make_instance(25, seed=3)


@pytest.fixture(scope="session")
def instance_200():
    return make_instance(200, seed=7, days=3)
