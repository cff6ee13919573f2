"""Block allocation for flexible numerology and frame structure.

Candidate time-frequency blocks are enumerated on a basic-unit grid, rated
per service through a multipath channel model, and assigned to latency and
capacity services by a greedy algorithm steered by LP-relaxation and
Lagrangian-dual utilities.  Exact solvers serve as benchmark oracles.
"""

from .assign import ba, run_pipeline
from .exact import branch_and_bound, brute_force, optimality_gap
from .grid import CATALOG, Block, NumerologyShape, ResourceGrid, enumerate_blocks
from .instance import (
    Assignment,
    Instance,
    Service,
    SimulationConfig,
    check_assignment,
    partition_instance,
    random_instance,
)

__all__ = [
    "Assignment",
    "Block",
    "CATALOG",
    "Instance",
    "NumerologyShape",
    "ResourceGrid",
    "Service",
    "SimulationConfig",
    "ba",
    "branch_and_bound",
    "brute_force",
    "check_assignment",
    "enumerate_blocks",
    "optimality_gap",
    "partition_instance",
    "random_instance",
    "run_pipeline",
]
