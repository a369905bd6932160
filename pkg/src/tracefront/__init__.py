"""Task-level concurrent multifrontal factorization of 1D FEM mass systems.

Pipeline: assemble a mass-matrix system over a uniform interval mesh,
build the balanced binary elimination tree over its elemental fronts,
symbolically eliminate to enumerate atomic tasks and their dependency
DAG, schedule the tasks into Foata classes, and execute sequentially or
on a barrier-synchronized worker pool with bitwise-reproducible results.
"""

from .fem import Front, GlobalSystem, Mesh, assemble_system, generate_fronts
from .tree import EliminationTree, build_elimination_tree, join_fronts, sort_fronts
from .tasks import (
    DependencyGraph,
    EliminationPlan,
    Task,
    TaskKind,
    build_dependency_edges,
    build_task_graph,
    enumerate_tasks,
    symbolic_eliminate,
    validate_dag,
)
from .schedule import FoataSchedule, TaskGroup, compute_fnf, group_tasks, schedule_stats
from .engine import (
    ExecState,
    FactorResult,
    SchurBlocks,
    dense_lu_oracle,
    execute_task,
    factorize_nested_loops,
    init_state,
    run_concurrent,
    run_linearized,
    run_sequential,
    schur_complement_dense,
    solve,
)

__version__ = "0.1.0"
