"""Deterministic simulator for decentralized optimization with quasi-global
momentum.

The package is organized by concern; everything below is importable from the
top level as well:

* :mod:`qgm_sim.topology` — communication graphs and doubly stochastic
  mixing matrices (ring, torus, star, complete, a fixed 32-node social
  graph, time-varying one-peer exponential), spectral gaps.
* :mod:`qgm_sim.heterogeneity` — Dirichlet label partitioning across
  workers and per-worker class-count statistics.
* :mod:`qgm_sim.oracles` — deterministic test functions and seeded
  stochastic gradient oracles (counter-based per worker and step), plus a
  finite-difference gradient checker.
* :mod:`qgm_sim.optim` — per-worker state and one-step update rules:
  decentralized SGD with and without momentum, the quasi-global momentum
  family, double-averaging momentum, difference-correction methods,
  gradient tracking, an adaptive variant, and round-structured methods
  (slow outer momentum, server-momentum-style rounds).
* :mod:`qgm_sim.consensus` — pure averaging experiments: plain gossip vs
  the momentum-buffered recursion, distance traces, hitting times.
* :mod:`qgm_sim.engine` — config-driven deterministic runs with metrics
  (CSV byte-stable across thread counts), learning-rate schedules, and a
  step-size/momentum condition report.
* :mod:`qgm_sim.cli` — ``qgm-sim`` command-line front end over all of the
  above.
"""

from .consensus import (
    ConsensusRun,
    consensus_distance,
    gossip_consensus,
    iterations_to_threshold,
    qg_consensus,
)
from .engine import (
    ConfigError,
    MetricsRecord,
    NumericalDivergence,
    RunConfig,
    RunResult,
    ScheduleSpec,
    TheoremReport,
    heading_change_sum,
    lr_schedule,
    metrics_csv_lines,
    run,
    validate_theorem_conditions,
    write_metrics_csv,
)
from .heterogeneity import dirichlet_partition, partition_stats
from .optim import (
    HyperParams,
    WorkerState,
    d2_step,
    decentralized_step,
    gossip,
    gt_init,
    gt_step,
    init_worker_states,
    mimelite_round,
    qg_dadam_step,
    dmsgd_step,
    qg_matrix_form,
    qhm_step,
    slowmo_round,
)
from .oracles import (
    GradientSample,
    ProblemSpec,
    finite_difference_check,
    nonconvex_toy_gradient,
    quadratic_family,
    quadratic_gradient,
    rosenbrock_gradient,
    toy2d_gradient,
    worker_rng,
)
from .topology import (
    Graph,
    MixingMatrix,
    build_graph,
    mixing_matrix,
    one_peer_exponential_matrix,
    spectral_gap,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConsensusRun",
    "Graph",
    "GradientSample",
    "HyperParams",
    "MetricsRecord",
    "MixingMatrix",
    "NumericalDivergence",
    "ProblemSpec",
    "RunConfig",
    "RunResult",
    "ScheduleSpec",
    "TheoremReport",
    "WorkerState",
    "build_graph",
    "consensus_distance",
    "d2_step",
    "decentralized_step",
    "dirichlet_partition",
    "dmsgd_step",
    "finite_difference_check",
    "gossip",
    "gossip_consensus",
    "gt_init",
    "gt_step",
    "heading_change_sum",
    "init_worker_states",
    "iterations_to_threshold",
    "lr_schedule",
    "metrics_csv_lines",
    "mimelite_round",
    "mixing_matrix",
    "nonconvex_toy_gradient",
    "one_peer_exponential_matrix",
    "partition_stats",
    "qg_consensus",
    "qg_dadam_step",
    "qg_matrix_form",
    "qhm_step",
    "quadratic_family",
    "quadratic_gradient",
    "rosenbrock_gradient",
    "run",
    "slowmo_round",
    "spectral_gap",
    "toy2d_gradient",
    "validate_theorem_conditions",
    "worker_rng",
    "write_metrics_csv",
    "__version__",
]
