"""Average consensus over packet-erasure networks: simulation and analysis.

Submodules:

- graphs: immutable graphs, generators, "name:arg" spec strings
- spectral: Laplacians, eigenvalues, step-size selection
- channel: seeded erasure schedules (symmetric and asymmetric)
- rng: the counter-based generator underneath every random draw
- gf2: bit-packed GF(2) linear algebra
- treecode: streaming code, anytime decoder, decay-exponent tools
- protocols: uncoded / repetition / stream-coded consensus runners
- analysis: exact second-moment recursions and tail bounds
- checks: trace auditors for recorded runs
- experiments: Monte Carlo harness, estimators, report emission
- plots: figure rendering for report files
- cli: command line entry point

The names re-exported here cover the common workflow: build a graph,
pick a step size, run a protocol or a trial batch, compare against the
exact predictions.
"""

from .analysis import (
    asym_limit_mse,
    coding_gain_check,
    gamma_exact,
    guaranteed_rate_anytime,
    guaranteed_rate_degree,
    guaranteed_rate_strict,
    msq_trajectory,
    tail_bound_anytime,
    tail_bound_degree,
    tail_bound_edgecount,
    uncoded_sym_rate,
)
from .channel import ErasureModel
from .experiments import (
    ExperimentConfig,
    emit_report,
    estimate_rate,
    estimate_tail_probability,
    run_experiment,
    run_trials_counters,
    uncoded_msq_stats,
)
from .graphs import Graph, graph_from_spec
from .protocols import run_repetition, run_treecode, run_uncoded
from .spectral import eps_star, spectral_summary
from .treecode import CodeParams, TreeCode, exponent_E, measure_beta

__version__ = "0.1.0"

__all__ = [
    "CodeParams",
    "ErasureModel",
    "ExperimentConfig",
    "Graph",
    "TreeCode",
    "asym_limit_mse",
    "coding_gain_check",
    "emit_report",
    "eps_star",
    "estimate_rate",
    "estimate_tail_probability",
    "exponent_E",
    "gamma_exact",
    "graph_from_spec",
    "guaranteed_rate_anytime",
    "guaranteed_rate_degree",
    "guaranteed_rate_strict",
    "measure_beta",
    "msq_trajectory",
    "run_experiment",
    "run_repetition",
    "run_trials_counters",
    "run_treecode",
    "run_uncoded",
    "spectral_summary",
    "tail_bound_anytime",
    "tail_bound_degree",
    "tail_bound_edgecount",
    "uncoded_msq_stats",
    "uncoded_sym_rate",
    "__version__",
]
