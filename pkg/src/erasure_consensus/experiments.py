"""Experiment orchestration: Monte Carlo trials, estimates, reports.

One ExperimentConfig describes a whole study (graph, erasure model, step
size, protocol, horizon, trial count, master seed) and hashes to a stable
provenance id that every output file embeds.  Trials derive their seeds
from the master seed by counter mixing, so any single trial can be
replayed in isolation and the aggregate statistics do not depend on
execution order.

The uncoded protocol gets a vectorized engine (all trials advance in one
numpy step per round) that reproduces the scalar simulator bit for bit;
the coded protocols run trial by trial through their reference
implementations and only the bookkeeping is aggregated here.
"""

from __future__ import annotations

import dataclasses
import json
import hashlib
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist

from . import channel as channel_mod
from . import rng
from .analysis import (
    gamma_exact,
    asym_limit_mse,
    guaranteed_rate_anytime,
    guaranteed_rate_degree,
    msq_trajectory,
    tail_bound_anytime,
    tail_bound_degree,
    tail_bound_edgecount,
    uncoded_sym_rate,
)
from .channel import ErasureModel
from .errors import TooManyEdges
from .graphs import Graph, graph_from_spec
from .protocols import run_repetition, run_treecode, run_uncoded
from .spectral import spectral_summary
from .treecode import CodeParams, TreeCode

PROTOCOLS = ("uncoded", "repetition", "treecode")
MODES = ("symmetric", "asymmetric")

# Per-trial traces are kept in memory (and written to runs.csv) only up
# to this many rows; beyond it the report falls back to aggregates.
PER_TRIAL_ROW_CAP = 2_000_000
CHUNK_TRIALS = 20_000


def trial_seed(master_seed: int, trial_index: int) -> int:
    """Derived seed of one trial; depends only on (master, index)."""
    return rng.derive_seed(master_seed, rng.TAG_TRIAL, trial_index)


def canonical_hash(obj) -> str:
    """sha256 of the canonical (sorted, compact) JSON encoding of obj."""
    canon = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ----------------------------------------------------------------------
# Configuration.


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete, hashable description of one experiment.

    eps may be the string "auto" (resolved to the optimal step size for
    the graph) or a float.  x0 may be "e1" (node 0 starts at N, the rest
    at zero, so the target average is exactly 1) or an explicit value
    per node.  The code fields are carried for every protocol so the
    hash never depends on which fields a protocol happens to read.
    """

    graph_spec: str
    protocol: str = "uncoded"
    mode: str = "symmetric"
    p: float = 0.0
    eps: float | str = "auto"
    rounds: int = 50
    trials: int = 1000
    seed: int = 0
    x0: str | tuple[float, ...] = "e1"
    lambda_bits: int = 72
    n_packets: int = 3
    code_seed: int = 1

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(
                f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}"
            )
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"erasure probability must be in [0, 1], got {self.p}")
        if self.protocol == "repetition" and self.mode != "symmetric":
            raise ValueError(
                "the repetition protocol requires symmetric erasures; "
                "use protocol='treecode' for the asymmetric model"
            )
        if self.rounds < 1:
            raise ValueError(f"rounds must be positive, got {self.rounds}")
        if self.trials < 0:
            raise ValueError(f"trials must be nonnegative, got {self.trials}")
        if isinstance(self.eps, str):
            if self.eps != "auto":
                raise ValueError(f'eps must be a float or "auto", got {self.eps!r}')
        elif not math.isfinite(self.eps):
            raise ValueError(f"eps must be finite, got {self.eps}")
        if isinstance(self.x0, str):
            if self.x0 != "e1":
                raise ValueError(f'x0 must be "e1" or a value per node, got {self.x0!r}')
        else:
            object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    # -- resolution ----------------------------------------------------

    def graph(self) -> Graph:
        return graph_from_spec(self.graph_spec)

    def model(self) -> ErasureModel:
        return ErasureModel(self.mode, self.p)

    def eps_value(self, g: Graph | None = None) -> float:
        if self.eps == "auto":
            return spectral_summary(g if g is not None else self.graph()).eps_star
        return float(self.eps)

    def x0_vector(self, g: Graph | None = None) -> np.ndarray:
        n = (g if g is not None else self.graph()).n_nodes
        if self.x0 == "e1":
            vec = np.zeros(n)
            vec[0] = float(n)
            return vec
        vec = np.asarray(self.x0, dtype=float)
        if vec.shape != (n,):
            raise ValueError(f"x0 must have one value per node ({n}), got {len(vec)}")
        return vec

    def code_params(self) -> CodeParams:
        return CodeParams(
            lambda_bits=self.lambda_bits,
            n_packets=self.n_packets,
            ensemble_seed=self.code_seed,
        )

    # -- serialization -------------------------------------------------

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        if not isinstance(out["x0"], str):
            out["x0"] = list(out["x0"])
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        kwargs = dict(obj)
        if not isinstance(kwargs.get("x0", "e1"), str):
            kwargs["x0"] = tuple(float(v) for v in kwargs["x0"])
        return cls(**kwargs)

    def config_hash(self) -> str:
        return canonical_hash(self.to_json())


# ----------------------------------------------------------------------
# Vectorized uncoded Monte Carlo.


@dataclass(frozen=True)
class MsqStats:
    """Per-round squared-deviation statistics over independent trials.

    mean[k] estimates E||x_k - r 1||^2; sem is the standard error of
    that mean.  per_trial_err (when kept) holds the per-trial deviation
    norms ||x_k - r 1||, one row per trial.  probes maps requested trial
    indices to their full value histories for replay checks.
    """

    rounds: int
    trials: int
    mean: np.ndarray
    sem: np.ndarray
    per_trial_err: np.ndarray | None
    probes: dict[int, np.ndarray]


def uncoded_msq_stats(
    g: Graph,
    eps: float,
    mode: str,
    p: float,
    x0,
    rounds: int,
    trials: int,
    seed: int,
    chunk: int = CHUNK_TRIALS,
    keep_per_trial: bool | str = "auto",
    probe_trials: tuple[int, ...] = (),
) -> MsqStats:
    """All-trials uncoded simulation, vectorized across trials.

    Matches the scalar simulator exactly: trial k here equals
    run_uncoded(..., seed=trial_seed(seed, k)) value for value, because
    the per-node neighbor sums accumulate in the same (ascending id)
    order and masked-out terms add a literal +0.0.
    """
    spectral_summary(g, eps)
    model = ErasureModel(mode, p)
    x0 = np.asarray(x0, dtype=float)
    n = g.n_nodes
    if x0.shape != (n,):
        raise ValueError(f"x0 must have shape ({n},), got {x0.shape}")
    if rounds < 1:
        raise ValueError("rounds must be positive")
    target = float(np.mean(x0))
    if keep_per_trial == "auto":
        keep_per_trial = trials * (rounds + 1) <= PER_TRIAL_ROW_CAP
    sums = np.zeros(rounds + 1)
    sumsq = np.zeros(rounds + 1)
    per_trial = np.empty((trials, rounds + 1)) if keep_per_trial else None
    probes = {
        int(k): np.empty((rounds + 1, n)) for k in probe_trials if 0 <= k < trials
    }

    for lo in range(0, trials, chunk):
        hi = min(lo + chunk, trials)
        m = hi - lo
        seeds = np.array(
            [trial_seed(seed, k) for k in range(lo, hi)], dtype=np.uint64
        )
        xs = np.tile(x0, (m, 1))
        local_probes = {k: probes[k] for k in probes if lo <= k < hi}
        for k, hist in local_probes.items():
            hist[0] = xs[k - lo]
        dev = xs - target
        e2 = np.sum(dev * dev, axis=1)
        sums[0] += float(np.sum(e2))
        sumsq[0] += float(np.sum(e2 * e2))
        if per_trial is not None:
            per_trial[lo:hi, 0] = np.sqrt(e2)
        for t in range(1, rounds + 1):
            new = np.empty_like(xs)
            for v in range(n):
                acc = np.zeros(m)
                for u in g.neighbors[v]:
                    mask = channel_mod.delivered_vec(model, n, seeds, v, u, t)
                    acc = acc + np.where(mask, xs[:, v] - xs[:, u], 0.0)
                new[:, v] = xs[:, v] - eps * acc
            xs = new
            for k, hist in local_probes.items():
                hist[t] = xs[k - lo]
            dev = xs - target
            e2 = np.sum(dev * dev, axis=1)
            sums[t] += float(np.sum(e2))
            sumsq[t] += float(np.sum(e2 * e2))
            if per_trial is not None:
                per_trial[lo:hi, t] = np.sqrt(e2)

    if trials > 0:
        mean = sums / trials
        if trials > 1:
            var = np.maximum(sumsq - trials * mean * mean, 0.0) / (trials - 1)
            sem = np.sqrt(var / trials)
        else:
            sem = np.full(rounds + 1, np.nan)
    else:
        mean = np.full(rounds + 1, np.nan)
        sem = np.full(rounds + 1, np.nan)
    return MsqStats(
        rounds=rounds, trials=trials, mean=mean, sem=sem,
        per_trial_err=per_trial, probes=probes,
    )


# ----------------------------------------------------------------------
# Rate estimation.

NOISE_FLOOR_FACTOR = 1e3  # times machine epsilon times ||x0||


@dataclass(frozen=True)
class RateEstimate:
    """Empirical per-round contraction factor and iteration rate.

    mu_hat = 2**(slope/2) where slope is the least-squares slope of
    log2(mean squared deviation) over the tail half of the run, after
    discarding rounds whose RMS deviation sits at the numerical noise
    floor.  half_width is an approximate 95% interval from the fit
    residuals (nan when only two rounds survive the floor).
    """

    mu_hat: float
    r_prime_hat: float
    half_width: float
    fit_rounds: tuple[int, int]
    n_fitted: int


def estimate_rate(
    mean_msq: np.ndarray, x0, r_prime_hat: float = 1.0
) -> RateEstimate:
    """Fit the contraction factor from a mean-squared-deviation curve."""
    mean_msq = np.asarray(mean_msq, dtype=float)
    rounds = len(mean_msq) - 1
    floor = NOISE_FLOOR_FACTOR * np.finfo(float).eps * float(
        np.linalg.norm(np.asarray(x0, dtype=float))
    )
    ks = [
        k
        for k in range(rounds // 2, rounds + 1)
        if mean_msq[k] > 0 and math.sqrt(mean_msq[k]) >= floor
    ]
    if len(ks) < 2:
        raise ValueError(
            "fewer than two rounds in the tail half sit above the noise "
            "floor; shorten the run or use a larger initial deviation"
        )
    xs = np.array(ks, dtype=float)
    ys = np.log2(mean_msq[ks])
    slope, intercept = np.polyfit(xs, ys, 1)
    mu_hat = float(2.0 ** (slope / 2.0))
    if len(ks) > 2:
        resid = ys - (slope * xs + intercept)
        dof = len(ks) - 2
        se_slope = math.sqrt(
            float(np.sum(resid * resid)) / dof / float(np.sum((xs - xs.mean()) ** 2))
        )
        half_width = 1.96 * (math.log(2.0) / 2.0) * mu_hat * se_slope
    else:
        half_width = float("nan")
    return RateEstimate(
        mu_hat=mu_hat,
        r_prime_hat=float(r_prime_hat),
        half_width=float(half_width),
        fit_rounds=(ks[0], ks[-1]),
        n_fitted=len(ks),
    )


# ----------------------------------------------------------------------
# Counter-protocol trials.


@dataclass(frozen=True)
class CounterTrials:
    """Per-trial iteration counters for the coded protocols.

    final_min[k] = min_v n_v(M) of trial k.  min_n / err carry the full
    per-trial per-round traces when the row budget allows, else None.
    mean_min_n and mean_sq_err are always present (nan rows when
    trials == 0).
    """

    protocol: str
    rounds: int
    trials: int
    final_min: np.ndarray
    min_n: np.ndarray | None
    err: np.ndarray | None
    mean_min_n: np.ndarray
    mean_sq_err: np.ndarray

    @property
    def r_hats(self) -> np.ndarray:
        return self.final_min / float(self.rounds)

    @property
    def r_hat_mean(self) -> float:
        return float(np.mean(self.r_hats)) if self.trials else float("nan")

    @property
    def r_hat_sem(self) -> float:
        if self.trials > 1:
            return float(np.std(self.r_hats, ddof=1) / math.sqrt(self.trials))
        return float("nan")


def run_trials_counters(cfg: ExperimentConfig) -> CounterTrials:
    """Run cfg.trials independent coded-protocol runs and aggregate.

    For the uncoded protocol the counters are synthesized without
    simulating (n_v(t) = t identically), which keeps tail-probability
    queries on uncoded configs exact and free.
    """
    g = cfg.graph()
    rounds, trials = cfg.rounds, cfg.trials
    keep = trials * (rounds + 1) <= PER_TRIAL_ROW_CAP
    if cfg.protocol == "uncoded":
        final_min = np.full(trials, rounds, dtype=np.int64)
        row = np.arange(rounds + 1, dtype=np.int64)
        min_n = np.tile(row, (trials, 1)) if keep else None
        return CounterTrials(
            protocol=cfg.protocol, rounds=rounds, trials=trials,
            final_min=final_min, min_n=min_n, err=None,
            mean_min_n=row.astype(float) if trials else np.full(rounds + 1, np.nan),
            mean_sq_err=np.full(rounds + 1, np.nan),
        )

    eps = cfg.eps_value(g)
    x0 = cfg.x0_vector(g)
    tree = None
    if cfg.protocol == "treecode":
        tree = TreeCode(cfg.code_params(), horizon=rounds)
    final_min = np.empty(trials, dtype=np.int64)
    min_n = np.empty((trials, rounds + 1), dtype=np.int64) if keep else None
    err = np.empty((trials, rounds + 1)) if keep else None
    sum_min = np.zeros(rounds + 1)
    sum_e2 = np.zeros(rounds + 1)
    for k in range(trials):
        tseed = trial_seed(cfg.seed, k)
        if cfg.protocol == "repetition":
            run = run_repetition(g, eps, cfg.p, x0, rounds, seed=tseed)
        else:
            run = run_treecode(
                g, eps, cfg.p, x0, rounds, cfg.code_params(), seed=tseed,
                mode=cfg.mode, horizon_cap=max(rounds, 512), tree=tree,
            )
        trial_min = np.min(run.n_hist, axis=1)
        final_min[k] = trial_min[-1]
        sum_min += trial_min
        sum_e2 += run.err_hist * run.err_hist
        if keep:
            min_n[k] = trial_min
            err[k] = run.err_hist
    if trials:
        mean_min_n = sum_min / trials
        mean_sq_err = sum_e2 / trials
    else:
        mean_min_n = np.full(rounds + 1, np.nan)
        mean_sq_err = np.full(rounds + 1, np.nan)
    return CounterTrials(
        protocol=cfg.protocol, rounds=rounds, trials=trials,
        final_min=final_min, min_n=min_n, err=err,
        mean_min_n=mean_min_n, mean_sq_err=mean_sq_err,
    )


# ----------------------------------------------------------------------
# Tail probabilities.


@dataclass(frozen=True)
class TailEstimate:
    """Empirical P(min_v n_v(M) < M R') with a Clopper-Pearson interval."""

    m_rounds: int
    r_prime: float
    trials: int
    failures: int
    p_hat: float
    ci_lo: float
    ci_hi: float

    @property
    def sigma(self) -> float:
        """Binomial standard error of p_hat."""
        return math.sqrt(self.p_hat * (1.0 - self.p_hat) / self.trials)


def clopper_pearson(failures: int, trials: int, alpha: float = 0.05) -> tuple[float, float]:
    """Exact binomial confidence interval for a proportion."""
    if not 0 <= failures <= trials or trials < 1:
        raise ValueError(f"need 0 <= failures <= trials, got {failures}/{trials}")
    lo = 0.0 if failures == 0 else float(
        beta_dist.ppf(alpha / 2.0, failures, trials - failures + 1)
    )
    hi = 1.0 if failures == trials else float(
        beta_dist.ppf(1.0 - alpha / 2.0, failures + 1, trials - failures)
    )
    return lo, hi


def estimate_tail_probability(
    cfg: ExperimentConfig,
    m_rounds: int,
    r_prime: float,
    counters: CounterTrials | None = None,
) -> TailEstimate:
    """Fraction of trials that fail to reach M R' iterations in M rounds.

    Pass precomputed counters (from run_trials_counters on the same
    config and horizon) to evaluate a grid of rates without re-running
    the trials; they are validated for shape, not provenance.
    """
    if cfg.trials < 100:
        raise ValueError(
            f"tail estimation needs at least 100 trials, got {cfg.trials}"
        )
    if r_prime < 0:
        raise ValueError(f"r_prime must be nonnegative, got {r_prime}")
    if m_rounds != cfg.rounds:
        cfg = dataclasses.replace(cfg, rounds=m_rounds)
    if counters is None:
        counters = run_trials_counters(cfg)
    if counters.rounds != m_rounds or counters.trials != cfg.trials:
        raise ValueError("counters were computed for a different horizon or trials")
    failures = int(np.sum(counters.final_min < m_rounds * r_prime))
    p_hat = failures / cfg.trials
    lo, hi = clopper_pearson(failures, cfg.trials)
    return TailEstimate(
        m_rounds=m_rounds, r_prime=float(r_prime), trials=cfg.trials,
        failures=failures, p_hat=p_hat, ci_lo=lo, ci_hi=hi,
    )


# ----------------------------------------------------------------------
# Whole experiments.


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass(frozen=True)
class RateRow:
    """One predicted-vs-empirical comparison line."""

    quantity: str
    predicted: float
    empirical: float
    ci_lo: float
    ci_hi: float


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    config_hash: str
    msq: MsqStats | None
    counters: CounterTrials | None
    rate: RateEstimate | None
    predictions: dict[str, float]
    rate_rows: tuple[RateRow, ...]
    tail_rows: tuple[TailEstimate, ...]
    wall_time_s: float

    def summary_record(self) -> dict:
        """Scalar summary embedded in report.json (and round-trippable).

        Non-finite scalars become null so the JSON stays strict.
        """
        rec = {
            "protocol": self.config.protocol,
            "mode": self.config.mode,
            "trials": self.config.trials,
            "rounds": self.config.rounds,
            "mu_hat": _finite_or_none(self.rate.mu_hat if self.rate else None),
            "mu_half_width": _finite_or_none(
                self.rate.half_width if self.rate else None
            ),
            "r_prime_hat": _finite_or_none(
                self.rate.r_prime_hat if self.rate else None
            ),
            "predictions": {
                k: _finite_or_none(v) for k, v in self.predictions.items()
            },
        }
        if self.msq is not None and self.msq.trials > 0:
            rec["final_mean_msq"] = _finite_or_none(float(self.msq.mean[-1]))
            rec["final_mean_msq_sem"] = _finite_or_none(float(self.msq.sem[-1]))
        if self.counters is not None and self.counters.trials > 0:
            rec["r_hat_mean"] = _finite_or_none(self.counters.r_hat_mean)
            rec["r_hat_sem"] = _finite_or_none(self.counters.r_hat_sem)
        rec["tails"] = [
            {
                "r_prime": row.r_prime,
                "p_hat": row.p_hat,
                "ci_lo": row.ci_lo,
                "ci_hi": row.ci_hi,
                "failures": row.failures,
            }
            for row in self.tail_rows
        ]
        return rec


def _uncoded_predictions(cfg: ExperimentConfig, g: Graph, eps: float) -> dict:
    summary = spectral_summary(g, eps)
    preds = {
        "eps": eps,
        "eps_star": summary.eps_star,
        "mu_noiseless": summary.mu,
    }
    try:
        ga = gamma_exact(g, eps, cfg.p, cfg.mode)
        if cfg.mode == "symmetric":
            preds["sqrt_lambda2"] = uncoded_sym_rate(ga)
            preds["final_msq"] = float(
                msq_trajectory(ga, cfg.x0_vector(g), cfg.rounds)[-1]
            )
        else:
            preds["limit_mse"] = asym_limit_mse(ga, cfg.x0_vector(g))
    except TooManyEdges:
        pass
    return preds


def _counter_predictions(
    cfg: ExperimentConfig, g: Graph, eps: float, beta: float | None
) -> dict:
    summary = spectral_summary(g, eps)
    preds = {
        "eps": eps,
        "eps_star": summary.eps_star,
        "mu_noiseless": summary.mu,
        "edge_threshold": (1.0 - cfg.p) ** g.edge_count,
    }
    if cfg.protocol == "repetition":
        rate = guaranteed_rate_degree(cfg.p, g)
        preds["rate_degree"] = rate
        if rate > 0:
            preds["mu_coded"] = summary.mu ** rate
    if beta is not None:
        rate_any = guaranteed_rate_anytime(beta, g)
        preds["beta"] = beta
        preds["rate_anytime"] = rate_any
        if rate_any > 0:
            preds["mu_coded_anytime"] = summary.mu ** rate_any
    return preds


def run_experiment(
    cfg: ExperimentConfig,
    r_prime_grid: tuple[float, ...] = (),
    beta: float | None = None,
) -> ExperimentResult:
    """Execute all trials and assemble predicted-vs-empirical comparisons.

    beta (a measured anytime exponent, e.g. from measure_beta) unlocks
    the anytime-bound predictions for tail rows on coded runs.
    """
    t0 = time.perf_counter()
    g = cfg.graph()
    eps = cfg.eps_value(g)
    x0 = cfg.x0_vector(g)
    rows: list[RateRow] = []
    nan = float("nan")

    if cfg.protocol == "uncoded":
        msq = uncoded_msq_stats(
            g, eps, cfg.mode, cfg.p, x0, cfg.rounds, cfg.trials, cfg.seed
        )
        counters = None
        preds = _uncoded_predictions(cfg, g, eps)
        rate = None
        if cfg.trials > 1:
            try:
                rate = estimate_rate(msq.mean, x0, r_prime_hat=1.0)
            except ValueError:
                rate = None
        if rate is not None:
            rows.append(RateRow(
                "mu", preds.get("sqrt_lambda2", nan), rate.mu_hat,
                rate.mu_hat - rate.half_width, rate.mu_hat + rate.half_width,
            ))
        if cfg.trials > 1:
            final = float(msq.mean[-1])
            half = 1.96 * float(msq.sem[-1])
            predicted_final = preds.get("final_msq", preds.get("limit_mse", nan))
            rows.append(RateRow(
                "final_msq", predicted_final, final, final - half, final + half,
            ))
    else:
        msq = None
        counters = run_trials_counters(cfg)
        preds = _counter_predictions(cfg, g, eps, beta)
        rate = None
        if cfg.trials > 1:
            try:
                rate = estimate_rate(
                    counters.mean_sq_err, x0, r_prime_hat=counters.r_hat_mean
                )
            except ValueError:
                rate = None
        predicted_rate = max(
            preds.get("rate_degree", 0.0), preds.get("edge_threshold", 0.0)
        )
        if cfg.trials > 1:
            half = 1.96 * counters.r_hat_sem
            rows.append(RateRow(
                "r_prime", predicted_rate, counters.r_hat_mean,
                counters.r_hat_mean - half, counters.r_hat_mean + half,
            ))
        if rate is not None:
            rows.append(RateRow(
                "mu", preds.get("mu_coded", nan), rate.mu_hat,
                rate.mu_hat - rate.half_width, rate.mu_hat + rate.half_width,
            ))

    tails = []
    if r_prime_grid:
        counters_for_tails = counters
        if counters_for_tails is None:
            counters_for_tails = run_trials_counters(cfg)
        for r_prime in r_prime_grid:
            est = estimate_tail_probability(
                cfg, cfg.rounds, r_prime, counters=counters_for_tails
            )
            tails.append(est)
            predicted = nan
            if cfg.protocol == "repetition":
                predicted = min(
                    tail_bound_degree(g, cfg.rounds, r_prime, cfg.p).value,
                    tail_bound_edgecount(g, cfg.rounds, r_prime, cfg.p).value,
                )
            elif cfg.protocol == "treecode" and beta is not None:
                predicted = tail_bound_anytime(g, cfg.rounds, r_prime, beta).value
            rows.append(RateRow(
                f"tail_p[r_prime={r_prime:g}]", predicted, est.p_hat,
                est.ci_lo, est.ci_hi,
            ))

    wall = time.perf_counter() - t0
    return ExperimentResult(
        config=cfg,
        config_hash=cfg.config_hash(),
        msq=msq,
        counters=counters,
        rate=rate,
        predictions=preds,
        rate_rows=tuple(rows),
        tail_rows=tuple(tails),
        wall_time_s=wall,
    )


# ----------------------------------------------------------------------
# Reports.


def _fmt(x) -> str:
    """Stable numeric formatting for CSV cells."""
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _write_csv(path, header: str, rows, config_hash: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(c) for c in row) + "\n")


def _runs_rows(result: ExperimentResult):
    msq, counters = result.msq, result.counters
    if msq is not None:
        if msq.per_trial_err is not None:
            for k in range(msq.trials):
                for t in range(msq.rounds + 1):
                    yield (k, t, t, float(msq.per_trial_err[k, t]))
        elif msq.trials > 0:
            for t in range(msq.rounds + 1):
                yield (-1, t, t, math.sqrt(max(float(msq.mean[t]), 0.0)))
    elif counters is not None and counters.trials > 0:
        if counters.min_n is not None and counters.err is not None:
            for k in range(counters.trials):
                for t in range(counters.rounds + 1):
                    yield (
                        k, t, int(counters.min_n[k, t]),
                        float(counters.err[k, t]),
                    )
        else:
            for t in range(counters.rounds + 1):
                yield (
                    -1, t, float(counters.mean_min_n[t]),
                    math.sqrt(max(float(counters.mean_sq_err[t]), 0.0)),
                )


def emit_report(
    result: ExperimentResult, outdir, plots: bool = True
) -> dict[str, str]:
    """Write runs.csv, rates.csv, report.json (and figures) to outdir.

    Byte-identical across repeat runs of the same config except for the
    wall_time_s field of report.json.  Aggregate rows (when the
    per-trial budget is exceeded, or for aggregate-only engines) use
    trial = -1 and RMS deviation in the err_norm column.
    """
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    h = result.config_hash
    paths: dict[str, str] = {}

    runs_path = outdir / "runs.csv"
    _write_csv(runs_path, "trial,round,min_n_v,err_norm", _runs_rows(result), h)
    paths["runs"] = str(runs_path)

    rates_path = outdir / "rates.csv"
    _write_csv(
        rates_path,
        "quantity,predicted,empirical,ci_lo,ci_hi",
        (
            (r.quantity, r.predicted, r.empirical, r.ci_lo, r.ci_hi)
            for r in result.rate_rows
        ),
        h,
    )
    paths["rates"] = str(rates_path)

    report_path = outdir / "report.json"
    report = {
        "config": result.config.to_json(),
        "config_hash": h,
        "versions": _versions(),
        "wall_time_s": result.wall_time_s,
        "summary": result.summary_record(),
        "files": sorted(["runs.csv", "rates.csv"]),
    }
    with open(report_path, "w", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    paths["report"] = str(report_path)

    if plots:
        from . import plots as plots_mod

        if result.msq is not None and result.msq.trials > 0:
            fig_path = outdir / "msq.png"
            predicted = None
            cfg = result.config
            if "final_msq" in result.predictions:
                g = cfg.graph()
                ga = gamma_exact(g, cfg.eps_value(g), cfg.p, cfg.mode)
                predicted = msq_trajectory(ga, cfg.x0_vector(g), cfg.rounds)
            plots_mod.save_msq_plot(
                fig_path, result.msq.mean, sem=result.msq.sem,
                predicted=predicted,
                limit=result.predictions.get("limit_mse"),
            )
            paths["msq_plot"] = str(fig_path)
        if result.counters is not None and result.counters.trials > 0:
            fig_path = outdir / "counters.png"
            plots_mod.save_counters_plot(
                fig_path, result.counters.mean_min_n,
                guaranteed_rate=result.predictions.get("rate_degree"),
            )
            paths["counters_plot"] = str(fig_path)
        if len(result.tail_rows) >= 2:
            fig_path = outdir / "tails.png"
            bound_by_r = {
                float(row.quantity.split("=")[1].rstrip("]")): row.predicted
                for row in result.rate_rows
                if row.quantity.startswith("tail_p[")
            }
            plots_mod.save_tail_plot(fig_path, result.tail_rows, bound_by_r)
            paths["tails_plot"] = str(fig_path)
    return paths


def _versions() -> dict[str, str]:
    import platform

    import scipy

    from . import __version__

    return {
        "erasure_consensus": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }
