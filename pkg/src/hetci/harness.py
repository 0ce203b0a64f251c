"""Seeded, parallelizable Monte Carlo engine for the coverage study.

Every replication is keyed by ``(base_seed, rep_id)``: its substream, and
therefore everything computed from it, is a pure function of that pair.
Batches of replications are evaluated with vectorized numpy kernels, and
per-replication results are assembled in rep-id order before any statistic
is computed, so output is bit-identical no matter how many workers run the
batches or in which order they finish.

The module also houses the simulation-only diagnostics: the oracle variance
estimator that splits at the *true* quantile (exactly unbiased for the
population variance), and the closed-form/brute-force pair for the variance
of M*(m-M) with M binomial, used to cross-check the oracle's dispersion.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .models import (
    MixtureModel,
    make_design,
    make_dgm,
    mixture_cdf,
    mixture_quantile,
    transform_heterogeneous,
    transform_iid_average,
)
from .numerics import normal_quantile, uniform_matrix
from .quantile import (
    GroupedSample,
    _group_split_variance,
    order_statistic_rank,
    order_statistic_rank_array,
)

__all__ = [
    "SimulationConfig",
    "ReplicationRecord",
    "CoverageReport",
    "ErrorSummary",
    "run_replication",
    "oracle_variance_estimator",
    "binomial_product_variance_closed_form",
    "binomial_product_variance_bruteforce",
    "coverage_table",
    "error_samples",
    "error_summary",
    "rate_check",
]

DEFAULT_BATCH_SIZE = 2500


@dataclass(frozen=True)
class SimulationConfig:
    """One cell of the simulation study."""

    family: str
    gamma: float
    design: str
    n: int = 350
    tau: float = 0.5
    alpha: float = 0.05
    reps: int = 10000
    base_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", str(self.family).upper())
        object.__setattr__(self, "design", str(self.design).lower())
        object.__setattr__(self, "gamma", float(self.gamma))
        if self.reps < 1:
            raise DomainError(f"reps must be >= 1, got {self.reps}")
        if not (0.0 < self.tau < 1.0):
            raise DomainError(f"tau must lie in (0, 1), got {self.tau}")
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        # Fails fast on inadmissible (design, n) or unknown family.
        make_dgm(self.family, self.gamma, make_design(self.design, self.n))


@dataclass(frozen=True)
class ReplicationRecord:
    """Per-replication outcomes for both arms of the comparison."""

    rep_id: int
    covered_het: bool
    covered_iid: bool
    error_het: float
    error_iid: float
    v_hat: float
    v_tilde: float
    width_het: float
    width_iid: float


@dataclass(frozen=True)
class CoverageReport:
    """Aggregated results for one configuration."""

    family: str
    gamma: float
    design: str
    n: int
    tau: float
    alpha: float
    reps: int
    seed: int
    q_bar: float
    v_n: float
    coverage_het: float
    coverage_iid: float
    mean_v_hat: float
    mean_v_tilde: float
    var_v_tilde: float
    var_error_het: float
    var_error_iid: float
    mean_width_het: float
    mean_width_iid: float
    clip_lower_het: int
    clip_upper_het: int
    clip_lower_iid: int
    clip_upper_iid: int
    n_failed: int


@dataclass(frozen=True)
class ErrorSummary:
    """Dispersion comparison of the two arms' quantile-level errors."""

    var_error_het: float
    var_error_iid: float
    variance_ratio: float
    mean_width_het: float
    mean_width_iid: float


@lru_cache(maxsize=None)
def _study_context(config: SimulationConfig):
    """Per-config constants: model, true quantile, population variance, z."""
    model = make_dgm(config.family, config.gamma, make_design(config.design, config.n))
    q_bar = mixture_quantile(model, config.tau)
    p = model.component_cdfs(q_bar)
    w = model.multiplicities.astype(np.float64)
    v_n = float(np.sum(w * p * (1.0 - p)) / model.n)
    z = normal_quantile(1.0 - 0.5 * config.alpha)
    return model, q_bar, v_n, z


def _split_variance_rows(
    values: np.ndarray, cut: np.ndarray, starts: np.ndarray, m: np.ndarray, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise group-split variance; ``cut`` broadcasts against rows."""
    below = (values <= cut).astype(np.float64)
    counts = np.add.reduceat(below, starts, axis=1)
    v = np.sum(counts * (m - counts) / (m - 1.0), axis=1) / n
    return v, below


def _invert_levels(
    sorted_vals: np.ndarray, tau: float, c: np.ndarray, n: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Interval endpoints from probability-scale half-widths, with clipping."""
    lo_level = tau - c
    hi_level = tau + c
    has_lo = lo_level > 0.0
    has_hi = hi_level <= 1.0
    k_lo = order_statistic_rank_array(n, lo_level)
    k_hi = order_statistic_rank_array(n, hi_level)
    rows = np.arange(sorted_vals.shape[0])
    lower = np.where(has_lo, sorted_vals[rows, k_lo - 1], -np.inf)
    upper = np.where(has_hi, sorted_vals[rows, k_hi - 1], np.inf)
    return lower, upper, ~has_lo, ~has_hi


def _batch_arrays(
    model: MixtureModel,
    tau: float,
    alpha: float,
    z: float,
    q_bar: float,
    base_seed: int,
    rep_ids: np.ndarray,
) -> dict:
    """Run a batch of replications; one array entry per replication.

    Each replication consumes 3n uniforms from its own substream: n for the
    heterogeneous arm (group-major), then 2n for the i.i.d. arm (pick/value
    pairs, draw-major).  Every array depends only on (base_seed, rep_id),
    never on the batch composition.
    """
    n = model.n
    u = uniform_matrix(base_seed, rep_ids, 3 * n)
    het = transform_heterogeneous(model, u[:, :n])
    iid = transform_iid_average(model, u[:, n::2], u[:, n + 1 :: 2])

    starts = model._group_starts
    m = model.multiplicities.astype(np.float64)

    het_sorted = np.sort(het, axis=1)
    k_point = order_statistic_rank(n, tau)
    q_hat = het_sorted[:, k_point - 1]

    v_hat, _ = _split_variance_rows(het, q_hat[:, None], starts, m, n)
    v_tilde, below_qbar = _split_variance_rows(het, q_bar, starts, m, n)
    error_het = below_qbar.sum(axis=1) / n - tau

    c_het = np.sqrt(v_hat / n) * z
    lower_het, upper_het, clip_lo_het, clip_hi_het = _invert_levels(
        het_sorted, tau, c_het, n
    )
    covered_het = (lower_het < q_bar) & (q_bar < upper_het)

    iid_sorted = np.sort(iid, axis=1)
    error_iid = (iid <= q_bar).astype(np.float64).sum(axis=1) / n - tau
    c_iid = math.sqrt(tau * (1.0 - tau) / n) * z
    c_iid_rows = np.full(rep_ids.size, c_iid)
    lower_iid, upper_iid, clip_lo_iid, clip_hi_iid = _invert_levels(
        iid_sorted, tau, c_iid_rows, n
    )
    covered_iid = (lower_iid < q_bar) & (q_bar < upper_iid)

    failed = ~(
        np.isfinite(v_hat)
        & np.isfinite(v_tilde)
        & np.isfinite(error_het)
        & np.isfinite(error_iid)
    )
    return {
        "rep_id": np.asarray(rep_ids, dtype=np.int64),
        "covered_het": covered_het,
        "covered_iid": covered_iid,
        "error_het": error_het,
        "error_iid": error_iid,
        "v_hat": v_hat,
        "v_tilde": v_tilde,
        "width_het": upper_het - lower_het,
        "width_iid": upper_iid - lower_iid,
        "clip_lower_het": clip_lo_het,
        "clip_upper_het": clip_hi_het,
        "clip_lower_iid": clip_lo_iid,
        "clip_upper_iid": clip_hi_iid,
        "failed": failed,
    }


def _batch_task(args) -> dict:
    config, rep_lo, rep_hi = args
    model, q_bar, _, z = _study_context(config)
    rep_ids = np.arange(rep_lo, rep_hi, dtype=np.int64)
    return _batch_arrays(
        model, config.tau, config.alpha, z, q_bar, config.base_seed, rep_ids
    )


def _collect_arrays(
    config: SimulationConfig, workers: int | None, batch_size: int
) -> dict:
    """All per-replication arrays for a config, in rep-id order."""
    return _collect_arrays_many([config], workers, batch_size)[0]


def _collect_arrays_many(
    configs: Sequence[SimulationConfig], workers: int | None, batch_size: int
) -> list[dict]:
    if batch_size < 1:
        raise DomainError(f"batch_size must be >= 1, got {batch_size}")
    tasks = []
    owners = []
    for ci, config in enumerate(configs):
        for lo in range(0, config.reps, batch_size):
            tasks.append((config, lo, min(lo + batch_size, config.reps)))
            owners.append(ci)
    if workers is not None and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_batch_task, tasks))
    else:
        results = [_batch_task(t) for t in tasks]
    collected: list[dict] = []
    for ci in range(len(configs)):
        parts = [r for o, r in zip(owners, results) if o == ci]
        keys = parts[0].keys()
        collected.append({k: np.concatenate([p[k] for p in parts]) for k in keys})
    return collected


def _record_at(arrays: dict, i: int) -> ReplicationRecord:
    return ReplicationRecord(
        rep_id=int(arrays["rep_id"][i]),
        covered_het=bool(arrays["covered_het"][i]),
        covered_iid=bool(arrays["covered_iid"][i]),
        error_het=float(arrays["error_het"][i]),
        error_iid=float(arrays["error_iid"][i]),
        v_hat=float(arrays["v_hat"][i]),
        v_tilde=float(arrays["v_tilde"][i]),
        width_het=float(arrays["width_het"][i]),
        width_iid=float(arrays["width_iid"][i]),
    )


def run_replication(
    config: SimulationConfig,
    model: MixtureModel,
    q_bar: float,
    v_n: float,
    rep_id: int,
) -> ReplicationRecord:
    """Run one replication; a pure function of (config, rep_id).

    ``q_bar`` and ``v_n`` are the per-config constants (true quantile and
    population variance), precomputed once and passed in; ``v_n`` is only
    sanity-checked here but keeps the per-config calling convention uniform.
    """
    if model.n != config.n:
        raise DomainError(f"model has n={model.n}, config has n={config.n}")
    if rep_id < 0:
        raise DomainError(f"rep_id must be >= 0, got {rep_id}")
    worst = config.tau * (1.0 - config.tau)
    if not (0.0 <= v_n <= worst + 1e-9):
        raise DomainError(f"v_n={v_n} outside [0, tau*(1-tau)]")
    z = normal_quantile(1.0 - 0.5 * config.alpha)
    arrays = _batch_arrays(
        model,
        config.tau,
        config.alpha,
        z,
        q_bar,
        config.base_seed,
        np.asarray([rep_id], dtype=np.int64),
    )
    return _record_at(arrays, 0)


def _finite_mean(x: np.ndarray) -> float:
    finite = x[np.isfinite(x)]
    return float(finite.mean()) if finite.size else math.inf


def _report_for(config: SimulationConfig, arrays: dict) -> CoverageReport:
    _, q_bar, v_n, _ = _study_context(config)
    ok = ~arrays["failed"]
    n_failed = int(arrays["failed"].sum())
    kept = {k: v[ok] for k, v in arrays.items()}
    r = kept["rep_id"].size
    return CoverageReport(
        family=config.family,
        gamma=config.gamma,
        design=config.design,
        n=config.n,
        tau=config.tau,
        alpha=config.alpha,
        reps=config.reps,
        seed=config.base_seed,
        q_bar=q_bar,
        v_n=v_n,
        coverage_het=100.0 * float(kept["covered_het"].sum()) / r,
        coverage_iid=100.0 * float(kept["covered_iid"].sum()) / r,
        mean_v_hat=float(kept["v_hat"].mean()),
        mean_v_tilde=float(kept["v_tilde"].mean()),
        var_v_tilde=float(np.var(kept["v_tilde"], ddof=1)),
        var_error_het=float(np.var(kept["error_het"], ddof=1)),
        var_error_iid=float(np.var(kept["error_iid"], ddof=1)),
        mean_width_het=_finite_mean(kept["width_het"]),
        mean_width_iid=_finite_mean(kept["width_iid"]),
        clip_lower_het=int(kept["clip_lower_het"].sum()),
        clip_upper_het=int(kept["clip_upper_het"].sum()),
        clip_lower_iid=int(kept["clip_lower_iid"].sum()),
        clip_upper_iid=int(kept["clip_upper_iid"].sum()),
        n_failed=n_failed,
    )


def coverage_table(
    configs: Sequence[SimulationConfig],
    *,
    workers: int | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[CoverageReport]:
    """Aggregate coverage and diagnostics for every configuration.

    Batches may be executed by any number of worker processes; results are
    reassembled in replication order before aggregation, so the output is
    bit-identical for any ``workers`` value, and per-replication values are
    bit-identical for any ``batch_size`` as well.
    """
    collected = _collect_arrays_many(list(configs), workers, batch_size)
    return [_report_for(c, a) for c, a in zip(configs, collected)]


def error_samples(
    config: SimulationConfig,
    *,
    workers: int | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[ReplicationRecord]:
    """Per-replication records (quantile-level errors, variances, widths).

    This is the raw material behind the error-distribution comparison of the
    two arms; failed replications are excluded (they keep their rep_id gap).
    """
    arrays = _collect_arrays(config, workers, batch_size)
    ok = np.flatnonzero(~arrays["failed"])
    return [_record_at(arrays, int(i)) for i in ok]


def error_summary(records: Sequence[ReplicationRecord]) -> ErrorSummary:
    """Sample variances of both arms' errors and their ratio."""
    if not records:
        raise DomainError("no replication records to summarize")
    err_het = np.array([rec.error_het for rec in records])
    err_iid = np.array([rec.error_iid for rec in records])
    var_het = float(np.var(err_het, ddof=1))
    var_iid = float(np.var(err_iid, ddof=1))
    return ErrorSummary(
        var_error_het=var_het,
        var_error_iid=var_iid,
        variance_ratio=var_het / var_iid if var_iid > 0 else math.inf,
        mean_width_het=_finite_mean(np.array([rec.width_het for rec in records])),
        mean_width_iid=_finite_mean(np.array([rec.width_iid for rec in records])),
    )


# ---------------------------------------------------------------------------
# Simulation-only estimators and oracles
# ---------------------------------------------------------------------------

def oracle_variance_estimator(sample: GroupedSample, q_bar: float) -> float:
    """Group-split variance at the *true* quantile (known only in simulation).

    Splitting at the fixed point q_bar instead of the estimated quantile
    makes the per-group straddle counts binomial, and the estimator exactly
    unbiased for the population variance.
    """
    v, _ = _group_split_variance(sample, q_bar)
    return v


def binomial_product_variance_closed_form(m: int, p: float) -> float:
    """var(M * (m - M)) for M ~ Binomial(m, p), in closed form.

    Derived from the first four (factorial) moments of the binomial
    distribution:  m(m-1) p(1-p) (m-1 - 2(2m-3) p(1-p)).
    """
    _check_binomial_args(m, p)
    pq = p * (1.0 - p)
    return m * (m - 1.0) * pq * ((m - 1.0) - 2.0 * (2.0 * m - 3.0) * pq)


def binomial_product_variance_bruteforce(m: int, p: float) -> float:
    """var(M * (m - M)) by exact enumeration over the binomial pmf.

    Independent check of the closed form.  Uses exact integer binomial
    coefficients up to m = 60 and log-space coefficients beyond, where the
    direct integers would overflow float range.
    """
    _check_binomial_args(m, p)
    if p == 0.0 or p == 1.0:
        return 0.0
    ks = np.arange(m + 1)
    if m <= 60:
        pmf = np.array(
            [math.comb(m, k) * p**k * (1.0 - p) ** (m - k) for k in ks]
        )
    else:
        log_pmf = (
            [math.lgamma(m + 1) - math.lgamma(k + 1) - math.lgamma(m - k + 1) for k in ks]
            + ks * math.log(p)
            + (m - ks) * math.log1p(-p)
        )
        pmf = np.exp(log_pmf)
    f = ks * (m - ks)
    e1 = float(np.sum(pmf * f))
    e2 = float(np.sum(pmf * f.astype(np.float64) ** 2))
    return e2 - e1 * e1


def _check_binomial_args(m: int, p: float) -> None:
    if m < 2 or int(m) != m:
        raise DomainError(f"m must be an integer >= 2, got {m}")
    if not (math.isfinite(p) and 0.0 <= p <= 1.0):
        raise DomainError(f"p must lie in [0, 1], got {p}")


def rate_check(
    model_factory: Callable[[int], MixtureModel],
    n_small: int,
    n_large: int,
    reps: int,
    *,
    base_seed: int = 0,
    batch_size: int = 250,
) -> float:
    """Empirical scaling of the uniform quantile-inversion error.

    Estimates E sup_i |i/n - Fbar(X_(i))| at two sample sizes with
    n_large = 4 * n_small and returns the large/small ratio; a root-n decay
    puts the ratio near 0.5.  The supremum runs over the grid i/n, i=1..n,
    where the step-function quantity attains its relevant values.
    Substreams 0..reps-1 drive the small size, reps..2*reps-1 the large one.
    """
    if n_large != 4 * n_small:
        raise DomainError("rate_check requires n_large = 4 * n_small")
    if reps < 1:
        raise DomainError(f"reps must be >= 1, got {reps}")
    means = []
    for size, offset in ((n_small, 0), (n_large, reps)):
        model = model_factory(size)
        if model.n != size:
            raise DomainError(f"model factory returned n={model.n}, wanted {size}")
        grid = np.arange(1, size + 1, dtype=np.float64) / size
        total = 0.0
        for lo in range(0, reps, batch_size):
            ids = np.arange(offset + lo, offset + min(lo + batch_size, reps))
            u = uniform_matrix(base_seed, ids, size)
            vals = np.sort(transform_heterogeneous(model, u), axis=1)
            fbar = mixture_cdf(model, vals)
            total += float(np.abs(grid - fbar).max(axis=1).sum())
        means.append(total / reps)
    return means[1] / means[0]
