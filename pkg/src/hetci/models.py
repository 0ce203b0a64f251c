"""Mixture data models for the simulation study.

A :class:`MixtureModel` is a list of component distributions together with
integer multiplicities: component j is the common distribution of the m_j
observations of group j.  The multiplicity-weighted average of the component
CDFs is the *average distribution*, whose quantile is the inferential target
of the pooled empirical quantile.

Three component families are provided (unit-variance normal location family,
exponential, uniform interval), with the built-in heterogeneity ladders
``make_dgm`` uses for the bundled study.  Sampling is inverse-CDF throughout
so that fixed seeds give identical samples everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DesignError, DomainError
from .numerics import find_root_increasing, normal_cdf, normal_quantile, RandomStream
from .quantile import GroupedSample, _check_probability

__all__ = [
    "NormalUnitVar",
    "Exponential",
    "UniformInterval",
    "ComponentDistribution",
    "GroupDesign",
    "MixtureModel",
    "make_design",
    "make_dgm",
    "mixture_cdf",
    "mixture_quantile",
    "population_variance",
    "sample_heterogeneous",
    "sample_iid_average",
]

FAMILIES = ("I", "II", "III")
DESIGN_KINDS = ("twin", "triangular")


def _scalar_like(x, result):
    return float(result) if np.ndim(x) == 0 else result


@dataclass(frozen=True)
class NormalUnitVar:
    """Normal distribution with unit variance and location ``mu``."""

    mu: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite, got {self.mu}")

    def cdf(self, x):
        return _scalar_like(x, normal_cdf(np.asarray(x, dtype=np.float64) - self.mu))

    def quantile(self, u):
        return _scalar_like(u, self.mu + normal_quantile(u))


@dataclass(frozen=True)
class Exponential:
    """Exponential distribution with the given rate (mean ``1/rate``)."""

    rate: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rate) and self.rate > 0.0):
            raise DomainError(f"rate must be finite and > 0, got {self.rate}")

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return _scalar_like(x, np.where(x > 0.0, -np.expm1(-self.rate * x), 0.0))

    def quantile(self, u):
        u = np.asarray(u, dtype=np.float64)
        return _scalar_like(u, -np.log1p(-u) / self.rate)


@dataclass(frozen=True)
class UniformInterval:
    """Uniform distribution on the open interval (lo, hi)."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise DomainError(f"need finite lo < hi, got ({self.lo}, {self.hi})")

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return _scalar_like(x, np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0))

    def quantile(self, u):
        u = np.asarray(u, dtype=np.float64)
        return _scalar_like(u, self.lo + u * (self.hi - self.lo))


ComponentDistribution = Union[NormalUnitVar, Exponential, UniformInterval]


@dataclass(frozen=True, eq=False)
class GroupDesign:
    """A concrete assignment of group sizes summing to n."""

    kind: str
    n: int
    group_sizes: np.ndarray

    @property
    def g(self) -> int:
        return self.group_sizes.size


def _triangular_total(g: int) -> int:
    # sizes 2, 3, ..., g+1
    return g * (g + 3) // 2


def make_design(kind: str, n: int) -> GroupDesign:
    """Build a group-size design, or fail naming the nearest admissible n.

    ``twin``: all groups of size 2 (needs n even).  ``triangular``: sizes
    2, 3, ..., g+1 for the unique g with g*(g+3)/2 == n.
    """
    kind = str(kind).lower()
    if n < 2:
        raise DesignError(f"need n >= 2, got {n}")
    if kind == "twin":
        if n % 2 != 0:
            raise DesignError(
                f"twin design needs an even sample size; n={n} is inadmissible, "
                f"nearest admissible are {n - 1} and {n + 1}"
            )
        sizes = np.full(n // 2, 2, dtype=np.int64)
    elif kind == "triangular":
        g = int((math.isqrt(9 + 8 * n) - 3) // 2)
        if _triangular_total(g) != n:
            below = _triangular_total(g)
            above = _triangular_total(g + 1)
            raise DesignError(
                f"triangular design needs n = g*(g+3)/2; n={n} is inadmissible, "
                f"nearest admissible are {below} and {above}"
            )
        sizes = np.arange(2, g + 2, dtype=np.int64)
    else:
        raise DesignError(f"unknown design kind {kind!r}; expected one of {DESIGN_KINDS}")
    return GroupDesign(kind=kind, n=n, group_sizes=sizes)


# Internal family codes for vectorized evaluation.
_FAM_NORMAL, _FAM_EXP, _FAM_UNIFORM = 0, 1, 2


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """g component distributions with multiplicities m_1..m_g (sum n).

    The average CDF is the multiplicity-weighted mean of the component CDFs
    -- not an equal-weight average over groups.  Construction precomputes
    per-family parameter tables so that CDF evaluation and sampling are
    vectorized even when g is large.
    """

    components: tuple
    multiplicities: np.ndarray

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        mult = np.asarray(self.multiplicities, dtype=np.int64)
        if len(comps) == 0 or mult.shape != (len(comps),):
            raise DomainError("need one multiplicity per component")
        if np.any(mult < 1):
            raise DomainError("multiplicities must be >= 1")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "multiplicities", mult)

        g = len(comps)
        fam = np.empty(g, dtype=np.int64)
        p0 = np.zeros(g)
        p1 = np.zeros(g)
        for j, comp in enumerate(comps):
            if isinstance(comp, NormalUnitVar):
                fam[j], p0[j] = _FAM_NORMAL, comp.mu
            elif isinstance(comp, Exponential):
                fam[j], p0[j] = _FAM_EXP, comp.rate
            elif isinstance(comp, UniformInterval):
                fam[j], p0[j], p1[j] = _FAM_UNIFORM, comp.lo, comp.hi
            else:
                raise DomainError(f"unsupported component type {type(comp).__name__}")
        starts = np.concatenate(([0], np.cumsum(mult)[:-1]))
        object.__setattr__(self, "_fam", fam)
        object.__setattr__(self, "_p0", p0)
        object.__setattr__(self, "_p1", p1)
        object.__setattr__(self, "_group_starts", starts)
        object.__setattr__(self, "_cum_sizes", np.cumsum(mult))

    @property
    def n(self) -> int:
        return int(self.multiplicities.sum())

    @property
    def g(self) -> int:
        return len(self.components)

    def component_cdfs(self, x: float) -> np.ndarray:
        """CDF of every component at a scalar x, as a length-g array."""
        out = np.empty(self.g)
        for code in np.unique(self._fam):
            sel = self._fam == code
            out[sel] = _family_cdf(code, x, self._p0[sel], self._p1[sel])
        return out


def _family_cdf(code: int, x, p0: np.ndarray, p1: np.ndarray):
    """Vectorized component CDF; x broadcasts against the parameter arrays."""
    x = np.asarray(x, dtype=np.float64)
    if code == _FAM_NORMAL:
        return normal_cdf(x - p0)
    if code == _FAM_EXP:
        return np.where(x > 0.0, -np.expm1(-p0 * x), 0.0)
    return np.clip((x - p0) / (p1 - p0), 0.0, 1.0)


def _family_quantile(code: int, u: np.ndarray, p0: np.ndarray, p1: np.ndarray):
    """Vectorized component quantile; same formulas as the component classes."""
    if code == _FAM_NORMAL:
        return p0 + normal_quantile(u)
    if code == _FAM_EXP:
        return -np.log1p(-u) / p0
    return p0 + u * (p1 - p0)


def make_dgm(family: str, gamma: float, design: GroupDesign) -> MixtureModel:
    """Instantiate one of the built-in heterogeneous generating mechanisms.

    With groups indexed j = 1..g (g taken from the design):

    * family I:   Normal(mu_j, 1) with mu_j = (log j)**(gamma/2)
    * family II:  Exponential with rate 1/j**gamma (mean j**gamma)
    * family III: Uniform(e_j/2, e_j) with endpoint e_j = 1 + exp(gamma)*j/g

    gamma controls the degree of heterogeneity across groups.
    """
    family = str(family).upper()
    gamma = float(gamma)
    if not math.isfinite(gamma):
        raise DomainError(f"gamma must be finite, got {gamma}")
    g = design.g
    j = np.arange(1, g + 1, dtype=np.float64)
    if family == "I":
        mu = np.log(j) ** (gamma / 2.0)
        comps = tuple(NormalUnitVar(float(m)) for m in mu)
    elif family == "II":
        rate = j ** (-gamma)
        comps = tuple(Exponential(float(r)) for r in rate)
    elif family == "III":
        endpoint = 1.0 + math.exp(gamma) * j / g
        comps = tuple(UniformInterval(float(e) / 2.0, float(e)) for e in endpoint)
    else:
        raise DomainError(f"unknown family {family!r}; expected one of {FAMILIES}")
    return MixtureModel(components=comps, multiplicities=design.group_sizes)


def mixture_cdf(model: MixtureModel, x):
    """Average CDF: multiplicity-weighted mean of the component CDFs.

    Accepts a scalar or a 1-d array of evaluation points.
    """
    x = np.asarray(x, dtype=np.float64)
    w = model.multiplicities.astype(np.float64)
    acc = np.zeros(x.shape, dtype=np.float64)
    for code in np.unique(model._fam):
        sel = model._fam == code
        vals = _family_cdf(code, x[..., None], model._p0[sel], model._p1[sel])
        acc += vals @ w[sel]
    return _scalar_like(x, acc / model.n)


def mixture_quantile(model: MixtureModel, tau: float) -> float:
    """Quantile of the average distribution, by bisection.

    The bracket [min_j q_j(tau), max_j q_j(tau)] always contains the answer
    because the average CDF is sandwiched between the extreme component
    CDFs.  Bisection (rather than a derivative method) is deliberate: the
    average CDF is only piecewise smooth when uniform components are
    present, and bisection converges to the leftmost solution, matching the
    left-continuous quantile convention on any flat stretch.
    """
    tau = _check_probability("tau", tau)
    qs = [comp.quantile(tau) for comp in model.components]
    lo, hi = min(qs), max(qs)
    return find_root_increasing(
        lambda x: mixture_cdf(model, x), tau, lo, hi, xtol_rel=1e-14
    )


def population_variance(model: MixtureModel, tau: float) -> float:
    """Variance of sqrt(n) * EDF at the average-distribution quantile.

    Equals ``n**-1 * sum_j m_j p_j (1 - p_j)`` with p_j the component CDF at
    the quantile; by Cauchy-Schwarz it never exceeds ``tau * (1 - tau)``,
    with equality exactly in the homogeneous case.
    """
    tau = _check_probability("tau", tau)
    q = mixture_quantile(model, tau)
    p = model.component_cdfs(q)
    w = model.multiplicities.astype(np.float64)
    return float(np.sum(w * p * (1.0 - p)) / model.n)


def transform_heterogeneous(model: MixtureModel, u: np.ndarray) -> np.ndarray:
    """Map a (reps, n) block of uniforms to sample values, group-major.

    Column t belongs to the group whose block of columns contains t
    (groups laid out consecutively with their multiplicities), and is
    transformed by that group's inverse CDF.
    """
    out = np.empty_like(u)
    sizes = model.multiplicities
    for code in np.unique(model._fam):
        sel = model._fam == code
        cols = np.concatenate([
            np.arange(s, s + m)
            for s, m in zip(model._group_starts[sel], sizes[sel])
        ])
        p0 = np.repeat(model._p0[sel], sizes[sel])
        p1 = np.repeat(model._p1[sel], sizes[sel])
        out[:, cols] = _family_quantile(code, u[:, cols], p0, p1)
    return out


def transform_iid_average(
    model: MixtureModel, u_pick: np.ndarray, u_value: np.ndarray
) -> np.ndarray:
    """Composition sampling from the average distribution, vectorized.

    ``u_pick`` selects a component with probability m_j / n; ``u_value`` is
    pushed through that component's inverse CDF.
    """
    t = u_pick * model.n
    picked = np.searchsorted(model._cum_sizes, t, side="right")
    np.minimum(picked, model.g - 1, out=picked)
    out = np.empty_like(u_value)
    for code in np.unique(model._fam):
        sel_group = model._fam == code
        sel = sel_group[picked]
        idx = picked[sel]
        out[sel] = _family_quantile(code, u_value[sel], model._p0[idx], model._p1[idx])
    return out


def _grouped_from_values(model: MixtureModel, values: np.ndarray) -> GroupedSample:
    group_of = np.repeat(np.arange(model.g, dtype=np.int64), model.multiplicities)
    return GroupedSample(values=values, group_of=group_of)


def sample_heterogeneous(model: MixtureModel, stream: RandomStream) -> GroupedSample:
    """Draw m_j observations from component j for every group.

    Consumes exactly n uniforms in group-major, index-minor order, each
    pushed through its component's inverse CDF, and returns the sample with
    the model's own group structure.
    """
    u = stream.uniforms(model.n)
    values = transform_heterogeneous(model, u[None, :])[0]
    return _grouped_from_values(model, values)


def sample_iid_average(model: MixtureModel, stream: RandomStream) -> GroupedSample:
    """Draw n i.i.d. observations from the average distribution.

    Uses composition sampling, consuming two uniforms per observation in
    draw order (component pick, then value); the result is labeled as a
    single group of size n, which is its true structure.
    """
    u = stream.uniforms(2 * model.n).reshape(model.n, 2)
    values = transform_iid_average(model, u[None, :, 0], u[None, :, 1])[0]
    return GroupedSample(values=values, group_of=np.zeros(model.n, dtype=np.int64))
