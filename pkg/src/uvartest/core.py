"""Statistics for testing the between-treatment variance component in a
one-way random effects layout.

The pooled pairwise sample variance of grouped observations splits exactly
into a within-groups component and a between-groups component.  The between
component is a centered quadratic form whose pair weights depend only on the
group sizes; standardizing it by the within component and the root of the
squared-weight sum yields a statistic that is asymptotically standard normal
when the between-group variance is zero, giving an upper-tail normal test
that does not require normally distributed data.  This module computes that
statistic, the classical one-way ANOVA F statistic, the weight system, and
the exact moment formulas used to validate both in simulation.

All functions are pure; all value types are immutable after construction and
safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import special

__all__ = [
    "DegenerateWithinVariance",
    "Design",
    "Dataset",
    "Decomposition",
    "EtaWeights",
    "TestResult",
    "MomentOracle",
    "within_u",
    "between_pair_u",
    "decompose",
    "eta_weights",
    "m_n",
    "b_n_centered",
    "u_test",
    "f_test",
    "normal_sf",
    "f_sf",
    "moment_oracle",
    "local_shift",
    "icc",
    "kappa",
]

_SQRT2 = math.sqrt(2.0)


class DegenerateWithinVariance(ValueError):
    """Raised when every group is internally constant.

    The pooled within-group variance is then zero, the U statistic has a
    zero denominator, and neither the normal test nor the F-test has a
    defined p-value.
    """


@dataclass(frozen=True)
class Design:
    """Group sizes (n_1, ..., n_k) of a one-way layout.

    Requires at least two groups and at least two observations per group;
    singleton groups carry no within-group information and would make the
    same-group pair weight divide by zero.
    """

    group_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(m) for m in self.group_sizes)
        if any(m != orig for m, orig in zip(sizes, self.group_sizes)):
            raise ValueError("group sizes must be integers")
        object.__setattr__(self, "group_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("a design needs at least 2 groups")
        if any(m < 2 for m in sizes):
            raise ValueError("every group needs at least 2 observations")

    @property
    def k(self) -> int:
        """Number of groups."""
        return len(self.group_sizes)

    @property
    def n(self) -> int:
        """Total number of observations."""
        return sum(self.group_sizes)

    def pair_count(self) -> int:
        """Number of unordered observation pairs, n choose 2."""
        n = self.n
        return n * (n - 1) // 2


class Dataset:
    """Grouped real-valued observations for a one-way layout.

    Stores both the per-group views and the pooled vector in group order
    (all of group 1, then group 2, and so on).  Instances are treated as
    immutable after construction.
    """

    __slots__ = ("groups", "design", "values")

    def __init__(self, groups: Iterable[Sequence[float]]):
        arrays = tuple(np.asarray(g, dtype=float) for g in groups)
        for a in arrays:
            if a.ndim != 1:
                raise ValueError("each group must be a 1-D sequence of values")
        design = Design(tuple(a.size for a in arrays))
        values = np.concatenate(arrays)
        if not np.all(np.isfinite(values)):
            raise ValueError("observations must be finite")
        self.groups = arrays
        self.design = design
        self.values = values

    @classmethod
    def from_values(cls, values: np.ndarray, design: Design) -> "Dataset":
        """Build a dataset from an already-pooled vector in group order."""
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size != design.n:
            raise ValueError("pooled vector length must match the design")
        if not np.all(np.isfinite(values)):
            raise ValueError("observations must be finite")
        ds = cls.__new__(cls)
        ds.values = values
        ds.design = design
        ds.groups = tuple(np.split(values, np.cumsum(design.group_sizes)[:-1]))
        return ds

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Dataset(k={self.design.k}, group_sizes={self.design.group_sizes})"


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Split of the pooled pairwise variance into within and between parts.

    ``u_pooled`` is the sample variance of all observations, ``w_n`` the
    size-weighted mean of the per-group variances ``u_within`` and ``b_n``
    the between-groups remainder: ``u_pooled == w_n + b_n`` up to roundoff.
    """

    u_within: np.ndarray
    u_pooled: float
    w_n: float
    b_n: float


@dataclass(frozen=True)
class TestResult:
    """Outcome of one hypothesis test at level ``alpha``.

    ``method`` is "U" (normal-calibrated between-variance test), "F"
    (one-way ANOVA), or "PERM" (permutation-calibrated U statistic).
    ``reject`` is equivalent to ``p_value <= alpha``; the boundary rejects.
    ``df`` is set only for the F-test.
    """

    method: str
    statistic: float
    p_value: float
    reject: bool
    alpha: float
    df: tuple[float, float] | None = None
    extras: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class MomentOracle:
    """Closed-form moments used to validate the simulation engine.

    ``e_bn``       expected between-groups component for the given variance
    ``var_bn_null`` its exact variance when the between-group variance is 0
    ``var_ui``     exact variance of each per-group variance estimate
    ``lambda_n``   squared-weight sum divided by n^3 (finite-n scale factor)
    ``shift``      implied mean of the standardized statistic when the given
                   between-group variance is read on the local scale
                   sigma_b^2 = delta^2 / sqrt(n)
    """

    e_bn: float
    var_bn_null: float
    var_ui: tuple[float, ...]
    lambda_n: float
    shift: float


class _GroupStats(NamedTuple):
    means: np.ndarray
    ss_within: np.ndarray  # centered sum of squares per group
    grand_mean: float
    sq_between: float  # sum of n_i * (mean_i - grand_mean)^2


def _group_stats(values: np.ndarray, design: Design) -> _GroupStats:
    """Two-pass per-group means and centered sums of squares."""
    sizes = np.asarray(design.group_sizes, dtype=float)
    offsets = np.concatenate(([0], np.cumsum(design.group_sizes)[:-1]))
    sums = np.add.reduceat(values, offsets)
    means = sums / sizes
    centered = values - np.repeat(means, design.group_sizes)
    ss_within = np.add.reduceat(centered * centered, offsets)
    grand_mean = float(values.sum()) / design.n
    dev = means - grand_mean
    sq_between = float(sizes @ (dev * dev))
    return _GroupStats(means, ss_within, grand_mean, sq_between)


def _pooled_decomposition(values: np.ndarray, design: Design) -> Decomposition:
    """Decomposition straight from a pooled vector (no Dataset overhead)."""
    sizes = np.asarray(design.group_sizes, dtype=float)
    n = design.n
    stats = _group_stats(values, design)
    u_within = stats.ss_within / (sizes - 1.0)
    w_n = float(sizes @ u_within) / n
    # Between part from sufficient statistics: combining the pair-mean
    # identity over all group pairs collapses to one weighted contrast.
    b_n = (n * stats.sq_between - float((n - sizes) @ u_within)) / (n * (n - 1))
    centered_all = values - stats.grand_mean
    u_pooled = float(centered_all @ centered_all) / (n - 1)
    return Decomposition(u_within=u_within, u_pooled=u_pooled, w_n=w_n, b_n=b_n)


def within_u(dataset: Dataset, i: int) -> float:
    """Unbiased variance of group ``i`` (0-based).

    Equals the average of (x - y)^2 / 2 over all unordered pairs within the
    group, computed via two-pass centered sums.
    """
    group = dataset.groups[i]
    return float(np.var(group, ddof=1))


def between_pair_u(dataset: Dataset, i: int, i2: int) -> float:
    """Mean of (x - y)^2 / 2 over all cross pairs of groups ``i`` and ``i2``.

    Uses the sufficient-statistic identity
    ``2 U = q_i/n_i + q_j/n_j + (mean_i - mean_j)^2``
    with q the centered sum of squares, equivalent to the full double sum.
    """
    if i == i2:
        raise ValueError("between_pair_u needs two distinct groups; use within_u for one group")
    a, b = dataset.groups[i], dataset.groups[i2]
    ma, mb = float(a.mean()), float(b.mean())
    qa = float(((a - ma) ** 2).sum())
    qb = float(((b - mb) ** 2).sum())
    return 0.5 * (qa / a.size + qb / b.size + (ma - mb) ** 2)


def decompose(dataset: Dataset) -> Decomposition:
    """Split the pooled pairwise variance into within and between parts."""
    return _pooled_decomposition(dataset.values, dataset.design)


def m_n(design: Design) -> float:
    """Sum of squared pair weights over all observation pairs.

    Closed form: (n choose 2)(k - 1) {1 + (1/n) sum_i (n - n_i) / ((n_i - 1)(k - 1))};
    grows like n^3 when group sizes stay bounded.
    """
    sizes = np.asarray(design.group_sizes, dtype=float)
    n = design.n
    k = design.k
    correction = float(np.sum((n - sizes) / (sizes - 1.0))) / (n * (k - 1))
    return 0.5 * n * (n - 1) * (k - 1) * (1.0 + correction)


class EtaWeights:
    """Pair weights of the between-groups quadratic form.

    A pair drawn from group ``i`` gets weight (n - n_i) / (n_i - 1); a pair
    straddling two groups gets weight -1.  Weights sum to zero over all
    pairs, and the weights attached to any single observation sum to zero
    as well, which is what makes the quadratic form insensitive to the
    centering constant.
    """

    __slots__ = ("design", "same_group", "m_n", "_group_of")

    def __init__(self, design: Design):
        sizes = np.asarray(design.group_sizes, dtype=float)
        n = design.n
        self.design = design
        self.same_group = (n - sizes) / (sizes - 1.0)
        self.m_n = m_n(design)
        self._group_of = np.repeat(np.arange(design.k), design.group_sizes)

    def weight(self, r: int, s: int) -> float:
        """Weight of the pair of pooled observation positions (0-based)."""
        n = self.design.n
        if not (0 <= r < n and 0 <= s < n):
            raise IndexError("observation position out of range")
        if r == s:
            raise ValueError("pair weights need two distinct positions")
        gr, gs = self._group_of[r], self._group_of[s]
        return float(self.same_group[gr]) if gr == gs else -1.0

    def matrix(self) -> np.ndarray:
        """Dense symmetric weight matrix with a zero diagonal (n x n)."""
        n = self.design.n
        w = np.full((n, n), -1.0)
        start = 0
        for g, size in enumerate(self.design.group_sizes):
            stop = start + size
            w[start:stop, start:stop] = self.same_group[g]
            start = stop
        np.fill_diagonal(w, 0.0)
        return w


def eta_weights(design: Design) -> EtaWeights:
    """Pair-weight system of a design."""
    return EtaWeights(design)


def b_n_centered(dataset: Dataset, center: float) -> float:
    """Between-groups component evaluated as an explicit quadratic form.

    Averages ``weight(r, s) * (y_r - center)(y_s - center)`` over all pairs.
    Because per-observation weight sums vanish, the result does not depend
    on ``center`` and equals ``decompose(dataset).b_n`` up to roundoff.
    Quadratic in n; intended as an independent cross-check, not for bulk use.
    """
    if not math.isfinite(center):
        raise ValueError("center must be finite")
    x = dataset.values - center
    w = EtaWeights(dataset.design).matrix()
    quad = 0.5 * float(x @ (w @ x))
    return quad / dataset.design.pair_count()


def normal_sf(x: float) -> float:
    """Upper-tail probability P(Z > x) of the standard normal."""
    if math.isnan(x):
        raise ValueError("x must not be NaN")
    return 0.5 * math.erfc(x / _SQRT2)


def f_sf(x: float, d1: float, d2: float) -> float:
    """Upper-tail probability of the F distribution with (d1, d2) df.

    Evaluated through the regularized incomplete beta function.
    """
    if x < 0:
        raise ValueError("F statistic must be nonnegative")
    if d1 <= 0 or d2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    return float(special.betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x)))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")


def u_test(dataset: Dataset, alpha: float = 0.05) -> TestResult:
    """Normal-calibrated test that the between-group variance is zero.

    The statistic is the pair count times the between component, divided by
    the within component times the root of the squared-weight sum; large
    values indicate real between-group variance.  Rejects when the upper
    tail probability is at most ``alpha`` (boundary inclusive).
    """
    _check_alpha(alpha)
    dec = decompose(dataset)
    if dec.w_n == 0.0:
        raise DegenerateWithinVariance(
            "all groups are internally constant; the within-group variance is zero"
        )
    design = dataset.design
    mn = m_n(design)
    stat = design.pair_count() * dec.b_n / (dec.w_n * math.sqrt(mn))
    p = normal_sf(stat)
    return TestResult(
        method="U",
        statistic=stat,
        p_value=p,
        reject=p <= alpha,
        alpha=alpha,
        extras={"w_n": dec.w_n, "b_n": dec.b_n, "m_n": mn},
    )


def f_test(dataset: Dataset, alpha: float = 0.05) -> TestResult:
    """Classical one-way ANOVA F-test of the no-treatment-effect hypothesis.

    F = [SS_between / (k - 1)] / [SS_within / (n - k)], referred to the
    central F distribution with (k - 1, n - k) degrees of freedom.
    """
    _check_alpha(alpha)
    design = dataset.design
    stats = _group_stats(dataset.values, design)
    sq_within = float(stats.ss_within.sum())
    if sq_within == 0.0:
        raise DegenerateWithinVariance(
            "all groups are internally constant; the within-group sum of squares is zero"
        )
    k, n = design.k, design.n
    d1, d2 = float(k - 1), float(n - k)
    stat = (stats.sq_between / d1) / (sq_within / d2)
    p = f_sf(stat, d1, d2)
    return TestResult(
        method="F",
        statistic=stat,
        p_value=p,
        reject=p <= alpha,
        alpha=alpha,
        df=(d1, d2),
        extras={"sq_between": stats.sq_between, "sq_within": sq_within},
    )


def moment_oracle(
    design: Design, sigma_b2: float, sigma_e2: float, e4: float
) -> MomentOracle:
    """Exact moments of the decomposition under the random effects model.

    ``sigma_b2`` and ``sigma_e2`` are the between- and within-group variance
    components and ``e4`` the fourth moment of the within-group errors
    (``e4 >= sigma_e2**2`` by Jensen).
    """
    if sigma_b2 < 0:
        raise ValueError("sigma_b2 must be nonnegative")
    if sigma_e2 <= 0:
        raise ValueError("sigma_e2 must be positive")
    if e4 < sigma_e2 * sigma_e2:
        raise ValueError("e4 must be at least sigma_e2 squared")
    sizes = np.asarray(design.group_sizes, dtype=float)
    n = design.n
    e_bn = sigma_b2 * (n * n - float((sizes * sizes).sum())) / (n * (n - 1))
    mn = m_n(design)
    pairs = design.pair_count()
    var_bn_null = sigma_e2 * sigma_e2 * mn / (pairs * pairs)
    var_ui = tuple(
        e4 / ni - (ni - 3.0) * sigma_e2 * sigma_e2 / ((ni - 1.0) * ni)
        for ni in sizes
    )
    lambda_n = mn / n**3
    shift = math.sqrt(n) * sigma_b2 / (2.0 * sigma_e2 * math.sqrt(lambda_n))
    return MomentOracle(
        e_bn=e_bn,
        var_bn_null=var_bn_null,
        var_ui=var_ui,
        lambda_n=lambda_n,
        shift=shift,
    )


def local_shift(design: Design, delta: float, sigma_e2: float) -> float:
    """Mean of the standardized statistic under a local alternative.

    For the shrinking sequence sigma_b^2 = delta^2 / sqrt(n) the statistic
    is asymptotically normal with unit variance and this mean, using the
    finite-n plug-in lambda_n = m_n / n^3 for the limiting scale factor.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if sigma_e2 <= 0:
        raise ValueError("sigma_e2 must be positive")
    lambda_n = m_n(design) / design.n**3
    return delta * delta / (2.0 * sigma_e2 * math.sqrt(lambda_n))


def icc(sigma_b2: float, sigma_e2: float) -> float:
    """Intraclass correlation sigma_b^2 / (sigma_b^2 + sigma_e^2)."""
    if sigma_b2 < 0:
        raise ValueError("sigma_b2 must be nonnegative")
    if sigma_e2 <= 0:
        raise ValueError("sigma_e2 must be positive")
    return sigma_b2 / (sigma_b2 + sigma_e2)


def kappa(design: Design) -> float:
    """Imbalance measure 1 / (1 + cv^2) of the group sizes.

    cv is the coefficient of variation of (n_1, ..., n_k) with the
    population (denominator k) standard deviation; 1 for balanced designs,
    smaller for more unbalanced ones.
    """
    sizes = np.asarray(design.group_sizes, dtype=float)
    cv = float(sizes.std()) / float(sizes.mean())
    return 1.0 / (1.0 + cv * cv)
