"""Monte Carlo engine for size and power studies of the variance-component
tests, plus permutation calibration of the normal-calibrated statistic.

A scenario bundles design generators, noise specifications, a grid of
between-group variances and a seed.  Running it produces a rejection table:
one row per (design cell, grid value, method) with the empirical rejection
rate and its Monte Carlo standard error.  Replicates are seeded
individually from (seed, cell index, grid index, replicate index), so
results are bit-identical regardless of how many worker threads execute
them.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    Dataset,
    DegenerateWithinVariance,
    Design,
    TestResult,
    _pooled_decomposition,
    f_test,
    m_n,
    u_test,
)
from .randgen import (
    Balanced,
    DesignGen,
    NoiseFamily,
    NoiseSpec,
    SeedSpec,
    ShiftedGeometric,
    UniformSizes,
    gen_design,
    sample_noise,
)

__all__ = [
    "METHODS",
    "ScenarioSpec",
    "RejectionCell",
    "RejectionTable",
    "run_scenario",
    "preset",
    "PRESET_NAMES",
    "permutation_pvalue",
    "mc_se",
    "scenario_from_dict",
]

METHODS = ("U", "F", "PERM")

_EXHAUSTIVE_LIMIT = 200_000


@dataclass(frozen=True)
class ScenarioSpec:
    """Full configuration of one simulation study.

    ``design_gens`` lists the design cells of the study (for instance one
    balanced generator per number-of-groups value); each cell is crossed
    with every value of ``sigma_b2_grid``.  ``b_spec`` fixes the family and
    shape of the group effects, with its variance replaced by the grid
    value cell by cell; ``e_spec`` is used as-is for the within-group
    errors.  ``n_perm`` only matters when "PERM" is among the methods.
    """

    name: str
    design_gens: tuple[DesignGen, ...]
    redraw_design_per_replicate: bool
    b_spec: NoiseSpec
    e_spec: NoiseSpec
    mu: float
    sigma_b2_grid: tuple[float, ...]
    alpha: float
    replicates: int
    seed: SeedSpec
    methods: tuple[str, ...] = ("U",)
    n_perm: int = 199

    def __post_init__(self) -> None:
        if not self.design_gens:
            raise ValueError("at least one design generator is required")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not self.sigma_b2_grid:
            raise ValueError("sigma_b2_grid must not be empty")
        if any(v < 0 for v in self.sigma_b2_grid):
            raise ValueError("sigma_b2_grid values must be nonnegative")
        if not self.methods:
            raise ValueError("at least one method is required")
        for method in self.methods:
            if method not in METHODS:
                raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
        if "PERM" in self.methods and self.n_perm < 1:
            raise ValueError("n_perm must be at least 1")


@dataclass(frozen=True)
class RejectionCell:
    """One rejection rate: a (scenario, design cell, grid value, method)."""

    scenario: str
    k: int
    design: str
    sigma_b2: float
    method: str
    rate: float
    se: float
    replicates: int


_CSV_COLUMNS = ("scenario", "k", "design", "sigma_b2", "method", "rate", "se", "replicates")


@dataclass(frozen=True)
class RejectionTable:
    """Rejection rates of a study, with CSV and Markdown serialization.

    ``degenerate`` counts replicates whose test was undefined (all groups
    internally constant); those count as non-rejections.  It is a
    diagnostic and is not serialized or compared.
    """

    cells: tuple[RejectionCell, ...]
    degenerate: Mapping[tuple[str, int, str, float, str], int] = field(
        default_factory=dict, compare=False, repr=False
    )

    def to_csv(self, buf) -> None:
        """Write the table; ``buf`` is a text file object."""
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for c in self.cells:
            writer.writerow(
                [
                    c.scenario,
                    c.k,
                    c.design,
                    repr(c.sigma_b2),
                    c.method,
                    repr(c.rate),
                    repr(c.se),
                    c.replicates,
                ]
            )

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, buf) -> "RejectionTable":
        """Read a table previously written by :meth:`to_csv`."""
        reader = csv.reader(buf)
        header = next(reader, None)
        if header != list(_CSV_COLUMNS):
            raise ValueError(f"unexpected header {header!r}")
        cells = []
        for row in reader:
            if len(row) != len(_CSV_COLUMNS):
                raise ValueError(f"malformed row {row!r}")
            cells.append(
                RejectionCell(
                    scenario=row[0],
                    k=int(row[1]),
                    design=row[2],
                    sigma_b2=float(row[3]),
                    method=row[4],
                    rate=float(row[5]),
                    se=float(row[6]),
                    replicates=int(row[7]),
                )
            )
        return cls(cells=tuple(cells))

    def to_markdown(self) -> str:
        """Render rates (in percent) with grid values as rows and
        (k, design, method) combinations as columns."""
        grid = list(dict.fromkeys(c.sigma_b2 for c in self.cells))
        columns = list(dict.fromkeys((c.k, c.design, c.method) for c in self.cells))
        by_key = {(c.sigma_b2, c.k, c.design, c.method): c for c in self.cells}
        single_design = len({c.design for c in self.cells}) == 1
        heads = ["sigma_b2"]
        for k, design, method in columns:
            head = f"k={k} {method}" if single_design else f"k={k} {design} {method}"
            heads.append(head)
        lines = [
            "| " + " | ".join(heads) + " |",
            "|" + "|".join(" --- " for _ in heads) + "|",
        ]
        for v in grid:
            row = [f"{v:g}"]
            for k, design, method in columns:
                cell = by_key.get((v, k, design, method))
                row.append("" if cell is None else f"{100.0 * cell.rate:.1f}")
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"


def mc_se(rate: float, n: int) -> float:
    """Monte Carlo standard error of a proportion: sqrt(rate(1-rate)/n)."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must be in [0, 1]")
    if n < 1:
        raise ValueError("n must be at least 1")
    return math.sqrt(rate * (1.0 - rate) / n)


def _jn_statistic(values: np.ndarray, design: Design, mn_sqrt: float, pairs: int):
    """Standardized between-component of a pooled vector, or None if the
    within-group variance vanishes."""
    dec = _pooled_decomposition(values, design)
    if dec.w_n == 0.0:
        return None
    return pairs * dec.b_n / (dec.w_n * mn_sqrt)


def _iter_assignments(n: int, sizes: Sequence[int]) -> Iterable[tuple[int, ...]]:
    """All ordered splits of positions 0..n-1 into groups of the given sizes,
    yielded as index tuples in group order."""

    def rec(remaining: tuple[int, ...], sizes: tuple[int, ...]):
        if not sizes:
            yield ()
            return
        head, *tail = sizes
        for combo in itertools.combinations(remaining, head):
            chosen = set(combo)
            rest = tuple(i for i in remaining if i not in chosen)
            for suffix in rec(rest, tuple(tail)):
                yield combo + suffix

    yield from rec(tuple(range(n)), tuple(sizes))


def permutation_pvalue(
    dataset: Dataset,
    n_perm: int | None = None,
    seed: "SeedSpec | np.random.Generator | None" = None,
    *,
    alpha: float = 0.05,
    exhaustive: bool = False,
) -> TestResult:
    """Permutation-calibrated p-value for the standardized between statistic.

    Observations are reassigned to groups at random, preserving the group
    sizes; the p-value is (1 + #{permuted statistic >= observed}) divided
    by (number of permutations + 1).  With ``exhaustive=True`` every
    distinct assignment is enumerated instead (the observed one included)
    and ``n_perm``/``seed`` are ignored.  Permutations with zero
    within-group variance never count as exceedances.
    """
    observed = u_test(dataset, alpha)  # raises DegenerateWithinVariance if undefined
    j_obs = observed.statistic
    design = dataset.design
    values = dataset.values
    mn_sqrt = math.sqrt(m_n(design))
    pairs = design.pair_count()

    if exhaustive:
        total = math.factorial(design.n)
        for size in design.group_sizes:
            total //= math.factorial(size)
        if total > _EXHAUSTIVE_LIMIT:
            raise ValueError(
                f"{total} distinct assignments exceed the exhaustive limit "
                f"({_EXHAUSTIVE_LIMIT}); use random permutations instead"
            )
        exceed = 0
        for assignment in _iter_assignments(design.n, design.group_sizes):
            j = _jn_statistic(values[np.array(assignment)], design, mn_sqrt, pairs)
            if j is not None and j >= j_obs:
                exceed += 1
        used = total
    else:
        if n_perm is None or n_perm < 1:
            raise ValueError("n_perm must be at least 1")
        if seed is None:
            raise ValueError("a seed is required for random permutations")
        rng = seed.generator() if isinstance(seed, SeedSpec) else seed
        exceed = 0
        for _ in range(n_perm):
            j = _jn_statistic(values[rng.permutation(design.n)], design, mn_sqrt, pairs)
            if j is not None and j >= j_obs:
                exceed += 1
        used = n_perm

    p = (1.0 + exceed) / (used + 1.0)
    return TestResult(
        method="PERM",
        statistic=j_obs,
        p_value=p,
        reject=p <= alpha,
        alpha=alpha,
        extras={"n_perm": used, "exceedances": exceed},
    )


def _run_method(method: str, ds: Dataset, spec: ScenarioSpec, rng) -> TestResult:
    if method == "U":
        return u_test(ds, spec.alpha)
    if method == "F":
        return f_test(ds, spec.alpha)
    return permutation_pvalue(ds, spec.n_perm, rng, alpha=spec.alpha)


def _replicate_block(
    spec: ScenarioSpec,
    gen: DesignGen,
    fixed_design: Design | None,
    cell_index: int,
    grid_index: int,
    b_spec: NoiseSpec,
    r_start: int,
    r_stop: int,
) -> tuple[dict[str, int], dict[str, int]]:
    rejections = dict.fromkeys(spec.methods, 0)
    degenerate = dict.fromkeys(spec.methods, 0)
    for r in range(r_start, r_stop):
        rng = spec.seed.generator(cell_index, grid_index, r)
        design = fixed_design if fixed_design is not None else gen_design(gen, rng)
        b = sample_noise(b_spec, design.k, rng)
        e = sample_noise(spec.e_spec, design.n, rng)
        y = spec.mu + np.repeat(b, design.group_sizes) + e
        ds = Dataset.from_values(y, design)
        for method in spec.methods:
            try:
                result = _run_method(method, ds, spec, rng)
            except DegenerateWithinVariance:
                degenerate[method] += 1
            else:
                if result.reject:
                    rejections[method] += 1
    return rejections, degenerate


def run_scenario(spec: ScenarioSpec, workers: int = 1) -> RejectionTable:
    """Run every (design cell, grid value) of the scenario.

    ``workers`` sets the number of threads; the result is identical for any
    value because each replicate owns a derived seed and aggregation is
    plain counting.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    cells: list[RejectionCell] = []
    diagnostics: dict[tuple[str, int, str, float, str], int] = {}
    n_blocks = workers * 4 if workers > 1 else 1
    bounds = np.linspace(0, spec.replicates, n_blocks + 1).astype(int)
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for cell_index, gen in enumerate(spec.design_gens):
            fixed_design = (
                None
                if spec.redraw_design_per_replicate
                else gen_design(gen, spec.seed.generator(cell_index))
            )
            for grid_index, sigma_b2 in enumerate(spec.sigma_b2_grid):
                b_spec = spec.b_spec.with_variance(sigma_b2)
                blocks = [
                    (spec, gen, fixed_design, cell_index, grid_index, b_spec, int(r0), int(r1))
                    for r0, r1 in zip(bounds[:-1], bounds[1:])
                    if r1 > r0
                ]
                if executor is None:
                    results = [_replicate_block(*args) for args in blocks]
                else:
                    results = list(executor.map(lambda a: _replicate_block(*a), blocks))
                for method in spec.methods:
                    rejected = sum(r[0][method] for r in results)
                    degen = sum(r[1][method] for r in results)
                    rate = rejected / spec.replicates
                    cell = RejectionCell(
                        scenario=spec.name,
                        k=gen.k,
                        design=gen.label,
                        sigma_b2=sigma_b2,
                        method=method,
                        rate=rate,
                        se=mc_se(rate, spec.replicates),
                        replicates=spec.replicates,
                    )
                    cells.append(cell)
                    if degen:
                        key = (spec.name, gen.k, gen.label, sigma_b2, method)
                        diagnostics[key] = degen
    finally:
        if executor is not None:
            executor.shutdown()
    return RejectionTable(cells=tuple(cells), degenerate=diagnostics)


# --------------------------------------------------------------------------
# Canned study configurations
# --------------------------------------------------------------------------

_GRID = (0.0, 0.2, 0.5, 1.0)
_T1_K = (10, 30, 100)
_T1_M = (2, 4, 5, 10)
_T2_K = (10, 20, 30, 50, 100)


def _table1(name: str, e_spec: NoiseSpec) -> ScenarioSpec:
    return ScenarioSpec(
        name=name,
        design_gens=tuple(Balanced(k, m) for k in _T1_K for m in _T1_M),
        redraw_design_per_replicate=False,
        b_spec=NoiseSpec(NoiseFamily.SCALED_T, target_variance=1.0, df=3.0),
        e_spec=e_spec,
        mu=2.0,
        sigma_b2_grid=_GRID,
        alpha=0.05,
        replicates=10_000,
        seed=SeedSpec(0),
        methods=("U",),
    )


def _table2(name: str, gens, redraw: bool, b_spec: NoiseSpec, e_spec: NoiseSpec) -> ScenarioSpec:
    return ScenarioSpec(
        name=name,
        design_gens=tuple(gens),
        redraw_design_per_replicate=redraw,
        b_spec=b_spec,
        e_spec=e_spec,
        mu=2.0,
        sigma_b2_grid=_GRID,
        alpha=0.05,
        replicates=10_000,
        seed=SeedSpec(0),
        methods=("F", "U"),
    )


_NORMAL_UNIT = NoiseSpec(NoiseFamily.NORMAL, target_variance=1.0)
_SKEW_T_UNIT = NoiseSpec(NoiseFamily.SKEW_T_STD, target_variance=1.0, df=4.1, skew=1.0)


def _make_preset(name: str) -> ScenarioSpec:
    if name == "table1-normal":
        return _table1(name, _NORMAL_UNIT)
    if name == "table1-t5":
        return _table1(name, NoiseSpec(NoiseFamily.SCALED_T, target_variance=1.0, df=5.0))
    if name == "table2-balanced-normal":
        return _table2(
            name,
            (Balanced(k, 5) for k in _T2_K),
            False,
            NoiseSpec(NoiseFamily.NORMAL, target_variance=1.0),
            _NORMAL_UNIT,
        )
    if name == "table2-geometric":
        return _table2(
            name,
            (ShiftedGeometric(k, 0.15, 2) for k in _T2_K),
            True,
            NoiseSpec(NoiseFamily.NORMAL, target_variance=1.0),
            _NORMAL_UNIT,
        )
    if name == "table2-uniform-t":
        return _table2(
            name,
            (UniformSizes(k, 5, 10) for k in _T2_K),
            True,
            NoiseSpec(NoiseFamily.SCALED_T, target_variance=1.0, df=4.1),
            NoiseSpec(NoiseFamily.SCALED_T, target_variance=1.0, df=4.1),
        )
    if name == "table2-skew":
        return _table2(
            name,
            (Balanced(k, 5) for k in _T2_K),
            False,
            _SKEW_T_UNIT,
            _SKEW_T_UNIT,
        )
    raise ValueError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")


PRESET_NAMES = (
    "table1-normal",
    "table1-t5",
    "table2-balanced-normal",
    "table2-geometric",
    "table2-uniform-t",
    "table2-skew",
)


def preset(name: str) -> ScenarioSpec:
    """One of the canned study configurations, by name.

    Table-1 presets cross k in {10, 30, 100} with balanced group sizes in
    {2, 4, 5, 10} and run the U-test only; table-2 presets cross
    k in {10, 20, 30, 50, 100} with one design family and run both the
    F- and U-tests.  All use mean 2, unit error variance, a between-group
    variance grid of {0, 0.2, 0.5, 1}, level 0.05 and 10,000 replicates.
    """
    return _make_preset(name)


# --------------------------------------------------------------------------
# Configuration (de)serialization, used by the command-line front end
# --------------------------------------------------------------------------

_DESIGN_KINDS = {"balanced", "geometric", "uniform"}


def _design_gen_from_dict(d: Mapping) -> DesignGen:
    kind = d.get("kind")
    if kind == "balanced":
        return Balanced(k=int(d["k"]), m=int(d["m"]))
    if kind == "geometric":
        return ShiftedGeometric(k=int(d["k"]), p=float(d["p"]), shift=int(d.get("shift", 2)))
    if kind == "uniform":
        return UniformSizes(k=int(d["k"]), lo=int(d["lo"]), hi=int(d["hi"]))
    raise ValueError(f"unknown design kind {kind!r}; expected one of {sorted(_DESIGN_KINDS)}")


def _noise_spec_from_dict(d: Mapping, default_variance: float = 1.0) -> NoiseSpec:
    family = NoiseFamily(d["family"])
    return NoiseSpec(
        family=family,
        target_variance=float(d.get("variance", default_variance)),
        df=None if d.get("df") is None else float(d["df"]),
        skew=None if d.get("skew") is None else float(d["skew"]),
    )


def scenario_from_dict(d: Mapping) -> ScenarioSpec:
    """Build a scenario from a plain mapping (parsed JSON configuration)."""
    seed_cfg = d.get("seed", {})
    if isinstance(seed_cfg, int):
        seed = SeedSpec(seed_cfg)
    else:
        seed = SeedSpec(
            master_seed=int(seed_cfg.get("master_seed", 0)),
            stream_id=int(seed_cfg.get("stream_id", 0)),
        )
    return ScenarioSpec(
        name=str(d.get("name", "custom")),
        design_gens=tuple(_design_gen_from_dict(g) for g in d["designs"]),
        redraw_design_per_replicate=bool(d.get("redraw_design_per_replicate", False)),
        b_spec=_noise_spec_from_dict(d["b"]),
        e_spec=_noise_spec_from_dict(d["e"]),
        mu=float(d.get("mu", 0.0)),
        sigma_b2_grid=tuple(float(v) for v in d["sigma_b2_grid"]),
        alpha=float(d.get("alpha", 0.05)),
        replicates=int(d.get("replicates", 10_000)),
        seed=seed,
        methods=tuple(d.get("methods", ("U",))),
        n_perm=int(d.get("n_perm", 199)),
    )


def scenario_with_overrides(
    spec: ScenarioSpec,
    replicates: int | None = None,
    master_seed: int | None = None,
) -> ScenarioSpec:
    """Copy of the scenario with optional replicate-count or seed overrides."""
    if replicates is not None:
        spec = replace(spec, replicates=replicates)
    if master_seed is not None:
        spec = replace(spec, seed=SeedSpec(master_seed, spec.seed.stream_id))
    return spec
