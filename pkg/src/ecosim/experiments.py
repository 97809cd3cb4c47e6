"""Measurement toolkit shared by the experiment scenarios.

Groups the statistical pieces the scenarios lean on: request-shape
distributions with exact bin masses, the chi-square fit check with its two
fixed 5th-percentile critical constants, total-variation distance, the
species grouping with its abundance and species-area summaries, and the
semantic filter that renders numeric descriptions with a community
vocabulary.

A note on the chi-square criterion: the fit checks compare the statistic
against the LOWER 5th percentile of the chi-square distribution (7.962 at
df 16, 3.940 at df 10), not the usual upper tail. Passing therefore means
"the observed frequencies track the expected ones more tightly than fair
sampling noise would", which is the right question for a population whose
shape is being actively pulled toward the target distribution. The
standard upper-tail p-value is reported alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as scipy_stats

from ecosim.core import Description, SeededRng, UserRequest, canonicalize, description_difference

SPECIES_THRESHOLD = 0.10
# lower-tail 5% chi-square critical points for the two supports in use
CHI2_CRITICAL_LOWER = {16: 7.962, 10: 3.940}

DISTRIBUTION_KINDS = ("uniform", "gaussian", "power")


class BinMismatch(ValueError):
    pass


# ---------------------------------------------------------- distributions


@dataclass(frozen=True)
class DistributionSpec:
    """An integer distribution over the inclusive support [low, high]."""

    kind: str
    low: int
    high: int
    mean: float | None = None
    stddev: float | None = None
    exponent: float = 1.5

    def __post_init__(self) -> None:
        if self.kind not in DISTRIBUTION_KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.low > self.high:
            raise ValueError("empty support")
        if self.exponent <= 0:
            raise ValueError("exponent must be positive")
        if self.stddev is not None and self.stddev <= 0:
            raise ValueError("stddev must be positive")

    @property
    def support(self) -> range:
        return range(self.low, self.high + 1)

    def effective_mean(self) -> float:
        return (self.low + self.high) / 2.0 if self.mean is None else self.mean

    def effective_stddev(self) -> float:
        if self.stddev is not None:
            return self.stddev
        return max((self.high - self.low) / 6.0, 0.5)


def distribution_pmf(dist: DistributionSpec) -> np.ndarray:
    """Exact probability mass on each support value, summing to 1.

    The gaussian masses are integer-bin integrals of the normal density
    renormalized over the support, which is exactly what round-and-reject
    sampling produces.
    """
    values = np.arange(dist.low, dist.high + 1)
    if dist.kind == "uniform":
        w = np.ones(len(values))
    elif dist.kind == "power":
        w = (values - dist.low + 1.0) ** -dist.exponent
    else:
        mu, sigma = dist.effective_mean(), dist.effective_stddev()

        def cdf(x):
            return 0.5 * (1.0 + math.erf((x - mu) / (sigma * math.sqrt(2.0))))

        w = np.array([cdf(v + 0.5) - cdf(v - 0.5) for v in values])
        if w.sum() <= 0:
            raise ValueError("gaussian support carries no probability mass")
    return w / w.sum()


def sample_many(dist: DistributionSpec, rng: SeededRng, n: int) -> np.ndarray:
    """Draw n integers from the distribution."""
    if dist.kind == "uniform":
        return rng.integers(dist.low, dist.high + 1, size=n)
    if dist.kind == "power":
        return rng.choice(np.arange(dist.low, dist.high + 1), size=n, p=distribution_pmf(dist))
    mu, sigma = dist.effective_mean(), dist.effective_stddev()
    out = np.empty(n, dtype=np.int64)
    filled = 0
    while filled < n:
        batch = np.rint(rng.normal(mu, sigma, size=max(n - filled, 16))).astype(np.int64)
        batch = batch[(batch >= dist.low) & (batch <= dist.high)]
        take = min(len(batch), n - filled)
        out[filled : filled + take] = batch[:take]
        filled += take
    return out


def sample(dist: DistributionSpec, rng: SeededRng) -> int:
    """Draw one integer; out-of-support gaussian draws are resampled."""
    return int(sample_many(dist, rng, 1)[0])


# ------------------------------------------------------------- chi-square


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    df: int
    critical: float
    below_critical: bool
    p_value: float


def chi_squared(
    observed: Sequence[float], expected: Sequence[float], df: int | None = None
) -> ChiSquareResult:
    """Pearson statistic plus the lower-tail criterion described up top."""
    obs = np.asarray(observed, dtype=float)
    exp = np.asarray(expected, dtype=float)
    if obs.shape != exp.shape or obs.ndim != 1 or len(obs) == 0:
        raise BinMismatch("observed and expected need identical 1-d shapes")
    if np.any(exp <= 0):
        raise BinMismatch("expected frequencies must be positive")
    statistic = float(((obs - exp) ** 2 / exp).sum())
    if df is None:
        df = len(obs) - 1
    if df < 1:
        raise BinMismatch("need at least two bins")
    critical = CHI2_CRITICAL_LOWER.get(df)
    if critical is None:
        critical = float(scipy_stats.chi2.ppf(0.05, df))
    return ChiSquareResult(
        statistic=statistic,
        df=df,
        critical=critical,
        below_critical=statistic < critical,
        p_value=float(scipy_stats.chi2.sf(statistic, df)),
    )


def total_variation(p: Sequence[float], q: Sequence[float]) -> float:
    """TV distance between two frequency vectors, each normalized first."""
    a = np.asarray(p, dtype=float)
    b = np.asarray(q, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) == 0:
        raise BinMismatch("frequency vectors need identical 1-d shapes")
    if np.any(a < 0) or np.any(b < 0) or a.sum() <= 0 or b.sum() <= 0:
        raise ValueError("frequencies must be non-negative with positive sums")
    return 0.5 * float(np.abs(a / a.sum() - b / b.sum()).sum())


# ---------------------------------------------------------------- species


@dataclass
class SpeciesPartition:
    """Single-linkage grouping of organisms by description similarity.

    `members` holds the distinct descriptions of each species; `counts`
    holds organism counts (copies included). Single linkage means a chain
    a~b~c joins a and c into one species even when a and c differ by more
    than the threshold.
    """

    members: list
    counts: list
    threshold: float

    @property
    def n_species(self) -> int:
        return len(self.members)

    @property
    def total(self) -> int:
        return sum(self.counts)


def _gather_descriptions(source) -> list[Description]:
    if hasattr(source, "habitats"):
        out = []
        for _, habitat in sorted(source.habitats.items()):
            for entry in habitat.pool:
                if entry.kind == "agent":
                    out.append(entry.item.description)
        return out
    return [canonicalize(d) for d in source]


def species_partition(source, threshold: float = SPECIES_THRESHOLD) -> SpeciesPartition:
    """Group organisms into species at the given difference threshold.

    `source` is a habitat network (every pooled agent copy counts as one
    organism) or any iterable of descriptions.
    """
    descriptions = _gather_descriptions(source)
    tally: dict[Description, int] = {}
    for d in descriptions:
        tally[d] = tally.get(d, 0) + 1
    distinct = sorted(tally)
    parent = list(range(len(distinct)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(distinct)):
        for j in range(i + 1, len(distinct)):
            if description_difference(distinct[i], distinct[j]) <= threshold:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    groups: dict[int, list] = {}
    for i, d in enumerate(distinct):
        groups.setdefault(find(i), []).append(d)
    members = [groups[r] for r in sorted(groups)]
    counts = [sum(tally[d] for d in group) for group in members]
    return SpeciesPartition(members=members, counts=counts, threshold=threshold)


def relative_abundance(partition: SpeciesPartition) -> list[float]:
    """Species shares of all organisms, largest first, summing to 1."""
    if partition.total == 0:
        raise ValueError("empty partition has no abundance distribution")
    return sorted((c / partition.total for c in partition.counts), reverse=True)


def species_area(
    net,
    rng: SeededRng,
    threshold: float = SPECIES_THRESHOLD,
    resamples: int = 10,
) -> list:
    """Mean species count at n randomly chosen habitats, for every n.

    Returns [(n, mean over `resamples` draws)] for n = 1..number of
    habitats. The n = all row needs no resampling spread but is averaged
    the same way for uniformity.
    """
    ids = sorted(net.habitats)
    points = []
    for n in range(1, len(ids) + 1):
        total = 0.0
        for _ in range(resamples):
            picked = rng.choice(ids, size=n, replace=False)
            descriptions = []
            for h in picked:
                for entry in net.habitats[int(h)].pool:
                    if entry.kind == "agent":
                        descriptions.append(entry.item.description)
            if descriptions:
                total += species_partition(descriptions, threshold).n_species
        points.append((n, total / resamples))
    return points


def power_law_fit(points: Iterable) -> tuple[float, float, float]:
    """log10-log10 least squares: returns (slope, intercept, r_squared).

    Rows with a non-positive coordinate carry no information on a log plot
    and are dropped.
    """
    xs, ys = [], []
    for x, y in points:
        if x > 0 and y > 0:
            xs.append(math.log10(x))
            ys.append(math.log10(y))
    if len(xs) < 2:
        raise ValueError("need at least two positive points to fit")
    fit = scipy_stats.linregress(xs, ys)
    return float(fit.slope), float(fit.intercept), float(fit.rvalue**2)


# --------------------------------------------------------- semantic filter


@dataclass
class SemanticFilterTable:
    """Vocabulary mapping attribute ids and value ranges to labels."""

    attributes: dict = field(default_factory=dict)  # id -> label
    ranges: dict = field(default_factory=dict)  # id -> [(lo, hi, label)]
    scales: dict = field(default_factory=dict)  # id -> factor

    def attribute_label(self, attr_id: int) -> str:
        return self.attributes.get(attr_id, str(attr_id))

    def value_label(self, attr_id: int, value: int) -> str:
        for lo, hi, label in self.ranges.get(attr_id, ()):
            if lo <= value <= hi:
                return label
        if attr_id in self.scales:
            return str(int(value * self.scales[attr_id]))
        return str(value)


def load_filter_table(lines: Iterable[str]) -> SemanticFilterTable:
    """Parse the plain-text table format (see the packaged file's header)."""
    table = SemanticFilterTable()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 2)
        try:
            directive, attr_id = parts[0], int(parts[1])
            rest = parts[2]
            if directive == "attr":
                table.attributes[attr_id] = rest
            elif directive == "range":
                span, label = rest.split(None, 1)
                lo, hi = (int(x) for x in span.split("-"))
                table.ranges.setdefault(attr_id, []).append((lo, hi, label))
            elif directive == "scale":
                table.scales[attr_id] = float(rest)
            else:
                raise ValueError(f"unknown directive {directive!r}")
        except (IndexError, ValueError) as err:
            raise ValueError(f"bad filter table line {lineno}: {raw!r}") from err
    return table


def travel_table() -> SemanticFilterTable:
    """The packaged travel-community vocabulary."""
    text = resources.files("ecosim").joinpath("data/travel_filter.txt").read_text()
    return load_filter_table(text.splitlines())


def _render_description(description, table: SemanticFilterTable) -> str:
    pairs = canonicalize(description)
    rendered = ", ".join(
        f"({table.attribute_label(a)}, {table.value_label(a, v)})" for a, v in pairs
    )
    return "{" + rendered + "}"


def semantic_filter(obj, table: SemanticFilterTable) -> str:
    """Render a description or request with the vocabulary applied.

    Ids without a table entry pass through numerically, so an empty table
    reproduces the raw numeric form.
    """
    if isinstance(obj, UserRequest):
        return "[" + ", ".join(_render_description(p, table) for p in obj.parts) + "]"
    return _render_description(obj, table)
