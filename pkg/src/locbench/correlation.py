"""Correlation machinery linking retrieval metrics to localization.

Two directions of analysis over a shared k grid (number of retrieved
images):

* per query: for each (query, feature), the Pearson coefficient
  between a retrieval-metric series and a pose-error series over k,
  with the resulting coefficient distribution summarized for violin
  plots (quantiles plus a plain 20-bin histogram).
* per dataset: the Pearson coefficient per feature across k between a
  retrieval metric and the localized percentage, and the Spearman
  coefficient per k across features.

A correlation can be *undefined*: a zero-variance series carries no
linear signal, and a series with fewer than two defined points carries
none either. Undefined is the first-class value ``UNDEFINED`` (never
coerced to 0) and undefined cases are reported, not dropped.

Failed localizations leave holes in the pose-error series; the
affected (query, k) points are removed pairwise before correlating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "UNDEFINED",
    "ViolinSummary",
    "PerQueryCorrelation",
    "PerDatasetCorrelation",
    "CorrelationReport",
    "pearson",
    "spearman",
    "average_ranks",
    "correlate_per_query",
    "correlate_per_dataset",
]

UNDEFINED = "undefined"

VIOLIN_QUANTILES = (5.0, 25.0, 50.0, 75.0, 95.0)
VIOLIN_BINS = 20


def _exact_affine_sign(a, b):
    """+1/-1 when b is exactly b = alpha*a + beta (rationally, alpha != 0),
    else None. Rational arithmetic is exact on binary64 inputs, so a
    perfectly correlated series is recognized without rounding slack."""
    fa = [Fraction(float(x)) for x in a]
    fb = [Fraction(float(y)) for y in b]
    i1 = next(i for i in range(len(fa)) if fa[i] != fa[0])
    alpha = (fb[i1] - fb[0]) / (fa[i1] - fa[0])
    if alpha == 0:
        return None
    beta = fb[0] - alpha * fa[0]
    if all(y == alpha * x + beta for x, y in zip(fa, fb)):
        return 1 if alpha > 0 else -1
    return None


def pearson(pairs):
    """Pearson correlation of (a, b) pairs, or UNDEFINED.

    UNDEFINED whenever either variable is constant (zero variance has
    no direction). Fewer than two pairs is a caller error. Exact affine
    relations return exactly +/-1.0; everything else is the standard
    formula clamped to [-1, 1] against rounding overshoot.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("pearson needs at least 2 pairs")
    a = np.asarray([p[0] for p in pairs], dtype=np.float64)
    b = np.asarray([p[1] for p in pairs], dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite values in correlation input")
    # Constancy checked on the raw values: mean subtraction of a
    # constant series leaves rounding dust that a variance test would
    # mistake for signal.
    if np.all(a == a[0]) or np.all(b == b[0]):
        return UNDEFINED
    sign = _exact_affine_sign(a, b)
    if sign is not None:
        return float(sign)
    da = a - a.mean()
    db = b - b.mean()
    va = float(da @ da)
    vb = float(db @ db)
    if va == 0.0 or vb == 0.0:
        return UNDEFINED
    r = float(da @ db) / (math.sqrt(va) * math.sqrt(vb))
    return max(-1.0, min(1.0, r))


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    xs = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(pairs):
    """Spearman correlation: Pearson applied to average ranks."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("spearman needs at least 2 pairs")
    ra = average_ranks([p[0] for p in pairs])
    rb = average_ranks([p[1] for p in pairs])
    return pearson(zip(ra, rb))


@dataclass(frozen=True)
class ViolinSummary:
    """Shape summary of a coefficient distribution: five quantiles
    (5/25/50/75/95) and a raw 20-bin histogram. ``n`` counts defined
    coefficients, ``n_undefined`` the rest."""

    quantiles: tuple
    bin_edges: tuple
    counts: tuple
    n: int
    n_undefined: int


def _summarize(values, n_undefined: int) -> ViolinSummary:
    if not values:
        return ViolinSummary((), (), (), 0, n_undefined)
    arr = np.asarray(values, dtype=np.float64)
    q = tuple(float(v) for v in np.percentile(arr, VIOLIN_QUANTILES))
    counts, edges = np.histogram(arr, bins=VIOLIN_BINS)
    return ViolinSummary(
        quantiles=q,
        bin_edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
        n=len(values),
        n_undefined=n_undefined,
    )


@dataclass(frozen=True)
class PerQueryCorrelation:
    """Per-(feature, query) coefficients with undefined cases listed,
    violin summaries per feature, and raw scatter points per feature
    per k for external plotting."""

    coefficients: dict  # feature -> {query: rho | UNDEFINED}
    undefined: dict  # feature -> sorted list of undefined queries
    violins: dict  # feature -> ViolinSummary
    scatter: dict  # feature -> {k: [(a, b), ...]}


@dataclass(frozen=True)
class PerDatasetCorrelation:
    pearson_per_feature: dict  # feature -> rho | UNDEFINED
    spearman_per_k: dict  # k -> rho | UNDEFINED


@dataclass(frozen=True)
class CorrelationReport:
    """Everything the reporting layer serializes for one analysis cell."""

    pearson_per_query: dict
    pearson_per_dataset: dict
    spearman_per_k: dict
    scatter_series: dict
    violins: dict
    undefined_queries: dict

    @staticmethod
    def assemble(per_query: PerQueryCorrelation, per_dataset: PerDatasetCorrelation):
        return CorrelationReport(
            pearson_per_query=per_query.coefficients,
            pearson_per_dataset=per_dataset.pearson_per_feature,
            spearman_per_k=per_dataset.spearman_per_k,
            scatter_series=per_query.scatter,
            violins=per_query.violins,
            undefined_queries=per_query.undefined,
        )


def _series_triples(a_by_k: dict, b_by_k: dict, k_grid) -> list:
    """Triples (k, a[k], b[k]) over the grid, skipping holes (missing/None)."""
    out = []
    for k in k_grid:
        a = a_by_k.get(k)
        b = b_by_k.get(k)
        if a is None or b is None:
            continue
        out.append((k, float(a), float(b)))
    return out


def correlate_per_query(metric_a: dict, metric_b: dict, k_grid) -> PerQueryCorrelation:
    """Per-query Pearson between two k-series, one coefficient per
    (feature, query).

    ``metric_a[feature][query][k]`` is the retrieval-metric value,
    ``metric_b[feature][query][k]`` the localization measure (pose
    error). A missing or None entry (failed localization at that k) is
    dropped pairwise. Queries ending with fewer than two pairs or a
    constant series are reported UNDEFINED.
    """
    k_grid = list(k_grid)
    coefficients = {}
    undefined = {}
    violins = {}
    scatter = {}
    for feature in sorted(metric_a):
        per_q = {}
        undef = []
        pts = {k: [] for k in k_grid}
        b_feature = metric_b.get(feature, {})
        for query in sorted(metric_a[feature]):
            triples = _series_triples(metric_a[feature][query], b_feature.get(query, {}), k_grid)
            pairs = [(a, b) for _, a, b in triples]
            for k, a, b in triples:
                pts[k].append((a, b))
            if len(pairs) < 2:
                per_q[query] = UNDEFINED
                undef.append(query)
                continue
            rho = pearson(pairs)
            per_q[query] = rho
            if rho == UNDEFINED:
                undef.append(query)
        coefficients[feature] = per_q
        undefined[feature] = undef
        defined = [v for v in per_q.values() if v != UNDEFINED]
        violins[feature] = _summarize(defined, len(undef))
        scatter[feature] = pts
    return PerQueryCorrelation(coefficients, undefined, violins, scatter)


def correlate_per_dataset(metric_a: dict, metric_b: dict, k_grid) -> PerDatasetCorrelation:
    """Dataset-level coefficients.

    ``metric_a[feature][k]`` and ``metric_b[feature][k]`` are
    dataset-level series (e.g. mAP and localized percentage). Pearson
    runs per feature across the k grid; Spearman runs per k across
    features and needs at least two features.
    """
    k_grid = list(k_grid)
    features = sorted(metric_a)
    per_feature = {}
    for feature in features:
        triples = _series_triples(metric_a[feature], metric_b.get(feature, {}), k_grid)
        pairs = [(a, b) for _, a, b in triples]
        per_feature[feature] = UNDEFINED if len(pairs) < 2 else pearson(pairs)
    spearman_per_k = {}
    for k in k_grid:
        pairs = []
        for feature in features:
            a = metric_a[feature].get(k)
            b = metric_b.get(feature, {}).get(k)
            if a is None or b is None:
                continue
            pairs.append((float(a), float(b)))
        spearman_per_k[k] = UNDEFINED if len(pairs) < 2 else spearman(pairs)
    return PerDatasetCorrelation(per_feature, spearman_per_k)
