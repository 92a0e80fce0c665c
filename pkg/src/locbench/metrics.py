"""Localization-accuracy binning and retrieval quality metrics.

Localization accuracy is reported as the percentage of queries whose
pose error falls strictly inside a (meters, degrees) threshold pair;
failed localizations count as not localized but stay in the
denominator. Retrieval quality is measured with P@k, R@k, and mAP
against a binary relevance set per query.

Denominator rules, fixed here and relied on by the reporting layer:

* P@k divides by k even when the ranking is shorter (missing entries
  count as irrelevant).
* R@k excludes queries with an empty relevant set from the denominator
  (retrieval cannot succeed for them by definition).
* mAP skips empty-relevant queries with a warning; each AP divides by
  the full relevant-set size.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

__all__ = [
    "AccuracyThresholds",
    "MetricSeries",
    "DEFAULT_THRESHOLDS",
    "localized_percentage",
    "localized_table",
    "precision_at_k",
    "recall_at_k",
    "average_precision",
    "mean_average_precision",
]

DEFAULT_THRESHOLD_PAIRS = ((0.25, 2.0), (0.5, 5.0), (5.0, 10.0))


@dataclass(frozen=True)
class AccuracyThresholds:
    """Ordered (meters, degrees) pairs, loosest last, strictly increasing."""

    pairs: tuple = DEFAULT_THRESHOLD_PAIRS

    def __post_init__(self):
        pairs = tuple((float(m), float(d)) for m, d in self.pairs)
        if not pairs:
            raise ValueError("need at least one threshold pair")
        for (m0, d0), (m1, d1) in zip(pairs, pairs[1:]):
            if not (m1 > m0 and d1 > d0):
                raise ValueError("threshold pairs must increase in both components")
        for m, d in pairs:
            if m <= 0 or d <= 0:
                raise ValueError("thresholds must be positive")
        object.__setattr__(self, "pairs", pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


DEFAULT_THRESHOLDS = AccuracyThresholds()


@dataclass(frozen=True)
class MetricSeries:
    """One metric sampled over the k grid, e.g. P@k for one feature."""

    label: str
    values: dict  # k -> float

    def on_grid(self, k_grid) -> list:
        return [self.values[k] for k in k_grid]


def localized_percentage(errors, threshold) -> float:
    """Percent of queries localized within (meters, degrees), strictly.

    ``errors`` holds one entry per query: an (c_error_m, R_error_deg)
    pair, or None for a failed localization. Failures count against
    the percentage; the comparison is strict (< not <=).
    """
    errors = list(errors)
    if not errors:
        raise ValueError("no queries")
    max_m, max_deg = float(threshold[0]), float(threshold[1])
    hits = 0
    for e in errors:
        if e is None:
            continue
        if e[0] < max_m and e[1] < max_deg:
            hits += 1
    return 100.0 * hits / len(errors)


def localized_table(errors, thresholds: AccuracyThresholds = DEFAULT_THRESHOLDS):
    """Localized percentage at each threshold pair, in order."""
    errors = list(errors)
    return [localized_percentage(errors, t) for t in thresholds]


def precision_at_k(ranking, relevant_set, k: int) -> float:
    """Fraction of the top-k retrieved ids that are relevant.

    The denominator is always k: a ranking shorter than k simply has
    no chance to fill the missing slots.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for db_id in list(ranking)[:k] if db_id in relevant_set)
    return hits / k


def recall_at_k(rankings: dict, relevant_sets: dict, k: int) -> float:
    """Fraction of eligible queries with >= 1 relevant id in the top k.

    Queries whose relevant set is empty are excluded from the
    denominator. Raises when every query is excluded.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    eligible = 0
    hits = 0
    for q, ranking in rankings.items():
        rel = relevant_sets.get(q, frozenset())
        if not rel:
            continue
        eligible += 1
        if any(db_id in rel for db_id in list(ranking)[:k]):
            hits += 1
    if eligible == 0:
        raise ValueError("every query has an empty relevant set")
    return hits / eligible


def average_precision(ranking, relevant_set) -> float:
    """AP for one query: mean of P@rank over ranks that hit, divided by
    the total number of relevant images (unreached ones count as misses)."""
    if not relevant_set:
        raise ValueError("empty relevant set")
    hits = 0
    precision_sum = 0.0
    for rank, db_id in enumerate(ranking, start=1):
        if db_id in relevant_set:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / len(relevant_set)


def mean_average_precision(rankings: dict, relevant_sets: dict) -> float:
    """Mean AP over queries; empty-relevant queries are skipped, loudly."""
    aps = []
    skipped = []
    for q, ranking in rankings.items():
        rel = relevant_sets.get(q, frozenset())
        if not rel:
            skipped.append(q)
            continue
        aps.append(average_precision(ranking, rel))
    if skipped:
        warnings.warn(
            f"mAP skipped {len(skipped)} query(ies) with no relevant images",
            stacklevel=2,
        )
    if not aps:
        raise ValueError("every query has an empty relevant set")
    return sum(aps) / len(aps)
