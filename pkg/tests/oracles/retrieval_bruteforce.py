"""Definition-level retrieval metrics, written the slow obvious way."""

from __future__ import annotations


def precision_at_k_brute(ranked, relevant, k):
    hits = 0
    for item in list(ranked)[:k]:
        if item in set(relevant):
            hits += 1
    return hits / k


def recall_at_k_brute(rankings, relevant_sets, k):
    # fraction of queries with >= 1 relevant item in the top k, among
    # queries that have any relevant item at all
    vals = []
    for q, rel in relevant_sets.items():
        rel = set(rel)
        if not rel:
            continue
        found = sum(1 for item in list(rankings[q])[:k] if item in rel)
        vals.append(1.0 if found else 0.0)
    if not vals:
        raise ValueError("no query has relevant items")
    return sum(vals) / len(vals)


def average_precision_brute(ranked, relevant):
    relevant = set(relevant)
    total = 0.0
    hits = 0
    for i, item in enumerate(list(ranked), start=1):
        if item in relevant:
            hits += 1
            total += hits / i
    return total / len(relevant)


def mean_average_precision_brute(rankings, relevant_sets):
    vals = [
        average_precision_brute(rankings[q], rel)
        for q, rel in relevant_sets.items()
        if set(rel)
    ]
    if not vals:
        raise ValueError("no query has relevant items")
    return sum(vals) / len(vals)
