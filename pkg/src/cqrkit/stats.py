"""Mann-Whitney rank test for comparing deviation scores between groups."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import norm_sf


@dataclass(frozen=True)
class RankTestResult:
    u_statistic: float
    p_value: float
    n1: int
    n2: int
    tie_correction: float
    degenerate: bool = False


def midranks(values):
    """Ranks 1..N with tied values sharing the mean rank of their block."""
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("midranks of an empty sample")
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    # block boundaries: positions where the sorted value changes
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], values.size]
    block_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(values.size)
    ranks[order] = np.repeat(block_rank, ends - starts)
    return ranks


def _tie_term(values):
    _, counts = np.unique(values, return_counts=True)
    counts = counts.astype(float)
    return float(np.sum(counts ** 3 - counts))


def mann_whitney(a, b) -> RankTestResult:
    """Two-sided Mann-Whitney U test of ``a`` against ``b``.

    ``U`` is the statistic of the first group: the number of pairs with
    ``a_i > b_j`` plus half the tied pairs. The p-value uses the normal
    approximation with continuity and tie corrections. If all pooled values
    are equal the variance vanishes; the result is then flagged degenerate
    with ``p = 1``.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise ValueError("both groups need at least one value")
    pooled = np.concatenate([a, b])
    ranks = midranks(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)

    big_n = n1 + n2
    ties = _tie_term(pooled)
    correction = 1.0 - ties / (big_n ** 3 - big_n) if big_n > 1 else 1.0
    var = n1 * n2 / 12.0 * ((big_n + 1) - ties / (big_n * (big_n - 1))) if big_n > 1 else 0.0
    if var <= 0:
        return RankTestResult(u, 1.0, n1, n2, correction, degenerate=True)
    z = (abs(u - n1 * n2 / 2.0) - 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * norm_sf(z))
    return RankTestResult(u, p, n1, n2, correction)


def compare_groups(scores, groups, reference):
    """Test every group against ``reference``.

    Returns a list of ``(group, RankTestResult, median_group, median_reference)``
    in order of first appearance.
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    groups = np.asarray(groups, dtype=str).reshape(-1)
    labels = list(dict.fromkeys(groups.tolist()))
    if reference not in labels:
        raise ValueError(f"reference group {reference!r} not present")
    if len(labels) < 2:
        raise ValueError("comparison needs at least two groups")
    ref = scores[groups == reference]
    rows = []
    for g in labels:
        if g == reference:
            continue
        sample = scores[groups == g]
        rows.append((g, mann_whitney(sample, ref), float(np.median(sample)), float(np.median(ref))))
    return rows


def format_compare(rows, reference) -> str:
    lines = ["group,reference,n1,n2,u,p,median_group,median_reference,tie_correction,degenerate"]
    for g, res, m1, m2 in rows:
        lines.append(f"{g},{reference},{res.n1},{res.n2},{res.u_statistic!r},{res.p_value!r},"
                     f"{m1!r},{m2!r},{res.tie_correction!r},{int(res.degenerate)}")
    return "\n".join(lines) + "\n"
