"""Best-first enumeration of the top-m combinations from sorted option lists.

Given one descending-sorted list of log-scores per position, the score of a
combination is the sum of its chosen entries.  The top combination picks the
head of every list; any other combination is reachable from a better one by
incrementing a single index, so a lazy frontier search over index vectors
finds the m best without materializing the product space.
"""

from __future__ import annotations

import heapq
from typing import Sequence


def top_m_products(
    scores: Sequence[Sequence[float]], m: int
) -> list[tuple[tuple[int, ...], float]]:
    """Return up to m (index vector, total log-score) pairs, best first.

    Each inner list must be non-empty and sorted in non-increasing order.
    Ties are broken by lexicographic order of the index vector, which makes
    the output deterministic.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    lists = [list(s) for s in scores]
    for i, s in enumerate(lists):
        if not s:
            raise ValueError(f"option list {i} is empty")
        if any(s[j] < s[j + 1] for j in range(len(s) - 1)):
            raise ValueError(f"option list {i} is not sorted in descending order")

    head = tuple(0 for _ in lists)
    head_score = sum(s[0] for s in lists)
    frontier: list[tuple[float, tuple[int, ...]]] = [(-head_score, head)]
    seen = {head}
    out: list[tuple[tuple[int, ...], float]] = []
    while frontier and len(out) < m:
        neg_score, idx = heapq.heappop(frontier)
        out.append((idx, -neg_score))
        for pos, s in enumerate(lists):
            nxt = idx[pos] + 1
            if nxt >= len(s):
                continue
            child = idx[:pos] + (nxt,) + idx[pos + 1 :]
            if child in seen:
                continue
            seen.add(child)
            child_score = -neg_score - s[idx[pos]] + s[nxt]
            heapq.heappush(frontier, (-child_score, child))
    return out
