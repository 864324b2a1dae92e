"""Scoring a category ranking against crowdsourced preference votes.

An answer whose voted category places i-th among its question's m choices
earns (m - i) / (m - 1) points, so first place earns 1 and last earns 0.
Rough accuracy divides total points by the answer count. Improved accuracy
divides by the best "cheating" score: the most points any single total
ordering of the vote categories could earn, which caps what a ranking can
achieve when answers conflict.

Categories missing from a ranking fall back to positions after every
ranked category, mutually ordered by category index; evaluation therefore
never fails on a filtered ranking, it just scores it pessimistically.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .data_model import CategoryIndex, VoteDataset

logger = logging.getLogger(__name__)

DEFAULT_EXACT_LIMIT = 9
# Subset DP memory grows as 2^k; past this the heuristic path is forced.
_EXACT_HARD_CAP = 18


def ranking_positions(order: Sequence[int]) -> dict[int, int]:
    return {cat: pos for pos, cat in enumerate(order)}


def _position(cat: int, positions: Mapping[int, int], n_ranked: int) -> int:
    # unranked categories sort after all ranked ones, by index
    pos = positions.get(cat)
    return pos if pos is not None else n_ranked + cat


def relative_rank(voted: int, choices: Sequence[int], positions: Mapping[int, int],
                  n_ranked: int) -> int:
    """1-based relative rank of the voted category among its co-choices."""
    mine = _position(voted, positions, n_ranked)
    better = sum(
        1 for c in choices
        if c != voted and _position(c, positions, n_ranked) < mine
    )
    return 1 + better


def score_answer(voted: int, choices: Sequence[int], positions: Mapping[int, int],
                 n_ranked: int) -> float:
    m = len(choices)
    i = relative_rank(voted, choices, positions, n_ranked)
    return (m - i) / (m - 1)


def _score_votes(votes: VoteDataset, order: Sequence[int]):
    positions = ranking_positions(order)
    n_ranked = len(order)
    total = 0.0
    max_m = max(q.m for q in votes.questions)
    rank_counts = np.zeros(max_m, dtype=np.int64)
    fallback_answers = 0
    for qi, pos in votes.answers:
        q = votes.questions[qi]
        voted = q.choices[pos]
        i = relative_rank(voted, q.choices, positions, n_ranked)
        rank_counts[i - 1] += 1
        total += (q.m - i) / (q.m - 1)
        if any(c not in positions for c in q.choices):
            fallback_answers += 1
    return total, rank_counts, fallback_answers


def rough_accuracy(votes: VoteDataset, order: Sequence[int]) -> float:
    """Mean per-answer points against the given category ordering."""
    if not votes.answers:
        raise ValueError("vote dataset has no answers")
    total, _, _ = _score_votes(votes, order)
    return total / votes.n_answers


def agreement_histogram(votes: VoteDataset, order: Sequence[int]) -> np.ndarray:
    """Fraction of answers whose voted category placed 1st, 2nd, ... among
    its question's choices."""
    if not votes.answers:
        raise ValueError("vote dataset has no answers")
    _, rank_counts, _ = _score_votes(votes, order)
    return rank_counts / votes.n_answers


# ---------------------------------------------------------------------------
# preference graph and the cheating score


@dataclass
class PreferenceGraph:
    """Pairwise vote counts between co-appearing categories.

    ``counts[a][b]`` is how many answers voted a in a question also listing
    b. ``weights`` carries the same comparisons scaled by 1/(m-1), the
    per-comparison point value, which is what the cheating score maximizes.
    ``majority`` holds one (winner, loser, margin) per unordered pair with a
    strict count majority; exact ties get no edge.
    """

    categories: list[int]
    counts: np.ndarray
    weights: np.ndarray
    majority: list[tuple[int, int, int]]

    def local(self, cat: int) -> int:
        return self.categories.index(cat)


def build_preference_graph(votes: VoteDataset) -> PreferenceGraph:
    if not votes.answers:
        raise ValueError("vote dataset has no answers")
    cats = sorted({c for q in votes.questions for c in q.choices})
    local = {c: i for i, c in enumerate(cats)}
    k = len(cats)
    counts = np.zeros((k, k), dtype=np.int64)
    weights = np.zeros((k, k), dtype=np.float64)
    for qi, pos in votes.answers:
        q = votes.questions[qi]
        a = local[q.choices[pos]]
        w = 1.0 / (q.m - 1)
        for c in q.choices:
            b = local[c]
            if b != a:
                counts[a, b] += 1
                weights[a, b] += w
    majority = []
    for a in range(k):
        for b in range(a + 1, k):
            if counts[a, b] > counts[b, a]:
                majority.append((cats[a], cats[b], int(counts[a, b] - counts[b, a])))
            elif counts[b, a] > counts[a, b]:
                majority.append((cats[b], cats[a], int(counts[b, a] - counts[a, b])))
    return PreferenceGraph(categories=cats, counts=counts, weights=weights,
                           majority=majority)


def _ordering_score(weights: np.ndarray, order: Sequence[int]) -> float:
    w = weights[np.ix_(order, order)]
    return float(np.triu(w, 1).sum())


def _exact_best_ordering(weights: np.ndarray) -> tuple[float, list[int]]:
    """Optimal ordering by dynamic programming over prefix subsets.

    Exhaustive over all orderings (the pairwise score only depends on which
    elements precede which), so the result equals a full permutation scan.
    """
    k = weights.shape[0]
    size = 1 << k
    dp = np.full(size, -np.inf)
    dp[0] = 0.0
    last = np.full(size, -1, dtype=np.int64)
    members = [[x for x in range(k) if s >> x & 1] for s in range(size)]
    for s in range(size):
        base = dp[s]
        if base == -np.inf:
            continue
        inside = members[s]
        for x in range(k):
            if s >> x & 1:
                continue
            # x goes last in the prefix: collect wins of everything in s over x
            gain = base + sum(weights[a, x] for a in inside)
            t = s | (1 << x)
            if gain > dp[t]:
                dp[t] = gain
                last[t] = x
    order_rev = []
    s = size - 1
    while s:
        x = int(last[s])
        order_rev.append(x)
        s ^= 1 << x
    order = order_rev[::-1]
    return float(dp[size - 1]), order


def _heuristic_best_ordering(weights: np.ndarray, counts: np.ndarray) -> tuple[float, list[int]]:
    """Condensed topological order of the majority digraph, margin-sorted
    inside each strongly connected component, then a reinsertion hill climb."""
    k = weights.shape[0]
    adj = (counts > counts.T).astype(np.int8)
    n_comp, labels = connected_components(csr_matrix(adj), directed=True,
                                          connection="strong")
    comp_members: list[list[int]] = [[] for _ in range(n_comp)]
    for x in range(k):
        comp_members[labels[x]].append(x)

    # Kahn's algorithm on the condensation, ties to the lowest member index.
    comp_edges: list[set[int]] = [set() for _ in range(n_comp)]
    indeg = np.zeros(n_comp, dtype=np.int64)
    for a in range(k):
        for b in np.flatnonzero(adj[a]):
            ca, cb = labels[a], labels[b]
            if ca != cb and cb not in comp_edges[ca]:
                comp_edges[ca].add(cb)
                indeg[cb] += 1
    heap = [(min(comp_members[c]), c) for c in range(n_comp) if indeg[c] == 0]
    heapq.heapify(heap)
    comp_order = []
    while heap:
        _, c = heapq.heappop(heap)
        comp_order.append(c)
        for d in comp_edges[c]:
            indeg[d] -= 1
            if indeg[d] == 0:
                heapq.heappush(heap, (min(comp_members[d]), d))

    margin = weights.sum(axis=1) - weights.sum(axis=0)
    order: list[int] = []
    for c in comp_order:
        order.extend(sorted(comp_members[c], key=lambda x: (-margin[x], x)))

    # climb from several deterministic starts and keep the best; the extra
    # starts rescue the rare cases where the condensation start is in a
    # poor basin
    starts = [
        order,
        sorted(range(k), key=lambda x: (-margin[x], x)),
        list(range(k)),
        list(range(k - 1, -1, -1)),
    ]
    best_score = -np.inf
    best_order = list(range(k))
    for start in starts:
        candidate = _climb_reinsertions(weights, start)
        score = _ordering_score(weights, candidate)
        if score > best_score + 1e-12:
            best_score = score
            best_order = candidate
    return best_score, best_order


def _climb_reinsertions(weights: np.ndarray, order: list[int]) -> list[int]:
    """Move single elements to their best position until nothing improves.

    Reinsertion moves subsume adjacent swaps (a swap is a distance-1 move)
    and escape the plateaus that swap-only climbing gets stuck on. Every
    accepted move strictly increases the total, so this terminates; ties
    keep the current position, keeping the result deterministic.
    """
    order = list(order)
    k = len(order)
    improved = True
    while improved:
        improved = False
        for i in range(k):
            x = order[i]
            rest = order[:i] + order[i + 1:]
            ra = np.asarray(rest, dtype=np.int64)
            won_before = weights[ra, x]  # a placed before x contributes W[a, x]
            won_after = weights[x, ra]   # b placed after x contributes W[x, b]
            cum_before = np.concatenate(([0.0], np.cumsum(won_before)))
            cum_after = np.concatenate(([0.0], np.cumsum(won_after)))
            contribution = cum_before + (won_after.sum() - cum_after)
            j = int(np.argmax(contribution))
            if contribution[j] > contribution[i] + 1e-12:
                rest.insert(j, x)
                order = rest
                improved = True
    return order


def best_cheating_score(votes: VoteDataset,
                        exact_limit: int = DEFAULT_EXACT_LIMIT) -> tuple[float, list[int]]:
    """Maximum points any total ordering of the vote categories can earn.

    Exact below ``exact_limit`` distinct categories, heuristic above (finding
    the true optimum is a linear ordering problem, NP-hard in general).
    """
    pref = build_preference_graph(votes)
    k = len(pref.categories)
    if k <= min(exact_limit, _EXACT_HARD_CAP):
        score, local_order = _exact_best_ordering(pref.weights)
    else:
        score, local_order = _heuristic_best_ordering(pref.weights, pref.counts)
    return score, [pref.categories[x] for x in local_order]


def improved_accuracy(votes: VoteDataset, order: Sequence[int],
                      exact_limit: int = DEFAULT_EXACT_LIMIT) -> float:
    """Total points earned by the ordering divided by the cheating score."""
    cheat, _ = best_cheating_score(votes, exact_limit)
    if cheat <= 0:
        raise ValueError("cheating score is zero; cannot normalize")
    total, _, _ = _score_votes(votes, order)
    acc = total / cheat
    if acc > 1.0 + 1e-12:
        logger.warning(
            "improved accuracy %.6f exceeds 1: heuristic cheating score is suboptimal",
            acc,
        )
    return acc


# ---------------------------------------------------------------------------
# confusability of a category pair


def co_prob(a: int, b: int, votes: VoteDataset | None = None,
            cats: CategoryIndex | None = None) -> float | None:
    """Geometric mean of P(a | b) and P(b | a).

    Conditionals come from question co-appearance (pass ``votes``) or entity
    co-membership (pass ``cats``). Returns None when either category has no
    support in the chosen universe.
    """
    if (votes is None) == (cats is None):
        raise ValueError("pass exactly one of votes= or cats=")
    if votes is not None:
        in_a = {qi for qi, q in enumerate(votes.questions) if a in q.choices}
        in_b = {qi for qi, q in enumerate(votes.questions) if b in q.choices}
    else:
        in_a = set(cats.members[a].tolist())
        in_b = set(cats.members[b].tolist())
    if not in_a or not in_b:
        return None
    both = len(in_a & in_b)
    return math.sqrt((both / len(in_b)) * (both / len(in_a)))


# ---------------------------------------------------------------------------
# full report


@dataclass
class EvaluationReport:
    total_points: float
    n_answers: int
    rough_accuracy: float
    cheating_score: float
    improved_accuracy: float
    agreement_histogram: list[float]
    unranked_fallback_count: int

    def to_dict(self) -> dict:
        return {
            "total_points": self.total_points,
            "n_answers": self.n_answers,
            "rough_accuracy": self.rough_accuracy,
            "cheating_score": self.cheating_score,
            "improved_accuracy": self.improved_accuracy,
            "agreement_histogram": self.agreement_histogram,
            "unranked_fallback_count": self.unranked_fallback_count,
        }


def evaluate(votes: VoteDataset, order: Sequence[int],
             exact_limit: int = DEFAULT_EXACT_LIMIT,
             cheating_score: float | None = None) -> EvaluationReport:
    """Score an ordered category list against a vote dataset.

    ``cheating_score`` accepts a precomputed value so callers evaluating
    many rankings against the same votes pay for it once.
    """
    if not votes.answers:
        raise ValueError("vote dataset has no answers")
    total, rank_counts, fallback = _score_votes(votes, order)
    cheat = cheating_score
    if cheat is None:
        cheat, _ = best_cheating_score(votes, exact_limit)
    if cheat <= 0:
        raise ValueError("cheating score is zero; cannot normalize")
    acc = total / cheat
    if acc > 1.0 + 1e-12:
        logger.warning(
            "improved accuracy %.6f exceeds 1: heuristic cheating score is suboptimal",
            acc,
        )
    return EvaluationReport(
        total_points=total,
        n_answers=votes.n_answers,
        rough_accuracy=total / votes.n_answers,
        cheating_score=cheat,
        improved_accuracy=acc,
        agreement_histogram=(rank_counts / votes.n_answers).tolist(),
        unranked_fallback_count=fallback,
    )
