"""Latent quality scores from pairwise votes.

Fits the Bradley-Terry model (item i beats j with probability
p_i / (p_i + p_j)) by minorization-maximization. The MM update never
decreases the likelihood, so the per-iteration log-likelihood trace is
recorded and exposed for verification. A finite maximizer requires the
directed win graph to be strongly connected; when it is not, a small
virtual-win prior is added to every pair that was actually compared.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

# Virtual wins granted to both directions of every compared pair when the
# raw win graph is not strongly connected. Vanishes asymptotically and is
# never applied when the raw maximum-likelihood estimate is already finite.
VIRTUAL_WIN_PRIOR = 0.5

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000


@dataclass
class VoteMatrix:
    """Pairwise win counts: wins[i][j] = votes preferring items[i] over items[j]."""

    items: list[str]
    wins: np.ndarray

    def __post_init__(self):
        n = len(self.items)
        if len(set(self.items)) != n:
            raise ValueError("duplicate item ids")
        self.wins = np.asarray(self.wins, dtype=np.float64)
        if self.wins.shape != (n, n):
            raise ValueError(f"wins matrix shape {self.wins.shape} != ({n}, {n})")
        if np.any(self.wins < 0):
            raise ValueError("negative win count")
        if np.any(np.diagonal(self.wins) != 0):
            raise ValueError("nonzero diagonal: items cannot beat themselves")

    def index_of(self, item_id: str) -> int:
        return self.items.index(item_id)


@dataclass
class SubjectiveScores:
    items: list[str]
    scores: np.ndarray  # positive, normalized to sum to one
    iterations: int
    log_likelihood: float
    converged: bool
    ll_history: list[float] = field(default_factory=list)
    regularized: bool = False
    normalization: str = "sum_one"

    def score_of(self, item_id: str) -> float:
        return float(self.scores[self.items.index(item_id)])


def build_vote_matrix(items, outcomes) -> VoteMatrix:
    """Count (winner, loser) outcome rows into a vote matrix."""
    items = list(items)
    index = {item: i for i, item in enumerate(items)}
    if len(index) != len(items):
        raise ValueError("duplicate item ids")
    wins = np.zeros((len(items), len(items)), dtype=np.float64)
    for winner, loser in outcomes:
        if winner == loser:
            raise ValueError(f"self-comparison row for item {winner!r}")
        try:
            wins[index[winner], index[loser]] += 1
        except KeyError as exc:
            raise ValueError(f"unknown item id {exc.args[0]!r}") from None
    return VoteMatrix(items=items, wins=wins)


def _strongly_connected(adjacency: np.ndarray) -> bool:
    n_components, _ = connected_components(
        csr_matrix(adjacency), directed=True, connection="strong"
    )
    return n_components == 1


def _log_likelihood(p: np.ndarray, wins: np.ndarray) -> float:
    rows, cols = np.nonzero(wins)
    terms = wins[rows, cols] * (np.log(p[rows]) - np.log(p[rows] + p[cols]))
    return float(terms.sum())


def fit_bradley_terry(
    matrix: VoteMatrix, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> SubjectiveScores:
    """Maximum-likelihood item scores from a vote matrix.

    Converges when the largest relative score change across one MM sweep
    drops below tol; hitting max_iter first returns the best-so-far values
    flagged as non-converged.
    """
    n = len(matrix.items)
    if n == 0:
        raise ValueError("empty vote matrix")
    if n == 1:
        return SubjectiveScores(
            items=list(matrix.items),
            scores=np.array([1.0]),
            iterations=0,
            log_likelihood=0.0,
            converged=True,
        )

    wins = matrix.wins
    regularized = False
    if not _strongly_connected(wins > 0):
        compared = (wins + wins.T) > 0
        wins = wins + VIRTUAL_WIN_PRIOR * compared
        regularized = True
        if not _strongly_connected(wins > 0):
            raise ValueError(
                "comparison graph is disconnected; no amount of per-pair "
                "regularization yields a finite fit"
            )

    totals = wins + wins.T  # n_ij, comparisons per pair
    win_sums = wins.sum(axis=1)
    p = np.full(n, 1.0 / n)
    ll_history = []
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        pair_sums = p[:, None] + p[None, :]
        p_new = win_sums / (totals / pair_sums).sum(axis=1)
        p_new /= p_new.sum()
        ll_history.append(_log_likelihood(p_new, wins))
        rel_change = float(np.max(np.abs(p_new - p) / p))
        p = p_new
        if rel_change < tol:
            converged = True
            break

    return SubjectiveScores(
        items=list(matrix.items),
        scores=p,
        iterations=iterations,
        log_likelihood=ll_history[-1],
        converged=converged,
        ll_history=ll_history,
        regularized=regularized,
    )


def btl_predict(scores: SubjectiveScores, i: int, j: int) -> float:
    """Model probability that item i is preferred over item j."""
    p_i, p_j = scores.scores[i], scores.scores[j]
    return float(p_i / (p_i + p_j))
