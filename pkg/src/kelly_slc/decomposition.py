"""Factor a reward matrix as R = B D and move strategies between the two races.

``D`` is a diagonal payout over hypothetical horses and ``B`` is row-stochastic.
A wager matrix ``S`` on the real race induces the effective wager ``T = S B``
on the diagonal race, with identical returns ``S R = T D``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import PROB_TOL, RewardMatrix, StrategyMatrix, ValidationError

Q_TOL = 1e-12


class SolveFailure(ArithmeticError):
    pass


class NoDecomposition(ValueError):
    """``q = R^-1 1`` has a nonpositive component, so no R = B D exists."""

    def __init__(self, q: np.ndarray):
        self.q = q
        self.near_degenerate = bool(np.any((q > 0) & (q <= Q_TOL)))
        super().__init__(f"no decomposition, q = {np.array2string(q, precision=6)}")


class InvalidActual(ValueError):
    """``T B^-1`` is not a valid wager matrix; ``raw`` keeps the offending matrix."""

    def __init__(self, raw: np.ndarray, issues):
        self.raw = raw
        self.issues = issues
        super().__init__("effective strategy has no valid actual counterpart: " + "; ".join(map(str, issues)))


@dataclass(frozen=True)
class Decomposition:
    q: np.ndarray
    D: np.ndarray
    B: np.ndarray
    B_inv: np.ndarray

    @property
    def k(self) -> int:
        return self.q.size

    @property
    def effective_reward(self) -> RewardMatrix:
        return RewardMatrix(self.D)


@dataclass(frozen=True)
class DominantWager:
    index: int

    @property
    def horse(self) -> int:
        """1-based horse label."""
        return self.index + 1


def _r(reward) -> np.ndarray:
    return reward.r if isinstance(reward, RewardMatrix) else np.asarray(reward, dtype=float)


def compute_q(reward) -> np.ndarray:
    r = _r(reward)
    ones = np.ones(r.shape[0])
    try:
        q = np.linalg.solve(r, ones)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(str(exc)) from None
    if np.max(np.abs(r @ q - ones)) > 1e-9:
        raise SolveFailure("residual of R q = 1 exceeds 1e-9")
    return q


def decompose(reward) -> Decomposition:
    """Return the unique (B, D) with R = B D, or raise :class:`NoDecomposition`."""
    r = _r(reward)
    q = compute_q(r)
    if np.any(q <= Q_TOL):
        raise NoDecomposition(q)
    B = r * q[None, :]
    B_inv = np.linalg.solve(B, np.eye(r.shape[0]))
    D = np.diag(1.0 / q)
    for a in (q, D, B, B_inv):
        a.setflags(write=False)
    return Decomposition(q=q, D=D, B=B, B_inv=B_inv)


def try_decompose(reward) -> Optional[Decomposition]:
    try:
        return decompose(reward)
    except NoDecomposition:
        return None


def find_dominant_wager(reward) -> Optional[DominantWager]:
    """Smallest row index whose payout is a column maximum in every column."""
    r = _r(reward)
    colmax = r.max(axis=0)
    for i in range(r.shape[0]):
        if np.all(r[i] >= colmax):
            return DominantWager(i)
    return None


def decomposition_exists_2x2(reward) -> bool:
    r = _r(reward)
    if r.shape != (2, 2):
        raise ValueError("2x2 reward matrix required")
    (r11, r12), (r21, r22) = r
    return (r12 < r22 and r21 < r11) or (r12 > r22 and r21 > r11)


def _s(strategy) -> np.ndarray:
    return strategy.s if isinstance(strategy, StrategyMatrix) else np.asarray(strategy, dtype=float)


def effective_strategy(strategy, decomp: Decomposition) -> StrategyMatrix:
    t = _s(strategy) @ decomp.B
    # closure of row-stochastic matrices under products; a failure here is a bug
    assert np.all(t >= -PROB_TOL) and np.allclose(t.sum(axis=1), 1.0, atol=PROB_TOL)
    return StrategyMatrix(t)


def actual_strategy(effective, decomp: Decomposition) -> StrategyMatrix:
    """Recover ``S = T B^-1``; raise :class:`InvalidActual` if it is not a wager matrix."""
    raw = _s(effective) @ decomp.B_inv
    # entries that are zero up to rounding are snapped so boundary strategies print cleanly
    raw = np.where(np.abs(raw) < 1e-13, 0.0, raw)
    try:
        return StrategyMatrix(raw)
    except ValidationError as exc:
        raise InvalidActual(raw, exc.issues) from None
