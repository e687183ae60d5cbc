"""Growth rates, reference strategies, the constrained optimizer and distortion.

The per-race log return of wager matrix ``S`` is read off ``H = S R``:
``H[y, w]`` is the wealth multiple when ``y`` is observed and ``w`` wins.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import PROB_TOL, Box, Scenario, StrategyMatrix
from .infotheory import cost_function, entropy, expected_cost, posterior

OBJ_TOL = 1e-10
MAX_ITER = 100_000
_LN2 = np.log(2.0)


class InfeasibleConstraints(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


def _s(strategy) -> np.ndarray:
    return strategy.s if isinstance(strategy, StrategyMatrix) else np.asarray(strategy, dtype=float)


def returns_matrix(scenario: Scenario, strategy) -> np.ndarray:
    return _s(strategy) @ scenario.reward.r


def growth_rate(scenario: Scenario, strategy) -> float:
    """Expected log2 growth per race; ``-inf`` if a possible outcome returns nothing."""
    h = returns_matrix(scenario, strategy).T  # [w, y]
    joint = scenario.joint
    live = joint > 0
    if np.any(h[live] <= 0):
        return -np.inf
    return float(np.sum(joint[live] * np.log2(h[live])))


def pi_strategy(reward) -> np.ndarray:
    """Row ``w`` is all-in on the best-paying horse when ``w`` is known to win."""
    r = reward.r
    best = np.argmax(r, axis=0)
    out = np.zeros_like(r)
    out[np.arange(r.shape[0]), best] = 1.0
    return out


def pi_growth(scenario: Scenario) -> float:
    p = scenario.prior.p
    live = p > 0
    colmax = scenario.reward.r.max(axis=0)
    return float(np.sum(p[live] * np.log2(colmax[live])))


def proportional_strategy(scenario: Scenario) -> StrategyMatrix:
    return StrategyMatrix(posterior(scenario.prior, scenario.channel).m)


# ---------------------------------------------------------------------------
# row optimizer


def project_box_simplex(v: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{x : lo <= x <= hi, sum(x) = 1}``."""
    v = np.asarray(v, dtype=float)
    k = v.size
    if k * lo >= 1 - PROB_TOL or k * hi <= 1 + PROB_TOL:
        return np.full(k, 1.0 / k)
    # sum(clip(v - tau, lo, hi)) is piecewise linear and nonincreasing in tau
    bps = np.sort(np.concatenate([v - hi, v - lo]))
    vals = np.clip(v[None, :] - bps[:, None], lo, hi).sum(axis=1)
    j = int(np.searchsorted(-vals, -1.0, side="left"))
    if j == 0:
        tau = bps[0]
    elif j >= bps.size:
        tau = bps[-1]
    else:
        a, b = bps[j - 1], bps[j]
        fa, fb = vals[j - 1], vals[j]
        tau = a if fa == fb else a + (fa - 1.0) * (b - a) / (fa - fb)
    x = np.clip(v - tau, lo, hi)
    # remove rounding drift on the free coordinates
    free = (x > lo) & (x < hi)
    if free.any():
        x[free] += (1.0 - x.sum()) / free.sum()
        x = np.clip(x, lo, hi)
    return x


class _Row:
    """Concave objective sum_w pi_w ln(s . r[:, w]) for one observation."""

    def __init__(self, pi: np.ndarray, r: np.ndarray):
        live = pi > 0
        self.pi = pi[live] / pi[live].sum()
        self.r = r[:, live]

    def value(self, s: np.ndarray) -> float:
        h = s @ self.r
        if np.any(h <= 0):
            return -np.inf
        return float(self.pi @ np.log(h))

    def grad(self, s: np.ndarray) -> np.ndarray:
        return self.r @ (self.pi / (s @ self.r))

    def hess(self, s: np.ndarray) -> np.ndarray:
        h = s @ self.r
        return -(self.r * (self.pi / h**2)[None, :]) @ self.r.T


def _newton_polish(row: _Row, s: np.ndarray, lo: float, hi: float, edge: float = 1e-13):
    """Equality-constrained Newton steps on the coordinates strictly inside the box."""
    f = row.value(s)
    for _ in range(50):
        free = np.nonzero((s > lo + edge) & (s < hi - edge))[0]
        n = free.size
        if n < 2:
            break
        g = row.grad(s)[free]
        h = row.hess(s)[np.ix_(free, free)]
        kkt = np.zeros((n + 1, n + 1))
        kkt[:n, :n] = h
        kkt[:n, n] = 1.0
        kkt[n, :n] = 1.0
        rhs = np.concatenate([-g, [0.0]])
        try:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        d = sol[:n]
        if np.max(np.abs(d)) < 1e-16:
            break
        # largest feasible step along d
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(d > 0, (hi - s[free]) / d, np.inf)
            dn = np.where(d < 0, (lo - s[free]) / d, np.inf)
        alpha = min(1.0, float(np.min(up)), float(np.min(dn)))
        improved = False
        while alpha > 1e-12:
            cand = s.copy()
            cand[free] = np.clip(s[free] + alpha * d, lo, hi)
            cand[free] += (1.0 - cand.sum()) / n
            fc = row.value(cand)
            # near the optimum the objective is flat to rounding; trust the local model there
            if fc >= f or (np.max(np.abs(cand - s)) < 1e-7 and fc >= f - 1e-14 * max(1.0, abs(f))):
                improved = np.max(np.abs(cand - s)) > 0
                s, f = cand, max(f, fc)
                break
            alpha *= 0.5
        if not improved:
            break
    return s, f


def _kkt_gap(row: _Row, s: np.ndarray, lo: float, hi: float) -> float:
    """Distance moved by a unit projected-gradient step; zero at the optimum."""
    g = row.grad(s)
    return float(np.max(np.abs(project_box_simplex(s + g / max(np.abs(g).max(), 1e-300), lo, hi) - s)))


def _maximize_row(pi, r, lo, hi, tol=OBJ_TOL, max_iter=MAX_ITER):
    k = r.shape[0]
    row = _Row(pi, r)
    s = project_box_simplex(np.full(k, 1.0 / k), lo, hi)
    f = row.value(s)
    step = 1.0
    it = 0
    last = None
    tol_nats = tol * _LN2
    while it < max_iter:
        # projected gradient ascent, Barzilai-Borwein steps with Armijo backtracking
        stalled = 0
        while it < max_iter:
            it += 1
            g = row.grad(s)
            t = step
            while True:
                cand = project_box_simplex(s + t * g, lo, hi)
                fc = row.value(cand)
                if fc >= f + 1e-4 * float(g @ (cand - s)):
                    break
                t *= 0.5
                if t < 1e-30:
                    cand, fc = s, f
                    break
            ds = cand - s
            gy = row.grad(cand) - g
            sy = float(ds @ gy)
            step = float(np.clip(-(ds @ ds) / sy, 1e-10, 1e10)) if sy < 0 else min(t * 4.0, 1e10)
            gain = fc - f
            s, f = cand, fc
            stalled = stalled + 1 if gain < tol_nats * 1e-2 else 0
            if stalled >= 3 or np.max(np.abs(ds)) == 0:
                break
        prev = s
        s, f = _newton_polish(row, s, lo, hi)
        gap = _kkt_gap(row, s, lo, hi)
        # a fixed point of both phases with a gap at rounding level is the optimum
        if gap < 1e-10 or (gap < 1e-8 and np.array_equal(prev, s) and np.array_equal(s, last)):
            return s, it
        last = s
        step = 1.0
    raise NonConvergence(f"row optimizer did not converge in {max_iter} iterations")


def _box(scenario: Scenario, box: Optional[Box]):
    box = box if box is not None else scenario.box
    if box is None:
        return 0.0, 1.0
    if not box.feasible(scenario.k):
        raise InfeasibleConstraints(f"box [{box.lo}, {box.hi}] infeasible for K={scenario.k}")
    return box.lo, box.hi


class OptimizeResult(NamedTuple):
    strategy: StrategyMatrix
    growth: float


def optimize_strategy(
    scenario: Scenario, box: Optional[Box] = None, tol: float = OBJ_TOL, max_iter: int = MAX_ITER
) -> OptimizeResult:
    """Growth-optimal wager matrix under the scenario's (or the given) box.

    The objective separates over observations, so each row is a small
    concave maximization over the box-truncated simplex.
    """
    lo, hi = _box(scenario, box)
    joint = scenario.joint
    k = scenario.k
    rows = np.empty((k, k))
    for y in range(k):
        col = joint[:, y]
        if col.sum() <= 0:
            rows[y] = project_box_simplex(np.full(k, 1.0 / k), lo, hi)
            continue
        rows[y], _ = _maximize_row(col, scenario.reward.r, lo, hi, tol, max_iter)
    s = StrategyMatrix(rows)
    return OptimizeResult(s, growth_rate(scenario, s))


def nsi_row(scenario: Scenario, box: Optional[Box] = None) -> np.ndarray:
    lo, hi = _box(scenario, box)
    r = scenario.reward.r
    if scenario.reward.is_diagonal and lo <= 0 and hi >= 1:
        return scenario.prior.p.copy()
    row, _ = _maximize_row(scenario.prior.p, r, lo, hi)
    return row


def nsi_strategy(scenario: Scenario, box: Optional[Box] = None) -> StrategyMatrix:
    row = nsi_row(scenario, box)
    return StrategyMatrix(np.tile(row, (scenario.k, 1)))


def nsi_growth(scenario: Scenario, box: Optional[Box] = None) -> float:
    row = nsi_row(scenario, box)
    p = scenario.prior.p
    live = p > 0
    h = row @ scenario.reward.r
    if np.any(h[live] <= 0):
        return -np.inf
    return float(np.sum(p[live] * np.log2(h[live])))


def flat_directions(scenario: Scenario, strategy, edge: float = 1e-12) -> bool:
    """True if some row's objective is flat along a feasible direction.

    Flatness is possible only when an observation rules out some winner; the
    optimum is then not pinned down by the growth rate alone.
    """
    lo, hi = _box(scenario, None)
    s = _s(strategy)
    joint = scenario.joint
    for y in range(scenario.k):
        col = joint[:, y]
        if col.sum() <= 0:
            continue
        free = np.nonzero((s[y] > lo + edge) & (s[y] < hi - edge))[0]
        if free.size < 2:
            continue
        live = col > 0
        # directions d on the free face with sum(d) = 0 and (d R)_w = 0 for live w
        a = np.vstack([scenario.reward.r[free][:, live].T, np.ones(free.size)])
        if np.linalg.matrix_rank(a, tol=1e-10) < free.size:
            return True
    return False


# ---------------------------------------------------------------------------
# distortion


def distortion_function(scenario: Scenario, strategy, rho: Optional[np.ndarray] = None) -> np.ndarray:
    """``d[w, y]`` = log best return for ``w`` - log return of row ``y`` - rho(w)."""
    if rho is None:
        rho = cost_function(scenario)
    h = returns_matrix(scenario, strategy).T
    colmax = scenario.reward.r.max(axis=0)
    with np.errstate(divide="ignore"):
        return np.log2(colmax)[:, None] - np.log2(h) - rho[:, None]


def expected_distortion(scenario: Scenario, strategy) -> float:
    d = distortion_function(scenario, strategy)
    joint = scenario.joint
    live = joint > 0
    by_cells = float(np.sum(joint[live] * d[live]))
    by_rates = pi_growth(scenario) - growth_rate(scenario, strategy) - expected_cost(scenario)
    if np.isfinite(by_cells) or np.isfinite(by_rates):
        assert abs(by_cells - by_rates) <= 1e-9 * max(1.0, abs(by_rates)), (by_cells, by_rates)
    return by_cells


@dataclass(frozen=True)
class GrowthReport:
    lam: float
    lambda_pi: float
    lambda_nsi: float
    delta: float
    gamma: float


def growth_report(scenario: Scenario, strategy=None) -> GrowthReport:
    if strategy is None:
        strategy = optimize_strategy(scenario).strategy
    lam = growth_rate(scenario, strategy)
    lam_pi = pi_growth(scenario)
    gamma = expected_cost(scenario)
    return GrowthReport(
        lam=lam,
        lambda_pi=lam_pi,
        lambda_nsi=nsi_growth(scenario),
        delta=lam_pi - lam - gamma,
        gamma=gamma,
    )


def diagonal_nsi_growth(scenario: Scenario) -> float:
    """Closed form for diagonal payouts: perfect-information growth minus H(W)."""
    return pi_growth(scenario) - entropy(scenario.prior.p)
