"""Validated domain types: priors, channels, reward and strategy matrices, scenarios.

Every type is a frozen dataclass holding a read-only numpy array.  Construction
runs the full set of checks and raises :class:`ValidationError` listing *all*
violations found, not just the first.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

PROB_TOL = 1e-9
DET_TOL = 1e-12


@dataclass(frozen=True)
class Issue:
    code: str
    detail: str = ""
    location: tuple = ()

    def __str__(self) -> str:
        where = f" at {self.location}" if self.location else ""
        tail = f": {self.detail}" if self.detail else ""
        return f"{self.code}{where}{tail}"


class ValidationError(ValueError):
    """Raised when an object fails validation; ``issues`` lists every violation."""

    def __init__(self, issues: Sequence[Issue], what: str = "object"):
        self.issues = list(issues)
        self.what = what
        lines = "; ".join(str(i) for i in self.issues)
        super().__init__(f"invalid {what}: {lines}")

    @property
    def codes(self) -> list[str]:
        return [i.code for i in self.issues]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _as_matrix(x, what: str) -> np.ndarray:
    try:
        a = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError([Issue("NotNumeric", str(exc))], what) from None
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ValidationError([Issue("NotSquare", f"shape {a.shape}")], what)
    if not np.all(np.isfinite(a)):
        raise ValidationError([Issue("NonFinite")], what)
    return a


def _stochastic_issues(a: np.ndarray, row_label: str) -> list[Issue]:
    issues = []
    for i, j in zip(*np.nonzero(a < -PROB_TOL)):
        issues.append(Issue("NegativeEntry", f"{a[i, j]:.6g}", (int(i), int(j))))
    for i, j in zip(*np.nonzero(a > 1 + PROB_TOL)):
        issues.append(Issue("EntryAboveOne", f"{a[i, j]:.6g}", (int(i), int(j))))
    sums = a.sum(axis=1)
    for i in np.nonzero(np.abs(sums - 1) > PROB_TOL)[0]:
        issues.append(Issue("RowSumNotOne", f"{row_label} {i} sums to {sums[i]:.12g}", (int(i),)))
    return issues


@dataclass(frozen=True)
class Prior:
    """Distribution of the race winner."""

    p: np.ndarray

    def __post_init__(self):
        try:
            a = np.asarray(self.p, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValidationError([Issue("NotNumeric", str(exc))], "prior") from None
        if a.ndim != 1 or a.size == 0:
            raise ValidationError([Issue("NotAVector", f"shape {a.shape}")], "prior")
        issues = []
        if not np.all(np.isfinite(a)):
            raise ValidationError([Issue("NonFinite")], "prior")
        for i in np.nonzero(a < -PROB_TOL)[0]:
            issues.append(Issue("NegativeEntry", f"{a[i]:.6g}", (int(i),)))
        if abs(a.sum() - 1) > PROB_TOL:
            issues.append(Issue("SumNotOne", f"sums to {a.sum():.12g}"))
        if issues:
            raise ValidationError(issues, "prior")
        object.__setattr__(self, "p", _frozen(np.clip(a, 0.0, None)))

    @property
    def k(self) -> int:
        return self.p.size

    @classmethod
    def uniform(cls, k: int) -> "Prior":
        return cls(np.full(k, 1.0 / k))


@dataclass(frozen=True)
class Channel:
    """Genie-to-gambler channel; ``m[x, y] = p(y | x)``."""

    m: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.m, "channel")
        issues = _stochastic_issues(a, "row")
        if issues:
            raise ValidationError(issues, "channel")
        object.__setattr__(self, "m", _frozen(np.clip(a, 0.0, 1.0)))

    @property
    def k(self) -> int:
        return self.m.shape[0]

    @classmethod
    def bsc(cls, q: float) -> "Channel":
        if not 0.0 <= q <= 1.0:
            raise ValidationError([Issue("CrossoverOutOfRange", f"q={q}")], "channel")
        return cls([[1 - q, q], [q, 1 - q]])

    @classmethod
    def z(cls, q: float) -> "Channel":
        """Z channel: input 1 is error-free, input 2 flips to output 1 with probability q."""
        if not 0.0 <= q <= 1.0:
            raise ValidationError([Issue("CrossoverOutOfRange", f"q={q}")], "channel")
        return cls([[1.0, 0.0], [q, 1 - q]])

    @classmethod
    def noiseless(cls, k: int) -> "Channel":
        return cls(np.eye(k))


def reward_issues(r: np.ndarray) -> list[Issue]:
    """Return every violated validity condition of a square payout matrix."""
    issues = []
    k = r.shape[0]
    scale = np.abs(r).max(axis=1)
    scaled = r / np.where(scale > 0, scale, 1.0)[:, None]
    if np.any(scale == 0) or abs(np.linalg.det(scaled)) <= DET_TOL:
        issues.append(Issue("NotInvertible"))
    diag = np.diag(r)
    for i in np.nonzero(diag <= 0)[0]:
        issues.append(Issue("NonpositiveDiagonal", f"r[{i},{i}]={diag[i]:.6g}", (int(i),)))
    off = ~np.eye(k, dtype=bool)
    for i, j in zip(*np.nonzero((r < 0) & off)):
        issues.append(Issue("NegativeOffDiagonal", f"{r[i, j]:.6g}", (int(i), int(j))))
    for i in range(k):
        bad = np.nonzero((r[i] > diag[i]) & off[i])[0]
        for j in bad:
            issues.append(
                Issue("DiagonalNotRowMax", f"r[{i},{j}]={r[i, j]:.6g} > r[{i},{i}]={diag[i]:.6g}", (int(i), int(j)))
            )
    return issues


@dataclass(frozen=True)
class RewardMatrix:
    """Payout matrix; ``r[i, w]`` multiplies the stake on horse ``i`` when ``w`` wins."""

    r: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.r, "reward matrix")
        issues = reward_issues(a)
        if issues:
            raise ValidationError(issues, "reward matrix")
        object.__setattr__(self, "r", _frozen(a))

    @property
    def k(self) -> int:
        return self.r.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.r[~np.eye(self.k, dtype=bool)] == 0))


@dataclass(frozen=True)
class StrategyMatrix:
    """Row-stochastic wager matrix; row ``y`` is played after observing ``y``."""

    s: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.s, "strategy matrix")
        issues = _stochastic_issues(a, "row")
        if issues:
            raise ValidationError(issues, "strategy matrix")
        object.__setattr__(self, "s", _frozen(np.clip(a, 0.0, 1.0)))

    @property
    def k(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class Box:
    """Per-entry wager bounds ``lo <= s(y, i) <= hi``."""

    lo: float = 0.0
    hi: float = 1.0

    def feasible(self, k: int) -> bool:
        return 0.0 <= self.lo <= self.hi <= 1.0 and self.lo * k <= 1 + PROB_TOL and self.hi * k >= 1 - PROB_TOL

    def contains(self, s: np.ndarray) -> bool:
        return bool(np.all(s >= self.lo - PROB_TOL) and np.all(s <= self.hi + PROB_TOL))

    @property
    def trivial(self) -> bool:
        return self.lo <= 0.0 and self.hi >= 1.0


@dataclass(frozen=True)
class Scenario:
    prior: Prior
    channel: Channel
    reward: RewardMatrix
    c1: float = 1.0
    rho1: float = 0.0
    box: Optional[Box] = None

    def __post_init__(self):
        issues = scenario_issues(self.prior, self.channel, self.reward, self.c1, self.rho1, self.box)
        if issues:
            raise ValidationError(issues, "scenario")

    @property
    def k(self) -> int:
        return self.prior.k

    @property
    def joint(self) -> np.ndarray:
        """``joint[w, y] = p(w) p(y | w)`` under the trivial encoder x = w."""
        return self.prior.p[:, None] * self.channel.m

    @property
    def constrained(self) -> bool:
        return self.box is not None and not self.box.trivial

    def with_reward(self, reward) -> "Scenario":
        if not isinstance(reward, RewardMatrix):
            reward = RewardMatrix(reward)
        return replace(self, reward=reward)

    def with_channel(self, channel) -> "Scenario":
        if not isinstance(channel, Channel):
            channel = Channel(channel)
        return replace(self, channel=channel)

    def with_box(self, box: Optional[Box]) -> "Scenario":
        return replace(self, box=box)


def scenario_issues(prior, channel, reward, c1, rho1, box) -> list[Issue]:
    issues = []
    ks = {"prior": prior.k, "channel": channel.k, "reward": reward.k}
    if len(set(ks.values())) > 1:
        issues.append(Issue("DimensionMismatch", ", ".join(f"{n} K={v}" for n, v in ks.items())))
    if not (np.isfinite(c1) and c1 > 0):
        issues.append(Issue("InvalidComponent", f"cost rate c1={c1} must be positive", ("cost",)))
    if not np.isfinite(rho1):
        issues.append(Issue("InvalidComponent", f"cost offset rho1={rho1} must be finite", ("cost",)))
    if box is not None:
        if not (0.0 <= box.lo <= box.hi <= 1.0):
            issues.append(Issue("InvalidComponent", f"box [{box.lo}, {box.hi}] must satisfy 0<=lo<=hi<=1", ("constraints",)))
        elif not box.feasible(prior.k):
            issues.append(
                Issue("InfeasibleConstraints", f"no row of length {prior.k} sums to 1 within [{box.lo}, {box.hi}]")
            )
    return issues


def _component(builder, value, which: str, issues: list[Issue]):
    if isinstance(value, builder):
        return value
    try:
        return builder(value)
    except ValidationError as exc:
        for i in exc.issues:
            issues.append(Issue("InvalidComponent", str(i), (which,)))
        return None


def validate_reward_matrix(r) -> RewardMatrix:
    return r if isinstance(r, RewardMatrix) else RewardMatrix(r)


def validate_strategy_matrix(s) -> StrategyMatrix:
    return s if isinstance(s, StrategyMatrix) else StrategyMatrix(s)


def validate_scenario(
    prior,
    channel,
    reward,
    c1: float = 1.0,
    rho1: float = 0.0,
    box: Optional[Box | tuple] = None,
) -> Scenario:
    """Build a :class:`Scenario` from raw fields, aggregating every failure."""
    issues: list[Issue] = []
    p = _component(Prior, prior, "prior", issues)
    ch = _component(Channel, channel, "channel", issues)
    rw = _component(RewardMatrix, reward, "reward", issues)
    if box is not None and not isinstance(box, Box):
        box = Box(*box)
    if p is not None and ch is not None and rw is not None:
        issues.extend(scenario_issues(p, ch, rw, float(c1), float(rho1), box))
    else:
        if not (np.isfinite(c1) and c1 > 0):
            issues.append(Issue("InvalidComponent", f"cost rate c1={c1} must be positive", ("cost",)))
        if box is not None and p is not None and not box.feasible(p.k):
            issues.append(Issue("InfeasibleConstraints", f"box [{box.lo}, {box.hi}] with K={p.k}"))
    if issues:
        raise ValidationError(issues, "scenario")
    return Scenario(p, ch, rw, float(c1), float(rho1), box)


def is_row_stochastic(a: np.ndarray, tol: float = PROB_TOL) -> bool:
    a = np.asarray(a, dtype=float)
    return bool(np.all(a >= -tol) and np.all(np.abs(a.sum(axis=1) - 1) <= tol))
