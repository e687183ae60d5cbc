"""Decide whether uncoded side information is optimal for a betting scenario.

Single-letter transmission is optimal when the distortion of the optimal
wager matrix has the matched form

    d(w, y) = -c log p(w | y) + d0(w),     c > 0,

equivalently ``2^-d(w,y) = p(w|y)^c 2^-d0(w)``.  Where the posterior vanishes
the right-hand side is zero, so the wager must return nothing there.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import ClassVar, Optional

import numpy as np
from scipy.optimize import brentq

from .core import Box, Channel, Prior, RewardMatrix, Scenario, StrategyMatrix
from .decomposition import (
    Decomposition,
    DominantWager,
    InvalidActual,
    SolveFailure,
    actual_strategy,
    decomposition_exists_2x2,
    effective_strategy,
    find_dominant_wager,
    try_decompose,
)
from .infotheory import (
    NonConvergence,
    UnreachableOutput,
    channel_capacity,
    cost_function,
    mutual_information,
    posterior,
)
from .strategy import NonConvergence as StrategyNonConvergence
from .strategy import distortion_function, flat_directions, optimize_strategy

C_AGREE_TOL = 1e-7
RESIDUAL_TOL = 1e-7
LOG_RATIO_SKIP = 1e-9
C_RANGE = (1e-6, 64.0)
C_SCAN_POINTS = 4096
EQ_TOL = 1e-9


# ---------------------------------------------------------------------------
# witnesses


@dataclass(frozen=True)
class Witness:
    """Exponent ``c`` and offset ``d0`` (bits) certifying the matched distortion form."""

    c: float
    d0: np.ndarray
    strategy: StrategyMatrix
    residual: float
    degenerate: bool = False
    c_identified: bool = True


def _label(cell) -> str:
    w, y1, y2 = cell
    return f"(w={w + 1}; y={y1 + 1},{y2 + 1})"


@dataclass(frozen=True)
class NoWitness:
    """Why no exponent works.  ``candidates`` holds the extreme ``(c, (w, y, y'))`` pairs, 0-based."""

    reason: str
    candidates: tuple = ()
    residual: float = np.nan

    def __str__(self) -> str:
        if self.candidates:
            (c1, cell1), (c2, cell2) = self.candidates
            return f"{self.reason}: c={c1:.9g} from {_label(cell1)} vs c={c2:.9g} from {_label(cell2)}"
        return self.reason


def relative_returns(scenario: Scenario, strategy) -> np.ndarray:
    """``e[w, y] = 2^-(d(w,y) + rho(w))``: return of row y as a fraction of the best return for w."""
    s = strategy.s if isinstance(strategy, StrategyMatrix) else np.asarray(strategy, dtype=float)
    h = (s @ scenario.reward.r).T
    return h / scenario.reward.r.max(axis=0)[:, None]


def power_form_residual(e: np.ndarray, post_wy: np.ndarray, c: float, g: np.ndarray, cells: np.ndarray) -> float:
    """max over ``cells`` of ``|e - p^c g|`` with ``g = 2^-(d0 + rho)``."""
    with np.errstate(divide="ignore"):
        pc = np.where(post_wy > 0, post_wy**c, 0.0)
    err = np.abs(e - pc * g[:, None])
    return float(err[cells].max()) if cells.any() else 0.0


def check_distortion_criterion(scenario: Scenario, strategy, rho: Optional[np.ndarray] = None):
    """Return a :class:`Witness` if the distortion of ``strategy`` has the matched form, else :class:`NoWitness`.

    The exponent is identified per winner from pairs of observations whose
    posteriors differ; all such candidates must agree and be positive.
    """
    s = strategy if isinstance(strategy, StrategyMatrix) else StrategyMatrix(strategy)
    if rho is None:
        rho = cost_function(scenario)
    post = posterior(scenario.prior, scenario.channel).m.T  # [w, y]
    d = distortion_function(scenario, s, rho)
    e = relative_returns(scenario, s)
    live_w = scenario.prior.p > 0
    cells = live_w[:, None] & np.ones_like(post, dtype=bool)
    pos = cells & (post > 0)
    zero = cells & (post == 0)

    if mutual_information(scenario.prior, scenario.channel) <= 1e-12:
        with np.errstate(divide="ignore"):
            d0 = np.array([np.mean(d[w, pos[w]] + np.log2(post[w, pos[w]])) if pos[w].any() else 0.0 for w in range(scenario.k)])
        return Witness(1.0, d0, s, residual=0.0, degenerate=True, c_identified=False)

    if np.any(e[pos] <= 0):
        w, y = map(int, np.argwhere(pos & (e <= 0))[0])
        return NoWitness(f"strategy returns nothing on possible outcome (w={w + 1}, y={y + 1})")

    logp = np.zeros_like(post)
    logp[pos] = np.log2(post[pos])
    cands = []
    for w in np.nonzero(live_w)[0]:
        ys = np.nonzero(pos[w])[0]
        for y1, y2 in itertools.combinations(ys, 2):
            dl = logp[w, y1] - logp[w, y2]
            if abs(dl) < LOG_RATIO_SKIP:
                continue
            cands.append((-(d[w, y1] - d[w, y2]) / dl, (int(w), int(y1), int(y2))))

    if cands:
        lo = min(cands, key=lambda t: t[0])
        hi = max(cands, key=lambda t: t[0])
        c = float(np.median([t[0] for t in cands]))
        if hi[0] - lo[0] > C_AGREE_TOL * max(1.0, abs(c)):
            return NoWitness("inconsistent exponent candidates", (lo, hi))
        if c <= 0:
            return NoWitness(f"nonpositive exponent c={c:.9g}", (lo, hi))
        identified = True
    else:
        c, identified = 1.0, False

    log_e = np.zeros_like(e)
    log_e[pos] = np.log2(e[pos])
    log_g = np.array([np.mean(log_e[w, pos[w]] - c * logp[w, pos[w]]) if pos[w].any() else 0.0 for w in range(scenario.k)])
    g = np.exp2(log_g)
    resid = power_form_residual(e, post, c, g, cells)
    if resid >= RESIDUAL_TOL:
        if zero.any() and float(e[zero].max()) >= RESIDUAL_TOL:
            w, y = map(int, np.argwhere(zero & (e == e[zero].max()))[0])
            return NoWitness(
                f"strategy returns {e[w, y]:.6g} of the best payout where p(w={w + 1}|y={y + 1}) = 0", residual=resid
            )
        return NoWitness("power-form residual too large", residual=resid)
    d0 = -log_g - rho
    return Witness(c, d0, s, resid, c_identified=identified)


def hadamard_power(post_yw, c: float) -> np.ndarray:
    """``Q(c)[y, w] = p(w | y)^c`` with ``0^c = 0``."""
    p = np.asarray(post_yw, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(p > 0, p**c, 0.0)


def power_offsets(post_yw, c: float) -> np.ndarray:
    """``f = Q(c)^-1 1``; the power-form wager ``Q(c) diag(f)`` is row-stochastic, and valid iff f >= 0."""
    return np.linalg.solve(hadamard_power(post_yw, c), np.ones(np.shape(post_yw)[0]))


def power_strategy(post_yw, c: float) -> np.ndarray:
    """Effective wager on a diagonal race whose distortion has exponent ``c``."""
    return hadamard_power(post_yw, c) * power_offsets(post_yw, c)[None, :]


# ---------------------------------------------------------------------------
# two-horse exponent solve


class DegenerateGammaTheta(ValueError):
    pass


class NoSolution(ValueError):
    def __init__(self, reason: str, roots=()):
        self.reason = reason
        self.roots = tuple(roots)
        super().__init__(reason)


def _ratio(c, log_a, log_k):
    with np.errstate(invalid="ignore", over="ignore"):
        return -np.expm1(c * log_a) / -np.expm1(c * log_k)


def _safe_log(x: float) -> float:
    return -np.inf if x == 0 else float(np.log(x))


def effective_diagonal_2x2(c, gamma: float, theta: float):
    """Diagonal entries of the row-normalized Hadamard power of [[g, 1-g], [1-t, t]]."""
    log_k = _safe_log((1 - gamma) * (1 - theta)) - _safe_log(theta * gamma)
    a = _ratio(c, _safe_log(1 - gamma) - _safe_log(theta), log_k)
    b = _ratio(c, _safe_log(1 - theta) - _safe_log(gamma), log_k)
    return a, b


def _scan_roots(f, grid: np.ndarray, vals: np.ndarray) -> list:
    roots = []
    for i in range(grid.size - 1):
        u, v = vals[i], vals[i + 1]
        if u == 0:
            roots.append(float(grid[i]))
        elif u * v < 0:
            roots.append(brentq(f, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    if vals[-1] == 0:
        roots.append(float(grid[-1]))
    return roots


def solve_c_2x2(alpha_star: float, beta_star: float, gamma: float, theta: float) -> float:
    """Exponent c > 0 at which the two-horse effective wager has the matched power form.

    Roots of the alpha equation are bracketed by a sign-change scan and polished;
    the beta equation must then hold at one of them.  When alpha saturates near
    0 or 1 its root is ill-determined, so the roles are swapped as a fallback.
    """
    if abs(gamma - (1 - theta)) <= 1e-12:
        raise DegenerateGammaTheta("gamma = 1 - theta: posterior rows coincide")
    a1, b1 = effective_diagonal_2x2(1.0, gamma, theta)
    if abs(a1 - alpha_star) <= 1e-12 and abs(b1 - beta_star) <= 1e-12:
        return 1.0

    grid = np.geomspace(C_RANGE[0], C_RANGE[1], C_SCAN_POINTS)
    ga, gb = effective_diagonal_2x2(grid, gamma, theta)
    eqs = [
        (lambda c: effective_diagonal_2x2(c, gamma, theta)[0] - alpha_star, ga - alpha_star),
        (lambda c: effective_diagonal_2x2(c, gamma, theta)[1] - beta_star, gb - beta_star),
    ]
    flat = [bool(np.all(np.abs(v) <= EQ_TOL)) for _, v in eqs]
    if all(flat):
        return 1.0
    order = [1, 0] if flat[0] else [0, 1]
    tried = []
    for which in order:
        f, vals = eqs[which]
        g = eqs[1 - which][0]
        if flat[which]:
            continue
        roots = _scan_roots(f, grid, vals)
        tried.extend(roots)
        for c in roots:
            if abs(g(c)) <= EQ_TOL:
                return float(c)
    if tried:
        raise NoSolution("second equation fails at every root of the first", tried)
    mags = np.abs(eqs[order[0]][1])
    j = int(np.argmin(mags))
    if j in (0, grid.size - 1):
        raise NoSolution(f"range exhausted: |residual| still shrinking at c={grid[j]:.3g}")
    raise NoSolution("no sign change of the exponent equation on the search range")


# ---------------------------------------------------------------------------
# closed forms


class InvalidRewards(ValueError):
    pass


@dataclass(frozen=True)
class BscClosedForm:
    u_star: float
    c: Optional[float]

    @property
    def proportional(self) -> bool:
        return self.c is None


def bsc_closed_form_c(r_d: float, r_n: float, q: float) -> BscClosedForm:
    """Symmetric payouts [[r_d, r_n], [r_n, r_d]] over a BSC(q) with a uniform prior.

    ``c`` is None in the proportional regime, where c = 1 already works.
    """
    if not (r_d > r_n >= 0):
        raise InvalidRewards(f"need r_d > r_n >= 0, got r_d={r_d}, r_n={r_n}")
    if not 0 < q < 0.5:
        raise ValueError("crossover must lie in (0, 1/2)")
    u = (r_d - q * (r_d + r_n)) / (r_d - r_n)
    if u < 1 or r_n == 0:
        return BscClosedForm(min(u, 1.0), None)
    return BscClosedForm(1.0, float(np.log(r_d / r_n) / np.log((1 - q) / q)))


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True, kw_only=True)
class Verdict:
    name: ClassVar[str] = "Verdict"
    strategy: Optional[StrategyMatrix] = None
    mutual_information: float = np.nan
    capacity: Optional[float] = None
    at_capacity: Optional[bool] = None
    nonunique: bool = False
    notes: tuple = ()

    @property
    def c(self) -> Optional[float]:
        w = getattr(self, "witness", None)
        return None if w is None else w.c

    @property
    def d0(self) -> Optional[np.ndarray]:
        w = getattr(self, "witness", None)
        return None if w is None else w.d0

    @property
    def optimal_code_exists(self) -> Optional[bool]:
        return None


@dataclass(frozen=True, kw_only=True)
class ProportionalOptimal(Verdict):
    name: ClassVar[str] = "ProportionalOptimal"
    witness: Witness

    @property
    def optimal_code_exists(self):
        return True


@dataclass(frozen=True, kw_only=True)
class NonProportionalOptimal(Verdict):
    name: ClassVar[str] = "NonProportionalOptimal"
    witness: Witness
    solver_c: Optional[float] = None

    @property
    def optimal_code_exists(self):
        return True


@dataclass(frozen=True, kw_only=True)
class TrivialRateZero(Verdict):
    name: ClassVar[str] = "TrivialRateZero"
    wager: Optional[DominantWager] = None

    @property
    def optimal_code_exists(self):
        return True


@dataclass(frozen=True, kw_only=True)
class NoSingleLetterCode(Verdict):
    name: ClassVar[str] = "NoSingleLetterCode"
    diagnostic: object = None

    @property
    def optimal_code_exists(self):
        return False


@dataclass(frozen=True, kw_only=True)
class Undetermined(Verdict):
    name: ClassVar[str] = "Undetermined"
    reason: str = ""


# ---------------------------------------------------------------------------
# classifier


def _effective(scenario: Scenario, dec: Decomposition) -> Scenario:
    return scenario.with_reward(dec.effective_reward)


def _shift_to_actual(witness: Witness, scenario: Scenario, dec: Decomposition, s: StrategyMatrix) -> Witness:
    """d_{S,R} - d_{T,D} depends on w only; move d0 from the diagonal race to the real one."""
    psi = np.log2(scenario.reward.r.max(axis=0)) - np.log2(np.diag(dec.D))
    return Witness(witness.c, witness.d0 + psi, s, witness.residual, witness.degenerate, witness.c_identified)


def _fits(box: Optional[Box], s: np.ndarray) -> bool:
    return box is None or box.contains(s)


def _capacity_info(scenario: Scenario, mi: float):
    try:
        cap, _ = channel_capacity(scenario.channel)
    except NonConvergence:
        return None, None
    return cap, bool(abs(cap - mi) <= 1e-9)


def classify_scenario(scenario: Scenario) -> Verdict:
    """Classify single-letter optimality of the scenario, with a witness where one exists.

    Failures of the underlying computations come back as :class:`Undetermined`.
    """
    try:
        return _classify(scenario)
    except (UnreachableOutput, StrategyNonConvergence, SolveFailure) as exc:
        return Undetermined(reason=f"{type(exc).__name__}: {exc}")


def _classify(scenario: Scenario) -> Verdict:
    mi = mutual_information(scenario.prior, scenario.channel)
    cap, at_cap = _capacity_info(scenario, mi)
    common = dict(mutual_information=mi, capacity=cap, at_capacity=at_cap)
    box = scenario.box if scenario.constrained else None
    r = scenario.reward
    k = scenario.k

    dom = find_dominant_wager(r)
    if dom is not None and (box is None or box.hi >= 1.0):
        s = np.zeros((k, k))
        s[:, dom.index] = 1.0
        if box is None or box.contains(s):
            return TrivialRateZero(wager=dom, strategy=StrategyMatrix(s), **common)

    post = posterior(scenario.prior, scenario.channel).m
    dec = try_decompose(r)

    if dec is not None:
        try:
            s_prop = actual_strategy(post, dec)
        except InvalidActual:
            s_prop = None
        if s_prop is not None and _fits(box, s_prop.s):
            w = check_distortion_criterion(_effective(scenario, dec), StrategyMatrix(post))
            if isinstance(w, Witness):
                return ProportionalOptimal(
                    witness=_shift_to_actual(w, scenario, dec, s_prop), strategy=s_prop, **common
                )

    if mi <= 1e-12:
        s_nsi = optimize_strategy(scenario).strategy
        return TrivialRateZero(strategy=s_nsi, notes=("uninformative channel",), **common)

    if dec is None:
        s_opt = optimize_strategy(scenario).strategy
        direct = check_distortion_criterion(scenario, s_opt)
        note = f"criterion on the real race with the optimal wager: {'witness c=%.9g' % direct.c if isinstance(direct, Witness) else direct}"
        return Undetermined(
            reason="no R = B D decomposition and no dominant wager",
            strategy=s_opt,
            notes=(note,),
            nonunique=flat_directions(scenario, s_opt),
            **common,
        )

    s_opt = optimize_strategy(scenario).strategy
    t_opt = effective_strategy(s_opt, dec)
    nonunique = flat_directions(scenario, s_opt)
    w = check_distortion_criterion(_effective(scenario, dec), t_opt)
    notes = []
    solver_c = None
    if k == 2:
        gamma, theta = post[0, 0], post[1, 1]
        try:
            solver_c = solve_c_2x2(t_opt.s[0, 0], t_opt.s[1, 1], gamma, theta)
        except (NoSolution, DegenerateGammaTheta) as exc:
            notes.append(f"two-horse exponent solve: {exc}")
        found = isinstance(w, Witness)
        if found != (solver_c is not None) or (found and abs(w.c - solver_c) > 1e-6):
            return Undetermined(
                reason=f"generic criterion ({w if not found else 'c=%.9g' % w.c}) disagrees with two-horse solve ({solver_c})",
                strategy=s_opt,
                nonunique=nonunique,
                **common,
            )
    if nonunique:
        notes.append("optimal wager is not unique; verdict refers to the returned optimum")
    if isinstance(w, Witness):
        witness = _shift_to_actual(w, scenario, dec, s_opt)
        if abs(w.c - 1.0) <= C_AGREE_TOL:
            return ProportionalOptimal(witness=witness, strategy=s_opt, nonunique=nonunique, notes=tuple(notes), **common)
        return NonProportionalOptimal(
            witness=witness, strategy=s_opt, solver_c=solver_c, nonunique=nonunique, notes=tuple(notes), **common
        )
    return NoSingleLetterCode(diagnostic=w, strategy=s_opt, nonunique=nonunique, notes=tuple(notes), **common)


def z_channel_check(reward, q: float, prior=None) -> Verdict:
    """Two-horse payouts over a Z channel whose first input is error-free."""
    reward = reward if isinstance(reward, RewardMatrix) else RewardMatrix(reward)
    if reward.k != 2:
        raise ValueError("Z-channel check is for two horses")
    if not 0 < q < 1:
        raise ValueError("crossover must lie in (0, 1)")
    prior = Prior.uniform(2) if prior is None else (prior if isinstance(prior, Prior) else Prior(prior))
    scenario = Scenario(prior, Channel.z(q), reward)
    (r11, _), (r21, _) = reward.r
    dom = find_dominant_wager(reward)
    if dom is not None:
        s = np.zeros((2, 2))
        s[:, dom.index] = 1.0
        return TrivialRateZero(wager=dom, strategy=StrategyMatrix(s))
    if reward.is_diagonal:
        return classify_scenario(scenario)
    if decomposition_exists_2x2(reward) and r21 > 0:
        row = np.array([-r21 / (r11 - r21), r11 / (r11 - r21)])
        s_opt = optimize_strategy(scenario).strategy
        dec = try_decompose(reward)
        cross = check_distortion_criterion(_effective(scenario, dec), effective_strategy(s_opt, dec))
        if isinstance(cross, Witness):
            return Undetermined(reason="criterion found a witness although the Z-channel argument rules one out", strategy=s_opt)
        return NoSingleLetterCode(
            diagnostic={"invalid_actual_row": row, "criterion": cross}, strategy=s_opt
        )
    # r21 = 0 with a nonzero r12: the invalid-row argument does not apply
    v = classify_scenario(scenario)
    return _with_note(v, "Z-channel impossibility argument needs r21 > 0; generic classification used")


def _with_note(v: Verdict, note: str) -> Verdict:
    return replace(v, notes=tuple(v.notes) + (note,))
