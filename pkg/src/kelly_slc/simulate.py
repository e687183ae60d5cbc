"""Monte Carlo races: sample winners and side information, track log wealth.

Races are split into fixed-length chunks.  Chunk ``j`` draws from its own
stream ``SeedSequence(seed, spawn_key=(j,))``, so the sampled sequence depends
only on ``(seed, chunk_size)`` and never on how many threads run the chunks.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Scenario, StrategyMatrix
from .infotheory import cost_function


class RuinEncountered(RuntimeError):
    """A race returned nothing; wealth is zero from ``race_index`` on."""

    def __init__(self, race_index: int, partial: "SimResult"):
        self.race_index = race_index
        self.partial = partial
        super().__init__(f"wealth hit zero at race {race_index}")


@dataclass(frozen=True)
class SimConfig:
    n_races: int
    seed: int = 0
    record_trajectory: bool = False
    chunk_size: int = 65_536

    def __post_init__(self):
        if int(self.n_races) < 1:
            raise ValueError("n_races must be at least 1")
        if int(self.chunk_size) < 1:
            raise ValueError("chunk_size must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SimResult:
    n_races: int
    empirical_lambda: float
    empirical_delta: float
    empirical_gamma: float
    lambda_pi_realized: float
    final_log_wealth: float
    standard_error: float
    se_delta: float = 0.0
    se_gamma: float = 0.0
    trajectory: Optional[np.ndarray] = None
    ruin_index: Optional[int] = None


def _chunks(cfg: SimConfig):
    n, size = int(cfg.n_races), int(cfg.chunk_size)
    return [(j, j * size, min(size, n - j * size)) for j in range((n + size - 1) // size)]


def _draw(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    # inverse CDF with a fixed category order; clamp guards cdf[-1] < 1 by rounding
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


def sample_races(scenario: Scenario, seed: int, chunk: int, n: int):
    """Winners and observations for one chunk of races."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(chunk),)))
    u = rng.random((2, n))
    w = _draw(np.cumsum(scenario.prior.p), u[0])
    ch_cdf = np.cumsum(scenario.channel.m, axis=1)
    y = np.empty(n, dtype=np.intp)
    for x in range(scenario.k):
        sel = w == x
        y[sel] = _draw(ch_cdf[x], u[1, sel])
    return w, y


def _log_returns(scenario: Scenario, s: np.ndarray, w, y):
    h = s @ scenario.reward.r
    with np.errstate(divide="ignore"):
        return np.log2(h[y, w])


class _Moments:
    """Count, mean and centred sum of squares; merged with the pairwise update."""

    __slots__ = ("n", "mean", "m2", "total")

    def __init__(self, x=None):
        if x is None or x.size == 0:
            self.n, self.mean, self.m2, self.total = 0, 0.0, 0.0, 0.0
        else:
            self.n = x.size
            self.total = float(x.sum())
            self.mean = self.total / self.n
            self.m2 = float(np.square(x - self.mean).sum())

    def merge(self, other: "_Moments") -> None:
        if other.n == 0:
            return
        n = self.n + other.n
        d = other.mean - self.mean
        self.m2 += other.m2 + d * d * self.n * other.n / n
        self.mean += d * other.n / n
        self.total += other.total
        self.n = n

    def se(self) -> float:
        return float(np.sqrt(self.m2 / self.n / self.n)) if self.n > 1 else 0.0


def _chunk_sums(scenario, strategies, rho, log_pi, seed, chunk, n, keep):
    w, y = sample_races(scenario, seed, chunk, n)
    rw = rho[w]
    pw = log_pi[w]
    out = []
    for s in strategies:
        lr = _log_returns(scenario, s, w, y)
        fin = np.isfinite(lr)
        ruined = not fin.all()
        out.append({
            "lr": lr if (keep or ruined) else None,
            "ruin": int(np.argmax(~fin)) if ruined else None,
            "lam": _Moments(lr[fin]),
            "delta": _Moments(pw[fin] - lr[fin] - rw[fin]),
        })
    meta = {"gamma": _Moments(rw), "pi": _Moments(pw)}
    return out, meta


def _run(scenario: Scenario, strategies: Sequence, cfg: SimConfig, workers: int):
    mats = [(st.s if isinstance(st, StrategyMatrix) else StrategyMatrix(st).s) for st in strategies]
    rho = cost_function(scenario, on_support=True)  # only drawn winners are charged
    log_pi = np.log2(scenario.reward.r.max(axis=0))
    chunks = _chunks(cfg)

    def job(c):
        j, _, n = c
        return _chunk_sums(scenario, mats, rho, log_pi, cfg.seed, j, n, cfg.record_trajectory)

    if workers <= 1:
        parts = [job(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, chunks))
    return mats, chunks, parts


def _summarize(n: int, chunks, parts, idx: int, with_traj: bool) -> SimResult:
    lam, delta, gamma, pi = _Moments(), _Moments(), _Moments(), _Moments()
    traj = [] if with_traj else None
    ruin = None
    for (j, start, m), (per, meta) in zip(chunks, parts):
        part = per[idx]
        if ruin is None and part["ruin"] is not None:
            ruin = start + part["ruin"]
        lam.merge(part["lam"])
        delta.merge(part["delta"])
        gamma.merge(meta["gamma"])
        pi.merge(meta["pi"])
        if traj is not None:
            traj.append(part["lr"])
    if traj is not None:
        traj = np.cumsum(np.concatenate(traj))
    lam_hat = lam.total / n if ruin is None else -np.inf
    g = gamma.total / n
    p = pi.total / n
    return SimResult(
        n_races=n,
        empirical_lambda=lam_hat,
        empirical_delta=p - lam_hat - g,
        empirical_gamma=g,
        lambda_pi_realized=p,
        final_log_wealth=lam.total if ruin is None else -np.inf,
        standard_error=lam.se() if ruin is None else np.nan,
        se_delta=delta.se() if ruin is None else np.nan,
        se_gamma=gamma.se(),
        trajectory=traj,
        ruin_index=ruin,
    )


def _check_ruin(res: SimResult) -> SimResult:
    if res.ruin_index is not None:
        raise RuinEncountered(res.ruin_index, res)
    return res


def run_races(scenario: Scenario, strategy, cfg: SimConfig, workers: int = 1) -> SimResult:
    """Simulate ``cfg.n_races`` races with the trivial encoder x = w.

    Raises :class:`RuinEncountered` if any race returns nothing.
    """
    _, chunks, parts = _run(scenario, [strategy], cfg, workers)
    return _check_ruin(_summarize(int(cfg.n_races), chunks, parts, 0, cfg.record_trajectory))


@dataclass(frozen=True)
class Comparison:
    results: tuple
    diff_se: np.ndarray  # diff_se[a, b]: standard error of lambda_a - lambda_b

    def difference(self, a: int, b: int) -> tuple[float, float]:
        return self.results[a].empirical_lambda - self.results[b].empirical_lambda, float(self.diff_se[a, b])


def compare_strategies(scenario: Scenario, strategies: Sequence, cfg: SimConfig, workers: int = 1) -> Comparison:
    """Run every strategy on the same sampled races (common random numbers)."""
    keep = SimConfig(cfg.n_races, cfg.seed, True, cfg.chunk_size)
    mats, chunks, parts = _run(scenario, strategies, keep, workers)
    n = int(cfg.n_races)
    results = tuple(_check_ruin(_summarize(n, chunks, parts, i, cfg.record_trajectory)) for i in range(len(mats)))
    m = len(mats)
    se = np.zeros((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            mom = _Moments()
            for per, _ in parts:
                mom.merge(_Moments(per[a]["lr"] - per[b]["lr"]))
            se[a, b] = se[b, a] = mom.se()
    return Comparison(results, se)


def write_trajectory_csv(path, trajectory: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["race_index", "log_wealth_bits"])
        for i, v in enumerate(trajectory, start=1):
            wr.writerow([i, repr(float(v))])
