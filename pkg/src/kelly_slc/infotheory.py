"""Entropy, divergence, posteriors, capacity and the genie's commission.

All quantities are in bits, with the convention 0 log 0 = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Channel, Prior, Scenario

CAPACITY_TOL = 1e-10
CAPACITY_MAX_ITER = 10_000


class UnreachableOutput(ValueError):
    def __init__(self, y: int):
        self.y = y
        super().__init__(f"channel output {y} has zero probability")


class SupportViolation(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


def _xlogx(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log2(p[pos])
    return out


def binary_entropy(p: float) -> float:
    return entropy([p, 1.0 - p])


def entropy(p) -> float:
    return float(-_xlogx(p).sum())


def kl_divergence(p, q) -> float:
    """D(p || q) in bits."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pos = p > 0
    if np.any(q[pos] <= 0):
        raise SupportViolation("support of p is not contained in support of q")
    return float(np.sum(p[pos] * (np.log2(p[pos]) - np.log2(q[pos]))))


@dataclass(frozen=True)
class PosteriorMatrix:
    """``m[y, w] = p(w | y)`` together with the output marginal ``p_y``."""

    m: np.ndarray
    p_y: np.ndarray


def output_marginal(prior: Prior, channel: Channel) -> np.ndarray:
    return prior.p @ channel.m


def posterior(prior: Prior, channel: Channel) -> PosteriorMatrix:
    p_y = output_marginal(prior, channel)
    zero = np.nonzero(p_y <= 0)[0]
    if zero.size:
        raise UnreachableOutput(int(zero[0]))
    m = (prior.p[:, None] * channel.m).T / p_y[:, None]
    m.setflags(write=False)
    p_y.setflags(write=False)
    return PosteriorMatrix(m, p_y)


def conditional_entropy(prior: Prior, channel: Channel) -> float:
    """H(W | Y); unreachable outputs contribute nothing."""
    joint = prior.p[:, None] * channel.m
    p_y = joint.sum(axis=0)
    return float(-_xlogx(joint).sum() + _xlogx(p_y).sum())


def mutual_information(prior: Prior, channel: Channel) -> float:
    return max(0.0, entropy(prior.p) - conditional_entropy(prior, channel))


def _input_divergences(m: np.ndarray, p_y: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(m > 0, m * (np.log2(m) - np.log2(p_y)[None, :]), 0.0)
    return terms.sum(axis=1)


def channel_capacity(channel: Channel, tol: float = CAPACITY_TOL, max_iter: int = CAPACITY_MAX_ITER):
    """Blahut-Arimoto alternating maximization.

    Returns ``(capacity, input_distribution)``.  Iteration stops once the gap
    between the lower bound I(p; channel) and the upper bound
    max_x D(p(.|x) || p_y) falls below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = channel.m
    k = channel.k
    p = np.full(k, 1.0 / k)
    for _ in range(max_iter):
        p_y = p @ m
        div = _input_divergences(m, p_y)
        lower = float(p @ div)
        upper = float(div.max())
        if upper - lower < tol:
            return lower, p
        p = p * np.exp2(div)
        p /= p.sum()
    raise NonConvergence(f"capacity gap {upper - lower:.3g} after {max_iter} iterations")


def cost_function(scenario: Scenario, on_support: bool = False) -> np.ndarray:
    """Genie's commission per winner: c1 * D(p(.|w) || p_y) + rho1, in bits.

    With ``on_support`` unreachable outputs are tolerated: winners that can
    actually occur still get a finite commission, the others may come out inf.
    """
    p_y = output_marginal(scenario.prior, scenario.channel)
    zero = np.nonzero(p_y <= 0)[0]
    if zero.size and not on_support:
        raise UnreachableOutput(int(zero[0]))
    return scenario.c1 * _input_divergences(scenario.channel.m, p_y) + scenario.rho1


def expected_cost(scenario: Scenario) -> float:
    rho = cost_function(scenario, on_support=True)
    p = scenario.prior.p
    live = p > 0
    return float(np.sum(p[live] * rho[live]))


def is_uninformative(prior: Prior, channel: Channel, tol: float = 1e-12) -> bool:
    return mutual_information(prior, channel) <= tol

