"""Discretized wind-availability scenarios from a Beta load-factor model.

The load factor is Beta distributed with a standard deviation that grows
linearly with the mean.  [0, 1] is cut into ``n`` segments of equal
probability and each scenario takes the conditional mean of its segment.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .numerics import inv_reg_inc_beta, reg_inc_beta

SIGMA_SLOPE = 1.0 / 5.0
SIGMA_INTERCEPT = 1.0 / 50.0


@dataclass(frozen=True)
class BetaParams:
    mu: float
    sigma: float
    alpha: float
    beta: float


@dataclass(frozen=True)
class ScenarioSet:
    values: tuple[float, ...]          # load factors, p.u. of rated wind capacity
    probabilities: tuple[float, ...]
    breakpoints: tuple[float, ...]     # n + 1 segment ends, 0 ... 1

    def __post_init__(self):
        if len(self.values) != len(self.probabilities):
            raise ValueError("values and probabilities differ in length")
        if len(self.values) == 0:
            raise ValueError("empty scenario set")
        if abs(sum(self.probabilities) - 1.0) > 1e-9:
            raise ValueError("scenario probabilities must sum to 1")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probabilities))

    @classmethod
    def single(cls, value: float) -> "ScenarioSet":
        """Deterministic one-scenario set."""
        return cls((float(value),), (1.0,), (0.0, 1.0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "z_lo", "z_hi", "value_pu", "probability"])
        for k, (v, p) in enumerate(zip(self.values, self.probabilities), start=1):
            w.writerow([k, f"{self.breakpoints[k - 1]:.17g}", f"{self.breakpoints[k]:.17g}",
                        f"{v:.17g}", f"{p:.17g}"])
        return buf.getvalue()


def sigma_of_mu(mu: float) -> float:
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mean load factor must lie in (0, 1), got {mu}")
    return SIGMA_SLOPE * mu + SIGMA_INTERCEPT


def beta_params(mu: float, sigma: float) -> BetaParams:
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mean load factor must lie in (0, 1), got {mu}")
    var = sigma * sigma
    if not 0.0 < var < mu * (1.0 - mu):
        raise ValueError(
            f"infeasible variance {var:.6g} for a Beta with mean {mu}: need 0 < sigma^2 < {mu * (1 - mu):.6g}"
        )
    alpha = mu * mu * (1.0 - mu) / var - mu
    beta = alpha * (1.0 / mu - 1.0)
    return BetaParams(mu=mu, sigma=sigma, alpha=alpha, beta=beta)


def equal_prob_breakpoints(params: BetaParams, n: int) -> tuple[float, ...]:
    if n < 1:
        raise ValueError("need at least one segment")
    inner = [inv_reg_inc_beta(k / n, params.alpha, params.beta) for k in range(1, n)]
    return (0.0, *inner, 1.0)


def segment_conditional_means(params: BetaParams, breakpoints) -> tuple[float, ...]:
    """Conditional mean of the Beta on each segment.

    Uses  int_0^z x f(x; a, b) dx = mean * I_z(a + 1, b), so no quadrature is
    needed.  Segments have equal mass 1/n by construction, so dividing by 1/n
    keeps the probability-weighted mean exact (the partial sums telescope).
    """
    a, b = params.alpha, params.beta
    n = len(breakpoints) - 1
    mean = a / (a + b)
    partial = [reg_inc_beta(z, a + 1.0, b) for z in breakpoints]
    return tuple(n * mean * (partial[k + 1] - partial[k]) for k in range(n))


def build_scenarios(mu: float, n: int = 12, sigma: float | None = None) -> ScenarioSet:
    """Equal-probability scenario set for mean load factor ``mu``.

    ``sigma`` defaults to the linear rule sigma = mu/5 + 1/50.
    """
    params = beta_params(mu, sigma_of_mu(mu) if sigma is None else sigma)
    z = equal_prob_breakpoints(params, n)
    values = segment_conditional_means(params, z)
    return ScenarioSet(values=values, probabilities=tuple([1.0 / n] * n), breakpoints=z)
