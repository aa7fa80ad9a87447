"""Conditional value at risk of a discrete profit distribution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CvarResult:
    value: float             # expected profit over the lower (1 - theta) tail
    weights: np.ndarray      # risk-adjusted probabilities q_k
    var_level: float         # left (1 - theta)-quantile of the profits


def cvar(profits, probs, theta: float) -> CvarResult:
    """Lower-tail CVaR of ``profits`` at confidence ``theta``.

    Equals min { q'profits : 0 <= q <= probs / (1 - theta), sum q = 1 }.  The
    minimizing q is built greedily: scenarios are taken from the worst profit
    upward (equal profits in index order), each filled to its cap until the
    unit mass is used up.
    """
    pi = np.asarray(profits, dtype=float)
    p = np.asarray(probs, dtype=float)
    if pi.shape != p.shape or pi.ndim != 1 or pi.size == 0:
        raise ValueError("profits and probabilities must be 1-D of equal nonzero length")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must form a probability vector")
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")

    cap = p / (1.0 - theta)
    order = np.lexsort((np.arange(pi.size), pi))
    q = np.zeros_like(p)
    remaining = 1.0
    last = order[0]
    for k in order:
        if remaining <= 0.0:
            break
        take = min(cap[k], remaining)
        if take > 0.0:
            q[k] = take
            remaining -= take
            last = k
    # round-off in the running sum: give any leftover to the last filled scenario
    if remaining > 0.0:
        q[last] += remaining
    return CvarResult(value=float(q @ pi), weights=q, var_level=float(pi[last]))
