"""Blockage estimation from outage history and serving-subset sizing."""
from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np


def success_prob(n: int, L: int, rho: float) -> float:
    """Probability that at least L of n links survive i.i.d. blockage ``rho``."""
    if not 1 <= L <= n:
        raise ValueError(f"need 1 <= L <= n, got n={n}, L={L}")
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    return float(sum(comb(n, l) * (1 - rho) ** (n - l) * rho ** l for l in range(n - L + 1)))


def outage_prob(n: int, L: int, rho: float) -> float:
    """Probability that fewer than L of n links survive."""
    return 1.0 - success_prob(n, L, rho)


def select_L(n: int, rho: float, eps: float) -> int:
    """Largest L whose success probability is at least ``1 - eps``.

    Falls back to ``L = 1`` when no size meets the target.
    """
    for L in range(n, 0, -1):
        if success_prob(n, L, rho) >= 1.0 - eps:
            return L
    return 1


@dataclass(frozen=True)
class BlockageEstimate:
    """Per-user blockage estimates and the averaging length behind them."""

    rho: np.ndarray
    window: np.ndarray


def estimate_blockage(history: Sequence[Sequence[bool]], tau: int, t: int,
                      prior: float = 0.0) -> BlockageEstimate:
    """Average of the last ``min(tau, t-1)`` outage flags of every user.

    Parameters
    ----------
    history : sequence of sequences of bool
        Outage flags per user, oldest first.
    tau : int
        Maximum averaging length.
    t : int
        Current slot, 1-based.
    prior : float
        Estimate returned while no history is available.
    """
    delta = max(0, min(tau, t - 1))
    rho, win = [], []
    for flags in history:
        recent = list(flags)[-delta:] if delta else []
        if recent:
            rho.append(float(np.mean(recent)))
            win.append(len(recent))
        else:
            rho.append(prior)
            win.append(0)
    return BlockageEstimate(np.array(rho), np.array(win, dtype=int))
