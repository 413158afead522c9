"""Data queues, latency virtual queues and Poisson arrivals."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Tuple

import numpy as np


def draw_arrivals(rate: float, num_users: int, rng: np.random.Generator) -> np.ndarray:
    """Independent Poisson(rate) bit arrivals for every user."""
    return rng.poisson(rate, size=num_users).astype(float)


RATE_RTOL = 1e-9


def supported(r, c_sup, rtol: float = RATE_RTOL):
    """``r <= c_sup`` up to a relative rounding margin.

    The scheduled and supported rates come from two evaluations of the
    same SINR when no serving link is blocked; the margin keeps rounding
    noise from being read as an outage.
    """
    r = np.asarray(r, dtype=float)
    c_sup = np.asarray(c_sup, dtype=float)
    return r <= c_sup + rtol * np.maximum(1.0, np.abs(c_sup))


def update_queue(Q, r, c_sup, A, rtol: float = RATE_RTOL):
    """One-slot queue update with outage-aware service.

    A transmission only drains the queue when the scheduled rate is
    supported by the realized channel.

    Parameters
    ----------
    Q, r, c_sup, A : float or ndarray
        Backlog, scheduled rate, supported rate and new arrivals (bits).
    rtol : float
        Relative rounding margin of the support test, see :func:`supported`.

    Returns
    -------
    Q_next : float or ndarray
        ``max(0, Q - served + A)`` with ``served = r`` if ``r <= c_sup``
        else 0.
    outage : bool or ndarray
        True when a nonzero rate was scheduled but not supported.
    """
    Q, r, c_sup, A = (np.asarray(x, dtype=float) for x in (Q, r, c_sup, A))
    ok = supported(r, c_sup, rtol)
    served = np.where(ok, r, 0.0)
    Q_next = np.maximum(0.0, Q - served + A)
    outage = (r > 0) & ~ok
    if Q_next.ndim == 0:
        return float(Q_next), bool(outage)
    return Q_next, outage


def update_virtual(Z, Q_next, eps: float, q_th: float):
    """Latency virtual queue ``max(0, Z + Q_next - eps*q_th)``."""
    out = np.maximum(0.0, np.asarray(Z, dtype=float) + Q_next - eps * q_th)
    return float(out) if out.ndim == 0 else out


def slot_weight(Q, A, Z):
    """Per-user weight of the slot objective, ``Q + A + Z``."""
    return np.asarray(Q, dtype=float) + A + Z


@dataclass
class QueueState:
    """Queues of all users plus a bounded history of outage flags."""

    Q: np.ndarray
    Z: np.ndarray
    A: np.ndarray
    window: int
    history: List[Deque[bool]] = field(default_factory=list)

    @classmethod
    def empty(cls, num_users: int, window: int) -> "QueueState":
        z = np.zeros(num_users)
        return cls(z.copy(), z.copy(), z.copy(), window,
                   [deque(maxlen=window) for _ in range(num_users)])

    def weights(self) -> np.ndarray:
        return slot_weight(self.Q, self.A, self.Z)

    def advance(self, r: np.ndarray, c_sup: np.ndarray, eps: float,
                q_th: float) -> Tuple[np.ndarray, np.ndarray]:
        """Apply service and arrivals, update Z, record outages.

        Returns the served bits and outage flags of the slot.
        """
        served = np.where(supported(r, c_sup), r, 0.0)
        Q_next, outage = update_queue(self.Q, r, c_sup, self.A)
        self.Z = update_virtual(self.Z, Q_next, eps, q_th)
        self.Q = np.atleast_1d(Q_next)
        outage = np.atleast_1d(outage)
        for k, flag in enumerate(outage):
            self.history[k].append(bool(flag))
        return served, outage
