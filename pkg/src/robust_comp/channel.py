"""Sparse geometric mmWave channels and i.i.d. link blockage."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .config import Geometry, ScenarioConfig


@dataclass(frozen=True)
class ChannelState:
    """Per-slot channel of every RRU-UE pair.

    Attributes
    ----------
    h : ndarray, complex, shape (B, K, N)
        Nominal (unblocked) channel vectors.
    blocked : ndarray, bool, shape (B, K)
        Realized blockage; all False for a nominal state.
    t : int
        Slot index.
    """

    h: np.ndarray
    blocked: np.ndarray
    t: int = 0

    def effective(self) -> np.ndarray:
        """Channel with blocked pairs replaced by zero vectors."""
        return np.where(self.blocked[:, :, None], 0.0, self.h)


def ula_response(angle: float, n: int) -> np.ndarray:
    """Half-wavelength ULA response ``exp(j*pi*n*sin(angle))``, n = 0..N-1."""
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle))


def channel_from_paths(gain: np.ndarray, psi: np.ndarray, phi: np.ndarray,
                       distance: np.ndarray, n: int) -> np.ndarray:
    """Channel vectors from path parameters.

    ``gain``, ``psi`` and ``phi`` have a trailing path axis of length M and
    ``distance`` broadcasts against the leading axes. Returns the leading
    shape plus a trailing antenna axis of length ``n``.
    """
    gain, psi, phi = np.asarray(gain), np.asarray(psi), np.asarray(phi)
    M = gain.shape[-1]
    amp = gain * np.asarray(distance, dtype=float)[..., None] ** (-psi)
    steer = np.exp(-1j * np.pi * np.arange(n) * np.sin(phi)[..., None])
    return np.sqrt(n / M) * np.einsum("...m,...mn->...n", amp, steer)


def draw_channel(geom: Geometry, cfg: ScenarioConfig, t: int,
                 rng: np.random.Generator) -> ChannelState:
    """Draw the nominal channel of slot ``t``.

    Every pair gets ``M`` paths with fresh complex gain, path-loss exponent
    and departure angle:
    ``h = sqrt(N/M) * sum_m w_m * d**(-psi_m) * conj(a(phi_m))``.
    """
    B, K = geom.distances.shape
    N, M = cfg.antennas_per_rru, cfg.num_paths
    lo, hi = cfg.pathloss_exponent_range
    gain = (rng.standard_normal((B, K, M)) + 1j * rng.standard_normal((B, K, M))) / np.sqrt(2)
    psi = rng.uniform(lo, hi, size=(B, K, M))
    phi = rng.uniform(-np.pi / 2, np.pi / 2, size=(B, K, M))
    h = channel_from_paths(gain, psi, phi, geom.distances, N)
    return ChannelState(h, np.zeros((B, K), dtype=bool), t)


def apply_blockage(nominal: ChannelState, q: float,
                   rng: np.random.Generator) -> ChannelState:
    """Block each RRU-UE pair independently with probability ``q``."""
    blocked = rng.random(nominal.blocked.shape) < q
    return replace(nominal, blocked=blocked)


def write_channel_dump(path, states, append: bool = False) -> None:
    """Write ``slot,b,k,blocked,gain`` rows for debugging (gain = ||h||^2)."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh)
        if not append:
            w.writerow(["slot", "b", "k", "blocked", "gain"])
        for st in states:
            g = np.sum(np.abs(st.h) ** 2, axis=2)
            B, K = g.shape
            for b in range(B):
                for k in range(K):
                    w.writerow([st.t, b, k, int(st.blocked[b, k]), repr(float(g[b, k]))])


def channel_gain(state: ChannelState, effective: bool = False,
                 out: Optional[np.ndarray] = None) -> np.ndarray:
    """Squared norms ``||h_{b,k}||^2`` as a (B, K) array."""
    h = state.effective() if effective else state.h
    return np.sum(h.real ** 2 + h.imag ** 2, axis=2, out=out)
