"""Surviving-subset families and exact / pessimistic SINR evaluation.

Beamformers are stored per RRU as an array ``F`` of shape (K, B, N) with
``F[k, b]`` the part of user k's beamformer sent from RRU b; the stacked
beamformer of user k is ``F[k].reshape(B * N)``. Channels are (B, K, N).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import List, Sequence, Tuple

import numpy as np

MAX_SUBSETS = 64


@dataclass(frozen=True)
class SubsetFamily:
    """Subsets of a user's serving set that keep at least ``min_size`` RRUs.

    Attributes
    ----------
    user : int
    base : tuple of int
        Serving set, sorted.
    min_size : int
    subsets : tuple of tuple of int
        Ordered by size, then lexicographically.
    """

    user: int
    base: Tuple[int, ...]
    min_size: int
    subsets: Tuple[Tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.subsets)

    def excluded(self, c: int) -> Tuple[int, ...]:
        """RRUs of the serving set that are blocked under hypothesis ``c``."""
        keep = set(self.subsets[c])
        return tuple(b for b in self.base if b not in keep)


def subset_count(n: int, L: int) -> int:
    """Number of subsets of an n-set with at least L elements."""
    if not 1 <= L <= n:
        raise ValueError(f"need 1 <= L <= n, got n={n}, L={L}")
    return sum(comb(n, l) for l in range(L, n + 1))


def enumerate_subsets(base: Sequence[int], L: int, user: int = 0) -> SubsetFamily:
    """All subsets of ``base`` with size >= L, by size then lexicographically."""
    base = tuple(sorted(base))
    if not 1 <= L <= len(base):
        raise ValueError(f"need 1 <= L <= |base| = {len(base)}, got L={L}")
    subs = tuple(c for l in range(L, len(base) + 1) for c in itertools.combinations(base, l))
    return SubsetFamily(user, base, L, subs)


def build_families(serving_sets: Sequence[Sequence[int]],
                   min_sizes: Sequence[int]) -> List[SubsetFamily]:
    """One family per user; rejects families larger than ``MAX_SUBSETS``."""
    fams = []
    for k, (base, L) in enumerate(zip(serving_sets, min_sizes)):
        n = subset_count(len(base), int(L))
        if n > MAX_SUBSETS:
            raise ValueError(
                f"user {k}: {n} subset hypotheses exceed the cap of {MAX_SUBSETS}")
        fams.append(enumerate_subsets(base, int(L), user=k))
    return fams


def stacked_channel(h: np.ndarray, k: int, excluded: Sequence[int] = ()) -> np.ndarray:
    """Stacked channel of user k with the blocks of ``excluded`` RRUs zeroed."""
    v = h[:, k, :].copy()
    if len(excluded):
        v[list(excluded)] = 0.0
    return v.reshape(-1)


def stacked_beamformer(F: np.ndarray, k: int) -> np.ndarray:
    return F[k].reshape(-1)


def _as_array(H) -> np.ndarray:
    return H.h if hasattr(H, "h") else np.asarray(H)


def sinr_subset(F: np.ndarray, H, k: int, c: int, family: SubsetFamily,
                noise: float) -> float:
    """SINR of user k if exactly the RRUs of subset ``c`` survive.

    The signal adds the contributions of the surviving serving RRUs; the
    interference of every other user u omits the RRUs that are excluded
    for user k, i.e. it sums over ``B_u`` minus the excluded set.
    """
    h = _as_array(H)
    B = h.shape[0]
    excl = set(family.excluded(c))
    keep = np.array([b not in excl for b in range(B)])
    # per-RRU responses of user k to every beamformer: (B, K)
    resp = np.einsum("bn,ubn->bu", h[:, k, :].conj(), F)
    summed = resp[keep].sum(axis=0)
    sig = abs(summed[k]) ** 2
    inter = np.sum(np.abs(np.delete(summed, k)) ** 2)
    return float(sig / (noise + inter))


def pessimistic_sinr(F: np.ndarray, H, k: int, family: SubsetFamily,
                     noise: float) -> Tuple[float, int]:
    """Smallest subset SINR of user k and the first subset attaining it."""
    vals = [sinr_subset(F, H, k, c, family, noise) for c in range(len(family))]
    c = int(np.argmin(vals))
    return vals[c], c


def sinr_actual(F: np.ndarray, H, k: int, noise: float) -> float:
    """SINR of user k over the realized (blockage-zeroed) channel."""
    h = H.effective() if hasattr(H, "effective") else np.asarray(H)
    resp = np.einsum("bn,ubn->u", h[:, k, :].conj(), F)
    sig = abs(resp[k]) ** 2
    inter = np.sum(np.abs(np.delete(resp, k)) ** 2)
    return float(sig / (noise + inter))


def sinr_actual_all(F: np.ndarray, H, noise: float) -> np.ndarray:
    """Vector of :func:`sinr_actual` over all users."""
    h = H.effective() if hasattr(H, "effective") else np.asarray(H)
    resp = np.einsum("bkn,ubn->ku", h.conj(), F)
    p = resp.real ** 2 + resp.imag ** 2
    sig = np.diag(p).copy()
    np.fill_diagonal(p, 0.0)
    return sig / (noise + p.sum(axis=1))


@dataclass(frozen=True)
class StackedProblem:
    """Flattened constraint layout shared by the solver.

    Attributes
    ----------
    hc : ndarray, shape (n, B*N)
        Masked stacked channel of every (user, subset) pair.
    user : ndarray of int, shape (n,)
        Owning user of each row.
    sub : ndarray of int, shape (n,)
        Subset index of each row within its family.
    active : ndarray of bool, shape (K, B*N)
        Active (serving) dimensions of every user's beamformer.
    """

    hc: np.ndarray
    user: np.ndarray
    sub: np.ndarray
    active: np.ndarray

    @property
    def num_users(self) -> int:
        return self.active.shape[0]


def stack_problem(h: np.ndarray, families: Sequence[SubsetFamily]) -> StackedProblem:
    """Build masked stacked channels for every subset of every family."""
    B, K, N = h.shape
    rows, users, subs = [], [], []
    for fam in families:
        k = fam.user
        for c in range(len(fam)):
            rows.append(stacked_channel(h, k, fam.excluded(c)))
            users.append(k)
            subs.append(c)
    active = np.zeros((K, B * N), dtype=bool)
    for fam in families:
        for b in fam.base:
            active[fam.user, b * N:(b + 1) * N] = True
    hc = np.array(rows) if rows else np.zeros((0, B * N), complex)
    return StackedProblem(hc, np.array(users, dtype=int), np.array(subs, dtype=int), active)


def subset_sinrs(F: np.ndarray, prob: StackedProblem, noise: float) -> np.ndarray:
    """Stacked-form SINR of every (user, subset) row of ``prob``."""
    K = F.shape[0]
    fs = F.reshape(K, -1)
    y = prob.hc.conj() @ fs.T
    p = y.real ** 2 + y.imag ** 2
    idx = np.arange(len(prob.user))
    sig = p[idx, prob.user]
    other = prob.user[:, None] != np.arange(K)[None, :]
    return sig / (noise + (p * other).sum(axis=1))
