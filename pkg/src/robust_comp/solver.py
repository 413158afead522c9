"""Per-slot beamforming subproblem: quadratic-transform FP with KKT updates.

The slot problem is

    minimize  V * sum_k ||f_k||^2 - sum_k w_k * log2(1 + gamma_k)
    s.t.      gamma_k <= SINR_{k,c}(F)  for every surviving-subset hypothesis c.

Each subset SINR is replaced by its quadratic-transform surrogate
``2 Re{nu* h^H f} - |nu|^2 * (noise + interference)`` which is concave in
F for fixed auxiliary ``nu`` and tight at the optimal ``nu``. With ``nu``
fixed, the Lagrangian is minimized in closed form:

* beamformer of user k: ``f_k = A_k^{-1} sum_c e_{k,c} nu_{k,c} h_{k,c}`` with
  ``A_k = V I + sum_{u != k} sum_c e_{u,c} |nu_{u,c}|^2 h_{u,c} h_{u,c}^H``;
* SINR target: ``gamma_k = w_k / sum_c e_{k,c} - 1`` (floored at 0);

and the multipliers ``e`` are moved along the constraint violation
``gamma_k - surrogate_{k,c}``. :func:`solve_subproblem` alternates
auxiliary refreshes with dual steps and keeps the best iterate.

Two dual step rules are provided. ``"subgradient"`` is the plain projected
step ``e + beta*(gamma - s)`` with a constant ``beta``. ``"newton"`` takes
the same violation vector as ascent direction for the dual function but
scales it with the exact dual Hessian (Levenberg-Marquardt damped, with
projection onto ``e >= 0`` and a sufficient-increase test), which is what
makes the iteration usable when channel gains span many decades.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .subsets import StackedProblem, SubsetFamily, stack_problem, stacked_channel

LN2 = math.log(2.0)


@dataclass
class SolverOptions:
    """Iteration controls.

    Attributes
    ----------
    outer_iters : int
        Maximum number of auxiliary refreshes.
    inner_iters : int
        Dual steps per refresh.
    tolerance : float
        Relative objective change regarded as "no change".
    patience : int
        Consecutive no-change refreshes before stopping.
    step_size : float
        Constant step of the ``"subgradient"`` rule.
    step_rule : {"newton", "subgradient"}
    dual_tol : float
        Relative projected-gradient level at which the dual steps of one
        refresh stop early.
    polish : bool
        After stopping, solve the last fixed-auxiliary problem to
        ``dual_tol`` so that the reported residuals describe a KKT point.
    trace_path : str, optional
        Write ``iteration,objective,max_residual`` rows to this CSV.
    """

    outer_iters: int = 100
    inner_iters: int = 4
    tolerance: float = 1e-4
    patience: int = 5
    step_size: float = 0.01
    step_rule: str = "newton"
    dual_tol: float = 1e-8
    polish: bool = True
    trace_path: Optional[str] = None


@dataclass
class SolverState:
    """Iterate of the KKT iteration in physical units.

    ``nu`` and ``e`` are flat over all (user, subset) pairs in family
    order; ``offsets[k]:offsets[k+1]`` selects user k.
    """

    F: np.ndarray
    gamma: np.ndarray
    nu: np.ndarray
    e: np.ndarray
    offsets: np.ndarray
    i: int = 0

    def user_slice(self, k: int) -> slice:
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))


@dataclass
class SolveResult:
    """Outcome of :func:`solve_subproblem`.

    Attributes
    ----------
    F : ndarray, shape (K, B, N)
    gamma : ndarray, shape (K,)
        Pessimistic SINR of ``F`` (always feasible).
    objective : float
    residuals : ndarray, shape (sum_k C_k,)
        Complementary slackness ``e * (gamma - surrogate)`` per constraint.
    iterations : int
    converged : bool
    e, nu : ndarray
        Final multipliers and auxiliaries (physical units).
    stationarity : float
        Largest relative Lagrangian-gradient norm over users.
    """

    F: np.ndarray
    gamma: np.ndarray
    objective: float
    residuals: np.ndarray
    iterations: int
    converged: bool
    e: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nu: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    stationarity: float = 0.0


def _offsets(families: Sequence[SubsetFamily]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum([len(f) for f in families])]).astype(int)


def _user_family(families, k):
    for fam in families:
        if fam.user == k:
            return fam
    raise KeyError(k)


# ---------------------------------------------------------------- closed forms

def update_aux_nu(F: np.ndarray, h: np.ndarray, k: int, c: int,
                  family: SubsetFamily, noise: float) -> complex:
    """Optimal auxiliary ``h^H f_k / (noise + sum_{u != k} |h^H f_u|^2)``."""
    hc = stacked_channel(h, k, family.excluded(c))
    y = F.reshape(F.shape[0], -1) @ hc.conj()
    inter = np.sum(np.abs(np.delete(y, k)) ** 2)
    return complex(y[k] / (noise + inter))


def fp_surrogate(F: np.ndarray, nu: complex, h: np.ndarray, k: int, c: int,
                 family: SubsetFamily, noise: float) -> float:
    """Quadratic-transform surrogate of the subset SINR at auxiliary ``nu``."""
    hc = stacked_channel(h, k, family.excluded(c))
    y = F.reshape(F.shape[0], -1) @ hc.conj()
    inter = np.sum(np.abs(np.delete(y, k)) ** 2)
    return float(2.0 * np.real(np.conj(nu) * y[k]) - abs(nu) ** 2 * (noise + inter))


def _ridge(A: np.ndarray) -> float:
    dim = A.shape[-1]
    return 1e-10 * (1.0 + np.trace(A).real / dim)


def _hermitian_solve(A: np.ndarray, b: np.ndarray, force_ridge: bool) -> np.ndarray:
    if force_ridge:
        A = A + _ridge(A) * np.eye(A.shape[0])
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return np.linalg.solve(A + _ridge(A) * np.eye(A.shape[0]), b)


def _system(state: SolverState, h: np.ndarray, families, V: float, k: int):
    """Matrix ``A_k`` and vector ``b_k`` of the beamformer condition."""
    fam_k = _user_family(families, k)
    D = h.shape[0] * h.shape[2]
    N = h.shape[2]
    A = V * np.eye(D, dtype=complex)
    b = np.zeros(D, dtype=complex)
    for fam in families:
        sl = state.user_slice(fam.user)
        for c in range(len(fam)):
            hc = stacked_channel(h, fam.user, fam.excluded(c))
            e, nu = state.e[sl][c], state.nu[sl][c]
            if fam.user == k:
                b += e * nu * hc
            else:
                A += e * abs(nu) ** 2 * np.outer(hc, hc.conj())
    idx = np.concatenate([np.arange(b_ * N, (b_ + 1) * N) for b_ in fam_k.base])
    return A, b, idx


def kkt_beamformer_update(state: SolverState, h: np.ndarray, families, V: float,
                          k: int) -> np.ndarray:
    """Stacked beamformer of user k from the stationarity condition.

    Solves ``A_k f = b_k`` on the serving blocks of user k; the other
    blocks stay zero. A ridge is added when ``V = 0`` or the system is
    singular.
    """
    A, b, idx = _system(state, h, families, V, k)
    f = np.zeros_like(b)
    f[idx] = _hermitian_solve(A[np.ix_(idx, idx)], b[idx], V == 0)
    return f


def lagrangian_gradient(state: SolverState, h: np.ndarray, families, V: float,
                        k: int) -> float:
    """Relative norm of the Lagrangian gradient in ``f_k`` at ``state``.

    The gradient is ``A_k f_k - b_k`` on the serving blocks; it is scaled
    by ``||b_k|| + ||A_k f_k||`` (1 if both vanish).
    """
    A, b, idx = _system(state, h, families, V, k)
    f = state.F[k].reshape(-1)
    Af = (A @ f)[idx]
    g = Af - b[idx]
    scale = np.linalg.norm(b[idx]) + np.linalg.norm(Af)
    return float(np.linalg.norm(g) / scale) if scale > 0 else 0.0


def kkt_gamma_update(w: float, e_k: np.ndarray) -> float:
    """SINR target ``max(0, w / sum(e_k) - 1)``."""
    s = float(np.sum(e_k))
    if not s > 0:
        raise ValueError("multipliers of a user sum to zero; SINR target undefined")
    return max(0.0, w / s - 1.0)


def dual_update(e, gamma, surrogate, beta: float):
    """Projected step ``max(0, e + beta * (gamma - surrogate))``."""
    if not beta > 0:
        raise ValueError("step size must be positive")
    out = np.maximum(0.0, np.asarray(e, dtype=float) + beta * (np.asarray(gamma) - surrogate))
    return float(out) if out.ndim == 0 else out


def objective(F: np.ndarray, gamma, weights, V: float) -> float:
    """``V * sum ||f||^2 - sum w * log2(1 + gamma)``."""
    power = float(np.sum(np.abs(F) ** 2))
    return V * power - float(np.sum(np.asarray(weights) * np.log2(1.0 + np.asarray(gamma))))


def init_feasible(h: np.ndarray, families: Sequence[SubsetFamily], weights,
                  noise: float, rng: np.random.Generator) -> SolverState:
    """Random start with unit power per user on its serving blocks.

    The SINR target is the pessimistic SINR of the start, the auxiliaries
    are optimal for it and ``e_{k,c} = w_k / (C_k (1 + gamma_k))``.
    """
    B, K, N = h.shape
    F = np.zeros((K, B, N), dtype=complex)
    for fam in families:
        base = list(fam.base)
        z = rng.standard_normal((len(base), N)) + 1j * rng.standard_normal((len(base), N))
        F[fam.user, base] = z / np.linalg.norm(z)
    prob = stack_problem(h, families)
    y = prob.hc.conj() @ F.reshape(K, -1).T
    p = y.real ** 2 + y.imag ** 2
    rows = np.arange(len(prob.user))
    sig = p[rows, prob.user]
    other = prob.user[:, None] != np.arange(K)[None, :]
    den = noise + (p * other).sum(axis=1)
    nu = y[rows, prob.user] / den
    sinr = sig / den
    gamma = np.zeros(K)
    for fam in families:
        m = prob.user == fam.user
        gamma[fam.user] = sinr[m].min()
    w = np.asarray(weights, dtype=float)
    e = (w / (1.0 + gamma))[prob.user] / np.bincount(prob.user, minlength=K)[prob.user]
    return SolverState(F, gamma, nu, e, _offsets(families))


# ----------------------------------------------------------------- the engine

class _DualEngine:
    """Vectorized evaluation of the fixed-auxiliary Lagrangian dual.

    Works in the noise-normalized frame (channels divided by sigma), where
    the multipliers and surrogates are unchanged and auxiliaries scale by
    sigma.

    Every masked channel row is ``basis @ select[:, i]`` for a 0/1
    ``select``. With the per-RRU blocks of every user as basis the linear
    solves need K*B right-hand sides instead of one per constraint.
    """

    def __init__(self, prob: StackedProblem, V: float, wn: np.ndarray,
                 basis: Optional[np.ndarray] = None, select: Optional[np.ndarray] = None):
        self.hc = prob.hc
        self.user = prob.user
        self.K = prob.num_users
        self.n = len(prob.user)
        self.D = prob.hc.shape[1]
        if basis is None:
            basis, select = prob.hc.T, np.eye(self.n)
        self.S = np.ascontiguousarray(select)
        self.m = self.S.shape[0]
        self.rows = np.arange(self.n)
        self.own = prob.user[None, :] == np.arange(self.K)[:, None]
        act = prob.active
        self.keep = act[:, :, None] & act[:, None, :]
        self.fill = np.zeros((self.K, self.D, self.D))
        di = np.arange(self.D)
        self.fill[:, di, di] = ~act
        self.rhs = act[:, :, None] * basis[None]  # (K, D, m)
        self.rhsH = np.conj(np.transpose(self.rhs, (0, 2, 1)))
        self.basis = np.ascontiguousarray(basis)
        self.basisH = np.ascontiguousarray(basis.conj().T)
        self.V = V
        self.wn = wn
        self.eye = np.eye(self.D)
        self.Veye = V * self.eye
        self.same_user = prob.user[:, None] == prob.user[None, :]
        self.other = ~self.own
        self.hcH = np.ascontiguousarray(prob.hc.conj())
        self.evals = 0

    def matrices(self, e, nu):
        c = e * (nu.real ** 2 + nu.imag ** 2)
        # weights of the other users' constraints in the basis, per user
        W = (self.S[None] * (self.other * c)[:, None, :]) @ self.S.T
        A = (self.basis[None] @ W) @ self.basisH
        A += self.Veye
        A *= self.keep
        A += self.fill
        if self.V == 0:
            tr = np.trace(A, axis1=1, axis2=2).real / self.D
            A += (1e-10 * (1.0 + tr))[:, None, None] * self.eye
        return A

    def response(self, F):
        """Own-channel responses, interference-plus-noise and SINR of every row."""
        y = F @ self.hcH.T
        yy = y.real ** 2 + y.imag ** 2
        yown = y[self.user, self.rows]
        sig = yy[self.user, self.rows]
        den = 1.0 + (yy * self.other).sum(axis=0)
        return y, yown, den, sig / den

    def rhs_vectors(self, e, nu):
        """Right-hand sides ``sum_c e nu h`` of every user, shape (K, D)."""
        z = (self.own * (e * nu)) @ self.S.T
        return (self.rhs @ z[:, :, None])[:, :, 0]

    def eval(self, e, nu, hessian=True):
        self.evals += 1
        n2 = nu.real ** 2 + nu.imag ** 2
        A = self.matrices(e, nu)
        try:
            Y = np.linalg.solve(A, self.rhs)
        except np.linalg.LinAlgError:
            tr = np.trace(A, axis1=1, axis2=2).real / self.D
            Y = np.linalg.solve(A + (1e-10 * (1.0 + tr))[:, None, None] * self.eye, self.rhs)
        en = e * nu
        z = (self.own * en) @ self.S.T
        F = (Y @ z[:, :, None])[:, :, 0]
        y, yown, den, sinr = self.response(F)
        sur = 2.0 * np.real(np.conj(nu) * yown) - n2 * den
        S = np.bincount(self.user, e, minlength=self.K)
        wn = self.wn
        with np.errstate(divide="ignore", invalid="ignore"):
            gam = wn / S - 1.0
            dS = wn * np.log(S / wn) + wn - S
        d = float(np.sum(dS) + np.sum(e * n2) - np.real(np.sum(np.conj(en) * yown)))
        g = gam[self.user] - sur
        out = {"F": F, "yown": yown, "den": den, "sur": sur, "sinr": sinr,
               "gam": gam, "S": S, "d": d, "g": g}
        if hessian:
            Pb = self.rhsH @ Y  # (K, m, m)
            al = np.where(self.own, nu[None, :], -n2[None, :] * y)
            G = self.S[None] * al[:, None, :]  # (K, m, n)
            T = Pb @ G
            Hn = 2.0 * np.real(G.reshape(-1, self.n).conj().T @ T.reshape(-1, self.n))
            with np.errstate(divide="ignore"):
                curv = (wn / S ** 2)[self.user]
            Hn += np.where(self.same_user, curv[:, None], 0.0)
            out["H"] = Hn
        return out


def _block_basis(h: np.ndarray, families: Sequence[SubsetFamily]):
    """Per-(user, RRU) channel blocks and the rows they add up to."""
    B, K, N = h.shape
    D = B * N
    basis = np.zeros((D, K * B), dtype=complex)
    for k in range(K):
        for b in range(B):
            basis[b * N:(b + 1) * N, k * B + b] = h[b, k]
    cols = []
    for fam in families:
        for c in range(len(fam)):
            col = np.zeros(K * B)
            excl = set(fam.excluded(c))
            col[[fam.user * B + b for b in range(B) if b not in excl]] = 1.0
            cols.append(col)
    return basis, np.array(cols).T


def _pessimistic(sinr, user, K):
    g = np.full(K, np.inf)
    np.minimum.at(g, user, sinr)
    return g


def _majorizer(st, user, K, V, wn):
    """Upper bound of the true objective built from the surrogates.

    Since every subset SINR is at least its surrogate, replacing the
    pessimistic SINR by the smallest surrogate can only increase the
    objective; the bound is tight at the auxiliaries of the current point.
    Infinite when some user has a surrogate at or below -1.
    """
    smin = np.full(K, np.inf)
    np.minimum.at(smin, user, st["sur"])
    if not np.all(smin > -1.0) or not np.all(np.isfinite(smin)):
        return np.inf
    F = st["F"]
    val = V * float(np.sum(F.real ** 2 + F.imag ** 2)) - float(np.sum(wn * np.log1p(smin)))
    return val if np.isfinite(val) else np.inf


def _true_objective(F, sinr, user, K, V, w):
    g = _pessimistic(sinr, user, K)
    return V * float(np.sum(F.real ** 2 + F.imag ** 2)) - float(np.sum(w * np.log2(1.0 + g))), g


class _Newton:
    """Damped projected Newton ascent on the fixed-auxiliary dual."""

    def __init__(self, eng: _DualEngine):
        self.eng = eng
        self.mu = 1e-3

    def residual(self, st, e):
        g = st["g"]
        Hd = np.maximum(np.diag(st["H"]), 1e-300)
        r = np.where(g < 0, np.minimum(-g, e * Hd), g)
        return float(np.max(r / (1.0 + st["gam"][self.eng.user]))) if len(r) else 0.0

    def step(self, st, e, nu, consider):
        eng = self.eng
        g, Hn = st["g"], st["H"]
        Hd = np.maximum(np.diag(Hn), 1e-300)
        eps = np.minimum(1e-2 * st["S"][eng.user], np.abs(g) / Hd)
        free = ~((g < 0) & (e <= eps))
        Hf = Hn[np.ix_(free, free)]
        Df = np.diag(Hf)
        nt, et = st, e
        for _ in range(30):
            p = g / ((1.0 + self.mu) * Hd)
            if free.any():
                try:
                    p[free] = np.linalg.solve(Hf + self.mu * np.diag(Df), g[free])
                except np.linalg.LinAlgError:
                    p[free] = g[free] / ((1.0 + self.mu) * Df)
            et = np.maximum(0.0, e + p)
            nt = eng.eval(et, nu)
            consider(nt, et)
            if nt["d"] >= st["d"] + 1e-4 * float(np.dot(g, et - e)):
                break
            self.mu *= 10.0
        else:
            return st, e
        self.mu = max(self.mu / 3.0, 1e-8)
        return nt, et


def _prepare(weights, h, families, V, noise):
    w = np.asarray(weights, dtype=float)
    K = h.shape[1]
    live = [fam for fam in families if w[fam.user] > 0]
    users = np.array([fam.user for fam in live], dtype=int)
    remap = {int(u): i for i, u in enumerate(users)}
    local = [SubsetFamily(remap[fam.user], fam.base, fam.min_size, fam.subsets) for fam in live]
    hs = h[:, users, :] / math.sqrt(noise) if len(users) else h[:, :0, :]
    return w, K, users, local, hs


def solve_subproblem(weights, h: np.ndarray, families: Sequence[SubsetFamily], V: float,
                     noise: float, rng: np.random.Generator,
                     options: Optional[SolverOptions] = None) -> SolveResult:
    """Minimize the slot objective for queue weights ``weights``.

    Parameters
    ----------
    weights : array_like, shape (K,)
        Nonnegative per-user weights; users with zero weight stay silent.
    h : ndarray, shape (B, K, N)
        Nominal channel.
    families : sequence of SubsetFamily
        One family per user, in user order.
    V : float
        Power weight.
    noise : float
        Noise power, same linear unit as the beamformer power.
    rng : numpy Generator
        Source of the random starting beamformers.
    options : SolverOptions, optional

    Returns
    -------
    SolveResult
        Best iterate found; its ``gamma`` is the pessimistic SINR of ``F``.

    Notes
    -----
    The objective counts rates in bits, so the weights enter the natural-log
    closed forms as ``w / ln 2``.
    """
    opts = options or SolverOptions()
    w, K, users, local, hs = _prepare(weights, h, families, V, noise)
    B, _, N = h.shape
    offsets = _offsets(families)
    n_all = int(offsets[-1])
    F_out = np.zeros((K, B, N), dtype=complex)
    if len(users) == 0:
        return SolveResult(F_out, np.zeros(K), 0.0, np.zeros(n_all), 0, True,
                           np.zeros(n_all), np.zeros(n_all, complex), 0.0)
    wl = w[users]
    wn = wl / LN2
    Kl = len(users)
    start = init_feasible(hs, local, wn, 1.0, rng)
    prob = stack_problem(hs, local)
    if Kl * B < len(prob.user):
        eng = _DualEngine(prob, V, wn, *_block_basis(hs, local))
    else:
        eng = _DualEngine(prob, V, wn)
    user = prob.user

    def flat(F):
        return F.reshape(Kl, -1)

    nu, e = start.nu.copy(), start.e.copy()
    F = flat(start.F)
    obj, gam_t = _true_objective(F, start.gamma[user], user, Kl, V, wl)
    best = {"obj": obj, "F": F.copy(), "e": e.copy(), "nu": nu.copy(), "it": 0}
    prev = obj
    calm = 0
    converged = False
    trace_rows = []
    it = 0
    if opts.step_rule == "subgradient":
        converged, it = _subgradient_loop(eng, opts, e, nu, V, wl, best, trace_rows)
    else:
        newton = _Newton(eng)
        for it in range(1, opts.outer_iters + 1):
            cand = {"obj": prev, "F": None}

            def consider(st, ee, cand=cand, nu_now=nu):
                o = _majorizer(st, user, Kl, V, wn)
                if o < cand["obj"]:
                    cand.update(obj=o, F=st["F"], e=ee.copy(), nu=nu_now.copy())

            st = eng.eval(e, nu)
            consider(st, e)
            res = newton.residual(st, e)
            moved = False
            newton.mu = min(newton.mu, 1e-3)
            for _ in range(opts.inner_iters):
                if res < opts.dual_tol:
                    break
                st, e_new = newton.step(st, e, nu, consider)
                moved = moved or e_new is not e
                e = e_new
                res = newton.residual(st, e)
            if opts.trace_path:
                trace_rows.append((it, min(prev, cand["obj"]), res))
            if cand["F"] is None:
                # no better point: done if the dual steps are stuck
                if res < opts.dual_tol:
                    converged = True
                    break
                if not moved or newton.mu > 1e4:
                    calm += 1
                if calm >= opts.patience:
                    converged = True
                    break
                continue
            F = cand["F"]
            _, yown, den, sinr = eng.response(F)
            nu = yown / den
            obj, _ = _true_objective(F, sinr, user, Kl, V, wl)
            if obj < best["obj"]:
                best.update(obj=obj, F=F.copy(), e=cand["e"], nu=cand["nu"], it=it)
            if abs(obj - prev) < opts.tolerance * max(1.0, abs(obj)):
                calm += 1
            else:
                calm = 0
            prev = obj
            if calm >= opts.patience:
                converged = True
                break
    if opts.polish and opts.step_rule == "newton":
        _polish(eng, best, V, wl, user, Kl, opts)
    if opts.trace_path:
        with open(opts.trace_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iteration", "objective", "max_residual"])
            wr.writerows(trace_rows)
    return _finish(best, eng, users, families, offsets, K, B, N, V, w, noise,
                   it, converged)


def _polish(eng, best, V, wl, user, Kl, opts):
    """Re-solve the dual at the auxiliaries of the best point to tolerance.

    The polished point replaces the best one unless it is worse by more
    than the objective tolerance.
    """
    _, yown, den, _ = eng.response(best["F"])
    nu = yown / den
    e = best["e"].copy()
    if np.any(np.bincount(user, e, minlength=Kl) <= 0):
        return
    newton = _Newton(eng)
    st = eng.eval(e, nu)
    for _ in range(60):
        if newton.residual(st, e) < opts.dual_tol:
            break
        st, e = newton.step(st, e, nu, lambda *_: None)
    o, _ = _true_objective(st["F"], st["sinr"], user, Kl, V, wl)
    if o <= best["obj"] + opts.tolerance * max(1.0, abs(best["obj"])):
        best.update(F=st["F"], e=e, nu=nu, obj=o)


def _subgradient_loop(eng, opts, e, nu, V, wl, best, trace_rows):
    """Plain constant-step iteration of the closed-form updates."""
    user = eng.user
    Kl = eng.K
    prev = best["obj"]
    calm = 0
    it = 0
    for it in range(1, opts.outer_iters * opts.inner_iters + 1):
        S = np.bincount(user, e, minlength=Kl)
        if np.any(~(S > 0)) or not np.all(np.isfinite(e)):
            return False, it
        st = eng.eval(e, nu, hessian=False)
        if not np.all(np.isfinite(st["F"])):
            return False, it
        o, _ = _true_objective(st["F"], st["sinr"], user, Kl, V, wl)
        if o < best["obj"]:
            best.update(obj=o, F=st["F"].copy(), e=e.copy(), nu=nu.copy(), it=it)
        if opts.trace_path:
            trace_rows.append((it, o, float(np.max(np.abs(e * st["g"])))))
        e = dual_update(e, st["gam"][user], st["sur"], opts.step_size)
        nu = st["yown"] / st["den"]
        if abs(o - prev) < opts.tolerance * max(1.0, abs(o)):
            calm += 1
        else:
            calm = 0
        prev = o
        if calm >= opts.patience:
            return True, it
    return False, it


def _finish(best, eng, users, families, offsets, K, B, N, V, w, noise, it, converged):
    Kl = len(users)
    user = eng.user
    F, e, nu = best["F"], best["e"], best["nu"]
    st = eng.eval(e, nu, hessian=False)
    F_out = np.zeros((K, B, N), dtype=complex)
    F_out[users] = F.reshape(Kl, B, N)
    gamma = np.zeros(K)
    gamma[users] = _pessimistic(_sinr_of(eng, F), user, Kl)
    n_all = int(offsets[-1])
    res = np.zeros(n_all)
    e_all = np.zeros(n_all)
    nu_all = np.zeros(n_all, dtype=complex)
    pos = 0
    live = set(users.tolist())
    for fam in families:
        if fam.user not in live:
            continue
        sl = slice(int(offsets[fam.user]), int(offsets[fam.user + 1]))
        m = len(fam)
        loc = slice(pos, pos + m)
        res[sl] = e[loc] * (st["gam"][user[loc]] - st["sur"][loc])
        e_all[sl] = e[loc]
        nu_all[sl] = nu[loc] / math.sqrt(noise)
        pos += m
    # stationarity of the Lagrangian in F at (e, nu), on active blocks
    A = eng.matrices(e, nu)
    b = eng.rhs_vectors(e, nu)
    g = np.einsum("ude,ue->ud", A, F) - b
    scale = np.maximum(np.linalg.norm(b, axis=1), 1e-300)
    stat = float(np.max(np.linalg.norm(g, axis=1) / scale))
    obj = objective(F_out, gamma, w, V)
    return SolveResult(F_out, gamma, obj, res, it, converged, e_all, nu_all, stat)


def _sinr_of(eng, F):
    return eng.response(F)[3]
