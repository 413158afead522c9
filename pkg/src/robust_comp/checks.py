"""Quick invariant checks on small random instances, used by ``validate``."""
from __future__ import annotations

import itertools
from typing import Callable, List, Tuple

import numpy as np

from .config import ScenarioConfig
from .solver import SolverState, fp_surrogate, lagrangian_gradient, solve_subproblem, update_aux_nu
from .serving import success_prob
from .sim import init_state, run_slot
from .subsets import build_families, enumerate_subsets, sinr_subset, subset_count

Check = Tuple[str, bool, str]


def _random_instance(rng, B=2, K=2, N=2, scale=1.0):
    h = scale * (rng.standard_normal((B, K, N)) + 1j * rng.standard_normal((B, K, N)))
    F = rng.standard_normal((K, B, N)) + 1j * rng.standard_normal((K, B, N))
    return h, F


def check_quadratic_transform(n: int = 200, seed: int = 0) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        h, F = _random_instance(rng, B=3, K=3, N=2)
        fams = build_families([(0, 1, 2)] * 3, [2] * 3)
        for k, fam in enumerate(fams):
            for c in range(len(fam)):
                nu = update_aux_nu(F, h, k, c, fam, 1.0)
                s = fp_surrogate(F, nu, h, k, c, fam, 1.0)
                worst = max(worst, abs(s - sinr_subset(F, h, k, c, fam, 1.0)))
    return "surrogate equals SINR at the optimal auxiliary", worst <= 1e-9, f"max error {worst:.2e}"


def check_subsets() -> Check:
    ok = True
    for n in range(1, 7):
        for L in range(1, n + 1):
            brute = [s for r in range(n + 1) for s in itertools.combinations(range(n), r)
                     if len(s) >= L]
            ok &= subset_count(n, L) == len(brute)
            ok &= sorted(enumerate_subsets(range(n), L).subsets) == sorted(brute)
    return "subset enumeration matches the power set", bool(ok), ""


def check_success_prob() -> Check:
    ok = abs(success_prob(4, 4, 0.1) - 0.9 ** 4) < 1e-12 and success_prob(4, 1, 0.0) == 1.0
    return "success probability closed forms", bool(ok), ""


def check_stationarity(n: int = 20, seed: int = 1) -> Check:
    rng = np.random.default_rng(seed)
    worst_g, worst_cs = 0.0, 0.0
    for _ in range(n):
        h, _ = _random_instance(rng)
        fams = build_families([(0, 1)] * 2, [1, 1])
        w = rng.uniform(0.5, 5.0, 2)
        res = solve_subproblem(w, h, fams, 1.0, 1.0, rng)
        if not res.converged:
            continue
        offs = np.array([0, len(fams[0]), len(fams[0]) + len(fams[1])])
        st = SolverState(res.F, res.gamma, res.nu, res.e, offs)
        for k in range(2):
            worst_g = max(worst_g, lagrangian_gradient(st, h, fams, 1.0, k))
        worst_cs = max(worst_cs, float(np.max(np.abs(res.residuals))))
    ok = worst_g <= 1e-6 and worst_cs <= 1e-3
    return "KKT stationarity and slackness", ok, f"gradient {worst_g:.1e}, slackness {worst_cs:.1e}"


def check_slots(slots: int = 30) -> Check:
    cfg = ScenarioConfig(antennas_per_rru=4, num_slots=slots, num_replications=1,
                         blockage_prob=0.0, subset_min_size=2)
    st = init_state(cfg)
    ok, msg = True, ""
    Q = st.queues.Q.copy()
    for _ in range(slots):
        m = run_slot(st)
        if np.any(m.outage) or not np.all(m.r <= m.c + 1e-9):
            ok, msg = False, f"outage without blockage at slot {m.t}"
        if not np.allclose(m.Q, np.maximum(0.0, Q - m.served + m.arrivals), rtol=0, atol=1e-12):
            ok, msg = False, f"queue conservation broken at slot {m.t}"
        Q = m.Q.copy()
    return "slot loop invariants without blockage", ok, msg


CHECKS: List[Callable[[], Check]] = [check_quadratic_transform, check_subsets,
                                     check_success_prob, check_stationarity, check_slots]


def run_checks() -> List[Check]:
    return [fn() for fn in CHECKS]
