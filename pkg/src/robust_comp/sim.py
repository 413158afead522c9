"""Slot loop, Monte-Carlo replications, sweeps and CSV export."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .channel import apply_blockage, channel_gain, draw_channel
from .config import Geometry, ScenarioConfig, dump_config, generate_geometry, make_streams
from .queueing import QueueState, draw_arrivals
from .serving import estimate_blockage, select_L
from .solver import SolverOptions, solve_subproblem
from .subsets import build_families, sinr_actual_all

SCHEMA = "robust_comp-slots v1"
SUMMARY_SCHEMA = "robust_comp-summary v1"


@dataclass
class SlotMetrics:
    """Everything recorded for one slot of one replication.

    Per-user arrays have shape (K,). ``Q`` and ``Z`` are the backlogs
    after the slot's update. ``power_dbm`` is NaN when nothing is sent.
    """

    t: int
    power_mw: float
    power_dbm: float
    user_power: np.ndarray
    arrivals: np.ndarray
    served: np.ndarray
    r: np.ndarray
    c: np.ndarray
    outage: np.ndarray
    Q: np.ndarray
    Z: np.ndarray
    L: np.ndarray
    rho: np.ndarray
    iterations: int
    converged: bool


@dataclass
class SimState:
    """Mutable state of one replication."""

    cfg: ScenarioConfig
    geometry: Geometry
    queues: QueueState
    streams: Dict[str, np.random.Generator]
    replication: int = 0
    t: int = 0


@dataclass
class RunSummary:
    """Aggregates over all slots and replications of one configuration.

    Attributes
    ----------
    avg_power_mw, avg_power_dbm : float
        Time- and replication-averaged sum power.
    prob_q_exceed : ndarray, shape (K,)
        Fraction of slots with ``Q_k >= queue threshold``.
    outage_rate : ndarray, shape (K,)
        Failed transmissions over transmissions with a nonzero rate.
    final_rho : ndarray, shape (R, K)
        Blockage estimates after the last slot.
    mean_rho : ndarray, shape (K,)
        Blockage estimate averaged over slots with a full window (NaN if
        the horizon never fills the window).
    queue_cdf, rate_cdf : tuple of ndarray
        Sorted values and cumulative probabilities.
    virtual_rate : ndarray, shape (K,)
        Mean of ``Z_k(T) / T`` over replications.
    replications : int
    seeds : list of tuple
        ``(master_seed, replication)`` of every replication.
    """

    avg_power_mw: float
    avg_power_dbm: float
    prob_q_exceed: np.ndarray
    outage_rate: np.ndarray
    final_rho: np.ndarray
    mean_rho: np.ndarray
    queue_cdf: tuple
    rate_cdf: tuple
    virtual_rate: np.ndarray
    replications: int
    seeds: list
    unconverged: int = 0
    slots: List[List[SlotMetrics]] = field(default_factory=list, repr=False)


def to_dbm(power_mw: float) -> float:
    return 10.0 * math.log10(power_mw) if power_mw > 0 else float("nan")


def solver_options(cfg: ScenarioConfig) -> SolverOptions:
    return SolverOptions(outer_iters=cfg.outer_iters, inner_iters=cfg.inner_iters,
                         tolerance=cfg.solver_tolerance, patience=cfg.solver_patience,
                         step_size=cfg.dual_step_size, step_rule=cfg.dual_step_rule)


def init_state(cfg: ScenarioConfig, replication: int = 0) -> SimState:
    streams = make_streams(cfg.master_seed, replication)
    geom = generate_geometry(cfg, streams["geometry"])
    return SimState(cfg, geom, QueueState.empty(cfg.num_ues, cfg.averaging_window_slots),
                    streams, replication, 0)


def _serving(state: SimState, gains: np.ndarray):
    """Serving sets and minimum surviving sizes for the configured policy."""
    cfg = state.cfg
    K = cfg.num_ues
    # the estimate is logged under every policy but only drives "dynamic"
    rho = estimate_blockage(state.queues.history, cfg.averaging_window_slots,
                            state.t, cfg.blockage_prior).rho
    sets = [tuple(b) for b in state.geometry.serving_sets]
    policy = cfg.serving_policy
    if policy == "cb_baseline":
        sets = [(int(np.argmax(gains[:, k])),) for k in range(K)]
        L = [1] * K
    elif policy == "full_jt_baseline":
        L = [len(s) for s in sets]
    elif policy == "dynamic":
        L = [select_L(len(s), float(p), cfg.violation_tolerance) for s, p in zip(sets, rho)]
    else:
        L = [min(cfg.subset_min_size, len(s)) for s in sets]
    return sets, L, rho


def run_slot(state: SimState, options: Optional[SolverOptions] = None) -> SlotMetrics:
    """Advance one slot of the dynamic control loop.

    Order: arrivals, nominal channel, serving-set choice, subset families,
    weights ``Q + A + Z``, beamforming, scheduled rates from the
    pessimistic SINR, realized blockage, supported rates, queue updates.
    """
    cfg = state.cfg
    st = state.streams
    state.t += 1
    q = state.queues
    q.A = draw_arrivals(cfg.arrival_rate_bits_per_slot, cfg.num_ues, st["arrivals"])
    nominal = draw_channel(state.geometry, cfg, state.t, st["fading"])
    sets, L, rho = _serving(state, channel_gain(nominal))
    families = build_families(sets, L)
    weights = q.weights()
    res = solve_subproblem(weights, nominal.h, families, cfg.tradeoff_v, cfg.noise_power_mw,
                           st["solver_init"], options or solver_options(cfg))
    r = np.log2(1.0 + res.gamma)
    realized = apply_blockage(nominal, cfg.blockage_prob, st["blockage"])
    c = np.log2(1.0 + sinr_actual_all(res.F, realized, cfg.noise_power_mw))
    served, outage = q.advance(r, c, cfg.violation_tolerance, cfg.queue_threshold_bits)
    user_power = np.sum(res.F.real ** 2 + res.F.imag ** 2, axis=(1, 2))
    power = float(user_power.sum())
    return SlotMetrics(state.t, power, to_dbm(power), user_power, q.A.copy(), served, r, c,
                       outage, q.Q.copy(), q.Z.copy(), np.array(L), rho, res.iterations,
                       res.converged)


def run_replication(cfg: ScenarioConfig, replication: int) -> List[SlotMetrics]:
    state = init_state(cfg, replication)
    opts = solver_options(cfg)
    return [run_slot(state, opts) for _ in range(cfg.num_slots)]


def _cdf(values: np.ndarray):
    v = np.sort(np.asarray(values, dtype=float).ravel())
    return v, np.arange(1, len(v) + 1) / max(len(v), 1)


def summarize(cfg: ScenarioConfig, runs: Sequence[List[SlotMetrics]]) -> RunSummary:
    """Aggregate per-slot metrics of every replication."""
    K = cfg.num_ues
    R = len(runs)
    if R == 0:
        raise ValueError("no replications to summarize")
    power = np.array([[m.power_mw for m in run] for run in runs])
    Q = np.array([[m.Q for m in run] for run in runs])
    r = np.array([[m.r for m in run] for run in runs])
    out = np.array([[m.outage for m in run] for run in runs])
    rho = np.array([[m.rho for m in run] for run in runs])
    Z_T = np.array([run[-1].Z for run in runs])
    T = power.shape[1]
    sent = (r > 0).sum(axis=(0, 1))
    outage_rate = np.where(sent > 0, out.sum(axis=(0, 1)) / np.maximum(sent, 1), 0.0)
    warm = cfg.averaging_window_slots + 1
    mean_rho = rho[:, warm:, :].mean(axis=(0, 1)) if warm < T else np.full(K, np.nan)
    avg = float(power.mean())
    return RunSummary(
        avg, to_dbm(avg),
        (Q >= cfg.queue_threshold_bits).mean(axis=(0, 1)),
        outage_rate,
        rho[:, -1, :],
        mean_rho,
        _cdf(Q), _cdf(r),
        Z_T.mean(axis=0) / T,
        R, [(cfg.master_seed, i) for i in range(R)],
        int(sum(not m.converged for run in runs for m in run)),
        list(runs),
    )


def _slot_header(K: int):
    cols = ["replication", "t", "power_mw", "power_dbm", "iterations", "converged"]
    for name in ("power", "A", "served", "r", "c", "outage", "Q", "Z", "L", "rho"):
        cols += [f"{name}_{k}" for k in range(K)]
    return cols


def _slot_row(rep: int, m: SlotMetrics):
    row = [rep, m.t, repr(m.power_mw), repr(m.power_dbm), m.iterations, int(m.converged)]
    for arr in (m.user_power, m.arrivals, m.served, m.r, m.c):
        row += [repr(float(x)) for x in arr]
    row += [int(x) for x in m.outage]
    for arr in (m.Q, m.Z):
        row += [repr(float(x)) for x in arr]
    row += [int(x) for x in m.L]
    row += [repr(float(x)) for x in m.rho]
    return row


def write_slots(path: str, runs: Sequence[List[SlotMetrics]], K: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(_slot_header(K))
        for rep, run in enumerate(runs):
            for m in run:
                w.writerow(_slot_row(rep, m))


def summary_row(s: RunSummary) -> Dict[str, object]:
    row = {"avg_power_mw": repr(s.avg_power_mw), "avg_power_dbm": repr(s.avg_power_dbm),
           "replications": s.replications, "unconverged_slots": s.unconverged}
    for k in range(len(s.outage_rate)):
        row[f"prob_q_exceed_{k}"] = repr(float(s.prob_q_exceed[k]))
        row[f"outage_rate_{k}"] = repr(float(s.outage_rate[k]))
        row[f"mean_rho_{k}"] = repr(float(s.mean_rho[k]))
        row[f"virtual_rate_{k}"] = repr(float(s.virtual_rate[k]))
    return row


def write_summary(path: str, rows: Sequence[Dict[str, object]]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {SUMMARY_SCHEMA}\n")
        if not rows:
            return
        keys = list(rows[0])
        for row in rows[1:]:
            keys += [k for k in row if k not in keys]
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


def _prepare_out(out_dir: str) -> str:
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir!r}: {exc}") from exc
    return out_dir


def run_simulation(cfg: ScenarioConfig, out_dir: Optional[str] = None) -> RunSummary:
    """Run ``num_replications`` independent replications of ``num_slots`` slots.

    Writes ``slots.csv``, ``summary.csv`` and ``resolved_config.yaml`` to
    ``out_dir`` when given.
    """
    runs = [run_replication(cfg, i) for i in range(cfg.num_replications)]
    summary = summarize(cfg, runs)
    if out_dir is not None:
        _prepare_out(out_dir)
        write_slots(os.path.join(out_dir, "slots.csv"), runs, cfg.num_ues)
        write_summary(os.path.join(out_dir, "summary.csv"), [summary_row(summary)])
        with open(os.path.join(out_dir, "resolved_config.yaml"), "w") as fh:
            fh.write(dump_config(cfg))
    return summary


SWEEP_AXES = {"V": "tradeoff_v", "q": "blockage_prob", "L": "subset_min_size",
              "policy": "serving_policy"}


@dataclass
class SweepPoint:
    value: object
    summary: Optional[RunSummary]
    error: Optional[str] = None


def sweep(cfg: ScenarioConfig, axis: str, values: Sequence, out_dir: Optional[str] = None
          ) -> List[SweepPoint]:
    """One full run per value of ``axis``; failures are recorded and skipped.

    All points share the master seed, hence geometry and random streams.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    field_name = SWEEP_AXES[axis]
    points, rows = [], []
    for v in values:
        try:
            point_cfg = cfg.replace(**{field_name: v})
            sub = os.path.join(out_dir, f"{axis}={v}") if out_dir else None
            s = run_simulation(point_cfg, sub)
            points.append(SweepPoint(v, s))
            rows.append({axis: v, "error": "", **summary_row(s)})
        except Exception as exc:  # recorded per point
            points.append(SweepPoint(v, None, f"{type(exc).__name__}: {exc}"))
            rows.append({axis: v, "error": f"{type(exc).__name__}: {exc}"})
    if out_dir is not None:
        _prepare_out(out_dir)
        write_summary(os.path.join(out_dir, "summary.csv"), rows)
    return points
