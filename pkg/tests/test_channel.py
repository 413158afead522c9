import numpy as np
import pytest
from hypothesis import given, strategies as st

from robust_comp.channel import (ChannelState, apply_blockage, channel_from_paths,
                                 channel_gain, draw_channel, ula_response, write_channel_dump)
from robust_comp.config import ScenarioConfig, generate_geometry


def test_ula_broadside():
    assert np.allclose(ula_response(0.0, 4), np.ones(4))


def test_ula_single_element():
    assert np.allclose(ula_response(1.234, 1), [1.0])


def test_ula_endfire_two_elements():
    assert np.allclose(ula_response(np.pi / 2, 2), [1.0, -1.0], atol=1e-15)


@given(phi=st.floats(-np.pi / 2, np.pi / 2), n=st.integers(1, 64))
def test_ula_unit_modulus(phi, n):
    assert np.allclose(np.abs(ula_response(phi, n)), 1.0, atol=1e-12)


def test_single_path_degenerate_channel():
    h = channel_from_paths(np.array([1.0 + 0j]), np.array([0.0]), np.array([0.0]), 7.0, 4)
    assert np.allclose(h, 2.0 * np.ones(4))


def test_channel_is_conjugate_response():
    h = channel_from_paths(np.array([1.0 + 0j]), np.array([2.0]), np.array([0.3]), 2.0, 8)
    assert np.allclose(h, np.sqrt(8) * 2.0 ** -2 * np.conj(ula_response(0.3, 8)))


def test_mean_channel_power_matches_path_accounting():
    # E||h||^2 = N^2 * E[d^(-2 psi)] for unit-power gains and unit-modulus steering
    rng = np.random.default_rng(3)
    n, M, d, draws = 4, 3, 1.7, 100_000
    gain = (rng.standard_normal((draws, M)) + 1j * rng.standard_normal((draws, M))) / np.sqrt(2)
    psi = rng.uniform(2, 6, (draws, M))
    phi = rng.uniform(-np.pi / 2, np.pi / 2, (draws, M))
    p = np.sum(np.abs(channel_from_paths(gain, psi, phi, d, n)) ** 2, axis=-1)
    ln = np.log(d)
    expected = n * n * (d ** -4 - d ** -12) / (8 * ln)  # E over psi ~ U[2,6]
    se = p.std() / np.sqrt(draws)
    assert abs(p.mean() - expected) < 3 * se


def test_draw_channel_deterministic_and_finite():
    cfg = ScenarioConfig(antennas_per_rru=8)
    geom = generate_geometry(cfg, 5)
    a = draw_channel(geom, cfg, 1, np.random.default_rng(9))
    b = draw_channel(geom, cfg, 1, np.random.default_rng(9))
    assert a.h.shape == (4, 4, 8)
    assert np.array_equal(a.h, b.h) and np.all(np.isfinite(a.h))
    assert not a.blocked.any()


def test_blockage_extremes(rng):
    st_ = ChannelState(rng.standard_normal((4, 4, 2)) + 0j, np.zeros((4, 4), bool))
    none = apply_blockage(st_, 0.0, rng)
    assert not none.blocked.any() and np.array_equal(none.effective(), st_.h)
    full = apply_blockage(st_, 1.0, rng)
    assert full.blocked.all() and not np.any(full.effective())


def test_blockage_rate_and_independence():
    rng = np.random.default_rng(11)
    st_ = ChannelState(np.ones((4, 4, 1), complex), np.zeros((4, 4), bool))
    flags = np.array([apply_blockage(st_, 0.1, rng).blocked.ravel() for _ in range(100_000)])
    assert abs(flags.mean() - 0.1) < 0.003
    corr = np.corrcoef(flags[:20_000].T.astype(float))
    off = corr[~np.eye(16, dtype=bool)]
    assert np.max(np.abs(off)) < 0.02


def test_channel_gain_and_dump(tmp_path, rng):
    h = rng.standard_normal((2, 3, 4)) + 1j * rng.standard_normal((2, 3, 4))
    blocked = np.zeros((2, 3), bool)
    blocked[1, 2] = True
    st_ = ChannelState(h, blocked, 4)
    g = channel_gain(st_)
    assert np.allclose(g, np.sum(np.abs(h) ** 2, axis=2))
    assert channel_gain(st_, effective=True)[1, 2] == 0.0
    path = tmp_path / "ch.csv"
    write_channel_dump(path, [st_])
    lines = path.read_text().splitlines()
    assert lines[0] == "slot,b,k,blocked,gain" and len(lines) == 7
