import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robust_comp.subsets import (MAX_SUBSETS, build_families, enumerate_subsets,
                                 pessimistic_sinr, sinr_actual, sinr_actual_all, sinr_subset,
                                 stack_problem, stacked_beamformer, stacked_channel,
                                 subset_count, subset_sinrs)
from robust_comp.channel import ChannelState


def brute(n, L):
    return [set(s) for r in range(n + 1) for s in itertools.combinations(range(n), r)
            if len(s) >= L]


def test_three_rru_example():
    fam = enumerate_subsets([1, 2, 3], 2)
    assert fam.subsets == ((1, 2), (1, 3), (2, 3), (1, 2, 3))


def test_full_set_only():
    assert enumerate_subsets([1, 2, 3, 4], 4).subsets == ((1, 2, 3, 4),)


def test_counts():
    assert subset_count(3, 2) == 4
    assert subset_count(4, 2) == 11 == len(enumerate_subsets(range(4), 2))
    for n in range(1, 9):
        assert subset_count(n, 1) == 2 ** n - 1


@pytest.mark.parametrize("n", range(1, 9))
def test_against_power_set(n):
    for L in range(1, n + 1):
        fam = enumerate_subsets(range(n), L)
        assert subset_count(n, L) == len(brute(n, L))
        assert sorted(map(sorted, fam.subsets)) == sorted(map(sorted, brute(n, L)))
        sizes = [len(s) for s in fam.subsets]
        assert sizes == sorted(sizes) and min(sizes) >= L
        assert len(set(fam.subsets)) == len(fam)


def test_excluded_sets():
    fam = enumerate_subsets([0, 1, 2], 2)
    assert [fam.excluded(c) for c in range(4)] == [(2,), (1,), (0,), ()]


def test_range_errors_and_cap():
    with pytest.raises(ValueError):
        subset_count(3, 0)
    with pytest.raises(ValueError):
        enumerate_subsets([0, 1], 3)
    with pytest.raises(ValueError):
        build_families([tuple(range(7))], [1])  # 127 > cap
    assert len(build_families([tuple(range(6))], [1])[0]) <= MAX_SUBSETS


def rand_instance(rng, B=3, K=3, N=2):
    h = rng.standard_normal((B, K, N)) + 1j * rng.standard_normal((B, K, N))
    F = rng.standard_normal((K, B, N)) + 1j * rng.standard_normal((K, B, N))
    return h, F


def test_single_rru_no_interference():
    h = np.zeros((1, 1, 1), complex)
    h[0, 0, 0] = 1.0
    F = np.full((1, 1, 1), 2.0 + 0j)
    fam = enumerate_subsets([0], 1)
    assert sinr_subset(F, h, 0, 0, fam, 1.0) == pytest.approx(4.0)
    assert sinr_subset(np.zeros_like(F), h, 0, 0, fam, 1.0) == 0.0


def test_stacked_and_per_rru_forms_agree(rng):
    for _ in range(50):
        h, F = rand_instance(rng, B=2, K=2, N=2)
        fams = build_families([(0, 1), (0, 1)], [1, 1])
        prob = stack_problem(h, fams)
        stacked = subset_sinrs(F, prob, 0.7)
        loop = [sinr_subset(F, h, f.user, c, f, 0.7) for f in fams for c in range(len(f))]
        assert np.allclose(stacked, loop, rtol=1e-12, atol=0)


def test_stacked_vectors_mask_blocks(rng):
    h, F = rand_instance(rng)
    v = stacked_channel(h, 1, (0, 2))
    assert np.all(v[:2] == 0) and np.all(v[4:] == 0) and np.array_equal(v[2:4], h[1, 1])
    assert np.array_equal(stacked_beamformer(F, 2), F[2].reshape(-1))


def test_pessimistic_is_min(rng):
    h, F = rand_instance(rng)
    fam = enumerate_subsets([0, 1, 2], 1, user=1)
    vals = [sinr_subset(F, h, 1, c, fam, 1.0) for c in range(len(fam))]
    g, c = pessimistic_sinr(F, h, 1, fam, 1.0)
    assert g == min(vals) and c == int(np.argmin(vals))
    single = enumerate_subsets([0, 1, 2], 3, user=1)
    assert pessimistic_sinr(F, h, 1, single, 1.0)[0] == sinr_subset(F, h, 1, 0, single, 1.0)


@given(seed=st.integers(0, 10_000), L=st.integers(2, 4))
def test_pessimistic_monotone_in_L(seed, L):
    rng = np.random.default_rng(seed)
    h, F = rand_instance(rng, B=4, K=2, N=2)
    lo = pessimistic_sinr(F, h, 0, enumerate_subsets(range(4), L - 1), 1.0)[0]
    hi = pessimistic_sinr(F, h, 0, enumerate_subsets(range(4), L), 1.0)[0]
    assert lo <= hi


def test_actual_sinr_cases(rng):
    h, F = rand_instance(rng)
    blocked = np.zeros((3, 3), bool)
    blocked[:, 0] = True
    assert sinr_actual(F, ChannelState(h, blocked), 0, 1.0) == 0.0
    # K=1, nothing blocked: equals the full-set subset SINR
    h1, F1 = rand_instance(rng, K=1)
    fam = enumerate_subsets([0, 1, 2], 3)
    assert sinr_actual(F1, ChannelState(h1, np.zeros((3, 1), bool)), 0, 1.0) == pytest.approx(
        sinr_subset(F1, h1, 0, 0, fam, 1.0), rel=1e-12)


def test_actual_without_interferer_links(rng):
    # every link into user 0 carrying interference is removed by hand
    h, F = rand_instance(rng)
    F[1:, :, :] = 0.0
    F[1, 2] = 1.0  # only RRU 2 serves user 1
    blocked = np.zeros((3, 3), bool)
    blocked[2, 0] = True
    sig = abs(sum(h[b, 0].conj() @ F[0, b] for b in (0, 1))) ** 2
    assert sinr_actual(F, ChannelState(h, blocked), 0, 0.5) == pytest.approx(sig / 0.5)


@given(seed=st.integers(0, 10_000))
def test_realized_set_in_family_matches_subset_sinr(seed):
    rng = np.random.default_rng(seed)
    h, F = rand_instance(rng, B=3, K=1, N=2)
    fam = enumerate_subsets([0, 1, 2], 2)
    c = int(rng.integers(len(fam)))
    blocked = np.zeros((3, 1), bool)
    blocked[list(fam.excluded(c)), 0] = True
    actual = sinr_actual(F, ChannelState(h, blocked), 0, 1.0)
    assert actual == pytest.approx(sinr_subset(F, h, 0, c, fam, 1.0), rel=1e-10)
    assert pessimistic_sinr(F, h, 0, fam, 1.0)[0] <= actual * (1 + 1e-12)


def test_actual_all_matches_loop(rng):
    h, F = rand_instance(rng)
    blocked = rng.random((3, 3)) < 0.3
    st_ = ChannelState(h, blocked)
    assert np.allclose(sinr_actual_all(F, st_, 1.0),
                       [sinr_actual(F, st_, k, 1.0) for k in range(3)], rtol=1e-12)
