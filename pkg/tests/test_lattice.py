import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torusqe.lattice import (
    LatticeError,
    ball_points,
    difference_multiplicities,
    enumerate_shell,
    factorize,
    interval_pair_count,
    is_prime,
    iwaniec_search,
    lattice_count,
    min_separation,
    nonempty_shells,
    norm_sq_of,
    pair_count,
    pair_count_direct,
    primitive,
    primitive_norm,
    r2_formula,
    r4_formula,
    r_d,
    separation_survey,
    sum_two_squares_spectrum,
    window_pair_count,
)


def brute_shell(d, E):
    m = math.isqrt(E)
    rng = range(-m, m + 1)
    return sorted(p for p in itertools.product(rng, repeat=d) if sum(v * v for v in p) == E)


def trial_factor(n):
    out, p = [], 2
    while p * p <= n:
        while n % p == 0:
            out.append(p)
            n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


@given(st.integers(2, 4), st.integers(0, 60))
def test_shell_matches_brute_force(d, E):
    shell = enumerate_shell(d, E)
    assert sorted(map(tuple, shell.points.tolist())) == brute_shell(d, E)
    assert np.all((shell.points**2).sum(axis=1) == E)


def test_shell_points_sorted_and_unique():
    P = enumerate_shell(3, 325).points
    assert len({tuple(p) for p in P.tolist()}) == len(P)
    assert [tuple(p) for p in P.tolist()] == sorted(tuple(p) for p in P.tolist())


def test_r2_against_divisor_formula():
    for E in range(0, 3000):
        assert r_d(2, E) == r2_formula(E)


def test_r4_against_jacobi():
    for E in range(0, 400):
        assert r_d(4, E) == r4_formula(E)


def test_small_examples():
    assert len(enumerate_shell(2, 9)) == 4
    assert len(enumerate_shell(2, 25)) == 12
    assert len(enumerate_shell(4, 2)) == 24
    assert len(enumerate_shell(3, 3)) == 8
    assert len(enumerate_shell(2, 3)) == 0
    assert enumerate_shell(5, 0).points.tolist() == [[0] * 5]


def test_shell_membership_and_index():
    shell = enumerate_shell(2, 25)
    assert (3, 4) in shell and (-5, 0) in shell and (1, 1) not in shell
    k = shell.points[7]
    assert shell.index_of(k) == 7
    assert shell.lam == 5.0


def test_radius_input_validation():
    assert norm_sq_of(5) == 25
    assert norm_sq_of(math.sqrt(2)) == 2
    with pytest.raises(LatticeError):
        norm_sq_of(1.5)
    with pytest.raises(LatticeError):
        enumerate_shell(1, 4)
    with pytest.raises(LatticeError):
        enumerate_shell(9, 4)
    with pytest.raises(LatticeError):
        enumerate_shell(2, -1)


def test_large_norm_fast_path():
    assert len(enumerate_shell(2, 9**8)) == 4
    assert len(enumerate_shell(4, 2 * 4**6)) == 24


def test_ball_points_and_lattice_count():
    assert lattice_count(2, 25) == 81
    P = ball_points(2, 25, 17)
    nsq = (P * P).sum(axis=1)
    assert nsq.min() >= 17 and nsq.max() <= 25
    assert len(P) == sum(r_d(2, E) for E in range(17, 26))
    assert lattice_count(3, 10) == sum(len(brute_shell(3, E)) for E in range(11))


def test_nonempty_shells():
    assert nonempty_shells(2, 25, 17) == [17, 18, 20, 25]
    assert nonempty_shells(2, 10) == sum_two_squares_spectrum(10).values


def test_primitive():
    assert primitive((6, 8)).tolist() == [3, 4]
    assert primitive((0, -4)).tolist() == [0, -1]
    assert np.allclose(primitive_norm(np.array([[2, 0], [6, 8], [1, 1]])), [1, 5, math.sqrt(2)])


def test_pair_count_examples():
    shell = enumerate_shell(2, 25)
    assert pair_count(shell, (6, 8)) == 1
    assert pair_count(shell, (1, 1)) == 2  # k = (-4, 3), (3, -4)
    assert pair_count(shell, (1, -1)) == 2
    assert pair_count(shell, (2, 0)) == 0
    assert pair_count(shell, (1, 0)) == 0  # odd |n|^2


@given(st.integers(2, 3), st.integers(1, 80), st.lists(st.integers(-8, 8), min_size=3, max_size=3))
def test_pair_count_matches_direct_definition(d, E, n):
    n = n[:d]
    if not any(n):
        return
    shell = enumerate_shell(d, E)
    assert pair_count(shell, n) == pair_count_direct(shell, n)


@given(st.integers(1, 300))
def test_difference_multiplicity_is_pair_count(E):
    shell = enumerate_shell(2, E)
    diffs, mult = difference_multiplicities(shell)
    for n, m in zip(diffs, mult):
        assert pair_count(shell, n) == m
    # any n outside the difference set has zero pairs
    if len(shell):
        assert pair_count(shell, (2 * math.isqrt(E) + 2, 0)) == 0


@given(st.integers(1, 200), st.lists(st.integers(-6, 6), min_size=3, max_size=3))
def test_pair_count_via_negated_partner(E, n):
    shell = enumerate_shell(3, E)
    n = np.array(n)
    if not n.any():
        return
    members = shell.point_set()
    partner = sum(tuple((-k - n).tolist()) in members for k in shell.points)
    assert pair_count(shell, n) == partner


@given(st.integers(0, 200), st.permutations([0, 1, 2]), st.lists(st.sampled_from([1, -1]), min_size=3, max_size=3))
def test_shell_symmetry(E, perm, signs):
    shell = enumerate_shell(3, E)
    img = shell.points[:, perm] * np.array(signs)
    assert {tuple(p) for p in img.tolist()} == shell.point_set()


def test_long_window_pair_ratio_bounded_d3():
    # max_n interval_pair_count(3, n, 0, lam) |n_hat| / lam^2 stays O(1)
    ratios = []
    for lam in (4, 6, 8, 10, 12):
        E = lam * lam
        ns = ball_points(3, 4 * E, 1)
        best = max(window_pair_count(3, n, 0, E) * float(primitive_norm(n[None, :])[0]) for n in ns[::7])
        ratios.append(best / lam**2)
    assert max(ratios) < 10
    assert all(math.isfinite(r) for r in ratios)


def test_pair_count_rejects_zero():
    with pytest.raises(LatticeError):
        pair_count(enumerate_shell(2, 5), (0, 0))


def test_interval_pair_count_brute():
    n = np.array((0, 2))
    pts = ball_points(2, 25)
    want = sum(1 for k in pts if k @ k == (k + n) @ (k + n))
    assert interval_pair_count(2, n, 0, 5) == want == 9
    assert window_pair_count(2, (1, 0), 0, 100) == 0
    assert interval_pair_count(2, (0, 2), 4.5, 4.6) == 0


def test_min_separation():
    assert min_separation(enumerate_shell(2, 9)) == pytest.approx(3 * math.sqrt(2), abs=1e-15)
    assert min_separation(enumerate_shell(2, 25)) == math.sqrt(2)
    assert min_separation(enumerate_shell(2, 1)) == math.sqrt(2)  # (1,0),(0,1); not antipodal
    with pytest.raises(LatticeError):
        min_separation(enumerate_shell(3, 0))


def test_separation_survey():
    s = separation_survey(100, 0.2)
    Es = [r.norm_sq for r in s.records]
    assert Es == sum_two_squares_spectrum(100).values[1:]
    for rec in s.records:
        assert rec.is_separated == (rec.min_sep > rec.norm_sq ** 0.4)
    assert s.n_not_separated == sum(not r.is_separated for r in s.records)
    with pytest.raises(LatticeError):
        separation_survey(100, 1.5)
    small = separation_survey(2, 0.5)
    assert [(r.norm_sq, r.is_separated) for r in small.records] == [(1, True), (2, True)]
    rec25 = [r for r in separation_survey(25, 0.2).records if r.norm_sq == 25][0]
    assert not rec25.is_separated and rec25.min_sep == math.sqrt(2)


def test_spectrum_density_ratio_near_landau():
    # count ~ K N / sqrt(log N) with the Landau-Ramanujan constant K ~ 0.764
    info = sum_two_squares_spectrum(10**5)
    assert 0.7 < info.density_ratio < 1.0


@given(st.integers(2, 10**12))
def test_factorize_against_trial_division(n):
    if n > 10**7:
        f = factorize(n)
        assert math.prod(f) == n and all(is_prime(p) for p in f)
    else:
        assert factorize(n) == trial_factor(n)


def test_is_prime_large():
    assert is_prime(2**61 - 1)
    assert not is_prime((2**31 - 1) * (2**29 - 3))
    assert factorize((2**31 - 1) * 1000003) == [1000003, 2**31 - 1]


def test_iwaniec_search_prefix():
    got = [e.n for e in iwaniec_search(20)]
    want = [n for n in range(1, 21) if len(trial_factor(n * n + 1)) <= 2]
    assert got == want
    assert got[:6] == [1, 2, 3, 4, 5, 6]
    by_n = {e.n: e for e in iwaniec_search(20)}
    assert by_n[3].factors == (2, 5) and by_n[3].r2 == 8
    assert by_n[4].factors == (17,) and by_n[2].r2 == 8
    assert 7 not in by_n  # 50 = 2 * 5 * 5
    for e in iwaniec_search(100):
        assert e.r2 == r_d(2, e.n**2 + 1)
        assert e.factor_count <= 2
