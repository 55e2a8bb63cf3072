import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torusqe.lattice import enumerate_shell
from torusqe.observables import (
    Observable,
    ObservableError,
    basis_integrals,
    density_coeffs,
    dictionary,
    eval_observable,
    grid_integral_oracle,
    integrate_density,
    l4_norm,
    truncate,
    zygmund_excess,
)
from torusqe.spectral import Eigenfunction, evaluate, exponential_basis, random_onb, sharpness_sequence


def test_constructors_and_mean():
    a = Observable.cosine((6, 8))
    assert a.as_dict() == {(-6, -8): 1, (6, 8): 1}
    assert a.is_real and a.mean == 0 and a.l2_norm_sq == 2
    s = Observable.sine((1, 0))
    assert s.is_real
    assert not Observable.exponential((1, 0)).is_real
    assert Observable.constant(3, 2.0).mean == 2.0


def test_pointwise_values():
    a = Observable.cosine((1, 2), amp=0.5) + Observable.sine((0, 1))
    x = np.random.default_rng(0).uniform(0, 2 * np.pi, (30, 2))
    want = np.cos(x[:, 0] + 2 * x[:, 1]) - 2 * np.sin(x[:, 1])
    assert np.allclose(eval_observable(a, x), want)


@given(st.integers(0, 50), st.integers(0, 50))
def test_product_is_pointwise(s1, s2):
    a = Observable.random_real(2, 3, s1)
    b = Observable.random_real(2, 2, s2, decay=1.0)
    x = np.random.default_rng(s1).uniform(0, 2 * np.pi, (10, 2))
    assert np.allclose(eval_observable(a * b, x), eval_observable(a, x) * eval_observable(b, x))


def test_json_roundtrip(tmp_path):
    a = Observable.random_real(3, 2, 5)
    b = Observable.from_json(a.to_json())
    assert np.array_equal(a.keys, b.keys) and np.allclose(a.values, b.values)
    p = tmp_path / "a.json"
    import json

    p.write_text(json.dumps(a.to_json()))
    assert np.allclose(Observable.from_json(p).values, a.values)


def test_duplicate_keys_rejected():
    with pytest.raises(ObservableError):
        Observable(2, np.array([[1, 0], [1, 0]]), np.array([1.0, 2.0]))


def test_truncate_inclusive():
    a = Observable.cosine((6, 8))
    assert len(truncate(a, 5)) == 2
    assert len(truncate(a, 4.99)) == 0


def test_density_coeffs_phi_q():
    d = density_coeffs(sharpness_sequence(1))
    assert {k: complex(v) for k, v in d.as_dict().items()} == pytest.approx({(0, 0): 1, (0, 2): 0.5, (0, -2): 0.5})
    assert l4_norm(sharpness_sequence(1)) == pytest.approx(1.5**0.25, abs=1e-15)


@given(st.integers(1, 40), st.integers(0, 10**6), st.integers(0, 10**6))
def test_integrate_density_matches_grid(E, s_psi, s_a):
    shell = enumerate_shell(2, E)
    if not len(shell):
        return
    psi = random_onb(shell, s_psi)[s_psi % len(shell)]
    a = Observable.random_real(2, 4, s_a, decay=1.0)
    grid_n = 2 * (4 + 2 * math.isqrt(E)) + 2
    assert abs(integrate_density(a, psi) - grid_integral_oracle(a, psi, grid_n)) < 1e-10


def test_grid_oracle_guard():
    psi = sharpness_sequence(2)
    with pytest.raises(ValueError):
        grid_integral_oracle(Observable.cosine((0, 2)), psi, 4)


def test_phi_q_integrals():
    phi = sharpness_sequence(5)
    assert integrate_density(Observable.exponential((0, 2)), phi) == pytest.approx(0.5, abs=1e-15)
    assert integrate_density(Observable.cosine((0, 2)), phi) == pytest.approx(1.0, abs=1e-15)


@given(st.integers(0, 1000))
def test_density_is_hermitian_and_normalized(seed):
    psi = random_onb(enumerate_shell(2, 65), seed)[0]
    d = density_coeffs(psi)
    assert d.is_real
    assert d.coeff((0, 0)) == pytest.approx(1.0, abs=1e-14)


@given(st.integers(1, 50), st.integers(0, 1000))
def test_l4_against_grid(E, seed):
    shell = enumerate_shell(2, E)
    if not len(shell):
        return
    psi = random_onb(shell, seed)[0]
    n = 4 * math.isqrt(E) + 6
    g = np.arange(n) * 2 * np.pi / n
    X = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    grid = float(np.mean(np.abs(evaluate(psi, X)) ** 4)) ** 0.25
    assert l4_norm(psi) == pytest.approx(grid, abs=1e-12)
    assert zygmund_excess(psi) == pytest.approx(l4_norm(psi) ** 4 - 1, abs=1e-12)


def test_basis_integrals_trace():
    # sum_j int a |psi_j|^2 = r a_0 for every orthonormal basis
    a = Observable.random_real(2, 6, 3) + Observable.constant(2, 0.7)
    shell = enumerate_shell(2, 325)
    for B in (exponential_basis(shell), random_onb(shell, 2)):
        assert basis_integrals(a, B).sum() == pytest.approx(len(shell) * a.mean, abs=1e-11)


def test_two_routes_must_agree():
    psi = Eigenfunction.from_points(2, 25, {(3, 4): 1, (-3, -4): 1})
    assert integrate_density(Observable.cosine((6, 8)), psi) == pytest.approx(1.0)
    assert integrate_density(Observable.constant(2), psi) == pytest.approx(1.0)


def test_dictionary():
    for d in (2, 3):
        D = dictionary(d)
        assert len(D) == 12
        assert all(a.is_real and a.dim == d for a in D.values())
    D = dictionary(2)
    D.pop("bump")
    assert "bump" in dictionary(2)
