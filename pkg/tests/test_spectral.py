import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torusqe.lattice import LatticeError, enumerate_shell
from torusqe.spectral import (
    EigenBasis,
    Eigenfunction,
    basis_family,
    evaluate,
    exponential_basis,
    flat_counterexample,
    paired_basis,
    point_eigenfunction,
    random_onb,
    reflected_basis,
    sharpness_sequence,
)


def unitarity_error(B):
    U = B.matrix
    return np.abs(U @ U.conj().T - np.eye(len(U))).max()


@given(st.integers(2, 4), st.integers(1, 120), st.integers(0, 2**31))
def test_haar_basis_is_unitary(d, E, seed):
    shell = enumerate_shell(d, E)
    if not len(shell):
        with pytest.raises(LatticeError):
            random_onb(shell, seed)
        return
    for real in (False, True):
        B = random_onb(shell, seed, real=real)
        assert unitarity_error(B) < 1e-12


def test_haar_determinism_and_order_independence():
    s1, s2 = enumerate_shell(2, 65), enumerate_shell(2, 25)
    a = random_onb(s1, 7).matrix.copy()
    random_onb(s2, 7)
    assert np.array_equal(random_onb(s1, 7).matrix, a)
    assert not np.allclose(random_onb(s1, 8).matrix, a)


def test_one_dimensional_haar_basis():
    # a 1-point shell only arises at E = 0
    B = random_onb(enumerate_shell(2, 0), 3)
    assert B.matrix.tolist() == [[1.0 + 0.0j]]


def test_haar_columns_look_uniform():
    # E|U_jk|^2 = 1/r over many draws
    shell = enumerate_shell(2, 25)
    acc = np.zeros((12, 12))
    for s in range(300):
        acc += np.abs(random_onb(shell, s).matrix) ** 2
    assert np.abs(acc / 300 - 1 / 12).max() < 0.03


def test_real_haar_rows_are_real_functions():
    shell = enumerate_shell(2, 25)
    B = random_onb(shell, 1, real=True)
    x = np.random.default_rng(0).uniform(0, 2 * np.pi, (20, 2))
    for psi in B:
        assert np.abs(evaluate(psi, x).imag).max() < 1e-12


def test_structured_bases():
    shell = enumerate_shell(2, 25)
    for B in (exponential_basis(shell), paired_basis(shell), paired_basis(shell, "real"), reflected_basis(shell)):
        assert unitarity_error(B) < 1e-14
    B = reflected_basis(enumerate_shell(2, 17))
    phi = sharpness_sequence(4).coeffs
    assert any(np.allclose(row, phi) for row in B.matrix)


def test_basis_validation():
    shell = enumerate_shell(2, 1)
    with pytest.raises(ValueError):
        EigenBasis(shell, np.ones((4, 4)))
    with pytest.raises(ValueError):
        Eigenfunction(shell, np.ones(4))


def test_sharpness_sequence():
    phi = sharpness_sequence(4)
    assert phi.norm_sq == 17
    assert np.allclose(np.abs(phi.coeffs[phi.coeffs != 0]), 1 / math.sqrt(2))
    with pytest.raises(LatticeError):
        sharpness_sequence(0)


def test_flat_counterexample_constant_on_subtorus():
    psi = flat_counterexample(2, 5)
    x = np.column_stack([np.linspace(0, 2 * np.pi, 17), np.zeros(17)])
    assert np.allclose(evaluate(psi, x), 1.0)


@given(st.integers(1, 60), st.integers(0, 1000))
def test_eigenfunction_solves_laplace(E, seed):
    # finite-difference Laplacian against -E psi
    shell = enumerate_shell(2, E)
    if not len(shell):
        return
    psi = random_onb(shell, seed)[0]
    x = np.random.default_rng(seed).uniform(0, 2 * np.pi, 2)
    h = 1e-3
    lap = sum(
        evaluate(psi, x + h * e) + evaluate(psi, x - h * e) - 2 * evaluate(psi, x) for e in np.eye(2)
    ) / h**2
    assert abs(lap + E * evaluate(psi, x)) < 1e-5 * E * E + 1e-6


def test_point_eigenfunction_modulus_one():
    psi = point_eigenfunction(3, (1, 2, 2))
    x = np.random.default_rng(1).uniform(0, 2 * np.pi, (10, 3))
    assert np.allclose(np.abs(evaluate(psi, x)), 1.0)


def test_basis_family_names():
    shell = enumerate_shell(2, 5)
    for name in ("exponential", "paired", "paired-real", "reflected", "haar:3", "haar-real:3"):
        assert len(basis_family(name)(shell)) == 8
    with pytest.raises(ValueError):
        basis_family("bogus")
