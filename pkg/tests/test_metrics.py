import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import sqrtm

from conftest import random_density, random_vector
from dvcv.fock import (
    DensityOperator,
    DimensionMismatch,
    annihilate,
    cat_state,
    fock_state,
    single,
    squeezed_vacuum,
)
from dvcv.metrics import cat_amplitude_ratio, fidelity, fit_cat


def reference_fidelity(a, b):
    s = sqrtm(a)
    return float(np.real(np.trace(sqrtm(s @ b @ s))) ** 2)


@given(st.integers(0, 10 ** 6), st.integers(2, 12))
def test_fidelity_matches_matrix_square_roots(seed, dim):
    rng = np.random.default_rng(seed)
    a, b = random_density(dim, rng), random_density(dim, rng)
    assert fidelity(a, b) == pytest.approx(reference_fidelity(a, b), abs=1e-8)
    assert fidelity(a, b) == pytest.approx(fidelity(b, a), abs=1e-9)
    assert 0.0 <= fidelity(a, b) <= 1.0 + 1e-12


@given(st.integers(0, 10 ** 6))
def test_fidelity_of_pure_states_is_squared_overlap(seed):
    rng = np.random.default_rng(seed)
    u, v = random_vector(8, rng), random_vector(8, rng)
    expected = abs(np.vdot(u, v)) ** 2
    assert fidelity(np.outer(u, u.conj()), np.outer(v, v.conj())) == pytest.approx(expected, abs=1e-10)
    assert fidelity(u, np.outer(v, v.conj())) == pytest.approx(expected, abs=1e-12)
    assert fidelity(u, v) == pytest.approx(expected, abs=1e-12)


def test_fidelity_trivial_cases(rng):
    rho = DensityOperator(single("C", 4), random_density(5, rng))
    assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-10)
    reg = single("C", 3)
    assert fidelity(fock_state([0], reg), fock_state([1], reg)) == 0.0
    low_rank = random_density(6, rng, rank=1)
    assert fidelity(low_rank, low_rank) == pytest.approx(1.0, abs=1e-12)


def test_fidelity_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        fidelity(fock_state([0], single("C", 3)), fock_state([0], single("C", 4)))
    with pytest.raises(DimensionMismatch):
        fidelity(np.eye(3) / 3, np.eye(4) / 4)


def test_cat_approximates_squeezed_vacuum():
    sq = squeezed_vacuum(0.18, 14, angle=math.pi)
    assert fidelity(cat_state(0.45, "+", 14), sq) >= 0.995


def test_fit_cat_recovers_known_amplitude():
    for g, parity in [(0.6, "+"), (0.9, "-"), (1.2j, "-"), (0.5 * np.exp(0.4j), "+")]:
        fitted, f = fit_cat(cat_state(g, parity, 16), parity)
        assert f == pytest.approx(1.0, abs=1e-10)
        # cats at g and -g coincide, so compare up to sign
        assert min(abs(fitted - g), abs(fitted + g)) < 1e-5


def test_fit_cat_on_squeezed_vacuum_is_sqrt_r():
    # to leading order S(r)|0> and the even cat share <2|psi>/<0|psi> = r/sqrt(2) = g^2/sqrt(2)
    for r in (0.02, 0.05):
        g, f = fit_cat(squeezed_vacuum(r, 14, angle=math.pi), "+")
        assert abs(g) == pytest.approx(math.sqrt(r), rel=2e-2)
        assert f > 0.99999


def test_photon_subtraction_ratio():
    sq = squeezed_vacuum(0.18, 14, angle=math.pi)
    minus = annihilate(sq, "C").normalize()
    g_minus, f_minus = fit_cat(minus, "-")
    assert f_minus >= 0.999
    assert cat_amplitude_ratio(minus, sq) == pytest.approx(math.sqrt(3), rel=0.05)
