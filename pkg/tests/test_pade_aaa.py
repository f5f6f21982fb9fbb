import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcheom.aaa import BarycentricRational, aaa_fit
from rcheom.pade import bose, bose_approx, bose_pade, fermi, fermi_approx, fermi_pade


def test_fermi_pade_known_values():
    kappa, xi = fermi_pade(2)
    assert xi == pytest.approx([3.1425, 13.043], rel=1e-4)
    assert kappa == pytest.approx([1.0023, 3.9977], rel=1e-4)


def test_pade_poles_positive_and_ordered():
    for fn in (fermi_pade, bose_pade):
        kappa, xi = fn(6)
        assert np.all(xi > 0) and np.all(np.diff(xi) > 0)
        assert np.all(kappa > 0)


@pytest.mark.parametrize("n,tol", [(4, 1e-5), (10, 1e-13)])
def test_fermi_approx_accuracy(n, tol):
    x = np.linspace(-10, 10, 401)
    assert np.max(np.abs(fermi_approx(x, n) - fermi(x))) < tol


def test_bose_approx_accuracy():
    x = np.linspace(0.05, 10, 400)
    assert np.max(np.abs(bose_approx(x, 10) - bose(x)) / bose(x)) < 1e-8


def test_fermi_stable_for_large_arguments():
    assert fermi(np.array([800.0, -800.0])) == pytest.approx([0.0, 1.0])


def test_aaa_recovers_simple_pole():
    z = np.linspace(-3, 3, 50)
    fit = aaa_fit(z, 1 / (z - 1j))
    assert len(fit) == 2
    assert np.max(np.abs(fit(z) - 1 / (z - 1j))) < 1e-12
    p = fit.poles()
    assert p.size == 1 and abs(p[0] - 1j) < 1e-10
    assert abs(fit.residues(p)[0] - 1.0) < 1e-10


def test_aaa_constant():
    z = np.linspace(0, 1, 20)
    fit = aaa_fit(z, np.full(20, 2.5))
    assert len(fit) == 1
    assert fit(0.3) == pytest.approx(2.5)


def test_aaa_rejects_bad_input():
    with pytest.raises(ValueError):
        aaa_fit([1.0, 1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        aaa_fit([1.0, 2.0, 3.0], [1.0, 2.0])


def test_aaa_flags_nonconvergence():
    z = np.linspace(-1, 1, 200)
    fit = aaa_fit(z, np.abs(z), tol=1e-14, max_terms=4)
    assert not fit.converged


def test_aaa_forced_support_point():
    z = np.linspace(-2, 2, 101)
    f = np.exp(z)
    fit = aaa_fit(z, f, tol=1e-10, initial=[50])
    assert z[50] in fit.support_points
    assert fit(0.0) == pytest.approx(1.0, abs=1e-15)


def test_aaa_serialization_round_trip():
    z = np.linspace(-3, 3, 40)
    fit = aaa_fit(z, np.tanh(z), tol=1e-9)
    back = BarycentricRational.from_dict(fit.to_dict())
    assert np.allclose(back(z), fit(z), atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(0.1, 2), st.floats(-3, 3), st.floats(-3, 3))
def test_aaa_degree_one_exact(p_re, p_im, a_re, a_im):
    pole, amp = complex(p_re, p_im), complex(a_re, a_im)
    if abs(amp) < 1e-3:
        amp = 1.0
    z = np.linspace(-5, 5, 60)
    f = amp / (z - pole) + 0.7
    fit = aaa_fit(z, f)
    assert len(fit) <= 2
    assert np.max(np.abs(fit(z) - f)) < 1e-12 * np.max(np.abs(f)) * 10
    poles = fit.poles()
    assert np.min(np.abs(poles - pole)) < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_aaa_interpolates_support_points(seed):
    rng = np.random.default_rng(seed)
    z = np.sort(rng.uniform(-4, 4, 80))
    f = np.cos(z) / (1 + z**2)
    fit = aaa_fit(z, f, tol=1e-10)
    vals = fit(fit.support_points)
    assert np.max(np.abs(vals - fit.values)) < 1e-13
