import numpy as np
import pytest
from scipy import integrate

from rcheom.baths import BathSpec, ExponentSeries, Lorentzian
from rcheom.hierarchy import Coupling, assemble, enumerate_ados, tier0
from rcheom.models import SIAM, ModelSpec, build, default_parameters
from rcheom.operators import dag, to_dense
from rcheom.solver import (AdoState, DegenerateKernelError, SolverError, density_of_states, evolve,
                           lift_left, operator_parity, steady_state, two_time)

EPS, GAMMA, W, TEMP = 0.3, 1.0, 1.25, 0.5


def retarded(z):
    """Exact impurity Green's function of the non-interacting level."""
    return 1 / (z - EPS - (GAMMA * W / 2) / (z + 1j * W))


@pytest.fixture(scope="module")
def free_level():
    ms = ModelSpec(SIAM(EPS, 0.0), Lorentzian(GAMMA, 0.0, W), BathSpec("fermion", 1 / TEMP),
                   "heomstar", 2, 4)
    bm = build(ms)
    L = bm.liouvillian()
    return bm, L, steady_state(L)


def test_larmor_precession():
    h = 0.5 * np.diag([1.0, -1.0]).astype(complex)
    L = tier0(h)
    plus = 0.5 * np.ones((2, 2), dtype=complex)
    times = np.linspace(0, 10, 51)
    tr = evolve(L, AdoState.from_top(plus, L.space), times, rtol=1e-10, atol=1e-12)
    coh = tr.tops[:, 0, 1]
    assert np.allclose(coh, 0.5 * np.exp(-1j * times), atol=1e-8)
    assert tr.stats["trace_drift"] < 1e-12


def test_degenerate_kernel_detected():
    L = tier0(np.diag([0.0, 1.0]).astype(complex))
    with pytest.raises(DegenerateKernelError):
        steady_state(L)


def test_unknown_method():
    L = tier0(np.diag([0.0, 1.0]).astype(complex))
    with pytest.raises(ValueError):
        steady_state(L, method="magic")


def test_free_level_occupation(free_level):
    bm, L, ss = free_level
    exact = integrate.quad(lambda w: -retarded(w).imag / np.pi / (np.exp(w / TEMP) + 1),
                           -200, 200, points=[EPS, 0.0], limit=500)[0]
    d = to_dense(bm.ops["d1u"])
    n = np.trace(d.conj().T @ d @ ss.top()).real
    assert ss.info["residual"] < 1e-10
    assert n == pytest.approx(exact, abs=2e-4)


def test_steady_state_physical(free_level):
    _, _, ss = free_level
    rho = ss.top()
    assert abs(ss.trace() - 1) < 1e-12
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-8
    assert np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() > -1e-6


def test_iterative_matches_direct(free_level):
    _, L, ss = free_level
    it = steady_state(L, method="iterative", tol=1e-12)
    assert np.max(np.abs(it.top() - ss.top())) < 1e-8


def test_resolvent_dos_matches_exact(free_level):
    bm, L, ss = free_level
    om, eta = np.array([-2.0, -0.5, 0.0, 0.3, 1.0]), 0.2
    spec = density_of_states(L, ss, to_dense(bm.ops["d1u"]), om, t_max=50, eta=eta,
                             method="resolvent")
    exact = -(2 / np.pi) * retarded(om + 1j * eta).imag
    assert np.allclose(spec.dos, exact, rtol=1e-4, atol=1e-5)


def test_time_dos_matches_exact(free_level):
    bm, L, ss = free_level
    om = np.linspace(-2, 2, 9)
    spec = density_of_states(L, ss, to_dense(bm.ops["d1u"]), om, t_max=40)
    exact = -(2 / np.pi) * retarded(om + 1j * spec.info["eta"]).imag
    assert np.max(np.abs(spec.dos - exact)) < 5e-3 * np.max(exact)
    assert spec.info["F0"] == pytest.approx(1.0, abs=1e-10)


def test_dos_sum_rule(free_level):
    bm, L, ss = free_level
    om = np.linspace(-40, 40, 1601)
    spec = density_of_states(L, ss, to_dense(bm.ops["d1u"]), om, t_max=40)
    assert spec.sum_rule == pytest.approx(2.0, rel=1e-2)


def test_two_time_identity_is_one(free_level):
    _, L, ss = free_level
    eye = np.eye(L.op_dim)
    g = two_time(L, ss, eye, eye, np.linspace(0, 5, 11))
    assert np.allclose(g, 1.0, atol=1e-8)


def test_two_time_equal_time_reduction(free_level):
    bm, L, ss = free_level
    d = to_dense(bm.ops["d1u"])
    g = two_time(L, ss, d, dag(d), [0.0, 0.1])
    rho = ss.top()
    assert g[0] == pytest.approx(np.trace(d @ d.conj().T @ rho), abs=1e-12)


def test_operator_parity(free_level):
    bm, _, _ = free_level
    d = to_dense(bm.ops["d1u"])
    p = bm.parity_op
    assert operator_parity(d, p) == "odd"
    assert operator_parity(d.conj().T @ d, p) == "even"
    with pytest.raises(ValueError):
        operator_parity(d + d.conj().T @ d, p)


def test_lift_left_signs(free_level):
    bm, _, ss = free_level
    d = to_dense(bm.ops["d1u"])
    odd = lift_left(d, ss, odd=True)
    even = lift_left(d, ss, odd=False)
    lev = ss.space.levels
    i1 = int(np.nonzero(lev == 1)[0][0])
    assert np.allclose(odd.ado(i1), -even.ado(i1))
    assert np.allclose(odd.top(), d @ ss.top())


def test_evolve_reaches_steady_state():
    ms = default_parameters(1, "heomstar", tier=1)
    bm = build(ms)
    L = bm.liouvillian()
    ss = steady_state(L)
    tr = evolve(L, bm.initial_state(), [0.0, 40.0], keep="full")
    rho_t, rho_ss = tr.tops[-1], ss.top()
    dist = 0.5 * np.abs(np.linalg.eigvalsh(rho_t - rho_ss)).sum()
    assert dist < 1e-5
    assert tr.stats["trace_drift"] < 1e-8
    assert len(tr.states) == 2


def test_evolve_empty_grid(free_level):
    bm, L, _ = free_level
    tr = evolve(L, bm.initial_state(), [])
    assert len(tr) == 0


def test_rcme_generator():
    bm = build(default_parameters(1, "rcme"))
    L = bm.liouvillian()
    a = L.action.toarray()
    d = L.op_dim
    # trace preservation: the identity row annihilates the generator
    idv = np.eye(d).reshape(-1, order="F")
    assert np.max(np.abs(idv @ a)) < 1e-12
    ss = steady_state(L)
    assert ss.info["residual"] < 1e-10
    rho = ss.top()
    assert np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() > -1e-9


def test_gmres_failure_reported():
    h = np.diag([0.0, 1.0]).astype(complex)
    q = np.array([[0, 1], [0, 0]], dtype=complex)
    cp = Coupling(q, ExponentSeries(1, [0.1], [1.0]), ExponentSeries(-1, [0.1], [1.0]))
    L = assemble(h, [cp], enumerate_ados(2, 3, "boson"))
    with pytest.raises(SolverError):
        steady_state(L, method="iterative", maxiter=1, tol=1e-300)
