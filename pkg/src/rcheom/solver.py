"""Time evolution, steady states, two-time correlations, spectral
functions and the Lindblad baseline generator.
"""
from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate
from scipy.integrate import DOP853, RK45

from .baths import BathSpec, SpectralDensity
from .hierarchy import HeomLiouvillian, HierarchySpace, enumerate_ados, top_trace_row
from .operators import (commutator_super, dag, dissipator, left_mult, right_mult,
                        to_dense, unvec, vec)

log = logging.getLogger(__name__)

#: Above this many rows the steady state is found iteratively.
DIRECT_SOLVE_ROWS = 300_000


class SolverError(RuntimeError):
    """Integration or linear solve failed."""


class IntegrationError(SolverError):
    """Step size underflow; ``partial`` holds the trajectory so far."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


class DegenerateKernelError(SolverError):
    """The generator has more than one stationary state."""


@dataclass
class AdoState:
    """Stacked hierarchy state; ADO ``i`` occupies ``data[i*d^2:(i+1)*d^2]``."""

    space: HierarchySpace
    op_dim: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != (len(self.space) * self.op_dim**2,):
            raise ValueError("state length does not match the hierarchy")

    @classmethod
    def from_top(cls, rho, space: HierarchySpace) -> "AdoState":
        """Physical state ``rho`` with all auxiliary ADOs zero."""
        rho = to_dense(rho)
        d = rho.shape[0]
        data = np.zeros(len(space) * d * d, dtype=complex)
        data[: d * d] = vec(rho)
        return cls(space, d, data)

    def blocks(self) -> np.ndarray:
        """View of shape ``(n_ado, d, d)``; ``blocks()[i].T`` is ADO ``i``."""
        d = self.op_dim
        return self.data.reshape(len(self.space), d, d)

    def ado(self, which) -> np.ndarray:
        """ADO by dense index or by label tuple."""
        i = which if isinstance(which, (int, np.integer)) else self.space.index(which)
        d = self.op_dim
        return unvec(self.data[i * d * d:(i + 1) * d * d], d)

    def top(self) -> np.ndarray:
        return self.ado(0)

    def trace(self) -> complex:
        return complex(np.trace(self.top()))


@dataclass
class Trajectory:
    times: np.ndarray
    tops: np.ndarray            # (n_t, d, d) physical states
    states: list | None = None  # full AdoState per time when kept
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def expect(self, op) -> np.ndarray:
        """``tr(op rho(t))`` for each stored time."""
        op = to_dense(op)
        return np.einsum("ij,tji->t", op, self.tops)


def _rhs(L):
    a = L.action if isinstance(L, HeomLiouvillian) else L
    return lambda t, y: a @ y


def evolve(L: HeomLiouvillian, initial: AdoState, times, rtol: float = 1e-8,
           atol: float = 1e-10, method: str = "DOP853", keep: str = "auto",
           first_step: float | None = None, max_step: float = np.inf) -> Trajectory:
    """Integrate ``d/dt x = L x`` and sample at ``times``.

    Parameters
    ----------
    L : HeomLiouvillian
    initial : AdoState
        State at ``times[0]``.
    times : array_like
        Strictly increasing output times.
    rtol, atol : float
        Integrator tolerances.
    method : {"DOP853", "RK45"}
        Explicit adaptive Runge-Kutta scheme with dense output.
    keep : {"auto", "full", "top"}
        Whether to store full hierarchy states or only the physical
        block. ``"auto"`` keeps full states below 2e7 stored numbers.

    Returns
    -------
    Trajectory
        ``stats`` records step counts, wall time and the largest trace
        drift ``max |tr rho(t) - tr rho(0)|``.
    """
    times = np.asarray(times, dtype=float)
    d = initial.op_dim
    n = len(initial.data)
    if keep == "auto":
        keep = "full" if len(times) * n <= 2e7 else "top"
    tops = np.zeros((len(times), d, d), dtype=complex)
    states = [] if keep == "full" else None
    tr0 = initial.trace()
    stats = {"nfev": 0, "steps": 0, "method": method, "rtol": rtol, "atol": atol,
             "rows": n}
    if len(times) == 0:
        return Trajectory(times, tops, states, stats)
    start = _time.perf_counter()
    y0 = initial.data.copy()

    def record(i, y):
        tops[i] = unvec(y[: d * d], d)
        if states is not None:
            states.append(AdoState(initial.space, d, y.copy()))

    record(0, y0)
    if len(times) > 1:
        solver_cls = {"DOP853": DOP853, "RK45": RK45}[method]
        kw = {} if first_step is None else {"first_step": first_step}
        solver = solver_cls(_rhs(L), times[0], y0, times[-1], rtol=rtol, atol=atol,
                            max_step=max_step, vectorized=False, **kw)
        i = 1
        while i < len(times):
            msg = solver.step()
            stats["steps"] += 1
            if solver.status == "failed":
                part = Trajectory(times[:i], tops[:i], states, dict(stats))
                raise IntegrationError(f"integration failed at t={solver.t:.6g}: {msg}", part)
            if solver.t >= times[i] or solver.status == "finished":
                dense = solver.dense_output()
                while i < len(times) and times[i] <= solver.t:
                    record(i, dense(times[i]))
                    i += 1
        stats["nfev"] = solver.nfev
    stats["wall"] = _time.perf_counter() - start
    traces = np.trace(tops, axis1=1, axis2=2)
    stats["trace_drift"] = float(np.max(np.abs(traces - tr0)))
    if stats["trace_drift"] > 10 * rtol * max(abs(tr0), 1.0):
        log.warning("trace drift %.2e exceeds 10*rtol", stats["trace_drift"])
    return Trajectory(times, tops, states, stats)


# -- steady state ---------------------------------------------------------------

def _constrained(L: HeomLiouvillian):
    a = L.action.tocsr()
    n, d = a.shape[0], L.op_dim
    keep = np.ones(n)
    keep[0] = 0.0
    return (sp.diags(keep) @ a + sp.csr_matrix(
        (np.ones(1), (np.zeros(1, int), np.zeros(1, int))), shape=(n, 1)) @ top_trace_row(d, n)).tocsc()


def _block_preconditioner(L: HeomLiouvillian, shift: float):
    h = L.build.get("h")
    d = L.op_dim
    n_ado = len(L.space)
    diag = L.action.diagonal().reshape(n_ado, d * d)
    if h is None:
        inv = 1.0 / np.where(np.abs(diag) > shift, diag, diag - shift)
        return spla.LinearOperator(L.shape, matvec=lambda v: inv.ravel() * v, dtype=complex)
    e, v = np.linalg.eigh(to_dense(h))
    damp = (diag.mean(axis=1) - np.mean(diag[0])).reshape(-1, 1, 1)
    # elementwise inverse of -i(E_i - E_j) - Gamma_q in the eigenbasis
    den = -1j * (e[:, None] - e[None, :])[None] + damp - shift
    vd = v.conj().T

    def apply(x):
        blk = x.reshape(n_ado, d, d).transpose(0, 2, 1)
        y = (vd @ blk @ v) / den
        return (v @ y @ vd).transpose(0, 2, 1).reshape(-1)

    return spla.LinearOperator(L.shape, matvec=apply, dtype=complex)


def steady_state(L: HeomLiouvillian, method: str = "auto", tol: float = 1e-12,
                 probe: bool = True, maxiter: int = 2000) -> AdoState:
    """Stationary state with unit trace of the physical block.

    One equation of ``L x = 0`` (the first diagonal element of the
    physical block) is replaced by ``tr rho^0 = 1``. ``method="direct"``
    factorizes with SuperLU; ``"iterative"`` runs preconditioned GMRES.
    ``"auto"`` picks direct below :data:`DIRECT_SOLVE_ROWS` rows.

    The relative residual ``|L x| / |x|`` is stored in ``state.info``.
    With ``probe`` a short inverse iteration on the constrained matrix
    detects a second stationary state and raises
    :class:`DegenerateKernelError`.
    """
    n = L.n_rows
    if method == "auto":
        method = "direct" if n <= DIRECT_SOLVE_ROWS else "iterative"
    a = _constrained(L)
    rhs = np.zeros(n, dtype=complex)
    rhs[0] = 1.0
    start = _time.perf_counter()
    if method == "direct":
        try:
            lu = spla.splu(a, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise DegenerateKernelError(f"constrained generator is singular: {exc}") from None
        x = lu.solve(rhs)
        if probe:
            _probe_kernel(lu, a, n)
    elif method == "iterative":
        scale = float(abs(L.action).max())
        m = _block_preconditioner(L, 1e-3 * scale)
        x, info = spla.gmres(a, rhs, M=m, rtol=tol, restart=200, maxiter=maxiter)
        if info != 0:
            raise SolverError(f"GMRES did not converge (info={info})")
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(x)):
        raise DegenerateKernelError("steady-state solve produced non-finite values")
    resid = float(np.linalg.norm(L.action @ x) / np.linalg.norm(x))
    state = AdoState(L.space, L.op_dim, x)
    state.info = {"residual": resid, "method": method,
                  "wall": _time.perf_counter() - start}
    log.info("steady state (%s): residual %.2e", method, resid)
    return state


def _probe_kernel(lu, a, n, iters=3, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    for _ in range(iters):
        z = z / np.linalg.norm(z)
        y = lu.solve(z)
        gain = np.linalg.norm(y)
        if not np.isfinite(gain):
            raise DegenerateKernelError("second null vector found (non-finite solve)")
        z = y
    norm = spla.norm(a, 1)
    if 1.0 / gain < 1e-11 * norm:
        raise DegenerateKernelError(
            f"near-singular constrained generator: sigma_min ~ {1.0 / gain:.2e}")


# -- correlation functions ------------------------------------------------------

def operator_parity(op, parity_op) -> str:
    """``"even"`` or ``"odd"`` for an operator with definite fermion parity."""
    if parity_op is None:
        return "even"
    p = to_dense(parity_op)
    o = to_dense(op)
    q = p @ o @ p
    if np.allclose(q, o, atol=1e-12):
        return "even"
    if np.allclose(q, -o, atol=1e-12):
        return "odd"
    raise ValueError("operator has no definite fermion parity")


def lift_left(b, state: AdoState, odd: bool = False) -> AdoState:
    """Apply ``b`` from the left to every ADO.

    For an odd operand ADOs on odd levels change sign, which keeps the
    odd-parity generator consistent with the even one.
    """
    bd = to_dense(b)
    d = state.op_dim
    blk = state.blocks()  # blk[i] = rho_i^T
    out = blk @ bd.T      # (b rho)^T = rho^T b^T
    if odd:
        sign = np.where(state.space.levels % 2 == 1, -1.0, 1.0)
        out = out * sign[:, None, None]
    return AdoState(state.space, d, out.reshape(-1))


def _prepare(L, rho_ss, b, parity):
    if parity is None:
        parity = operator_parity(b, L.build.get("parity_op"))
    odd = parity == "odd"
    return L.with_parity(parity), lift_left(b, rho_ss, odd)


def two_time(L: HeomLiouvillian, rho_ss: AdoState, a, b, times,
             parity: str | None = None, **kw) -> np.ndarray:
    """``<a(t) b(0)>`` in the state ``rho_ss`` by the regression theorem.

    ``b`` is applied to the whole hierarchy, the result propagated with
    the generator of matching fermion parity, and ``tr(a rho^0(t))``
    returned. Extra keyword arguments go to :func:`evolve`.
    """
    l_use, x0 = _prepare(L, rho_ss, b, parity)
    traj = evolve(l_use, x0, times, keep="top", **kw)
    return traj.expect(a)


@dataclass
class Spectrum:
    omega: np.ndarray
    dos: np.ndarray
    sum_rule: float
    info: dict = field(default_factory=dict)


def _fourier_half(t, g, omega, eta):
    # int_0^T e^{(i w - eta) t} g(t) dt with g linear between samples
    t = np.asarray(t)
    z = 1j * omega[:, None] - eta
    g = np.asarray(g)
    dt = np.diff(t)
    e0 = np.exp(z * t[None, :-1])
    e1 = np.exp(z * t[None, 1:])
    g0, g1 = g[:-1], g[1:]
    small = np.abs(z * dt[None, :]) < 1e-4
    with np.errstate(divide="ignore", invalid="ignore"):
        i0 = (e1 - e0) / z
        i1 = (e1 * dt[None, :] - i0) / z  # int (t - t0) e^{z t}
    # Taylor fallback for tiny |z dt|
    i0 = np.where(small, e0 * dt * (1 + z * dt / 2), i0)
    i1 = np.where(small, e0 * dt**2 * (0.5 + z * dt / 3), i1)
    return np.sum(g0 * i0 + (g1 - g0) / dt * i1, axis=1)


def density_of_states(L: HeomLiouvillian, rho_ss: AdoState, s, omega, t_max: float,
                      eta: float | None = None, n_t: int | None = None,
                      method: str = "time", **kw) -> Spectrum:
    """Impurity spectral function

        A(w) = (2/pi) Re int_0^tmax e^{i w t - eta t} F(t) dt,
        F(t) = <s(t) s^+> + conj(<s^+(t) s>),

    normalized so that ``int A dw = 2``.

    Parameters
    ----------
    s : ComplexOperator
        Annihilation operator of the impurity orbital.
    omega : array_like
        Frequency grid; the reported sum rule integrates over it.
    t_max : float
        Propagation time.
    eta : float, optional
        Exponential window, default ``2 pi / t_max``.
    n_t : int, optional
        Time samples, default resolving ``max |omega|`` and ``t_max``.
    method : {"time", "resolvent"}
        ``"resolvent"`` solves ``(L + i w - eta) y = -x`` per frequency
        (small systems; used as a cross-check).
    """
    omega = np.asarray(omega, dtype=float)
    eta = 2 * np.pi / t_max if eta is None else eta
    sd = dag(s)
    if method == "time":
        if n_t is None:
            wmax = max(np.max(np.abs(omega)), 1.0)
            n_t = int(max(2000, 8 * wmax * t_max / np.pi)) + 1
        times = np.linspace(0.0, t_max, n_t)
        g1 = two_time(L, rho_ss, s, sd, times, **kw)
        g2 = two_time(L, rho_ss, sd, s, times, **kw)
        f = g1 + np.conj(g2)
        vals = _fourier_half(times, f, omega, eta)
        info = {"t_max": t_max, "eta": eta, "n_t": n_t, "F0": complex(f[0])}
    elif method == "resolvent":
        vals = np.zeros(len(omega), dtype=complex)
        for a_op, b_op, conj in ((s, sd, False), (sd, s, True)):
            l_use, x0 = _prepare(L, rho_ss, b_op, None)
            av = np.zeros(L.n_rows, dtype=complex)
            d = L.op_dim
            av[: d * d] = vec(to_dense(a_op).T)  # tr(a X) = vec(a^T) . vec(X)
            eye = sp.identity(L.n_rows, format="csc", dtype=complex)
            for i, w in enumerate(omega):
                zz = (-1j * w - eta) if conj else (1j * w - eta)
                y = spla.spsolve((l_use.action + zz * eye).tocsc(), -x0.data)
                val = av @ y
                vals[i] += np.conj(val) if conj else val
        info = {"eta": eta}
    else:
        raise ValueError(f"unknown method {method!r}")
    dos = (2.0 / np.pi) * vals.real
    total = float(integrate.trapezoid(dos, omega)) if len(omega) > 1 else float("nan")
    return Spectrum(omega, dos, total, info)


# -- Lindblad baseline --------------------------------------------------------

def _rate(j: SpectralDensity, spec: BathSpec, w: float, emission: bool) -> float:
    jw = float(j(w))
    if jw == 0.0:
        return 0.0
    if spec.fermionic:
        occ = float(spec.occupation(w))
        return jw * (1 - occ if emission else occ)
    if w <= 0:
        return 0.0
    occ = float(spec.occupation(w))
    return jw * (1 + occ if emission else occ)


def jump_operators(h, x_ops, j1: SpectralDensity, spec: BathSpec, atol: float = 1e-9):
    """Eigenbasis jump operators ``(rate, L)``.

    For each annihilation-type ``X`` in ``x_ops`` and for ``X^+``,
    transitions ``|n> -> |m>`` are grouped by the energy
    ``w = E_n - E_m`` handed to the bath. ``X`` (emission) uses
    ``J(w)(1 -+ n(w))``; ``X^+`` (absorption, energy ``-w``) uses
    ``J(-w) n(-w)``.
    """
    e, v = np.linalg.eigh(to_dense(h))
    out = []
    for x in x_ops:
        for op, emission in ((to_dense(x), True), (to_dense(dag(x)), False)):
            xe = v.conj().T @ op @ v
            m_idx, n_idx = np.nonzero(np.abs(xe) > atol)
            if m_idx.size == 0:
                continue
            w = e[n_idx] - e[m_idx]
            key = np.round(w / atol) * atol
            groups = {}
            for mi, ni, kk in zip(m_idx, n_idx, key):
                groups.setdefault(kk, []).append((mi, ni))
            degenerate = sum(len(g) > 1 for g in groups.values())
            if degenerate:
                log.debug("jump operators: %d degenerate transition groups", degenerate)
            for kk, pairs in groups.items():
                energy = float(np.mean([e[ni] - e[mi] for mi, ni in pairs]))
                rate = _rate(j1, spec, energy if emission else -energy, emission)
                if rate <= 0:
                    continue
                le = np.zeros_like(xe)
                for mi, ni in pairs:
                    le[mi, ni] = xe[mi, ni]
                out.append((rate, v @ le @ v.conj().T))
    return out


def lindblad_rcme(h, x_ops, j1: SpectralDensity, spec: BathSpec,
                  parity: str = "even", parity_op=None) -> HeomLiouvillian:
    """Secular Born-Markov generator ``-i[H,.] + sum_k g_k D[L_k]``.

    Returned as a single-ADO :class:`HeomLiouvillian`. For an odd
    operand (fermionic two-time functions) the ``L rho L^+`` term of each
    odd jump operator changes sign.
    """
    d = h.shape[0]
    jumps = jump_operators(h, x_ops, j1, spec)
    sign = -1.0 if (parity == "odd" and spec.fermionic) else 1.0
    action = commutator_super(h).astype(complex)
    for rate, lk in jumps:
        ls = sp.csr_matrix(lk)
        ll = ls.conj().T @ ls
        action = action + rate * (sign * (left_mult(ls) @ right_mult(ls.conj().T))
                                  - 0.5 * (left_mult(ll) + right_mult(ll)))
    action = sp.csr_matrix(action)
    action.eliminate_zeros()

    def rebuild(p):
        return lindblad_rcme(h, x_ops, j1, spec, parity=p, parity_op=parity_op)

    build = {"fermionic": spec.fermionic, "rebuild": rebuild, "h": h,
             "parity_op": parity_op, "jumps": jumps}
    return HeomLiouvillian(enumerate_ados(0, 0, "boson"), d, action, parity,
                           "lindblad", build)


__all__ = ["AdoState", "Trajectory", "evolve", "steady_state", "two_time",
           "density_of_states", "lindblad_rcme", "jump_operators", "lift_left",
           "Spectrum", "SolverError", "IntegrationError", "DegenerateKernelError",
           "dissipator"]
