"""Impurity and spin-boson model builders.

Each :class:`ModelSpec` combines a system variant, a bath (spectral
density plus statistics) and a method:

``heomstar``
    HEOM on the original system with the bath ``J0``.
``rcheom``
    Reaction-coordinate mapping; the RC joins the system and its residual
    bath ``J1`` is treated by HEOM.
``rcme``
    Reaction-coordinate mapping with a secular Lindblad treatment of the
    residual bath.

Fermionic modes follow the order (imp1 up, imp1 down, imp2 up, imp2 down,
RC up, RC down), truncated to the modes present.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .baths import (BathSpec, Lorentzian, RCParameters, SoftCutoff, SpectralDensity,
                    UnderdampedBrownian, decompose_bose, decompose_fermi, rc_map)
from .hierarchy import Coupling, assemble, ado_count, enumerate_ados
from .operators import (boson_annihilator, dag, fermion_modes, fermion_parity,
                        hermiticity_error, identity, tensor_product)
from .solver import lindblad_rcme

log = logging.getLogger(__name__)

METHODS = ("heomstar", "rcheom", "rcme")


class ModelError(ValueError):
    """Inconsistent model specification."""


@dataclass(frozen=True)
class SIAM:
    eps: float
    U: float
    n_impurities = 1


@dataclass(frozen=True)
class TIAM:
    eps1: float
    eps2: float
    U1: float
    U2: float
    n_impurities = 2


@dataclass(frozen=True)
class SpinBosonRWA:
    wq: float
    delta: float = 0.0
    rc_fock_cutoff: int = 4


@dataclass(frozen=True)
class ModelSpec:
    """Full model description.

    Parameters
    ----------
    variant : SIAM, TIAM or SpinBosonRWA
    bath : SpectralDensity
        Original spectral density ``J0``.
    spec : BathSpec
    method : {"heomstar", "rcheom", "rcme"}
    tier : int
        Hierarchy depth.
    n_exp : int
        Fermionic Pade terms per channel and process.
    fit_tol : float
        Bosonic AAA tolerance.
    cutoff : float, optional
        Width of the Lorentzian cutoff on the flat fermionic residual
        (default ``100 W``) or, for bosons, an optional high-frequency
        cutoff applied to ``J1``.
    bose : dict
        Extra keyword arguments for :func:`rcheom.baths.decompose_bose`.
    """

    variant: object
    bath: SpectralDensity
    spec: BathSpec
    method: str = "rcheom"
    tier: int = 2
    n_exp: int = 2
    fit_tol: float = 1e-4
    cutoff: float | None = None
    bose: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ModelError(f"method must be one of {METHODS}, got {self.method!r}")
        bosonic = isinstance(self.variant, SpinBosonRWA)
        if bosonic and self.spec.fermionic:
            raise ModelError("SpinBosonRWA requires bosonic statistics")
        if not bosonic and not self.spec.fermionic:
            raise ModelError(f"{type(self.variant).__name__} requires fermionic statistics")
        if bosonic and self.variant.rc_fock_cutoff < 2:
            raise ModelError("RC Fock cutoff must be at least 2")
        if self.tier < 0 or self.n_exp < 1:
            raise ModelError("tier must be >= 0 and n_exp >= 1")

    def with_(self, **kw) -> "ModelSpec":
        return replace(self, **kw)

    @property
    def channels(self) -> int:
        return 1 if isinstance(self.variant, SpinBosonRWA) else 2

    def fermionic_K(self) -> int:
        """Label count ``channels * 2 * (n_exp + 1)`` (fermions only)."""
        return self.channels * 2 * (self.n_exp + 1)

    def op_dim(self) -> int:
        v = self.variant
        if isinstance(v, SpinBosonRWA):
            return 2 if self.method == "heomstar" else 2 * v.rc_fock_cutoff
        modes = 2 * v.n_impurities + (0 if self.method == "heomstar" else 2)
        return 2**modes


@dataclass
class BuiltModel:
    """Generator inputs produced by :func:`build`."""

    spec: ModelSpec
    h: object
    couplings: list
    op_dim: int
    rho0: np.ndarray
    ops: dict
    parity_op: object = None
    rc: RCParameters | None = None
    x_ops: list = field(default_factory=list)
    residual: SpectralDensity | None = None
    _space: object = None

    @property
    def K(self) -> int:
        return sum(2 * len(c.plus) for c in self.couplings)

    @property
    def stats(self) -> str:
        return self.spec.spec.statistics

    def space(self):
        if self._space is None:
            tier = 0 if self.spec.method == "rcme" else self.spec.tier
            self._space = enumerate_ados(self.K if tier else 0, tier, self.stats)
        return self._space

    def n_ados(self) -> int:
        if self.spec.method == "rcme":
            return 1
        return ado_count(self.K, self.spec.tier, self.stats)

    def rows(self) -> int:
        return self.op_dim**2 * self.n_ados()

    def liouvillian(self, parity: str = "even"):
        if self.spec.method == "rcme":
            return lindblad_rcme(self.h, self.x_ops, self.residual, self.spec.spec,
                                 parity=parity, parity_op=self.parity_op)
        if self.spec.tier == 0:
            return assemble(self.h, [], self.space(), parity=parity, parity_op=self.parity_op)
        return assemble(self.h, self.couplings, self.space(), parity=parity,
                        parity_op=self.parity_op)

    def initial_state(self):
        from .solver import AdoState
        tier = 0 if self.spec.method == "rcme" else self.spec.tier
        space = self.space() if tier else enumerate_ados(0, 0, self.stats)
        return AdoState.from_top(self.rho0, space)


def _thermal_mode_pair(energy, spec: BathSpec):
    """Two-mode (up, down) thermal state of an isolated fermionic level."""
    n = float(spec.occupation(energy))
    single = np.diag([1 - n, n]).astype(complex)
    return np.kron(single, single)


def _fermi_series(j, spec, n_exp):
    return decompose_fermi(j, spec, n_exp)


def build(ms: ModelSpec) -> BuiltModel:
    """Hamiltonian, couplings and initial state for ``ms``."""
    if isinstance(ms.variant, SpinBosonRWA):
        return _build_boson(ms)
    return _build_fermion(ms)


def _build_fermion(ms: ModelSpec) -> BuiltModel:
    v = ms.variant
    n_imp = v.n_impurities
    rc = ms.method != "heomstar"
    n_modes = 2 * n_imp + (2 if rc else 0)
    c = fermion_modes(n_modes)
    num = [dag(x) @ x for x in c]
    if isinstance(v, SIAM):
        eps, us = [v.eps], [v.U]
    else:
        eps, us = [v.eps1, v.eps2], [v.U1, v.U2]
    h = 0 * num[0]
    for a in range(n_imp):
        up, dn = num[2 * a], num[2 * a + 1]
        h = h + eps[a] * (up + dn) + us[a] * (up @ dn)
    # per-spin bath-coupled operator s_sigma (sum over impurities)
    s_ops = [sum(c[2 * a + sig] for a in range(n_imp)) for sig in (0, 1)]
    ops = {f"d{a + 1}{'ud'[sig]}": c[2 * a + sig] for a in range(n_imp) for sig in (0, 1)}
    ops["parity"] = fermion_parity(n_modes)
    rho_sys = np.zeros((4**n_imp, 4**n_imp), dtype=complex)
    rho_sys[0, 0] = 1.0  # impurities empty
    params = residual = None
    x_ops = []
    if not rc:
        series = _fermi_series(ms.bath, ms.spec, ms.n_exp)
        couplings = [Coupling(s_ops[sig], *series, tag=f"s{'ud'[sig]}") for sig in (0, 1)]
        rho0 = rho_sys
    else:
        params = rc_map(ms.bath, cutoff=ms.cutoff)
        lam = params.lambda0
        c_rc = [c[2 * n_imp], c[2 * n_imp + 1]]
        for sig in (0, 1):
            hop = lam * dag(c_rc[sig]) @ s_ops[sig]
            h = h + hop + dag(hop) + params.E1 * dag(c_rc[sig]) @ c_rc[sig]
        residual = params.residual
        ops.update({"c_rc_u": c_rc[0], "c_rc_d": c_rc[1]})
        rho0 = np.kron(rho_sys, _thermal_mode_pair(params.E1, ms.spec))
        x_ops = c_rc
        couplings = []
        if ms.method == "rcheom":
            series = _fermi_series(residual, ms.spec, ms.n_exp)
            couplings = [Coupling(c_rc[sig], *series, tag=f"rc{'ud'[sig]}") for sig in (0, 1)]
    err = hermiticity_error(h)
    if err > 1e-12:
        raise ModelError(f"Hamiltonian not Hermitian (error {err:.2e})")
    return BuiltModel(ms, h, couplings, h.shape[0], rho0, ops, ops["parity"], params,
                      x_ops, residual)


def _build_boson(ms: ModelSpec) -> BuiltModel:
    v = ms.variant
    sz = np.diag([1.0, -1.0]).astype(complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sm = np.array([[0, 0], [1, 0]], dtype=complex)  # |g><e|, excited state first
    h_sys = v.wq / 2 * sz + v.delta / 2 * sx
    rho_g = np.diag([0.0, 1.0]).astype(complex)
    ops = {"sigma_minus": sm, "excited": np.diag([1.0, 0.0]).astype(complex)}
    params = residual = None
    x_ops = []
    if ms.method == "heomstar":
        plus, minus = decompose_bose(ms.bath, ms.spec, ms.fit_tol, **ms.bose)
        couplings = [Coupling(sm, plus, minus, tag="qubit")]
        return BuiltModel(ms, h_sys, couplings, 2, rho_g, ops)
    params = rc_map(ms.bath)
    n = v.rc_fock_cutoff
    b = boson_annihilator(n)
    i2, i_rc = identity(2), identity(n)
    s_full = tensor_product(sm, i_rc)
    b_full = tensor_product(i2, b)
    hop = params.lambda0 * s_full @ dag(b_full)
    h = (tensor_product(h_sys, i_rc) + hop + dag(hop)
         + params.E1 * dag(b_full) @ b_full)
    occ = float(ms.spec.occupation(params.E1))
    weights = (occ / (1 + occ)) ** np.arange(n)
    rho_rc = np.diag(weights / weights.sum()).astype(complex)
    rho0 = np.kron(rho_g, rho_rc)
    residual = params.residual
    if ms.cutoff is not None:
        residual = SoftCutoff(residual, ms.cutoff)
    ops = {"sigma_minus": s_full, "excited": tensor_product(ops["excited"], i_rc),
           "b_rc": b_full}
    x_ops = [b_full]
    couplings = []
    if ms.method == "rcheom":
        plus, minus = decompose_bose(residual, ms.spec, ms.fit_tol, **ms.bose)
        couplings = [Coupling(b_full, plus, minus, tag="rc")]
    err = hermiticity_error(h)
    if err > 1e-12:
        raise ModelError(f"Hamiltonian not Hermitian (error {err:.2e})")
    return BuiltModel(ms, h, couplings, h.shape[0], rho0, ops, None, params, x_ops, residual)


# -- example parameter sets -----------------------------------------------------

#: (n_exp, tier) per temperature for example 1, by method.
EXAMPLE1_SETTINGS = {
    "rcheom": {2.5: (2, 2), 0.5: (4, 3), 0.1: (4, 4)},
    "heomstar": {2.5: (2, 2), 0.5: (4, 3), 0.1: (4, 3)},
    "rcme": {2.5: (2, 0), 0.5: (2, 0), 0.1: (2, 0)},
}


def default_parameters(example: int, method: str = "rcheom", **overrides) -> ModelSpec:
    """Parameter sets of the three worked examples.

    1. Single impurity, energies in units of the hybridization ``Gamma``:
       ``W = 1.25``, ``mu = 0``, ``U = 3 pi/2``, ``eps = -U/2``,
       ``k_B T = 2.5`` (also 0.5 and 0.1 via ``temperature=``).
    2. Two impurities, units of the bath width ``W``: ``Gamma = 20``,
       ``k_B T = 5``, ``eps1 = -2``, ``eps2 = -1``, ``U1 = U2 = 10``.
    3. Spin-boson RWA, units of ``w0``: ``gamma = lam = 0.05``,
       ``k_B T = 0.5``, ``wq = 1``, ``Delta = 0``, RC cutoff 4; the residual
       density gets a soft cutoff at ``20 w0``.
    """
    temperature = overrides.pop("temperature", None)
    if example == 1:
        t = 2.5 if temperature is None else temperature
        u = 3 * math.pi / 2
        n_exp, tier = EXAMPLE1_SETTINGS[method].get(t, (4, 3))
        ms = ModelSpec(SIAM(-u / 2, u), Lorentzian(1.0, 0.0, 1.25),
                       BathSpec("fermion", 1.0 / t, 0.0), method, tier, n_exp)
    elif example == 2:
        t = 5.0 if temperature is None else temperature
        n_exp, tier = {"rcheom": (6, 2), "heomstar": (2, 5), "rcme": (2, 0)}[method]
        ms = ModelSpec(TIAM(-2.0, -1.0, 10.0, 10.0), Lorentzian(20.0, 0.0, 1.0),
                       BathSpec("fermion", 1.0 / t, 0.0), method, tier, n_exp)
    elif example == 3:
        t = 0.5 if temperature is None else temperature
        tier = {"rcheom": 2, "heomstar": 3, "rcme": 0}[method]
        fit_tol = 1e-5 if method == "heomstar" else 5e-5
        ms = ModelSpec(SpinBosonRWA(1.0, 0.0, 4), UnderdampedBrownian(0.05, 0.05, 1.0),
                       BathSpec("boson", 1.0 / t), method, tier, 1, fit_tol, cutoff=20.0)
    else:
        raise ValueError("example must be 1, 2 or 3")
    return ms.with_(**overrides) if overrides else ms


__all__ = ["SIAM", "TIAM", "SpinBosonRWA", "ModelSpec", "BuiltModel", "build",
           "default_parameters", "ModelError", "METHODS"]
