"""Physical quantities extracted from system and system+RC density operators.

Basis convention: occupation bits follow the fermionic mode order
(impurity 1 up, impurity 1 down, impurity 2 up, impurity 2 down, RC up,
RC down) with the first mode as the most significant bit.  Basis kets are
``(c_0^+)^{n_0} (c_1^+)^{n_1} ... |vac>`` so every basis vector carries a
plus sign and matrix elements are read off directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operators import to_dense


class ObservableError(ValueError):
    pass


def _dense(rho, dims=None, name="rho"):
    r = to_dense(rho)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ObservableError(f"{name} must be a square matrix")
    if dims is not None and r.shape[0] not in dims:
        raise ObservableError(f"{name} has dimension {r.shape[0]}, expected one of {dims}")
    return r


def occupation_label(index: int, n_modes: int, names=None) -> str:
    """Human-readable ket label, e.g. ``'1u,2d'`` or ``'vac'``."""
    if names is None:
        names = ["1u", "1d", "2u", "2d", "RCu", "RCd"][:n_modes]
    occ = [names[m] for m in range(n_modes) if (index >> (n_modes - 1 - m)) & 1]
    return ",".join(occ) or "vac"


def partial_trace_rc(rho, sys_dim: int):
    """Trace out the fastest (RC) factor of a system+RC operator."""
    r = _dense(rho)
    rc = r.shape[0] // sys_dim
    if rc * sys_dim != r.shape[0]:
        raise ObservableError("operator dimension is not a multiple of sys_dim")
    return np.einsum("iaja->ij", r.reshape(sys_dim, rc, sys_dim, rc))


# -- singlet fraction ----------------------------------------------------------

def singlet_vector() -> np.ndarray:
    """``(|imp up, RC down> - |imp down, RC up>)/sqrt 2`` in the dim-16 space."""
    phi = np.zeros(16)
    phi[0b1001] = 1.0 / math.sqrt(2)
    phi[0b0110] = -1.0 / math.sqrt(2)
    return phi


def singlet_fraction(rho_sysrc) -> float:
    """Overlap ``<phi|rho|phi>`` of an impurity+RC state with the spin singlet.

    Parameters
    ----------
    rho_sysrc : ComplexOperator
        Density operator on (impurity up, impurity down, RC up, RC down).
    """
    r = _dense(rho_sysrc, (16,), "rho_sysrc")
    phi = singlet_vector()
    return float(np.real(phi @ r @ phi))


# -- coherences ------------------------------------------------------------------

@dataclass(frozen=True)
class CoherenceReport:
    """l1 norm of coherence and the off-diagonal elements it sums."""

    l1: float
    elements: dict = field(default_factory=dict)

    def largest(self, n=5):
        items = sorted(self.elements.items(), key=lambda kv: -abs(kv[1]))
        return items[:n]


def l1_coherence(rho_sys, names=None) -> CoherenceReport:
    """``l1 = sum_{i != j} |rho_ij|`` in the local occupation basis."""
    r = _dense(rho_sys)
    d = r.shape[0]
    n_modes = int(round(math.log2(d))) if d > 1 else 0
    labels = ([occupation_label(i, n_modes, names) for i in range(d)]
              if 2 ** n_modes == d else [str(i) for i in range(d)])
    elements = {}
    l1 = 0.0
    for i, j in zip(*np.nonzero(~np.eye(d, dtype=bool))):
        v = complex(r[i, j])
        l1 += abs(v)
        if v != 0:
            elements[(labels[i], labels[j])] = v
    return CoherenceReport(l1, elements)


#: (bra, ket) indices of the one-fermion coherences in the two-impurity space.
#: ``C_rev = <vac, 2u| rho |1u, vac>``.
OF_INDICES = {
    "up": (0b0010, 0b1000),
    "up_conj": (0b1000, 0b0010),
    "down": (0b0001, 0b0100),
    "down_conj": (0b0100, 0b0001),
}


def of_coherences(rho_sys) -> dict:
    """The four one-fermion coherences of a two-impurity state.

    Returns a dict with keys ``up`` (which is ``C_rev``), ``up_conj``,
    ``down`` and ``down_conj``.
    """
    r = _dense(rho_sys, (16,), "rho_sys")
    return {k: complex(r[i, j]) for k, (i, j) in OF_INDICES.items()}


def c_rev(rho_sys) -> complex:
    return of_coherences(rho_sys)["up"]


def rc_resolved(rho_sysrc) -> tuple:
    """Split ``C_rev`` by the RC occupation.

    Returns ``(C_vac, C_up, C_down, C_updown)``; their sum is ``C_rev`` of
    the RC-traced state.
    """
    r = _dense(rho_sysrc, (64,), "rho_sysrc")
    i, j = OF_INDICES["up"]
    # RC occupation bits (RC up, RC down): vac=00, down=01, up=10, both=11
    comp = {rc: complex(r[4 * i + rc, 4 * j + rc]) for rc in range(4)}
    return comp[0], comp[2], comp[1], comp[3]


def interference_factor(components) -> float:
    """``I = |sum c| / sum |c|``; NaN when every component vanishes."""
    c = np.asarray(components, dtype=complex)
    denom = float(np.sum(np.abs(c)))
    if denom == 0.0:
        return float("nan")
    return min(1.0, abs(complex(np.sum(c))) / denom)


__all__ = ["ObservableError", "CoherenceReport", "singlet_fraction", "singlet_vector",
           "l1_coherence", "of_coherences", "c_rev", "rc_resolved",
           "interference_factor", "partial_trace_rc", "occupation_label", "OF_INDICES"]
