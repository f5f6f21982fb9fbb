"""Thermal occupation factors and their [N-1/N] Pade pole expansions.

The expansions have the form

    f(x) = 1/(e^x + 1) ~ 1/2 - sum_j 2 kappa_j x / (x^2 + xi_j^2)
    n(x) = 1/(e^x - 1) ~ 1/x - 1/2 + sum_j 2 kappa_j x / (x^2 + xi_j^2)

with ``x = beta (omega - mu)``. Poles ``xi_j`` and residues ``kappa_j``
come from the tridiagonal eigenvalue construction of Hu, Xu and Yan
(J. Chem. Phys. 133, 101106 (2010)).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def fermi(x):
    """Fermi-Dirac factor ``1/(e^x+1)``, overflow-safe, complex allowed."""
    return 0.5 * (1.0 - np.tanh(np.asarray(x) / 2.0))


def bose(x):
    """Bose-Einstein factor ``1/(e^x-1)`` for real ``x != 0``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x > 0
    e = np.exp(-x[pos])
    out[pos] = e / (-np.expm1(-x[pos]))
    out[~pos] = 1.0 / np.expm1(x[~pos])
    return out if out.ndim else float(out)


def _poles(b):
    # positive roots 2/eig of the tridiagonal matrix with 1/sqrt(b_m b_{m+1})
    off = 1.0 / np.sqrt(b[:-1] * b[1:])
    mat = np.diag(off, 1) + np.diag(off, -1)
    ev = np.linalg.eigvalsh(mat)
    ev = ev[ev > 1e-10 * np.abs(ev).max()]
    return np.sort(2.0 / ev)


@lru_cache(maxsize=None)
def _psd(n_terms: int, boson: bool):
    if n_terms < 1:
        return np.zeros(0), np.zeros(0)
    m = np.arange(1, 2 * n_terms + 2, dtype=float)
    b = 2 * m + 1 if boson else 2 * m - 1
    xi = _poles(b[: 2 * n_terms])
    chi = _poles(b[1: 2 * n_terms]) if n_terms > 1 else np.zeros(0)
    kappa = np.empty(n_terms)
    pref = n_terms * b[n_terms] / 2.0
    for j in range(n_terms):
        # products of many large factors: accumulate in log space
        num = chi**2 - xi[j] ** 2
        den = np.delete(xi, j) ** 2 - xi[j] ** 2
        sign = np.prod(np.sign(num)) * np.prod(np.sign(den))
        kappa[j] = sign * pref * np.exp(np.sum(np.log(np.abs(num))) - np.sum(np.log(np.abs(den))))
    return kappa, xi


def fermi_pade(n_terms: int):
    """Residues ``kappa`` and poles ``xi`` of the Fermi [N-1/N] expansion."""
    kappa, xi = _psd(int(n_terms), False)
    return kappa.copy(), xi.copy()


def bose_pade(n_terms: int):
    """Residues ``kappa`` and poles ``xi`` of the Bose [N-1/N] expansion."""
    kappa, xi = _psd(int(n_terms), True)
    return kappa.copy(), xi.copy()


def fermi_approx(x, n_terms: int):
    """Evaluate the Pade-approximated Fermi factor (complex ``x`` allowed)."""
    kappa, xi = fermi_pade(n_terms)
    x = np.asarray(x, dtype=complex)
    s = sum(2 * k * x / (x**2 + p**2) for k, p in zip(kappa, xi))
    return 0.5 - s


def bose_approx(x, n_terms: int):
    """Evaluate the Pade-approximated Bose factor (complex ``x`` allowed)."""
    kappa, xi = bose_pade(n_terms)
    x = np.asarray(x, dtype=complex)
    s = sum(2 * k * x / (x**2 + p**2) for k, p in zip(kappa, xi))
    return 1.0 / x - 0.5 + s
