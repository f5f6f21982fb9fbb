"""AAA barycentric rational approximation.

Greedy algorithm of Nakatsukasa, Sete and Trefethen (SIAM J. Sci.
Comput. 40, A1494 (2018)). The fit is returned as a
:class:`BarycentricRational` from which poles, residues and zeros follow
by the generalized eigenvalue construction.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BarycentricRational:
    """``r(z) = sum_j w_j f_j/(z - z_j) / sum_j w_j/(z - z_j)``."""

    support_points: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    error: float = 0.0
    converged: bool = True
    history: list = field(default_factory=list, compare=False)

    def __len__(self):
        return len(self.support_points)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        zz = z.reshape(-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cauchy = 1.0 / (zz[:, None] - self.support_points[None, :])
            r = (cauchy @ (self.weights * self.values)) / (cauchy @ self.weights)
        # exact values at support points
        hit_i, hit_j = np.nonzero(zz[:, None] == self.support_points[None, :])
        r[hit_i] = self.values[hit_j]
        return r.reshape(z.shape)

    def value_at_infinity(self) -> complex:
        return complex(np.sum(self.weights * self.values) / np.sum(self.weights))

    def _roots(self, coef):
        m = len(self.support_points)
        if m < 2:
            return np.zeros(0, dtype=complex)
        e = np.zeros((m + 1, m + 1), dtype=complex)
        e[0, 1:] = coef
        e[1:, 0] = 1.0
        e[1:, 1:] = np.diag(self.support_points)
        b = np.eye(m + 1, dtype=complex)
        b[0, 0] = 0.0
        ev = sla.eigvals(e, b)
        return ev[np.isfinite(ev)]

    def poles(self) -> np.ndarray:
        return self._roots(self.weights)

    def zeros(self) -> np.ndarray:
        return self._roots(self.weights * self.values)

    def residues(self, poles=None) -> np.ndarray:
        """Residues at ``poles`` via ``N(p)/D'(p)``."""
        p = self.poles() if poles is None else np.asarray(poles, dtype=complex)
        d = p[:, None] - self.support_points[None, :]
        num = (1.0 / d) @ (self.weights * self.values)
        dden = -(1.0 / d**2) @ self.weights
        return num / dden

    def to_dict(self) -> dict:
        pair = lambda a: [[float(x.real), float(x.imag)] for x in a]
        return {"support_points": pair(self.support_points),
                "values": pair(self.values), "weights": pair(self.weights),
                "error": self.error, "converged": self.converged}

    @classmethod
    def from_dict(cls, d):
        arr = lambda k: np.array([complex(*p) for p in d[k]])
        return cls(arr("support_points"), arr("values"), arr("weights"),
                   d.get("error", 0.0), d.get("converged", True))


def _weights(z, f, zj, fj):
    cauchy = 1.0 / (z[:, None] - zj[None, :])
    loewner = (f[:, None] - fj[None, :]) * cauchy
    _, _, vh = np.linalg.svd(loewner, full_matrices=False)
    return vh[-1].conj(), cauchy


def aaa_fit(z, f, tol: float = 1e-13, max_terms: int = 100, *,
            initial=(), cleanup: bool = True) -> BarycentricRational:
    """Greedy AAA rational fit of samples ``f`` at points ``z``.

    Parameters
    ----------
    z, f : array_like
        Sample points (distinct) and values.
    tol : float
        Stop when ``max |f - r|`` over the samples falls below
        ``tol * max |f|``.
    max_terms : int
        Maximum number of support points.
    initial : sequence of int, optional
        Sample indices forced into the support set first, which makes
        ``r`` interpolate there exactly.
    cleanup : bool
        Remove Froissart doublets (poles with negligible residue) and
        refit once.

    Returns
    -------
    BarycentricRational
        ``converged`` is False if ``max_terms`` was hit above ``tol``.
    """
    z = np.asarray(z, dtype=complex).ravel()
    f = np.asarray(f, dtype=complex).ravel()
    if z.shape != f.shape:
        raise ValueError("z and f must have the same length")
    if len(np.unique(z)) < 2:
        raise ValueError("need at least two distinct sample points")
    scale = np.max(np.abs(f)) or 1.0
    mask = np.ones(len(z), dtype=bool)
    r = np.full_like(f, np.mean(f))
    chosen, hist = [], []
    forced = list(initial)
    w = np.ones(1, dtype=complex)
    err = np.inf
    for _ in range(max_terms):
        j = forced.pop(0) if forced else int(np.argmax(np.where(mask, np.abs(f - r), -1)))
        chosen.append(j)
        mask[j] = False
        zj, fj = z[chosen], f[chosen]
        if not mask.any():
            w = np.ones(len(chosen), dtype=complex) / len(chosen)
            err = 0.0
            break
        w, cauchy = _weights(z[mask], f[mask], zj, fj)
        r = f.copy()
        r[mask] = (cauchy @ (w * fj)) / (cauchy @ w)
        err = float(np.max(np.abs(f - r)))
        hist.append(err)
        if err <= tol * scale and not forced:
            break
    fit = BarycentricRational(z[chosen], f[chosen], w, err, err <= tol * scale, hist)
    if cleanup and len(fit) > 1:
        fit = _cleanup(fit, z, f, tol * scale)
    if not fit.converged:
        log.warning("AAA stopped at %d terms with residual %.3e", len(fit), fit.error)
    return fit


def _cleanup(fit, z, f, abstol):
    poles = fit.poles()
    if poles.size == 0:
        return fit
    res = fit.residues(poles)
    spurious = np.abs(res) < 1e-13 * np.max(np.abs(f))
    if not spurious.any():
        return fit
    keep = np.ones(len(fit), dtype=bool)
    for p in poles[spurious]:
        keep[np.argmin(np.abs(fit.support_points - p))] = False
    log.info("AAA cleanup removed %d spurious poles", int(spurious.sum()))
    zj, fj = fit.support_points[keep], fit.values[keep]
    mask = ~np.isin(z, zj)
    w, cauchy = _weights(z[mask], f[mask], zj, fj)
    r = (cauchy @ (w * fj)) / (cauchy @ w)
    err = float(np.max(np.abs(f[mask] - r)))
    return BarycentricRational(zj, fj, w, err, err <= abstol, fit.history)
