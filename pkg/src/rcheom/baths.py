"""Bath spectral densities, reaction-coordinate mapping and correlation
function decompositions.

Conventions
-----------
A bath couples to the system through ``sum_k g_k c_k^+ s + h.c.`` with
spectral density ``J(w) = 2 pi sum_k |g_k|^2 delta(w - w_k)``. The two
correlation functions are

    C^+(t) = int dw/2pi J(w) n(w) e^{+iwt}
    C^-(t) = int dw/2pi J(w) (1 -+ n(w)) e^{-iwt}

with ``1 - f`` for fermions and ``1 + n`` for bosons. Each is
represented as an :class:`ExponentSeries`, ``sum_h eta_h e^{-gamma_h t}``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .aaa import aaa_fit
from .pade import bose, bose_approx, bose_pade, fermi, fermi_approx, fermi_pade

log = logging.getLogger(__name__)

_QUAD = dict(epsabs=1e-14, epsrel=1e-11, limit=1000)


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach its tolerance."""


class MomentDivergenceError(ValueError):
    """A spectral moment needed by the RC map does not converge."""


class FitError(RuntimeError):
    """An exponent decomposition missed its tolerance or is ill-posed."""


# -- spectral densities ------------------------------------------------------

class SpectralDensity:
    """Base class. Subclasses define ``support``, ``scale``, ``breakpoints``
    and ``_eval``; ``__call__`` vectorizes and zeroes outside the support.
    """

    support = (-np.inf, np.inf)
    kind = "generic"

    @property
    def scale(self) -> float:
        return 1.0

    @property
    def breakpoints(self) -> list:
        return []

    @property
    def center(self) -> float:
        bp = self.breakpoints
        return float(np.mean(bp)) if bp else 0.0

    def _eval(self, w):
        raise NotImplementedError

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        a, b = self.support
        inside = (w >= a) & (w <= b)
        out = np.zeros_like(w)
        if np.any(inside):
            out[inside] = self._eval(w[inside])
        return out if out.ndim else float(out)

    def continuation(self, z):
        """Analytic formula evaluated at complex ``z`` (no support mask)."""
        return self._eval(np.asarray(z, dtype=complex))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        d.update({k: v for k, v in self.__dict__.items() if not k.startswith("_")})
        return d


@dataclass(frozen=True)
class Lorentzian(SpectralDensity):
    """``J(w) = Gamma W^2 / ((w - mu)^2 + W^2)`` on the real line."""

    gamma: float
    mu: float = 0.0
    width: float = 1.0
    kind = "lorentzian"

    def __post_init__(self):
        if self.gamma < 0 or self.width <= 0:
            raise ValueError("Lorentzian needs gamma >= 0 and width > 0")

    @property
    def scale(self):
        return self.width

    @property
    def breakpoints(self):
        return [self.mu]

    def _eval(self, w):
        return self.gamma * self.width**2 / ((w - self.mu) ** 2 + self.width**2)

    def hilbert(self, w):
        """Exact ``(1/pi) P int J(w')/(w'-w) dw'``."""
        w = np.asarray(w, dtype=float)
        return -self.gamma * self.width * (w - self.mu) / ((w - self.mu) ** 2 + self.width**2)


@dataclass(frozen=True)
class FlatLorentzCutoff(SpectralDensity):
    """Flat residual ``2W`` softened by a Lorentzian of width ``cutoff``:
    ``J(w) = 2 W cutoff^2 / ((w - center)^2 + cutoff^2)``.
    """

    height_scale: float
    cutoff: float
    center: float = 0.0
    kind = "flat_lorentz_cutoff"

    def __post_init__(self):
        if self.height_scale < 0 or self.cutoff <= 0:
            raise ValueError("FlatLorentzCutoff needs W >= 0 and cutoff > 0")

    @property
    def scale(self):
        return self.cutoff

    @property
    def breakpoints(self):
        return [self.center]

    def as_lorentzian(self) -> Lorentzian:
        return Lorentzian(2 * self.height_scale, self.center, self.cutoff)

    def _eval(self, w):
        return 2 * self.height_scale * self.cutoff**2 / (
            (w - self.center) ** 2 + self.cutoff**2)


@dataclass(frozen=True)
class UnderdampedBrownian(SpectralDensity):
    """``J(w) = gamma lam^2 w / ((w^2 - w0^2)^2 + gamma^2 w^2)`` on ``w >= 0``."""

    lam: float
    gamma: float
    w0: float
    kind = "underdamped_brownian"
    support = (0.0, np.inf)

    def __post_init__(self):
        if self.gamma <= 0 or self.w0 <= 0 or 2 * self.w0 <= self.gamma:
            raise ValueError("need 0 < gamma < 2 w0")

    @property
    def scale(self):
        return self.gamma

    @property
    def breakpoints(self):
        return [self.w0]

    def _eval(self, w):
        return self.gamma * self.lam**2 * w / ((w**2 - self.w0**2) ** 2 + self.gamma**2 * w**2)

    def susceptibility(self, w):
        """``lam^2/(w0^2 - w^2 - i gamma w)``; its imaginary part is J on the line."""
        w = np.asarray(w, dtype=complex)
        return self.lam**2 / (self.w0**2 - w**2 - 1j * self.gamma * w)

    def to_dict(self):
        return {"kind": self.kind, "lam": self.lam, "gamma": self.gamma, "w0": self.w0}


class TabulatedDensity(SpectralDensity):
    """Monotone cubic interpolation of sampled values; zero outside the table."""

    kind = "tabulated"

    def __init__(self, grid, values, breakpoints=(), scale=None):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        order = np.argsort(grid)
        self.grid, self.values = grid[order], values[order]
        self.support = (float(self.grid[0]), float(self.grid[-1]))
        self._bp = list(breakpoints)
        self._scale = float(scale) if scale else float(np.ptp(self.grid)) / 100
        self._interp = PchipInterpolator(self.grid, self.values, extrapolate=False)

    @property
    def scale(self):
        return self._scale

    @property
    def breakpoints(self):
        return self._bp

    def _eval(self, w):
        return np.nan_to_num(self._interp(w))

    def to_dict(self):
        return {"kind": self.kind, "grid": self.grid.tolist(),
                "values": self.values.tolist(), "breakpoints": self._bp,
                "scale": self._scale}


class ResidualDensity(SpectralDensity):
    """Residual density seen by the reaction coordinate,

        J1(w) = 4 lambda0^2 J0(w) / (P(w)^2 + J0(w)^2),

    where ``P`` is :func:`principal_value` of ``J0`` over its support.
    Each evaluation runs one principal-value quadrature.
    """

    kind = "residual"

    def __init__(self, j0: SpectralDensity, lambda0_sq: float):
        if lambda0_sq <= 0:
            raise ValueError("lambda0_sq must be positive")
        self.j0 = j0
        self.lambda0_sq = float(lambda0_sq)
        self.support = j0.support

    @property
    def scale(self):
        return self.j0.scale

    @property
    def breakpoints(self):
        return self.j0.breakpoints

    def principal(self, w):
        return np.array([principal_value(self.j0, x) for x in np.atleast_1d(w)])

    def _eval(self, w):
        w = np.atleast_1d(w)
        j = self.j0(w)
        p = self.principal(w)
        den = p**2 + j**2
        out = np.zeros_like(j)
        ok = den > 0
        out[ok] = 4 * self.lambda0_sq * j[ok] / den[ok]
        if not ok.all():
            log.debug("residual density: 0/0 at %d points resolved to 0", int((~ok).sum()))
        return out

    def tabulate(self, grid) -> TabulatedDensity:
        return TabulatedDensity(grid, self(grid), self.breakpoints, self.scale)

    def to_dict(self):
        return {"kind": self.kind, "j0": self.j0.to_dict(), "lambda0_sq": self.lambda0_sq}


class BrownianResidual(ResidualDensity):
    """Residual of an :class:`UnderdampedBrownian` density.

    Uses the full-line Hilbert transform ``Re chi`` of the odd extension
    minus the negative-axis part ``pbar(w) = (1/pi) int_{-inf}^0
    J0(w')/(w'-w) dw'``, which is a regular integral for ``w > 0``.
    """

    kind = "brownian_residual"

    def pbar(self, w):
        j = self.j0

        def one(x):
            # with y = -u the integrand J0(u) / (u + x) is smooth on u > 0
            f = lambda u: -j._eval(-u) / (u + x)
            edges = [0.0, j.w0, 2 * j.w0 + j.gamma + abs(x), np.inf]
            val = sum(integrate.quad(f, lo, hi, **_QUAD)[0]
                      for lo, hi in zip(edges[:-2], edges[1:-1]))
            # the tail is many orders below the bulk; QUADPACK's roundoff
            # test misfires on it at a fixed epsabs
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val += integrate.quad(f, edges[-2], np.inf, epsabs=0.0, epsrel=1e-8,
                                      limit=_QUAD["limit"])[0]
            return val / np.pi

        return np.array([one(x) for x in np.atleast_1d(w)])

    def principal(self, w):
        w = np.atleast_1d(w)
        return self.j0.susceptibility(w).real - self.pbar(w)


class SoftCutoff(SpectralDensity):
    """``base(w) * cutoff^2 / (w^2 + cutoff^2)``; tames slowly decaying tails."""

    kind = "soft_cutoff"

    def __init__(self, base: SpectralDensity, cutoff: float):
        if cutoff <= 0:
            raise ValueError("cutoff must be positive")
        self.base = base
        self.cutoff = float(cutoff)
        self.support = base.support

    @property
    def scale(self):
        return self.base.scale

    @property
    def breakpoints(self):
        return self.base.breakpoints

    def _eval(self, w):
        return self.base._eval(w) * self.cutoff**2 / (w**2 + self.cutoff**2)

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.to_dict(), "cutoff": self.cutoff}


def density_from_dict(d: dict) -> SpectralDensity:
    """Inverse of ``SpectralDensity.to_dict``."""
    kind = d["kind"]
    if kind == "lorentzian":
        return Lorentzian(d["gamma"], d.get("mu", 0.0), d.get("width", 1.0))
    if kind == "flat_lorentz_cutoff":
        return FlatLorentzCutoff(d["height_scale"], d["cutoff"], d.get("center", 0.0))
    if kind == "underdamped_brownian":
        return UnderdampedBrownian(d["lam"], d["gamma"], d["w0"])
    if kind == "tabulated":
        return TabulatedDensity(d["grid"], d["values"], d.get("breakpoints", ()), d.get("scale"))
    if kind in ("residual", "brownian_residual"):
        cls = BrownianResidual if kind == "brownian_residual" else ResidualDensity
        return cls(density_from_dict(d["j0"]), d["lambda0_sq"])
    if kind == "soft_cutoff":
        return SoftCutoff(density_from_dict(d["base"]), d["cutoff"])
    raise ValueError(f"unknown spectral density kind {kind!r}")


# -- bath statistics and exponent series --------------------------------------

@dataclass(frozen=True)
class BathSpec:
    statistics: str
    beta: float
    mu: float = 0.0

    def __post_init__(self):
        if self.statistics not in ("fermion", "boson"):
            raise ValueError("statistics must be 'fermion' or 'boson'")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @property
    def fermionic(self) -> bool:
        return self.statistics == "fermion"

    def occupation(self, w):
        x = self.beta * (np.asarray(w, dtype=float) - self.mu)
        return fermi(x) if self.fermionic else bose(x)

    def weight(self, w, nu: int):
        """Thermal factor multiplying J in C^nu: ``n`` or ``1 -+ n``."""
        n = self.occupation(w)
        if nu > 0:
            return n
        return 1 - n if self.fermionic else 1 + n


@dataclass
class ExponentSeries:
    """``C^nu(t) = sum_h eta_h exp(-gamma_h t)``."""

    nu: int
    eta: np.ndarray
    gamma: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=complex).ravel()
        self.gamma = np.asarray(self.gamma, dtype=complex).ravel()
        if self.nu not in (1, -1):
            raise ValueError("nu must be +1 or -1")
        if self.eta.shape != self.gamma.shape:
            raise ValueError("eta and gamma must have equal length")
        if np.any(self.gamma.real <= 0):
            raise FitError("exponent series has a non-decaying rate")

    def __len__(self):
        return len(self.eta)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.sum(self.eta * np.exp(-np.multiply.outer(t, self.gamma)), axis=-1)

    def to_dict(self):
        pair = lambda a: [[float(x.real), float(x.imag)] for x in a]
        return {"nu": self.nu, "eta": pair(self.eta), "gamma": pair(self.gamma)}

    @classmethod
    def from_dict(cls, d):
        arr = lambda k: np.array([complex(*p) for p in d[k]])
        return cls(int(d["nu"]), arr("eta"), arr("gamma"))


@dataclass(frozen=True)
class RCParameters:
    lambda0_sq: float
    E1: float
    residual: SpectralDensity

    @property
    def lambda0(self) -> float:
        return math.sqrt(self.lambda0_sq)


# -- quadrature helpers --------------------------------------------------------

def _quad(f, a, b, points=(), complex_func=False):
    """``quad`` over ``[a, b]`` split at interior ``points``; infinite ends ok."""
    pts = sorted(p for p in set(points) if a < p < b)
    edges = [a] + pts + [b]
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                v, e = integrate.quad(f, lo, hi, complex_func=complex_func, **_QUAD)
            except integrate.IntegrationWarning as exc:
                raise QuadratureError(f"quadrature on [{lo}, {hi}] failed: {exc}") from None
        total += v
        err += abs(e)
    return total, err


def principal_value(j0: SpectralDensity, w: float) -> float:
    """``(1/pi) P int_support J0(w')/(w' - w) dw'``.

    Inside the support the pole is handled by folding a symmetric window
    ``[w - d, w + d]`` onto ``u in (0, d)``, where the integrand becomes
    the regular ``(J0(w + u) - J0(w - u))/u``; no extrapolation is needed.
    """
    a, b = j0.support
    w = float(w)
    f = lambda x: j0._eval(x) / (x - w)
    bps = [p for p in j0.breakpoints if p != w]
    if not a < w < b:
        return _quad(f, a, b, bps)[0] / np.pi
    d = min(j0.scale, w - a, b - w)
    g = lambda u: (j0._eval(w + u) - j0._eval(w - u)) / u if u > 0 else 0.0
    inner = _quad(g, 0.0, d, [abs(p - w) for p in bps])[0]
    outer = _quad(f, a, w - d, bps)[0] + _quad(f, w + d, b, bps)[0]
    return (inner + outer) / np.pi


def _moments(j0: SpectralDensity):
    a, b = j0.support
    bps = j0.breakpoints
    try:
        m0 = _quad(j0._eval, a, b, bps)[0] / (2 * np.pi)
    except QuadratureError as exc:
        raise MomentDivergenceError(f"zeroth moment: {exc}") from None
    if m0 <= 0:
        raise MomentDivergenceError("zeroth moment is not positive")
    fw = lambda x: x * j0._eval(x)
    if np.isfinite(a) or np.isfinite(b):
        try:
            m1 = _quad(fw, a, b, bps)[0] / (2 * np.pi)
        except QuadratureError as exc:
            raise MomentDivergenceError(f"first moment: {exc}") from None
        return m0, m1
    # two-sided infinite support: symmetric limit about the center
    c = j0.center
    fc = lambda x: (x - c) * j0._eval(x)
    prev = None
    length = 50.0 * j0.scale
    for _ in range(12):
        val = _quad(fc, c - length, c + length, bps)[0] / (2 * np.pi)
        if prev is not None and abs(val - prev) <= 1e-12 * max(abs(c) * m0, m0):
            return m0, val + c * m0
        prev = val
        length *= 4
    raise MomentDivergenceError("first moment: symmetric limit does not converge")


def rc_map(j0: SpectralDensity, cutoff: float | None = None,
           method: str = "auto") -> RCParameters:
    """Reaction-coordinate parameters of ``j0``.

    Parameters
    ----------
    j0 : SpectralDensity
    cutoff : float, optional
        Lorentzian cutoff width of the flat residual of a Lorentzian
        density. Default ``100 W``.
    method : {"auto", "quadrature"}
        ``"quadrature"`` skips closed forms and integrates
        ``lambda0^2 = int J0/2pi`` and ``E1 = int w J0/(2pi lambda0^2)``.
    """
    if method == "auto" and isinstance(j0, Lorentzian):
        lam_sq = j0.gamma * j0.width / 2
        if lam_sq <= 0:
            return RCParameters(0.0, j0.mu, FlatLorentzCutoff(0.0, 1.0, j0.mu))
        delta = 100 * j0.width if cutoff is None else cutoff
        return RCParameters(lam_sq, j0.mu, FlatLorentzCutoff(j0.width, delta, j0.mu))
    if method == "auto" and isinstance(j0, UnderdampedBrownian):
        s = math.sqrt(4 * j0.w0**2 - j0.gamma**2)
        lam_sq = j0.lam**2 / (np.pi * s) * math.atan(s / j0.gamma)
        return RCParameters(lam_sq, j0.lam**2 / (4 * lam_sq), BrownianResidual(j0, lam_sq))
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    m0, m1 = _moments(j0)
    cls = BrownianResidual if isinstance(j0, UnderdampedBrownian) else ResidualDensity
    return RCParameters(m0, m1 / m0, cls(j0, m0))


def residual_density(j0: SpectralDensity, lambda0_sq: float) -> SpectralDensity:
    """Numeric residual density of ``j0`` (see :class:`ResidualDensity`)."""
    if isinstance(j0, UnderdampedBrownian):
        return BrownianResidual(j0, lambda0_sq)
    return ResidualDensity(j0, lambda0_sq)


# -- correlation functions -----------------------------------------------------

def _window(j: SpectralDensity, spec: BathSpec):
    a, b = j.support
    bps = list(j.breakpoints) + [spec.mu]
    span = 60.0 / spec.beta + 40.0 * j.scale
    lo = max(a, min(bps) - span)
    hi = min(b, max(bps) + span)
    return lo, hi, [p for p in bps if lo < p < hi]


def correlation_numeric(j: SpectralDensity, spec: BathSpec, nu: int, t: float) -> complex:
    """Direct quadrature of ``C^nu(t)``; the oracle for decompositions."""
    sign = 1.0 if nu > 0 else -1.0

    def g(w):
        w = float(w)
        if w == 0.0 and not spec.fermionic:
            w = 1e-12 * j.scale
        return float(j(w) * spec.weight(w, nu)) / (2 * np.pi)

    a, b = j.support
    lo, hi, pts = _window(j, spec)
    t = float(t)
    if t == 0.0:
        total = _quad(g, lo, hi, pts)[0]
        # tails separately: far out J is tiny and may carry evaluation noise
        for x0, x1 in ((a, lo), (hi, b)):
            if x1 > x0:
                total += integrate.quad(g, x0, x1, limit=500)[0]
        return complex(total)
    wvar = sign * t
    edges = [lo] + sorted(pts) + [hi]
    re = im = 0.0
    for x0, x1 in zip(edges[:-1], edges[1:]):
        re += integrate.quad(g, x0, x1, weight="cos", wvar=wvar, limit=2000)[0]
        im += integrate.quad(g, x0, x1, weight="sin", wvar=wvar, limit=2000)[0]
    if hi < b:
        re += integrate.quad(g, hi, np.inf, weight="cos", wvar=abs(wvar), limlst=200)[0]
        im += np.sign(wvar) * integrate.quad(g, hi, np.inf, weight="sin", wvar=abs(wvar), limlst=200)[0]
    if lo > a:
        h = lambda w: g(-w)
        re += integrate.quad(h, -lo, np.inf, weight="cos", wvar=abs(wvar), limlst=200)[0]
        im -= np.sign(wvar) * integrate.quad(h, -lo, np.inf, weight="sin", wvar=abs(wvar), limlst=200)[0]
    return complex(re, im)


def series_residual(series: ExponentSeries, j: SpectralDensity, spec: BathSpec,
                    times) -> float:
    """``max_t |series(t) - C(t)|`` against :func:`correlation_numeric`."""
    times = np.atleast_1d(times)
    exact = np.array([correlation_numeric(j, spec, series.nu, t) for t in times])
    return float(np.max(np.abs(series(times) - exact)))


# -- decompositions ------------------------------------------------------------

def decompose_fermi(j: SpectralDensity, spec: BathSpec, n_exp: int,
                    tol: float | None = None, check_times=None):
    """Exponent series of a Lorentzian-shaped fermionic bath.

    One term comes from the Lorentzian pole and ``n_exp`` from the Pade
    poles of the Fermi function, for each of ``nu = +1, -1``. Term ``h``
    of the two series is paired: ``gamma^-_h = conj(gamma^+_h)``.

    Parameters
    ----------
    j : Lorentzian or FlatLorentzCutoff
    spec : BathSpec
        Fermionic statistics.
    n_exp : int
        Number of Pade terms.
    tol : float, optional
        If given, compare against :func:`correlation_numeric` on
        ``check_times`` (default ``10`` points over ``[0, 10/min Re gamma]``)
        and raise :class:`FitError` when the sup-norm error exceeds ``tol``
        times ``|C(0)|``.

    Returns
    -------
    (ExponentSeries, ExponentSeries)
        The ``nu = +1`` and ``nu = -1`` series.
    """
    if not spec.fermionic:
        raise ValueError("decompose_fermi needs fermionic statistics")
    if n_exp < 1:
        raise ValueError("n_exp must be at least 1")
    lor = j.as_lorentzian() if isinstance(j, FlatLorentzCutoff) else j
    if not isinstance(lor, Lorentzian):
        raise TypeError("decompose_fermi supports Lorentzian-shaped densities")
    g0, mj, wd = lor.gamma, lor.mu, lor.width
    beta, mu = spec.beta, spec.mu
    kappa, xi = fermi_pade(n_exp)
    out = []
    for nu in (1, -1):
        pole = mj + 1j * nu * wd
        f = fermi_approx(beta * (pole - mu), n_exp)
        eta = [g0 * wd / 2 * (f if nu > 0 else 1 - f)]
        gam = [wd - 1j * nu * mj]
        zk = mu + 1j * nu * xi / beta
        eta += list(-1j * kappa / beta * lor.continuation(zk))
        gam += list(xi / beta - 1j * nu * mu)
        out.append(ExponentSeries(nu, np.array(eta), np.array(gam),
                                  info={"n_exp": n_exp, "method": "pade"}))
    if tol is not None:
        _check(out, j, spec, tol, check_times)
    return out[0], out[1]


def _check(series_pair, j, spec, tol, times):
    for s in series_pair:
        ts = times
        if ts is None:
            ts = np.linspace(0.0, 10.0 / np.min(s.gamma.real), 10)
        ref = abs(correlation_numeric(j, spec, s.nu, 0.0))
        err = series_residual(s, j, spec, ts) / max(ref, 1e-300)
        s.info["residual"] = err
        if err > tol:
            raise FitError(f"nu={s.nu:+d} series residual {err:.3e} exceeds {tol:.1e}")


def bose_grid(j: SpectralDensity, spec: BathSpec, n_points: int = 2000,
              extent: float = 20.0, tol: float | None = None) -> np.ndarray:
    """Sampling grid for the bosonic fit.

    Uniform points over ``[-L, L]`` with ``L = extent * max(peak, 1/beta)``,
    log-spaced points on both sides of zero and dense points around each
    breakpoint. Zero is included. With ``tol`` the window is widened
    until ``|J| < tol * max |J|`` beyond it, so that the fit also covers
    the tail (up to ``1e4 * peak``).
    """
    peak = max([abs(p) for p in j.breakpoints] + [1.0 / spec.beta])
    big = extent * peak
    if tol is not None:
        probe = np.geomspace(peak, 1e4 * peak, 400)
        probe = np.concatenate([-probe[::-1], probe])
        vals = np.abs(j(probe))
        above = np.abs(probe[vals >= tol * vals.max()])
        if above.size:
            big = max(big, 1.5 * above.max())
    width = j.scale
    n_uni = n_points // 2
    n_log = n_points // 8
    n_bp = (n_points - n_uni - 2 * n_log) // max(len(j.breakpoints), 1)
    parts = [np.linspace(-big, big, n_uni)]
    lg = np.geomspace(1e-6 * peak, big, n_log)
    parts += [lg, -lg, [0.0]]
    for p in j.breakpoints:
        parts.append(p + width * np.sinh(np.linspace(-6, 6, n_bp)))
    grid = np.unique(np.concatenate(parts))
    return grid[np.abs(grid) <= big]


def decompose_bose(j: SpectralDensity, spec: BathSpec, tol: float = 1e-4, *,
                   grid=None, max_terms: int = 200, n_pade: int | None = None,
                   check_times=None, check_tol: float | None = None):
    """Exponent series of a bosonic bath from an AAA fit of ``J``.

    ``J(w)`` (zero outside its support) is fitted by a rational ``R``
    interpolating ``R(0) = 0``; the Bose factor uses its Pade expansion.
    Closing the Fourier integrals of ``R n`` and ``R (1 + n)`` in the
    upper and lower half-planes gives, for ``nu = +1``, one term per
    upper-half-plane pole ``p`` of ``R`` (``eta = i res n(p)``,
    ``gamma = -i p``) and one per Pade pole (``eta = i kappa R(i xi/beta)/beta``,
    ``gamma = xi/beta``); the ``nu = -1`` terms are their mirror images.

    Parameters
    ----------
    j : SpectralDensity
    spec : BathSpec
        Bosonic statistics.
    tol : float
        AAA tolerance relative to ``max |J|`` on the grid.
    grid : array_like, optional
        Sampling points; default :func:`bose_grid`.
    max_terms : int
        AAA support-point budget.
    n_pade : int, optional
        Pade terms for the Bose factor; default chooses the smallest
        number reaching ``tol`` for ``J n`` on the grid.
    check_tol : float, optional
        If given, compare with :func:`correlation_numeric` and raise
        :class:`FitError` above this relative residual.
    """
    if spec.fermionic:
        raise ValueError("decompose_bose needs bosonic statistics")
    beta, mu = spec.beta, spec.mu
    if mu != 0.0:
        raise ValueError("bosonic baths use mu = 0")
    z = bose_grid(j, spec, tol=tol) if grid is None else np.asarray(grid, dtype=float)
    if not np.any(z == 0.0):
        z = np.sort(np.append(z, 0.0))
    fvals = j(z)
    fit = aaa_fit(z, fvals, tol=tol, max_terms=max_terms,
                  initial=[int(np.flatnonzero(z == 0.0)[0])])
    poles = fit.poles()
    res = fit.residues(poles)
    scale = np.max(np.abs(z))
    on_axis = np.abs(poles.imag) < 1e-10 * scale
    if on_axis.any():
        # the kink of J at the support edge can leave a real pole with a
        # negligible residue; its weight in C(t) is |res| (1 + n(p))
        weight = np.abs(res[on_axis]) * (1 + 1 / np.maximum(beta * np.abs(poles[on_axis]), 1e-300))
        if np.any(weight > tol * np.max(np.abs(fvals))):
            raise FitError(f"rational fit has poles on the real axis: {poles[on_axis]}")
        log.info("dropping %d real-axis poles of negligible weight", int(on_axis.sum()))
        poles, res = poles[~on_axis], res[~on_axis]
    if n_pade is None:
        n_pade = _choose_bose_pade(fit, z, beta, tol)
    kappa, xi = bose_pade(n_pade)
    up = poles.imag > 0
    pu, ru = poles[up], res[up]
    order = np.argsort(pu.real)
    pu, ru = pu[order], ru[order]
    eta_p = list(1j * ru * bose_approx(beta * pu, n_pade))
    gam_p = list(-1j * pu)
    eta_m = list(-1j * ru.conj() * (1 + bose_approx(beta * pu.conj(), n_pade)))
    gam_m = list(1j * pu.conj())
    zk = 1j * xi / beta
    eta_p += list(1j * kappa / beta * fit(zk))
    eta_m += list(-1j * kappa / beta * fit(-zk))
    gam_p += list(xi / beta)
    gam_m += list(xi / beta)
    info = {"aaa_terms": len(fit), "aaa_error": fit.error, "aaa_converged": fit.converged,
            "n_pade": n_pade, "r_inf": fit.value_at_infinity(), "method": "aaa",
            "window": float(np.max(np.abs(z))), "j_max": float(np.max(np.abs(fvals)))}
    plus = ExponentSeries(1, eta_p, gam_p, info=dict(info))
    minus = ExponentSeries(-1, eta_m, gam_m, info=dict(info))
    if check_tol is not None:
        _check((plus, minus), j, spec, check_tol, check_times)
    return plus, minus


def _choose_bose_pade(fit, z, beta, tol):
    zz = z[z != 0.0]
    rz = fit(zz).real
    exact = rz * bose(beta * zz)
    ref = np.max(np.abs(exact))
    for n in range(1, 80):
        err = np.max(np.abs(rz * bose_approx(beta * zz, n).real - exact))
        if err <= tol * ref:
            return n
    return 80
