"""ADO label enumeration and sparse HEOM generator assembly.

The stacked state holds one column-stacked operator per ADO, with the
ADO index slowest, so the generator is

    L = sum_X M_X (x) S_X

over a handful of system superoperators ``S_X`` (commutator, left and
right products with each coupling operator) and sparse ADO-space
connectivity matrices ``M_X``.

For each exponent ``k`` (channel ``c``, process ``nu``, term ``h``) with
coupling operator ``C_c`` (``C^- = C``, ``C^+ = C^dagger``), an ADO ``q``

* loses ``gamma_k`` for every ``k`` in ``q``;
* receives ``-i A_k rho^{q+k}`` with ``A_k`` built from ``C^{-nu}``;
* receives ``-i B_k rho^{q-k}`` with
  ``B_k = eta_k C^nu . - s conj(etabar_k) . C^nu``,

where ``etabar_k`` is the amplitude of the paired exponent (same channel
and ``h``, opposite ``nu``). Fermionic links carry the sign
``(-1)^(w + p)``, with ``w`` the number of indices in ``q`` below ``k``
and ``p = 1`` for odd-parity operands, and the relative sign
``s = (-1)^(|q| + 1 - p)`` between left and right products (the commutator
becomes an anticommutator on odd levels). Bosonic labels are multisets
and ``B_k`` is weighted by the occupation ``n_k``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations, combinations_with_replacement

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite

from .baths import ExponentSeries
from .operators import commutator_super, left_mult, right_mult, to_dense

log = logging.getLogger(__name__)

#: Default ceiling on enumerated labels (about 1 GB of index storage).
MAX_ADOS = 20_000_000


class HierarchyTooLarge(MemoryError):
    """Raised when a requested hierarchy exceeds the ADO budget."""


def ado_count(K: int, tier: int, stats: str) -> int:
    """Number of ADOs without enumerating them.

    Examples
    --------
    >>> ado_count(20, 4, "fermion"), ado_count(256, 2, "boson")
    (6196, 33153)
    """
    if K < 0 or tier < 0:
        raise ValueError("K and tier must be non-negative")
    if stats == "fermion":
        return sum(math.comb(K, n) for n in range(min(tier, K) + 1))
    if stats == "boson":
        return math.comb(K + tier, tier)
    raise ValueError(f"unknown statistics {stats!r}")


@dataclass(frozen=True, eq=False)
class HierarchySpace:
    """Enumerated ADO labels.

    ``labels[i]`` holds the ascending exponent indices of ADO ``i``,
    padded with ``-1``; ADO 0 is the physical state. Labels are ordered
    by level and then lexicographically.
    """

    K: int
    tier: int
    stats: str
    labels: np.ndarray
    levels: np.ndarray
    _codes: np.ndarray = field(repr=False)
    _order: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.levels)

    @property
    def fermionic(self) -> bool:
        return self.stats == "fermion"

    def label(self, i: int) -> tuple:
        row = self.labels[i]
        return tuple(int(x) for x in row[row >= 0])

    def index(self, label) -> int:
        """Dense index of a label (any order); ``KeyError`` if absent."""
        lab = np.full((1, self.labels.shape[1]), -1, dtype=np.int64)
        q = sorted(label)
        if len(q) > self.tier:
            raise KeyError(label)
        lab[0, :len(q)] = q
        idx = self._lookup(lab)[0]
        if idx < 0:
            raise KeyError(label)
        return int(idx)

    def _lookup(self, rows: np.ndarray) -> np.ndarray:
        codes = _encode(rows, self.K)
        pos = np.searchsorted(self._codes, codes, side="left")
        pos = np.minimum(pos, len(self._codes) - 1)
        found = self._codes[pos] == codes
        return np.where(found, self._order[pos], -1)

    def links(self, k: int):
        """Pairs ``(lower, upper)`` of ADO indices with ``upper = lower + k``.

        Also returns ``w``, the number of entries of ``lower`` below ``k``,
        and the occupation of ``k`` in ``upper``.
        """
        lab = self.labels
        ok = self.levels < self.tier
        if self.fermionic:
            ok &= ~np.any(lab == k, axis=1)
        lower = np.flatnonzero(ok)
        rows = lab[lower]
        w = np.sum((rows >= 0) & (rows < k), axis=1)
        occ = np.sum(rows == k, axis=1) + 1
        new = rows.copy()
        new[np.arange(len(lower)), self.levels[lower]] = k
        new = _sort_padded(new)
        upper = self._lookup(new)
        if np.any(upper < 0):
            raise RuntimeError("incomplete hierarchy enumeration")
        return lower, upper, w, occ


def _sort_padded(rows):
    # ascending with -1 padding kept at the end
    big = np.iinfo(np.int64).max
    tmp = np.where(rows < 0, big, rows)
    tmp.sort(axis=1)
    return np.where(tmp == big, -1, tmp)


def _encode(rows: np.ndarray, K: int) -> np.ndarray:
    base = K + 1
    width = rows.shape[1]
    if width and width * math.log2(base) >= 62:
        # fall back to Python integers packed into an object array
        out = np.zeros(len(rows), dtype=object)
        for j in range(width):
            out = out * base + (rows[:, j] + 1).astype(object)
        return out
    out = np.zeros(len(rows), dtype=np.int64)
    for j in range(width):
        out = out * base + (rows[:, j] + 1)
    return out


def enumerate_ados(K: int, tier: int, stats: str, max_ados: int = MAX_ADOS) -> HierarchySpace:
    """Enumerate every label with at most ``tier`` indices drawn from ``K``.

    Fermionic labels are subsets, bosonic labels multisets.
    """
    if K < 0 or tier < 0:
        raise ValueError("K and tier must be non-negative")
    n = ado_count(K, tier, stats)
    if n > max_ados:
        raise HierarchyTooLarge(f"{n} ADOs requested, budget is {max_ados}")
    width = tier if stats == "boson" else min(tier, K)
    labels = np.full((n, width), -1, dtype=np.int64)
    levels = np.zeros(n, dtype=np.int64)
    gen = combinations if stats == "fermion" else combinations_with_replacement
    i = 0
    for lev in range(width + 1):
        combos = list(gen(range(K), lev))
        if combos and lev:
            labels[i:i + len(combos), :lev] = np.array(combos)
        levels[i:i + len(combos)] = lev
        i += len(combos)
    assert i == n
    codes = _encode(labels, K)
    order = np.argsort(codes, kind="stable")
    return HierarchySpace(K, tier, stats, labels, levels, codes[order], order)


@dataclass(frozen=True)
class Coupling:
    """Coupling operator ``C`` (annihilation-type) and its paired series."""

    op: object
    plus: ExponentSeries
    minus: ExponentSeries
    tag: str = ""

    def __post_init__(self):
        if len(self.plus) != len(self.minus):
            raise ValueError(f"coupling {self.tag!r}: +/- series lengths differ")
        if not np.allclose(self.plus.gamma, self.minus.gamma.conj(), rtol=1e-8, atol=1e-12):
            raise ValueError(f"coupling {self.tag!r}: series are not conjugate-paired")


@dataclass(frozen=True)
class Exponent:
    channel: int
    nu: int
    h: int
    eta: complex
    eta_bar: complex
    gamma: complex


def exponents(couplings) -> list:
    """Flatten couplings to exponents ordered by (channel, h, nu=+ then -)."""
    out = []
    for c, cp in enumerate(couplings):
        for h in range(len(cp.plus)):
            for s, o in ((cp.plus, cp.minus), (cp.minus, cp.plus)):
                out.append(Exponent(c, s.nu, h, s.eta[h], o.eta[h], s.gamma[h]))
    return out


@dataclass(eq=False)
class HeomLiouvillian:
    """Sparse generator acting on the stacked ADO vector."""

    space: HierarchySpace
    op_dim: int
    action: sp.csr_matrix
    parity: str = "even"
    kind: str = "heom"
    build: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self):
        return self.action.shape

    @property
    def n_rows(self) -> int:
        return self.action.shape[0]

    def __matmul__(self, x):
        return self.action @ x

    def with_parity(self, parity: str) -> "HeomLiouvillian":
        """Same model assembled for operands of the given parity."""
        if parity == self.parity or not self.build.get("fermionic", False):
            return self
        rebuild = self.build["rebuild"]
        return rebuild(parity)

    def export(self, path):
        """Write the generator in Matrix Market format."""
        mmwrite(str(path), self.action)


def assemble(h, couplings, space: HierarchySpace, parity: str = "even",
             parity_op=None, dtype=np.complex128) -> HeomLiouvillian:
    """Assemble the HEOM generator.

    Parameters
    ----------
    h : ComplexOperator
        System (or system+RC) Hamiltonian.
    couplings : list of Coupling
        Each contributes ``2 * len(series)`` exponents; the total must
        equal ``space.K``.
    space : HierarchySpace
    parity : {"even", "odd"}
        Parity of the operand (fermions only). Odd parity is used for
        propagating ``s^+ rho`` in two-time correlation functions.
    parity_op : ComplexOperator, optional
        Fermion parity of the system space, kept for parity detection
        in :func:`rcheom.solver.two_time`.
    """
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    d = h.shape[0]
    for cp in couplings:
        if cp.op.shape != (d, d):
            raise ValueError(f"coupling {cp.tag!r} has shape {cp.op.shape}, expected {(d, d)}")
    exps = exponents(couplings)
    if len(exps) != space.K:
        raise ValueError(f"couplings provide {len(exps)} exponents, space has K={space.K}")
    fermionic = space.fermionic
    odd = 1 if parity == "odd" else 0
    n = len(space)

    damp = np.zeros(n, dtype=complex)
    rows = space.labels
    gam = np.array([e.gamma for e in exps])
    for j in range(rows.shape[1]):
        m = rows[:, j] >= 0
        damp[m] += gam[rows[m, j]]

    # ADO-space coefficient lists, keyed by (channel, operator, side)
    acc: dict = {}

    def add(key, r, c, v):
        acc.setdefault(key, []).append((r, c, np.broadcast_to(v, r.shape)))

    for k, e in enumerate(exps):
        lower, upper, w, occ = space.links(k)
        if lower.size == 0:
            continue
        lev = space.levels[lower]
        # A term: row `lower`, column `upper`, operator C^{-nu}
        op_a = "C" if e.nu > 0 else "Cd"
        # B term: row `upper`, column `lower`, operator C^{nu}; level |upper|
        op_b = "Cd" if e.nu > 0 else "C"
        if fermionic:
            sgn_a = (-1.0) ** (w + odd)
            rel_a = (-1.0) ** (lev + 1 - odd)
            add((e.channel, op_a, "L"), lower, upper, -1j * sgn_a)
            add((e.channel, op_a, "R"), lower, upper, -1j * sgn_a * rel_a)
            rel_b = -rel_a
            add((e.channel, op_b, "L"), upper, lower, -1j * sgn_a * e.eta)
            add((e.channel, op_b, "R"), upper, lower, 1j * sgn_a * rel_b * np.conj(e.eta_bar))
        else:
            add((e.channel, op_a, "L"), lower, upper, -1j)
            add((e.channel, op_a, "R"), lower, upper, 1j)
            add((e.channel, op_b, "L"), upper, lower, -1j * occ * e.eta)
            add((e.channel, op_b, "R"), upper, lower, 1j * occ * np.conj(e.eta_bar))

    lh = commutator_super(h)
    eye_n = sp.identity(n, dtype=dtype, format="csr")
    eye_s = sp.identity(d * d, dtype=dtype, format="csr")
    pieces = [sp.kron(eye_n, lh, format="coo"),
              sp.kron(sp.diags(-damp), eye_s, format="coo")]
    ops = {}
    for cidx, cp in enumerate(couplings):
        c_op = sp.csr_matrix(cp.op, dtype=dtype)
        ops[(cidx, "C")] = c_op
        ops[(cidx, "Cd")] = c_op.conj().T.tocsr()
    for (cidx, name, side), entries in acc.items():
        r, c, v = (np.concatenate(x) for x in zip(*entries))
        mat = sp.coo_matrix((v.astype(dtype), (r, c)), shape=(n, n)).tocsr()
        sup = left_mult(ops[(cidx, name)]) if side == "L" else right_mult(ops[(cidx, name)])
        pieces.append(sp.kron(mat, sup, format="coo"))
    action = _sum_coo(pieces, n * d * d, dtype)
    log.info("assembled HEOM generator: %d ADOs, %d rows, %d nonzeros",
             n, action.shape[0], action.nnz)

    def rebuild(p):
        return assemble(h, couplings, space, parity=p, parity_op=parity_op, dtype=dtype)

    build = {"fermionic": fermionic, "rebuild": rebuild, "h": h,
             "couplings": couplings, "parity_op": parity_op}
    return HeomLiouvillian(space, d, action, parity, "heom", build)


def _sum_coo(pieces, size, dtype):
    nnz = sum(p.nnz for p in pieces)
    idx = np.int32 if size < 2**31 - 1 else np.int64
    rows = np.empty(nnz, dtype=idx)
    cols = np.empty(nnz, dtype=idx)
    vals = np.empty(nnz, dtype=dtype)
    i = 0
    for p in pieces:
        m = p.nnz
        rows[i:i + m] = p.row
        cols[i:i + m] = p.col
        vals[i:i + m] = p.data
        i += m
    out = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    out.sum_duplicates()
    out.eliminate_zeros()
    return out


def tier0(h, space=None) -> HeomLiouvillian:
    """Closed-system generator ``-i[h, .]`` on a single-ADO space."""
    space = space or enumerate_ados(0, 0, "boson")
    return HeomLiouvillian(space, h.shape[0], commutator_super(h).tocsr())


def top_trace_row(d: int, n_rows: int) -> sp.csr_matrix:
    """Row vector extracting ``tr rho^0`` from a stacked state."""
    idx = np.arange(d) * (d + 1)
    return sp.csr_matrix((np.ones(d), (np.zeros(d, dtype=int), idx)), shape=(1, n_rows))


def dense_blocks(L: HeomLiouvillian):
    """Debug helper: dense generator (small hierarchies only)."""
    return to_dense(L.action)
