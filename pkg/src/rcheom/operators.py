"""Operator and superoperator algebra.

Operators are plain numpy arrays below a small dimension and
``scipy.sparse`` CSR matrices above it. Superoperators act on
column-stacked (Fortran-order) operators, so that
``vec(A @ rho @ B) == kron(B.T, A) @ vec(rho)``.
"""
from __future__ import annotations

from functools import reduce

import numpy as np
import scipy.sparse as sp

#: Operators with dimension above this are stored sparse.
SPARSE_THRESHOLD = 16

_SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)


def as_operator(a):
    """Return ``a`` with the storage chosen by its dimension.

    Dense ``ndarray`` for dim <= ``SPARSE_THRESHOLD``, CSR otherwise.
    """
    if sp.issparse(a):
        if a.shape[0] <= SPARSE_THRESHOLD:
            return a.toarray().astype(complex)
        return sp.csr_matrix(a, dtype=complex)
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"operator must be square, got shape {a.shape}")
    if a.shape[0] > SPARSE_THRESHOLD:
        return sp.csr_matrix(a)
    return a


def to_dense(a) -> np.ndarray:
    """Dense complex copy of an operator (sparse or not)."""
    if sp.issparse(a):
        return a.toarray().astype(complex)
    return np.array(a, dtype=complex)


def dag(a):
    """Hermitian conjugate, storage preserved."""
    return a.conj().T.tocsr() if sp.issparse(a) else a.conj().T


def identity(dim: int):
    return as_operator(sp.identity(dim, dtype=complex, format="csr"))


def hermiticity_error(a) -> float:
    """``max |A - A^dagger|`` over entries."""
    d = a - dag(a)
    if sp.issparse(d):
        return float(abs(d).max()) if d.nnz else 0.0
    return float(np.max(np.abs(d))) if d.size else 0.0


def tensor_product(a, b, *more):
    """Kronecker product with the first factor's index slowest.

    Examples
    --------
    >>> tensor_product(np.diag([1, -1]), np.eye(2)).real.diagonal()
    array([ 1.,  1., -1., -1.])
    """
    def _kron(x, y):
        if sp.issparse(x) or sp.issparse(y):
            return sp.kron(x, y, format="csr")
        return np.kron(x, y)

    return as_operator(reduce(_kron, (a, b) + more))


def fermion_annihilator(mode: int, total_modes: int):
    """Annihilator of fermionic ``mode`` among ``total_modes``.

    Built by a Jordan-Wigner string over the preceding modes. Each mode
    uses the basis (empty, occupied) and mode 0 is the slowest index, so
    computational basis states coincide with
    ``(c_0^+)^{n_0} (c_1^+)^{n_1} ... |vac>``.

    Parameters
    ----------
    mode : int
        Zero-based mode index.
    total_modes : int
        Number of modes; the operator dimension is ``2**total_modes``.
    """
    if total_modes < 1 or not 0 <= mode < total_modes:
        raise ValueError(f"mode {mode} out of range for {total_modes} modes")
    factors = [_SIGMA_Z] * mode + [_LOWER] + [np.eye(2, dtype=complex)] * (
        total_modes - mode - 1)
    out = factors[0].copy() if total_modes == 1 else reduce(
        lambda x, y: sp.kron(x, y, format="csr"), factors)
    return as_operator(out)


def fermion_modes(total_modes: int) -> list:
    """All annihilators for ``total_modes`` modes in canonical order."""
    return [fermion_annihilator(m, total_modes) for m in range(total_modes)]


def boson_annihilator(cutoff: int):
    """Truncated bosonic annihilator, ``a|n> = sqrt(n)|n-1>``."""
    if cutoff < 2:
        raise ValueError("Fock cutoff must be at least 2")
    return as_operator(np.diag(np.sqrt(np.arange(1, cutoff)), 1).astype(complex))


def fermion_parity(total_modes: int):
    """Parity operator ``(-1)^N`` in the Jordan-Wigner basis."""
    diag = reduce(np.kron, [np.array([1.0, -1.0])] * total_modes)
    return as_operator(sp.diags(diag.astype(complex), format="csr"))


# -- vectorization -----------------------------------------------------------

def vec(rho) -> np.ndarray:
    """Column-stack an operator."""
    return to_dense(rho).reshape(-1, order="F")


def unvec(v, dim: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v).reshape((dim, dim), order="F")


def _sparse(a):
    return sp.csr_matrix(a, dtype=complex)


def left_mult(a) -> sp.csr_matrix:
    """Superoperator ``rho -> a @ rho``."""
    n = a.shape[0]
    return sp.kron(sp.identity(n, dtype=complex), _sparse(a), format="csr")


def right_mult(a) -> sp.csr_matrix:
    """Superoperator ``rho -> rho @ a``."""
    n = a.shape[0]
    return sp.kron(_sparse(a).T, sp.identity(n, dtype=complex), format="csr")


def commutator_super(h) -> sp.csr_matrix:
    """Superoperator ``rho -> -i [h, rho]``."""
    out = -1j * (left_mult(h) - right_mult(h))
    out.eliminate_zeros()
    return out.tocsr()


def dissipator(l_op) -> sp.csr_matrix:
    """Lindblad dissipator ``L rho L^+ - {L^+ L, rho}/2``."""
    l_op = _sparse(l_op)
    ld = l_op.conj().T
    ll = ld @ l_op
    return (left_mult(l_op) @ right_mult(ld)
            - 0.5 * (left_mult(ll) + right_mult(ll))).tocsr()
