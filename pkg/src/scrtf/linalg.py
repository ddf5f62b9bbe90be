"""Dense complex linear algebra for small Hermitian problems.

Every routine accepts stacks of matrices: the last two axes hold the matrix,
any leading axes are batch axes (typically frequency bins and frames).  The
loops run over matrix indices only, so a whole spectrum is processed with a
handful of numpy calls per column.

The eigensolver is a cyclic complex Jacobi iteration.  For the sizes used
here (M <= 16) it converges in a few sweeps and yields eigenvectors that are
orthonormal to machine precision.
"""

import numpy as np

from .errors import ConvergenceFailure, NotPositiveDefinite

__all__ = [
    "hermitian_cholesky",
    "solve_lower",
    "solve_lower_h",
    "solve_hermitian",
    "hermitian_eig",
    "gevd_principal",
    "rayleigh_quotient",
    "hermitize",
    "is_hermitian",
    "DEGENERATE_RTOL",
]

MAX_SWEEPS = 30
DEGENERATE_RTOL = 1e-10


def hermitize(m):
    """Return ``(M + M^H) / 2``."""
    m = np.asarray(m)
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def is_hermitian(m, rtol=1e-12):
    m = np.asarray(m)
    diff = np.abs(m - np.conj(np.swapaxes(m, -1, -2)))
    scale = np.max(np.abs(m), axis=(-2, -1), keepdims=True)
    return bool(np.all(diff <= rtol * np.maximum(scale, np.finfo(float).tiny)))


def hermitian_cholesky(m, return_mask=False):
    """Lower-triangular ``L`` with ``L @ L^H == M``.

    Only the lower triangle and the real part of the diagonal of ``M`` are
    read.  With ``return_mask=True`` failing batch items do not raise: their
    bad pivots are replaced by 1 and ``(L, ok)`` is returned, ``ok`` flagging
    the items that were positive definite.

    Raises
    ------
    NotPositiveDefinite
        If any pivot is not strictly positive (and ``return_mask`` is false).
    """
    m = np.asarray(m, dtype=complex)
    n = m.shape[-1]
    if m.shape[-2] != n:
        raise ValueError(f"expected square matrices, got shape {m.shape}")
    low = np.zeros_like(m)
    ok = np.ones(m.shape[:-2], dtype=bool)
    for j in range(n):
        row = low[..., j, :j]
        pivot = m[..., j, j].real - np.sum(row.real**2 + row.imag**2, axis=-1)
        good = pivot > 0
        if not np.all(good):
            if not return_mask:
                bad = np.argwhere(~good.reshape(-1))[0, 0]
                raise NotPositiveDefinite(
                    f"non-positive pivot at column {j} (batch item {bad})"
                )
            ok &= good
            pivot = np.where(good, pivot, 1.0)
        d = np.sqrt(pivot)
        low[..., j, j] = d
        if j + 1 < n:
            below = m[..., j + 1:, j] - (low[..., j + 1:, :j] @ np.conj(row)[..., None])[..., 0]
            low[..., j + 1:, j] = below / d[..., None]
    if return_mask:
        return low, ok
    return low


def _as_matrix_rhs(b, low):
    # b with one axis fewer than L is a (stack of) vector(s)
    b = np.asarray(b, dtype=complex)
    vector = b.ndim == low.ndim - 1
    return (b[..., None] if vector else b), vector


def solve_lower(low, b):
    """Solve ``L x = b`` by forward substitution (``b`` is a vector or matrix)."""
    low = np.asarray(low, dtype=complex)
    n = low.shape[-1]
    rhs, vector = _as_matrix_rhs(b, low)
    x = np.zeros(np.broadcast_shapes(low.shape[:-2], rhs.shape[:-2]) + rhs.shape[-2:],
                 dtype=complex)
    for i in range(n):
        acc = rhs[..., i, :] - (low[..., i:i + 1, :i] @ x[..., :i, :])[..., 0, :]
        x[..., i, :] = acc / low[..., i, i][..., None]
    return x[..., 0] if vector else x


def solve_lower_h(low, b):
    """Solve ``L^H x = b`` by back substitution."""
    low = np.asarray(low, dtype=complex)
    n = low.shape[-1]
    rhs, vector = _as_matrix_rhs(b, low)
    x = np.zeros(np.broadcast_shapes(low.shape[:-2], rhs.shape[:-2]) + rhs.shape[-2:],
                 dtype=complex)
    for i in range(n - 1, -1, -1):
        # row i of L^H is conj(L[i+1:, i]) beyond the diagonal
        acc = rhs[..., i, :] - (np.conj(low[..., i + 1:, i])[..., None, :] @ x[..., i + 1:, :])[..., 0, :]
        x[..., i, :] = acc / np.conj(low[..., i, i])[..., None]
    return x[..., 0] if vector else x


def solve_hermitian(m, b):
    """Solve ``M x = b`` for Hermitian positive definite ``M`` via Cholesky."""
    low = hermitian_cholesky(m)
    return solve_lower_h(low, solve_lower(low, b))


def _fix_phase(vecs):
    # rotate each column so its largest-magnitude entry is real positive
    idx = np.argmax(np.abs(vecs), axis=-2)[..., None, :]
    pivot = np.take_along_axis(vecs, idx, axis=-2)
    mag = np.abs(pivot)
    phase = np.where(mag > 0, pivot / np.where(mag > 0, mag, 1.0), 1.0)
    return vecs * np.conj(phase)


def hermitian_eig(m, max_sweeps=MAX_SWEEPS, tol=None):
    """Eigenvalues (ascending) and unit-norm eigenvectors of Hermitian ``M``.

    Eigenvectors are returned as columns, each rotated so that its
    largest-magnitude entry is real and positive.

    Raises
    ------
    ConvergenceFailure
        If the off-diagonal mass has not dropped below ``tol * ||M||_F`` after
        ``max_sweeps`` cyclic sweeps.
    """
    a = hermitize(np.array(m, dtype=complex))
    n = a.shape[-1]
    batch = a.shape[:-2]
    v = np.broadcast_to(np.eye(n, dtype=complex), batch + (n, n)).copy()
    if tol is None:
        tol = 4 * np.finfo(float).eps
    scale = np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1)))
    offmask = ~np.eye(n, dtype=bool)

    def off_norm():
        return np.sqrt(np.sum(np.abs(a[..., offmask]) ** 2, axis=-1))

    for _ in range(max_sweeps):
        if np.all(off_norm() <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[..., p, q]
                mag = np.abs(apq)
                active = mag > 0
                safe = np.where(active, mag, 1.0)
                phase = np.where(active, apq / safe, 1.0)
                theta = (a[..., q, q].real - a[..., p, p].real) / (2.0 * safe)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                vpp, vpq = c, s
                vqp, vqq = -s * np.conj(phase), c * np.conj(phase)

                colp, colq = a[..., :, p].copy(), a[..., :, q].copy()
                a[..., :, p] = colp * vpp[..., None] + colq * vqp[..., None]
                a[..., :, q] = colp * vpq[..., None] + colq * vqq[..., None]
                rowp, rowq = a[..., p, :].copy(), a[..., q, :].copy()
                a[..., p, :] = np.conj(vpp)[..., None] * rowp + np.conj(vqp)[..., None] * rowq
                a[..., q, :] = np.conj(vpq)[..., None] * rowp + np.conj(vqq)[..., None] * rowq
                a[..., p, q] = 0.0
                a[..., q, p] = 0.0

                colp, colq = v[..., :, p].copy(), v[..., :, q].copy()
                v[..., :, p] = colp * vpp[..., None] + colq * vqp[..., None]
                v[..., :, q] = colp * vpq[..., None] + colq * vqq[..., None]
    else:
        if not np.all(off_norm() <= tol * scale):
            raise ConvergenceFailure(f"Jacobi iteration did not converge in {max_sweeps} sweeps")

    w = np.real(np.diagonal(a, axis1=-2, axis2=-1)).copy()
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)
    return w, _fix_phase(v)


def rayleigh_quotient(a, b, x):
    """Generalized Rayleigh quotient ``x^H A x / x^H B x`` (real part)."""
    x = np.asarray(x, dtype=complex)
    xc = np.conj(x)[..., None, :]
    num = (xc @ a @ x[..., None])[..., 0, 0]
    den = (xc @ b @ x[..., None])[..., 0, 0]
    return np.real(num) / np.real(den)


def gevd_principal(a, b, return_degenerate=False):
    """Principal generalized eigenvector of the pencil ``(A, B)``.

    Solves ``A v = lambda B v`` for the largest ``lambda`` through the
    Cholesky reduction ``B = L L^H``: the standard Hermitian problem on
    ``L^-1 A L^-H`` is solved and its top eigenvector back-substituted.
    The result has unit norm and its largest entry is real positive.

    When the two largest eigenvalues coincide (relative gap below
    ``DEGENERATE_RTOL``) the top eigenspace is ambiguous.  The returned
    vector is then the member of that eigenspace with the largest
    ``|1^T v|``, obtained by projecting onto it.

    Parameters
    ----------
    a : (..., n, n) Hermitian
    b : (..., n, n) Hermitian positive definite
    return_degenerate : bool
        Also return a boolean array flagging tied top eigenvalues.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape[-2:] != b.shape[-2:]:
        raise ValueError(f"pencil dimensions differ: {a.shape} vs {b.shape}")
    n = a.shape[-1]
    low = hermitian_cholesky(b)
    y = solve_lower(low, a)  # L^-1 A
    c = np.conj(np.swapaxes(solve_lower(low, np.conj(np.swapaxes(y, -1, -2))), -1, -2))
    lam, u = hermitian_eig(hermitize(c))
    top = u[..., :, -1]

    if n > 1:
        scale = np.maximum(np.abs(lam[..., -1]), np.finfo(float).tiny)
        tied = (lam[..., :] >= lam[..., -1:] - DEGENERATE_RTOL * scale[..., None])
        degenerate = np.sum(tied, axis=-1) > 1
    else:
        degenerate = np.zeros(a.shape[:-2], dtype=bool)

    if np.any(degenerate):
        # 1^T v = 1^T L^-H u = (L^-1 1)^H u, maximised over the tied space by projection
        g = solve_lower(low, np.ones(a.shape[:-1], dtype=complex))
        basis = u * tied[..., None, :]
        proj = np.einsum("...ik,...k->...i", basis, np.einsum("...ki,...k->...i", np.conj(basis), g))
        norm = np.linalg.norm(proj, axis=-1)
        use = degenerate & (norm > 1e-12 * np.linalg.norm(g, axis=-1))
        top = np.where(use[..., None], proj / np.where(norm > 0, norm, 1.0)[..., None], top)

    vec = solve_lower_h(low, top)
    vec = vec / np.linalg.norm(vec, axis=-1, keepdims=True)
    vec = _fix_phase(vec[..., :, None])[..., 0]
    if return_degenerate:
        return vec, degenerate
    return vec
