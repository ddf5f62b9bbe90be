"""RTF vector estimation with external microphones and its bias analysis.

Microphone order is ``[LMA_1 .. LMA_Ma, ext_1 .. ext_Me]`` with the reference
at index 0.  External microphones are indexed ``0 .. Me-1`` here; column
``Ma + me`` of the covariance belongs to external mic ``me``.

All functions take single-bin matrices ``(M, M)`` or stacks ``(..., M, M)``.

SC estimate
    Column of the noisy covariance belonging to one external mic, normalised
    by its reference-mic entry.  Only the entry of that external mic is
    biased, by the factor ``1 + 1/SNR``.
mSNR combination
    ``h = H_tilde @ alpha`` with ``sum(alpha) == 1``.  ``alpha`` maximises the
    biased MVDR output SNR ``alpha^H A alpha / alpha^H B alpha``; under the
    rank-1 speech / uncorrelated external noise model the maximiser is the
    normalised input-SNR vector of the external mics and every external entry
    carries the common bias ``1 + 1/sum(SNR)``.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .covariance import load_diagonal
from .errors import DimensionMismatch, ModelViolation, NearZeroNormalizer

__all__ = [
    "WeightVector",
    "CostDecomposition",
    "sc_estimate",
    "build_estimate_matrix",
    "input_snr",
    "gevd_matrices",
    "gevd_weights",
    "model_weights",
    "uniform_weights",
    "combine",
    "predicted_bias_sc",
    "predicted_bias_msnr",
    "bias_matrix",
    "cost_decomposition",
    "biased_output_snr",
    "measured_ratio",
    "random_exact_model",
]

NORMALIZER_EPS = 1e-12
GEVD_NORMALIZER_EPS = 1e-10
SNR_FLOOR = 1e-8


@dataclass
class WeightVector:
    """Combination weights ``alpha`` of shape ``(..., Me)``.

    ``fallback`` marks bins where the requested rule was undefined and
    uniform weights were substituted.
    """

    alpha: np.ndarray
    kind: str
    fallback: np.ndarray

    @property
    def n_fallback(self):
        return int(np.count_nonzero(self.fallback))


def _ext_column(m, me, n_external):
    if not 0 <= me < n_external <= m - 1:
        raise DimensionMismatch(f"external index {me} invalid for Me={n_external}, M={m}")
    return m - n_external + me


def sc_estimate(ry, me, n_external, eps=NORMALIZER_EPS, return_valid=False):
    """SC RTF estimate from external microphone ``me``.

    ``Ry e_col / (e_1^T Ry e_col)``; the reference entry is set to exactly 1.

    Raises
    ------
    NearZeroNormalizer
        If ``|Ry[0, col]| <= eps * trace(Ry) / M`` in any bin.  With
        ``return_valid=True`` nothing is raised; invalid bins come back as NaN
        together with a boolean validity mask.
    """
    ry = np.asarray(ry, dtype=complex)
    m = ry.shape[-1]
    col = _ext_column(m, me, n_external)
    norm = ry[..., 0, col]
    tol = eps * np.abs(np.real(np.trace(ry, axis1=-2, axis2=-1))) / m
    valid = np.abs(norm) > tol
    if not return_valid and not np.all(valid):
        raise NearZeroNormalizer(
            f"normaliser of external mic {me} vanishes in {np.count_nonzero(~valid)} bin(s)",
            column=me,
        )
    h = ry[..., :, col] / np.where(valid, norm, 1.0)[..., None]
    h[..., 0] = 1.0
    if return_valid:
        h = np.where(valid[..., None], h, np.nan)
        return h, valid
    return h


def build_estimate_matrix(ry, n_external, eps=NORMALIZER_EPS, return_valid=False):
    """``(..., M, Me)`` matrix whose columns are the SC estimates."""
    cols, valid = [], []
    for me in range(n_external):
        if return_valid:
            h, ok = sc_estimate(ry, me, n_external, eps, return_valid=True)
            valid.append(ok)
        else:
            h = sc_estimate(ry, me, n_external, eps)
        cols.append(h)
    h_mat = np.stack(cols, axis=-1)
    if return_valid:
        return h_mat, np.all(valid, axis=0)
    return h_mat


def input_snr(rx, rn, n_external, floor=SNR_FLOOR):
    """Per-bin input SNR of the external mics from covariance diagonals."""
    dx = np.real(np.diagonal(rx, axis1=-2, axis2=-1))[..., -n_external:]
    dn = np.real(np.diagonal(rn, axis1=-2, axis2=-1))[..., -n_external:]
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = dx / dn
    return np.maximum(np.nan_to_num(snr, nan=floor, posinf=1.0 / floor), floor)


def uniform_weights(shape, n_external):
    return np.full(tuple(shape) + (n_external,), 1.0 / n_external, dtype=complex)


def gevd_matrices(h_mat, ry, rn, loading=None, rn_inv_h=None):
    """Pencil ``A = H^H Rn^-1 Ry Rn^-1 H`` and ``B = H^H Rn^-1 H``.

    ``rn_inv_h`` may carry a precomputed ``Rn^-1 H`` (``rn`` is then unused).
    """
    if rn_inv_h is not None:
        g = np.asarray(rn_inv_h, dtype=complex)
    else:
        if loading:
            rn = load_diagonal(rn, loading)
        g = linalg.solve_hermitian(rn, h_mat)  # Rn^-1 H
    hh = np.conj(np.swapaxes(h_mat, -1, -2))
    b = hh @ g
    a = np.conj(np.swapaxes(g, -1, -2)) @ ry @ g
    return linalg.hermitize(a), linalg.hermitize(b)


def gevd_weights(h_mat, ry, rn, loading=None, rn_inv_h=None):
    """Weights maximising the biased output SNR via the principal GEV.

    ``alpha = P{B^-1 A} / (1^T P{B^-1 A})``.  Bins where ``B`` is not positive
    definite or ``|1^T P| < 1e-10 ||P||`` get uniform weights and are flagged.
    """
    h_mat = np.asarray(h_mat, dtype=complex)
    n_ext = h_mat.shape[-1]
    batch = h_mat.shape[:-2]
    if n_ext == 1:
        return WeightVector(np.ones(batch + (1,), dtype=complex), "gevd",
                            np.zeros(batch, dtype=bool))
    a, b = gevd_matrices(h_mat, ry, rn, loading, rn_inv_h)
    _, pd = linalg.hermitian_cholesky(b, return_mask=True)
    eye = np.eye(n_ext)
    b_safe = np.where(pd[..., None, None], b, eye)
    a_safe = np.where(pd[..., None, None], a, eye)
    p = linalg.gevd_principal(a_safe, b_safe)
    s = np.sum(p, axis=-1)
    ok = pd & (np.abs(s) >= GEVD_NORMALIZER_EPS * np.linalg.norm(p, axis=-1))
    alpha = np.where(ok[..., None], p / np.where(ok, s, 1.0)[..., None],
                     uniform_weights(batch, n_ext))
    return WeightVector(alpha, "gevd", ~ok)


def model_weights(snr_e):
    """Normalised input SNRs, ``SNR_me / sum(SNR)``; real-valued.

    Bins whose SNRs are all zero get uniform weights and are flagged.
    """
    snr_e = np.asarray(snr_e, dtype=float)
    if np.any(snr_e < 0):
        raise ValueError("input SNRs must be non-negative")
    total = np.sum(snr_e, axis=-1)
    ok = total > 0
    n_ext = snr_e.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha = snr_e / np.where(ok, total, 1.0)[..., None]
    alpha = np.where(ok[..., None], alpha, 1.0 / n_ext)
    return WeightVector(alpha.astype(complex), "model", ~ok)


def combine(h_mat, alpha, tol=1e-8):
    """``H_tilde @ alpha`` with the reference entry pinned to 1."""
    h_mat = np.asarray(h_mat, dtype=complex)
    alpha = alpha.alpha if isinstance(alpha, WeightVector) else np.asarray(alpha, dtype=complex)
    if h_mat.shape[-1] != alpha.shape[-1]:
        raise DimensionMismatch(f"{h_mat.shape[-1]} estimates but {alpha.shape[-1]} weights")
    if np.any(np.abs(np.sum(alpha, axis=-1) - 1.0) > tol):
        raise ValueError("weights must sum to one")
    h = (h_mat @ alpha[..., None])[..., 0]
    h[..., 0] = 1.0
    return h


def predicted_bias_sc(snr_e):
    """Bias factor ``1 + 1/SNR`` of an SC estimate's external entry."""
    snr_e = np.asarray(snr_e, dtype=float)
    with np.errstate(divide="ignore"):
        out = 1.0 + 1.0 / snr_e
    return out if out.ndim else float(out)


def predicted_bias_msnr(snr_e):
    """Common bias factor ``1 + 1/sum(SNR)`` of the model-weighted combination."""
    total = np.sum(np.asarray(snr_e, dtype=float), axis=-1)
    with np.errstate(divide="ignore"):
        out = 1.0 + 1.0 / total
    return out if np.ndim(out) else float(out)


def bias_matrix(h, snr_e, n_lma):
    """``E`` with ``H_tilde = h 1^T + E``: zero LMA rows, ``H_e/SNR_e`` on the external diagonal."""
    h = np.asarray(h, dtype=complex)
    snr_e = np.asarray(snr_e, dtype=float)
    n_ext = snr_e.shape[-1]
    if h.shape[-1] != n_lma + n_ext:
        raise DimensionMismatch(f"RTF length {h.shape[-1]} != Ma + Me = {n_lma + n_ext}")
    e = np.zeros(h.shape + (n_ext,), dtype=complex)
    idx = np.arange(n_ext)
    with np.errstate(divide="ignore", invalid="ignore"):
        e[..., n_lma + idx, idx] = h[..., n_lma + idx] / snr_e
    return e


@dataclass
class CostDecomposition:
    """Scalars of the reduced cost ``J = (a + c) / (b + c)``."""

    a1: float
    b1: float
    b2: float
    c_of_alpha: float
    j_direct: float
    j_reduced: float
    s_matrix: np.ndarray

    @property
    def a(self):
        return self.a1 + 2.0 * (self.b1 + self.b2) + self.b2

    @property
    def b(self):
        return self.b1 + 2.0 * self.b2


def biased_output_snr(h_mat, ry, rn, alpha):
    """``J(alpha) = alpha^H A alpha / alpha^H B alpha`` evaluated literally."""
    a, b = gevd_matrices(h_mat, ry, rn)
    return linalg.rayleigh_quotient(a, b, alpha)


def cost_decomposition(h, rn, ry, e, alpha, check=True, rtol=1e-9):
    """Split the mSNR cost into the scalar terms of the bias analysis (one bin).

    ``phi_x1`` is read from ``(Ry - Rn)[0, 0]`` since the true RTF has a unit
    reference entry.  Both ``j_direct`` (quadratic forms of the full pencil)
    and ``j_reduced`` (the scalar formula) are returned.

    Raises
    ------
    ModelViolation
        If ``h^H Rn^-1 E`` differs from ``(1/phi_x1) 1^T`` by more than
        ``rtol`` relative, i.e. the noise or speech model does not hold.
    """
    h = np.asarray(h, dtype=complex)
    rn = np.asarray(rn, dtype=complex)
    ry = np.asarray(ry, dtype=complex)
    e = np.asarray(e, dtype=complex)
    alpha = np.asarray(alpha.alpha if isinstance(alpha, WeightVector) else alpha, dtype=complex)
    if abs(np.sum(alpha) - 1.0) > 1e-8:
        raise ValueError("weights must sum to one")
    phi_x1 = float(np.real(ry[0, 0] - rn[0, 0]))
    rn_inv_h = linalg.solve_hermitian(rn, h)
    rn_inv_e = linalg.solve_hermitian(rn, e)
    ones = np.ones(e.shape[-1])

    cross = np.conj(h) @ rn_inv_e  # h^H Rn^-1 E
    b2 = 1.0 / phi_x1
    dev = np.max(np.abs(cross - b2 * ones)) / b2
    if check and not dev <= rtol:
        raise ModelViolation(
            f"h^H Rn^-1 E deviates from (1/phi_x1) 1^T by {dev:.3e} (relative)"
        )
    a1 = float(np.real(np.conj(rn_inv_h) @ ry @ rn_inv_h))
    b1 = float(np.real(np.conj(h) @ rn_inv_h))
    s = phi_x1 * (np.conj(e.T) @ rn_inv_e)
    c = float(b2 * np.real(np.conj(alpha) @ s @ alpha))

    h_tilde = np.outer(h, ones) + e
    j_direct = float(biased_output_snr(h_tilde, ry, rn, alpha))
    j_reduced = (a1 + 2.0 * (b1 + b2) + b2 + c) / (b1 + 2.0 * b2 + c)
    return CostDecomposition(a1, b1, b2, c, j_direct, j_reduced, s)


def measured_ratio(h_est, h_true, n_lma, min_abs=1e-6):
    """Estimated / true RTF for the external entries; NaN where ``|H| < min_abs``."""
    est = np.asarray(h_est)[..., n_lma:]
    true = np.asarray(h_true)[..., n_lma:]
    ok = np.abs(true) >= min_abs
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ok, est / np.where(ok, true, 1.0), np.nan)


def random_exact_model(rng, n_lma, n_external, snr_range=(0.1, 100.0), batch=()):
    """Covariances that satisfy the rank-1 / uncorrelated-external model exactly.

    Returns ``(h, phi_x1, rx, rn, ry, snr_e)``.  ``Rn`` has a random Hermitian
    PD block on the LMA and a diagonal external block whose powers are chosen
    so the external input SNRs are log-uniform in ``snr_range``.
    """
    batch = (batch,) if isinstance(batch, (int, np.integer)) else tuple(batch)
    m = n_lma + n_external
    cplx = lambda *s: rng.standard_normal(s) + 1j * rng.standard_normal(s)  # noqa: E731
    h = cplx(*batch, m)
    h[..., 0] = 1.0
    phi = rng.uniform(0.5, 2.0, size=batch)
    rx = phi[..., None, None] * h[..., :, None] * np.conj(h[..., None, :])
    g = cplx(*batch, n_lma, n_lma)
    rn_lma = g @ np.conj(np.swapaxes(g, -1, -2)) / n_lma + 0.1 * np.eye(n_lma)
    lo, hi = np.log(snr_range[0]), np.log(snr_range[1])
    snr = np.exp(rng.uniform(lo, hi, size=batch + (n_external,)))
    phi_x_e = phi[..., None] * np.abs(h[..., n_lma:]) ** 2
    rn = np.zeros(batch + (m, m), dtype=complex)
    rn[..., :n_lma, :n_lma] = rn_lma
    idx = np.arange(n_lma, m)
    rn[..., idx, idx] = phi_x_e / snr
    rn = linalg.hermitize(rn)
    return h, phi, rx, rn, rx + rn, snr
