"""Constructed-covariance checks of the bias analysis and the MVDR algebra.

Every check builds covariances that satisfy the rank-1 speech / uncorrelated
external noise model exactly, so the closed-form results must hold to
round-off.  :func:`verify_identities` runs the whole battery and returns a
report; the ``verify`` subcommand of the CLI exits non-zero when any check
fails.
"""

from dataclasses import dataclass, field

import numpy as np

from . import beamform, linalg, rtf
from .errors import ModelViolation

__all__ = [
    "CheckResult",
    "IdentityReport",
    "verify_identities",
    "constructed_sc_instance",
    "inject_coherent_noise",
    "random_competitors",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<38s} {self.value:.3e} (tol {self.tolerance:.0e}) {self.detail}"


@dataclass
class IdentityReport:
    results: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def add(self, name, value, tolerance, detail="", lower_is_better=True):
        ok = bool(value <= tolerance) if lower_is_better else bool(value > tolerance)
        self.results.append(CheckResult(name, ok, float(value), tolerance, detail))

    def lines(self):
        return [r.line() for r in self.results]


def constructed_sc_instance():
    """One bin, ``M = 3``, ``Ma = 2``: ``Ry = h h^H + diag(1, 1, 0.5)``, external SNR 8."""
    h = np.array([1.0, 0.5, 2.0], dtype=complex)
    rn = np.diag([1.0, 1.0, 0.5]).astype(complex)
    rx = np.outer(h, np.conj(h))
    return h, rx, rn, rx + rn


def random_competitors(rng, n, n_ext, batch=()):
    """``n`` complex weight vectors per batch item with ``sum(alpha) == 1``.

    Returns shape ``batch + (n, n_ext)``; the spread covers both small
    perturbations of uniform weights and far-away points.
    """
    shape = tuple(batch) + (n, n_ext)
    d = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    d *= np.exp(rng.uniform(np.log(1e-3), np.log(10.0), size=shape[:-1]))[..., None]
    d -= d.mean(axis=-1, keepdims=True)
    return d + 1.0 / n_ext


def inject_coherent_noise(rn, n_lma, external=0, strength=1.0, rng=None):
    """Add a rank-1 noise term shared by the reference and one external mic.

    Breaks the assumption that external noise is uncorrelated with every other
    microphone.  ``strength`` scales the coherent power relative to the
    external mic's own noise power.
    """
    rn = np.array(rn, dtype=complex)
    m = rn.shape[-1]
    e = n_lma + external
    u = np.zeros(m, dtype=complex)
    phase = np.exp(1j * (rng.uniform(0, 2 * np.pi) if rng is not None else 0.7))
    u[0] = np.sqrt(np.real(rn[0, 0]))
    u[e] = np.sqrt(np.real(rn[e, e])) * phase
    return rn + strength * np.outer(u, np.conj(u))


def _check_constructed(report):
    h, rx, rn, ry = constructed_sc_instance()
    est = rtf.sc_estimate(ry, 0, 1)
    report.add("sc bias, constructed bin", np.max(np.abs(est - [1.0, 0.5, 2.25])), 1e-10)
    # two externals at SNR 8 each, combined with model weights
    h2 = np.array([1.0, 0.5, 2.0, -1.5j], dtype=complex)
    rn2 = np.diag([1.0, 1.0, 4.0 / 8, 2.25 / 8]).astype(complex)
    ry2 = np.outer(h2, np.conj(h2)) + rn2
    snr = rtf.input_snr(ry2 - rn2, rn2, 2)
    comb = rtf.combine(rtf.build_estimate_matrix(ry2, 2), rtf.model_weights(snr))
    ratio = comb / h2
    report.add("msnr bias {8, 8}", np.max(np.abs(ratio[2:] - 1.0625)), 1e-10)
    report.add("msnr LMA entries unbiased", np.max(np.abs(ratio[:2] - 1.0)), 1e-12)


def _check_exact_model(report, rng, n_instances, n_competitors):
    gevd_dev = imag = j_dev = c_gap = e_dev = 0.0
    sc_bias = msnr_bias = lma_bias = order_gap = 0.0
    n_lma = 2
    for n_ext in (2, 3, 4):
        n = n_instances // 3 + (1 if n_ext == 2 else 0) * (n_instances % 3)
        h, phi, rx, rn, ry, snr = rtf.random_exact_model(rng, n_lma, n_ext, batch=n)
        h_mat = rtf.build_estimate_matrix(ry, n_ext)
        g = rtf.gevd_weights(h_mat, ry, rn)
        mw = rtf.model_weights(rtf.input_snr(rx, rn, n_ext))
        gevd_dev = max(gevd_dev, np.max(np.abs(g.alpha - mw.alpha)))
        imag = max(imag, np.max(np.abs(g.alpha.imag)))

        e = rtf.bias_matrix(h, snr, n_lma)
        e_dev = max(e_dev, np.max(np.abs(h[..., :, None] + e - h_mat)))
        idx = np.arange(n_ext)
        ratio_sc = h_mat[..., n_lma + idx, idx] / h[..., n_lma:]
        sc_bias = max(sc_bias, np.max(np.abs(ratio_sc - rtf.predicted_bias_sc(snr))))
        lma_bias = max(lma_bias, np.max(np.abs(h_mat[..., :n_lma, :] / h[..., :n_lma, None] - 1)))
        comb = rtf.combine(h_mat, mw)
        ratio = comb[..., n_lma:] / h[..., n_lma:]
        msnr_bias = max(msnr_bias, np.max(np.abs(ratio - rtf.predicted_bias_msnr(snr)[..., None])))

        j_g = rtf.biased_output_snr(h_mat, ry, rn, g.alpha)
        j_m = rtf.biased_output_snr(h_mat, ry, rn, mw.alpha)
        j_u = rtf.biased_output_snr(h_mat, ry, rn, rtf.uniform_weights((n,), n_ext))
        order_gap = max(order_gap, np.max((j_m - j_g) / j_g), np.max((j_u - j_m) / j_m))

        comp = random_competitors(rng, n_competitors, n_ext)
        for i in range(n):
            d = rtf.cost_decomposition(h[i], rn[i], ry[i], e[i], mw.alpha[i])
            j_dev = max(j_dev, abs(d.j_direct - d.j_reduced) / abs(d.j_direct))
            s = d.s_matrix
            c_comp = d.b2 * np.real(np.einsum("ni,ij,nj->n", np.conj(comp), s, comp))
            c_gap = max(c_gap, (d.c_of_alpha - c_comp.min()) / d.c_of_alpha)
            comp = random_competitors(rng, n_competitors, n_ext)

    report.add("gevd == model weights", gevd_dev, 1e-8, f"{n_instances} instances, Me 2-4")
    report.add("gevd weights real", imag, 1e-8)
    report.add("H_tilde == h 1^T + E", e_dev, 1e-12)
    report.add("sc bias law", sc_bias, 1e-10)
    report.add("msnr bias law", msnr_bias, 1e-10)
    report.add("LMA entries unbiased", lma_bias, 1e-12)
    report.add("j_direct == j_reduced (rel)", j_dev, 1e-8)
    report.add("model weights minimise c(alpha)", max(c_gap, 0.0), 1e-10,
               f"{n_competitors} competitors each")
    report.add("J(gevd) >= J(model) >= J(uniform)", max(order_gap, 0.0), 1e-10)


def _check_single_external(report, rng):
    h, phi, rx, rn, ry, snr = rtf.random_exact_model(rng, 3, 1, batch=50)
    h_mat = rtf.build_estimate_matrix(ry, 1)
    g = rtf.gevd_weights(h_mat, ry, rn).alpha
    m = rtf.model_weights(rtf.input_snr(rx, rn, 1)).alpha
    report.add("Me = 1: gevd == model == [1]", max(np.max(np.abs(g - 1)), np.max(np.abs(m - 1))), 1e-12)


def _check_mvdr(report, rng, n_bins, n_competitors):
    m = 5
    cplx = lambda *s: rng.standard_normal(s) + 1j * rng.standard_normal(s)  # noqa: E731
    a = cplx(n_bins, m, m)
    rn = a @ np.conj(np.swapaxes(a, -1, -2)) / m + 0.05 * np.eye(m)
    h = cplx(n_bins, m)
    h[:, 0] = 1.0
    rx = 0.7 * h[:, :, None] * np.conj(h[:, None, :])
    w = beamform.mvdr_weights(rn, h, loading=0)
    dist = np.max(np.abs(np.sum(np.conj(w) * h, axis=-1) - 1))
    biased, unbiased = beamform.narrowband_output_snr(w, rx, rn)
    # competitors: w + v with v orthogonal to h stay distortionless
    v = cplx(n_bins, n_competitors, m)
    hn = h / np.linalg.norm(h, axis=-1, keepdims=True)
    v -= np.sum(np.conj(hn)[:, None, :] * v, axis=-1, keepdims=True) * hn[:, None, :]
    v *= np.exp(rng.uniform(np.log(1e-4), np.log(1.0), size=v.shape[:-1]))[..., None]
    wc = w[:, None, :] + v
    pn_c = np.real(np.einsum("bni,bij,bnj->bn", np.conj(wc), rn, wc))
    pn = np.real(np.einsum("bi,bij,bj->b", np.conj(w), rn, w))
    gap = np.max((pn - pn_c.min(axis=1)) / pn)
    report.add("MVDR distortionless", dist, 1e-10)
    report.add("biased - unbiased output SNR = 1", np.max(np.abs(biased - unbiased - 1)), 1e-12)
    report.add("MVDR minimises noise power", max(gap, 0.0), 1e-12, f"{n_competitors} competitors/bin")


def _check_negative_control(report, rng, n_instances=200, strength=1.0):
    n_lma, n_ext = 2, 2
    h, phi, rx, rn, ry, snr = rtf.random_exact_model(rng, n_lma, n_ext, batch=n_instances)
    rn_bad = np.stack([inject_coherent_noise(r, n_lma, 0, strength, rng) for r in rn])
    ry_bad = rx + rn_bad
    h_mat = rtf.build_estimate_matrix(ry_bad, n_ext)
    g = rtf.gevd_weights(h_mat, ry_bad, rn_bad).alpha
    m = rtf.model_weights(rtf.input_snr(rx, rn_bad, n_ext)).alpha
    dev = np.max(np.abs(g - m), axis=-1)
    raised = 0
    for i in range(n_instances):
        e = rtf.bias_matrix(h[i], np.real(np.diagonal(rx[i]) / np.diagonal(rn_bad[i]))[n_lma:], n_lma)
        try:
            rtf.cost_decomposition(h[i], rn_bad[i], ry_bad[i], e, m[i])
        except ModelViolation:
            raised += 1
    report.add("coherent noise: ModelViolation raised", n_instances - raised, 0,
               f"{raised}/{n_instances} instances")
    report.add("coherent noise: gevd != model", float(np.median(dev)), 1e-3,
               "median |alpha_gevd - alpha_model|", lower_is_better=False)


def verify_identities(seed=0, n_instances=1000, n_competitors=1000, include_negative_control=True):
    """Run the identity battery and return an :class:`IdentityReport`."""
    rng = np.random.default_rng(seed)
    report = IdentityReport()
    _check_constructed(report)
    _check_exact_model(report, rng, n_instances, n_competitors)
    _check_single_external(report, rng)
    _check_mvdr(report, rng, 10, n_competitors)
    if include_negative_control:
        _check_negative_control(report, rng)
    # the Cholesky/eigen substrate the checks rely on
    a = rng.standard_normal((20, 6, 6)) + 1j * rng.standard_normal((20, 6, 6))
    mat = a @ np.conj(np.swapaxes(a, -1, -2)) + np.eye(6)
    low = linalg.hermitian_cholesky(mat)
    recon = np.max(np.abs(low @ np.conj(np.swapaxes(low, -1, -2)) - mat)) / np.max(np.abs(mat))
    report.add("Cholesky round trip (rel)", recon, 1e-10)
    return report
