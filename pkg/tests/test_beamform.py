import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scrtf import beamform
from scrtf.errors import DimensionMismatch, NoActiveFrames
from scrtf.stft import StftConfig, analyze, synthesize


def cplx(rng, *s):
    return rng.standard_normal(s) + 1j * rng.standard_normal(s)


def random_problem(rng, n_bins, m):
    a = cplx(rng, n_bins, m, m)
    rn = a @ np.conj(np.swapaxes(a, -1, -2)) / m + 0.05 * np.eye(m)
    h = cplx(rng, n_bins, m)
    h[:, 0] = 1.0
    rx = 0.7 * h[:, :, None] * np.conj(h[:, None, :])
    return h, rx, rn


def test_white_noise_gives_matched_filter():
    h = np.array([1.0, 1j, -1.0])
    w = beamform.mvdr_weights(np.eye(3), h, loading=0)
    np.testing.assert_allclose(w, h / 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_mvdr_properties(seed, m):
    rng = np.random.default_rng(seed)
    h, rx, rn = random_problem(rng, 4, m)
    w = beamform.mvdr_weights(rn, h, loading=0)
    assert np.max(np.abs(np.sum(np.conj(w) * h, -1) - 1)) < 1e-10
    biased, unbiased = beamform.narrowband_output_snr(w, rx, rn)
    np.testing.assert_allclose(biased - unbiased, 1.0, atol=1e-12)
    # noise power equals 1 / (h^H Rn^-1 h)
    pn = np.real(np.einsum("bi,bij,bj->b", np.conj(w), rn, w))
    quad = np.real(np.einsum("bi,bi->b", np.conj(h), np.linalg.solve(rn, h[..., None])[..., 0]))
    np.testing.assert_allclose(pn, 1 / quad, rtol=1e-10)
    # distortionless competitors never do better
    v = cplx(rng, 4, 200, m)
    hn = h / np.linalg.norm(h, axis=-1, keepdims=True)
    v -= np.sum(np.conj(hn)[:, None] * v, -1, keepdims=True) * hn[:, None]
    wc = w[:, None] + 0.1 * v
    pn_c = np.real(np.einsum("bni,bij,bnj->bn", np.conj(wc), rn, wc))
    assert np.all(pn_c >= pn[:, None] * (1 - 1e-12))


def test_loading_keeps_distortionless():
    rng = np.random.default_rng(1)
    h, rx, rn = random_problem(rng, 3, 4)
    w = beamform.mvdr_weights(rn, h, loading=1e-2)
    np.testing.assert_allclose(np.sum(np.conj(w) * h, -1), 1.0, atol=1e-12)


def test_mvdr_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        beamform.mvdr_weights(np.eye(3), np.ones(2))


def test_apply_reference_selector_is_identity():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((3, 4000))
    spec = analyze(x)
    w = np.zeros((spec.n_bins, 3), dtype=complex)
    w[:, 0] = 1.0
    out = synthesize(beamform.apply(w, spec))[0]
    np.testing.assert_allclose(out[512:-512], x[0, 512:-512], atol=1e-10)
    wt = np.broadcast_to(w, (spec.n_frames,) + w.shape)
    np.testing.assert_allclose(beamform.apply(wt, spec.data), beamform.apply(w, spec.data))
    with pytest.raises(DimensionMismatch):
        beamform.apply(w[:, :2], spec)


def test_vad_to_samples():
    cfg = StftConfig()
    mask = beamform.vad_to_samples([False, True, False, False], cfg, 5 * 256)
    want = np.zeros(5 * 256, bool)
    want[256:768] = True
    np.testing.assert_array_equal(mask, want)


def test_broadband_snr():
    s = np.ones(100)
    n = 0.1 * np.ones(100)
    assert beamform.broadband_snr_db(s, n) == pytest.approx(20.0)
    assert beamform.broadband_snr_db(s, np.zeros(100)) == np.inf
    with pytest.raises(NoActiveFrames):
        beamform.broadband_snr_db(s, n, np.zeros(100, bool))


def test_shadow_filter_linear():
    # the same weights on speech and noise give the SNR of the separated outputs
    rng = np.random.default_rng(3)
    s = rng.standard_normal((2, 8000))
    n = 0.5 * rng.standard_normal((2, 8000))
    ss, ns = analyze(s), analyze(n)
    w = np.zeros((ss.n_bins, 2), dtype=complex)
    w[:, 0] = 1.0
    vad = np.ones(ss.n_frames, bool)
    snr = beamform.shadow_filter_broadband_snr(w, ss, ns, vad)
    mask = beamform.vad_to_samples(vad, ss.cfg, 8000)
    ref = beamform.broadband_snr_db(synthesize(ss)[0][mask], synthesize(ns)[0][mask])
    assert snr == pytest.approx(ref, abs=1e-9)
    with pytest.raises(NoActiveFrames):
        beamform.shadow_filter_broadband_snr(w, ss, ns, np.zeros(ss.n_frames, bool))
