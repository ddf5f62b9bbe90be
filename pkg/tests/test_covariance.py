import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scrtf import covariance
from scrtf.covariance import CovarianceState, oracle_covariances, smoothing_factor, track
from scrtf.errors import DimensionMismatch, NoActiveFrames


def cgauss(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def test_smoothing_factor_values():
    assert smoothing_factor(0.25, 0.016) == pytest.approx(np.exp(-0.064))
    assert smoothing_factor(0.25, 0.016) == pytest.approx(0.9380, abs=1e-4)
    assert smoothing_factor(1.0, 0.016) == pytest.approx(0.9841, abs=1e-4)
    assert smoothing_factor(np.inf, 0.016) == 1.0
    assert smoothing_factor(1e9, 0.016) == pytest.approx(1.0)
    assert smoothing_factor(0.25, 0.016, "linear") == pytest.approx(0.936)


def test_smoothing_factor_rejects():
    for args in [(0.0, 0.016), (-1.0, 0.016), (0.25, 0.0)]:
        with pytest.raises(ValueError):
            smoothing_factor(*args)
    with pytest.raises(ValueError):
        smoothing_factor(0.25, 0.016, "cubic")


def test_state_constant_frame_converges_geometrically():
    y0 = np.array([[1.0, 2j, -0.5]])
    st_ = CovarianceState(1, 3, 0.9, 0.9, 0.9)
    target = np.outer(y0[0], np.conj(y0[0]))
    for t in range(1, 40):
        st_.update(y0, True)
        err = np.linalg.norm(st_.ry[0] - target)
        assert err == pytest.approx(0.9**t * np.linalg.norm(target), rel=1e-9)
    # the normalised estimate is exact from the first frame on
    np.testing.assert_allclose(st_.normalized()[0][0], target, atol=1e-12)


def test_state_vad_gating():
    rng = np.random.default_rng(0)
    s = CovarianceState(4, 2)
    for _ in range(20):
        s.update(cgauss(rng, 4, 2), False, x=cgauss(rng, 4, 2), n=cgauss(rng, 4, 2))
    assert s.frames_seen == {"ry": 0, "rx": 0, "rn": 20}
    assert not np.any(s.rx) and not np.any(s.ry)


def test_state_blind_mode():
    rng = np.random.default_rng(1)
    s = CovarianceState(2, 2)
    vad = [True, False, False, True, False]
    for v in vad:
        s.update(cgauss(rng, 2, 2), v)
    assert s.frames_seen == {"ry": 2, "rx": 0, "rn": 3}


def test_state_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        CovarianceState(3, 2).update(np.zeros((3, 3)), True)
    with pytest.raises(ValueError):
        CovarianceState(3, 2, lambda_y=1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_state_hermitian_nonnegative(seed, consistent):
    rng = np.random.default_rng(seed)
    s = CovarianceState(3, 3, consistent_sum=consistent)
    for _ in range(15):
        x, n = cgauss(rng, 3, 3), cgauss(rng, 3, 3)
        s.update(x + n, bool(rng.integers(2)), x=x, n=n)
    for r in (s.ry, s.rx, s.rn):
        np.testing.assert_array_equal(r, np.conj(np.swapaxes(r, -1, -2)))
        assert np.all(np.real(np.einsum("kii->ki", r)) >= 0)
    if consistent:
        np.testing.assert_array_equal(s.ry, s.rx + s.rn)


def test_state_matches_batch_covariance():
    # stationary Gaussian input, 10 s at a 16 ms hop
    rng = np.random.default_rng(2)
    n_frames = 625
    mix = cgauss(rng, 3, 3)
    y = cgauss(rng, n_frames, 1, 3) @ mix.T
    s = CovarianceState(1, 3, lambda_y=smoothing_factor(2.0, 0.016))
    for l in range(n_frames):
        s.update(y[l], True)
    batch = np.einsum("li,lj->ij", y[:, 0], np.conj(y[:, 0])) / n_frames
    ry = s.normalized()[0][0]
    assert np.linalg.norm(ry - batch) / np.linalg.norm(batch) < 0.05


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans(), st.booleans())
def test_track_matches_framewise_state(seed, normalize, blind):
    rng = np.random.default_rng(seed)
    n_frames, n_bins, m = 30, 3, 3
    x, n = cgauss(rng, n_frames, n_bins, m), cgauss(rng, n_frames, n_bins, m)
    y = x + n
    vad = rng.random(n_frames) > 0.4
    lam = (0.8, 0.85, 0.9)
    ry, rx, rn, counts = track(y, vad, None if blind else x, None if blind else n, *lam,
                               normalize=normalize)
    s = CovarianceState(n_bins, m, *lam)
    for l in range(n_frames):
        if blind:
            s.update(y[l], vad[l])
        else:
            s.update(y[l], vad[l], x=x[l], n=n[l])
        ref = s.normalized() if normalize else (s.ry, s.rx, s.rn)
        for got, want in zip((ry[l], rx[l], rn[l]), ref):
            np.testing.assert_allclose(got, want, atol=1e-12)
        assert tuple(counts[l]) == (s.frames_seen["ry"], s.frames_seen["rx"], s.frames_seen["rn"])


def test_track_consistent_sum():
    rng = np.random.default_rng(3)
    x, n = cgauss(rng, 20, 2, 3), cgauss(rng, 20, 2, 3)
    vad = np.arange(20) % 3 != 0
    ry, rx, rn, _ = track(x + n, vad, x, n, 0.9, 0.9, 0.9, consistent_sum=True)
    np.testing.assert_array_equal(ry, rx + rn)


def test_oracle_covariances():
    rng = np.random.default_rng(4)
    x = cgauss(rng, 50, 4, 3)
    n = cgauss(rng, 50, 4, 3)
    vad = np.arange(50) % 2 == 0
    rx, rn, ry = oracle_covariances(x, n, vad)
    want = np.mean([np.outer(v, np.conj(v)) for v in x[vad, 1]], axis=0)
    np.testing.assert_allclose(rx[1], want, atol=1e-12)
    np.testing.assert_array_equal(ry, rx + rn)

    rx0, rn0, ry0 = oracle_covariances(np.zeros_like(x), n)
    assert not np.any(rx0)
    np.testing.assert_array_equal(ry0, rn0)

    rx1, _, _ = oracle_covariances(x[:1], n[:1])
    assert np.all(np.linalg.matrix_rank(rx1, tol=1e-12) == 1)

    with pytest.raises(NoActiveFrames):
        oracle_covariances(x, n, np.zeros(50, bool))
    with pytest.raises(DimensionMismatch):
        oracle_covariances(x, n[:10])


def _additivity_error(rng, n_frames, m):
    x = cgauss(rng, n_frames, 8, m)
    n = cgauss(rng, n_frames, 8, m)
    y = x + n
    ry = np.einsum("lki,lkj->kij", y, np.conj(y)) / n_frames
    rx, rn, _ = oracle_covariances(x, n)
    return np.linalg.norm(ry - rx - rn) / np.linalg.norm(ry)


def test_additivity_uncorrelated():
    # 10 s at a 16 ms hop; the expected error for white channels is sqrt(M / 2N)
    rng = np.random.default_rng(5)
    assert _additivity_error(rng, 625, 2) < 0.05
    # and it shrinks like 1/sqrt(frames)
    e1 = np.mean([_additivity_error(rng, 625, 3) for _ in range(4)])
    e4 = np.mean([_additivity_error(rng, 2500, 3) for _ in range(4)])
    assert 0.4 < e4 / e1 < 0.6
    assert e1 == pytest.approx(np.sqrt(3 / 1250), rel=0.15)


def test_static_scene_rx_rank_one():
    from scrtf import scene
    from scrtf.stft import StftConfig, analyze

    cfg = StftConfig()
    g = scene.MicGeometry([(0, 0, 0), (0.005, 0, 0), (0, 0, 0.006)],
                          [(0.008, 0.004, 0.0), (-0.006, 0.0, 0.003)])
    sc = scene.SceneConfig(g, scene.SourceTrajectory.static((0.3, 2.0, 0.0), 10.0), duration=10.0,
                           seed=7)
    rec = scene.simulate(sc, cfg)
    x = analyze(rec.speech, cfg).data
    n = analyze(rec.noise, cfg).data
    rx, _, _ = oracle_covariances(x, n, rec.vad)
    w = np.linalg.eigvalsh(rx)
    p = np.real(rx[:, 0, 0])
    dominant = p > 1e-2 * p.max()
    assert np.all(w[dominant, -2] < 1e-3 * w[dominant, -1])


def test_load_diagonal_and_csv(tmp_path):
    r = np.stack([np.diag([1.0, 3.0]).astype(complex)])
    loaded = covariance.load_diagonal(r, 0.5)
    np.testing.assert_allclose(loaded[0], np.diag([2.0, 4.0]))
    path = tmp_path / "r.csv"
    covariance.write_csv(path, r + 1j * np.array([[[0, 1], [-1, 0]]]))
    rows = path.read_text().splitlines()
    assert rows[0] == "bin,row,col,real,imag"
    assert rows[2] == "0,0,1,0.0,1.0"
