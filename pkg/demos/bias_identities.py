"""Where the bias of the SC estimate comes from, and how combining removes most of it.

Run with ``python demos/bias_identities.py``.  Everything here works on
hand-built covariance matrices, so every printed number is exact.
"""

import numpy as np

from scrtf import beamform, rtf
from scrtf.errors import ModelViolation
from scrtf.identities import inject_coherent_noise

np.set_printoptions(precision=4, suppress=True)

# %% One bin, two LMA mics and one external mic.
# The true RTF is h = [1, 0.5, 2]; the external mic sees noise power 0.5
# against speech power |2|^2 = 4, so its input SNR is 8.
h = np.array([1.0, 0.5, 2.0], dtype=complex)
rn = np.diag([1.0, 1.0, 0.5]).astype(complex)
ry = np.outer(h, h.conj()) + rn

est = rtf.sc_estimate(ry, 0, 1)
print("true RTF        ", h.real)
print("SC estimate     ", est.real)
# Only the external entry is off, and by exactly 1 + 1/8.
print("ratio           ", (est / h).real, " predicted", rtf.predicted_bias_sc(8.0))

# %% Two external mics, both at SNR 8.
# Each SC estimate is biased by 1.125 on its own external entry.  Weighting
# the two estimates by their SNRs spreads a smaller bias, 1 + 1/16, evenly.
h2 = np.array([1.0, 0.5, 2.0, -1.5j])
rn2 = np.diag([1.0, 1.0, 4.0 / 8, 2.25 / 8]).astype(complex)
rx2 = np.outer(h2, h2.conj())
ry2 = rx2 + rn2
h_mat = rtf.build_estimate_matrix(ry2, 2)
snr = rtf.input_snr(rx2, rn2, 2)
model = rtf.model_weights(snr)
gevd = rtf.gevd_weights(h_mat, ry2, rn2)
print("\nexternal SNRs   ", snr)
print("model weights   ", model.alpha.real)
print("GEVD weights    ", gevd.alpha)
print("combined / true ", (rtf.combine(h_mat, model) / h2).real,
      " predicted", rtf.predicted_bias_msnr(snr))

# %% The GEVD weights only need Ry and Rn, yet they land on the SNR weights.
# Check it on a batch of random instances of the noise model.
rng = np.random.default_rng(0)
h, phi, rx, rn, ry, snr = rtf.random_exact_model(rng, 2, 3, batch=500)
h_mat = rtf.build_estimate_matrix(ry, 3)
dev = np.abs(rtf.gevd_weights(h_mat, ry, rn).alpha - rtf.model_weights(snr).alpha)
print(f"\n500 random instances, Me = 3: max |gevd - model| = {dev.max():.1e}")

# %% The same bias passes into the MVDR output SNR.
# With the true RTF the biased and unbiased output SNRs differ by exactly one.
w = beamform.mvdr_weights(rn, h, loading=0)
biased, unbiased = beamform.narrowband_output_snr(w, rx, rn)
print(f"biased - unbiased output SNR: {np.abs(biased - unbiased - 1).max():.1e} away from 1")

# %% Breaking the noise model.
# Noise shared by the reference and an external mic makes the GEVD weights
# drift from the SNR weights, and the cost decomposition refuses to run.
rn_bad = np.stack([inject_coherent_noise(r, 2, 0, 1.0, rng) for r in rn])
ry_bad = rx + rn_bad
h_bad = rtf.build_estimate_matrix(ry_bad, 3)
snr_bad = rtf.input_snr(rx, rn_bad, 3)
drift = np.abs(rtf.gevd_weights(h_bad, ry_bad, rn_bad).alpha - rtf.model_weights(snr_bad).alpha)
print(f"coherent noise: median max |gevd - model| = {np.median(drift.max(-1)):.3f}")
try:
    rtf.cost_decomposition(h[0], rn_bad[0], ry_bad[0], rtf.bias_matrix(h[0], snr_bad[0], 2),
                           rtf.model_weights(snr_bad[0]))
except ModelViolation as exc:
    print("cost_decomposition:", exc)
