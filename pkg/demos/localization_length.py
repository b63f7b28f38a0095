"""Fractional moments of the resolvent decay at the rate set by the Lyapunov exponent.

A strongly disordered chain (uniform disorder on [0, 10]) is localized at
every energy. At the band center we estimate E|G(x, y; E + i eps)|^s for
a few separations, fit the exponential rate and compare it with
s * gamma, where gamma comes from an independent transfer-matrix run.

    python demos/localization_length.py
"""

import numpy as np

from anderloc.estimators import frac_moment_profile
from anderloc.model import DisorderDistribution, ModelConfig, lattice_box
from anderloc.oracles import transfer_matrix_lyapunov
from anderloc.verifier import fit_decay

ETA_MAX = 10.0
ENERGY = 7.0
S = 0.5
SEPARATIONS = [2, 4, 6, 8, 10, 12, 14, 16]

config = ModelConfig(domain=lattice_box(60), disorder=DisorderDistribution(eta_max=ETA_MAX))

lyap = transfer_matrix_lyapunov(config.disorder, ENERGY, 200_000, replicas=8)
print(f"transfer matrix: gamma({ENERGY}) = {lyap.gamma:.4f} +/- {lyap.stderr:.4f}")

pairs = [([[20.0]], [[20.0 + k]]) for k in SEPARATIONS]
for im in (1e-1, 1e-2, 1e-3):
    ests = frac_moment_profile(config, pairs, complex(ENERGY, im), S, 1000, seed=1)
    fit = fit_decay([(k, e.mean, e.stderr) for k, e in zip(SEPARATIONS, ests)])
    print(f"Im z = {im:g}: best gamma-grid exponent {fit.gamma:g}, "
          f"mu = {fit.mu:.4f} +/- {fit.mu_stderr:.4f} (s * gamma = {S * lyap.gamma:.4f})")

# The fit settles on a pure exponential (exponent 1). At these short
# separations the rate sits 10-20% below s * gamma, and it drifts down
# slightly as Im z shrinks.
print("moments:", np.round([e.mean for e in ests], 5))
