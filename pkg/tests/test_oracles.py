import math

import numpy as np
import pytest

from anderloc.model import (
    DisorderDistribution,
    ModelConfig,
    assemble_hamiltonian,
    lattice_box,
    sample_disorder,
)
from anderloc.oracles import (
    dense_brute_force,
    free_chain_eigenvalues,
    free_lyapunov,
    hausdorff_brute,
    inertia_count,
    transfer_matrix_lyapunov,
)

# uniform [0, 10] at E = 7: 8 chains of length 1e6 (stderr 2e-4)
GAMMA_ETA10_E7 = 0.7037


def test_lyapunov_zero_disorder_in_band():
    res = transfer_matrix_lyapunov(DisorderDistribution(eta_max=0.0), 2.0, 10**6, replicas=2)
    assert 0 <= res.gamma < 1e-3


def test_lyapunov_zero_disorder_outside_band():
    res = transfer_matrix_lyapunov(DisorderDistribution(eta_max=0.0), -1.0, 10**5, replicas=2)
    expected = math.log((3 + math.sqrt(5)) / 2)
    assert res.gamma == pytest.approx(expected, abs=1e-4)
    assert free_lyapunov(-1.0) == pytest.approx(expected, rel=1e-14)
    assert free_lyapunov(2.0) == 0.0


def test_lyapunov_strong_disorder_band_center():
    res = transfer_matrix_lyapunov(DisorderDistribution(eta_max=10.0), 7.0, 2 * 10**5, replicas=8)
    assert res.gamma > 0.5
    assert res.stderr < 0.01
    assert res.gamma == pytest.approx(GAMMA_ETA10_E7, abs=5 * res.stderr + 2e-3)


def test_lyapunov_reproducible():
    d = DisorderDistribution(eta_max=3.0)
    a = transfer_matrix_lyapunov(d, 1.0, 1000, replicas=3, seed=4)
    b = transfer_matrix_lyapunov(d, 1.0, 1000, replicas=3, seed=4)
    np.testing.assert_array_equal(a.per_replica, b.per_replica)


def test_dense_oracle_free_chain():
    cfg = ModelConfig(domain=lattice_box(10), disorder=DisorderDistribution(eta_max=0.0))
    vals, _ = dense_brute_force(assemble_hamiltonian(cfg))
    np.testing.assert_allclose(vals, free_chain_eigenvalues(10), atol=1e-10)


def test_dense_oracle_dimension_limit():
    cfg = ModelConfig(d=2, domain=lattice_box(50, d=2), disorder=DisorderDistribution(eta_max=0.0))
    with pytest.raises(ValueError):
        dense_brute_force(assemble_hamiltonian(cfg))


def test_inertia_matches_eigenvalue_count():
    rng = np.random.default_rng(3)
    for _ in range(10):
        A = rng.standard_normal((30, 30))
        A = A + A.T
        vals = np.linalg.eigvalsh(A)
        lo, hi = sorted(rng.uniform(-5, 5, 2))
        assert inertia_count(A, lo, hi) == int(np.sum((vals >= lo) & (vals < hi)))


def test_hausdorff_brute_basic():
    assert hausdorff_brute([[1.0]], [[1.0]]) == 0
    assert hausdorff_brute([[0.0], [0.0]], [[3.0], [4.0]]) == 4
    assert hausdorff_brute([[0.0, 0.0]], [[2.0, -5.0]]) == 5


def test_disorder_dependence_of_oracle():
    # the model's own 1-d chain at eta_max = 10 has eigenfunctions decaying at about gamma
    cfg = ModelConfig(domain=lattice_box(200), disorder=DisorderDistribution(eta_max=10.0))
    H = assemble_hamiltonian(cfg, disorder=sample_disorder(cfg, 0, 0))
    assert H.dimension == 200
