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
    inertia_count,
    resolvent_block_spectral_sum,
    cell_rows_brute,
)
from anderloc.spectral import (
    CutoffFunction,
    EnergyWindow,
    ResolventSolver,
    SpectralError,
    cutoff_order_for_distance,
    eigenpairs_in_window,
    full_decomposition,
    gevrey_cutoff,
    ground_energy,
    projector_block_norm,
    resolvent_block_norm,
    restricted_resolvent_block_norm,
    spectrum_gap,
)


def random_chain(m=30, eta_max=4.0, seed=0, index=0, n=1, d=1):
    cfg = ModelConfig(d=d, n=n, domain=lattice_box(m, d=d), disorder=DisorderDistribution(eta_max=eta_max))
    return assemble_hamiltonian(cfg, disorder=sample_disorder(cfg, seed, index))


def test_window_invariants():
    with pytest.raises(ValueError):
        EnergyWindow(1.0, 0.0)
    w = EnergyWindow(0.0, 2.0)
    assert w.width == 2 and w.center == 1
    assert w.contains(2.0) and not w.contains(2.1)


def test_ground_energy_free_chain():
    H = random_chain(10, eta_max=0.0)
    assert ground_energy(H) == pytest.approx(2 - 2 * np.cos(np.pi / 11), abs=1e-12)


def test_ground_energy_sparse_path():
    # dimension above the dense limit: 50 x 50 lattice
    H = random_chain(50, eta_max=2.0, d=2)
    assert H.dimension == 2500
    e0 = ground_energy(H)
    v = np.random.default_rng(0).standard_normal(H.dimension)
    assert e0 <= v @ (H.matrix @ v) / (v @ v)
    w = eigenpairs_in_window(H, EnergyWindow(e0 - 1e-9, e0 + 1e-9))
    assert len(w) == 1 and w.method == "shift-invert"


def test_ground_energy_tensor_sum():
    one = random_chain(8, seed=3)
    two = random_chain(8, seed=3, n=2)
    assert ground_energy(two) == pytest.approx(2 * ground_energy(one), rel=1e-10)


def test_window_below_spectrum_is_empty():
    H = random_chain()
    assert len(eigenpairs_in_window(H, EnergyWindow(-5, -1))) == 0


@pytest.mark.parametrize("index", range(10))
def test_window_matches_dense_and_inertia(index):
    H = random_chain(40, seed=7, index=index)
    vals, _ = dense_brute_force(H)
    w = EnergyWindow(1.0, 3.0)
    es = eigenpairs_in_window(H, w)
    expected = vals[(vals >= 1.0) & (vals <= 3.0)]
    np.testing.assert_allclose(es.values, expected, atol=1e-10)
    assert len(es) == inertia_count(H.dense(), 1.0, 3.0 + 1e-12)
    assert np.all(es.residuals <= 1e-8 * (1 + np.abs(es.values)))


def test_window_budget_is_an_error():
    H = random_chain(40)
    with pytest.raises(SpectralError):
        eigenpairs_in_window(H, EnergyWindow(-1, 100), max_pairs=5)


@pytest.mark.parametrize("im", [1e-1, 1e-3])
def test_resolvent_block_matches_spectral_sum(im):
    H = random_chain(12, seed=2, n=2)
    vals, vecs = dense_brute_force(H)
    coords = H.coordinates()
    z = complex(3.0, im)
    x, y = [[2.0], [5.0]], [[9.0], [4.0]]
    rows, cols = cell_rows_brute(coords, [2, 5]), cell_rows_brute(coords, [9, 4])
    ref = np.linalg.norm(resolvent_block_spectral_sum(vals, vecs, z, rows, cols), 2)
    assert resolvent_block_norm(H, z, x, y) == pytest.approx(ref, rel=1e-7)


def test_resolvent_norm_bounded_by_inverse_im():
    H = random_chain()
    assert resolvent_block_norm(H, 2.0 + 1.0j, [[5.0]], [[5.0]]) <= 1.0 + 1e-12


def test_resolvent_adjoint_symmetry():
    H = random_chain()
    z = 1.3 + 0.2j
    a = resolvent_block_norm(H, z, [[4.0]], [[11.0]])
    b = resolvent_block_norm(H, np.conj(z), [[11.0]], [[4.0]])
    assert a == pytest.approx(b, rel=1e-10)


def test_first_resolvent_identity():
    H = random_chain(20)
    z1, z2 = 1.0 + 0.3j, 2.5 + 0.1j
    s1, s2 = ResolventSolver(H, z1), ResolventSolver(H, z2)
    cols = np.eye(H.dimension)
    R1, R2 = s1.solve(cols), s2.solve(cols)
    np.testing.assert_allclose(R1 - R2, (z1 - z2) * R1 @ R2, atol=1e-10)


def test_empty_cell_is_an_error():
    H = random_chain(10)
    with pytest.raises(SpectralError):
        resolvent_block_norm(H, 1j, [[50.0]], [[3.0]])


def test_cell_cap_is_an_error():
    # 15 x 15 nodes per unit cell
    cfg = ModelConfig(mode="continuum-discretized", h=1 / 16, d=2,
                      domain=lattice_box(4, d=2), disorder=DisorderDistribution(eta_max=0.0))
    H = assemble_hamiltonian(cfg)
    with pytest.raises(SpectralError):
        resolvent_block_norm(H, 1j, [[2.0, 2.0]], [[2.0, 2.0]])


def test_projector_completeness():
    H = random_chain(15)
    res = projector_block_norm(H, EnergyWindow(-100, 100), [[5.0]], [[5.0]])
    assert res.window_norm == pytest.approx(1.0, abs=1e-12)


def test_projector_rank_one_and_cauchy_schwarz():
    H = random_chain(25, seed=4)
    es = full_decomposition(H)
    x, y = [[3.0]], [[8.0]]
    for E, v in zip(es.values[:10], es.vectors.T[:10]):
        val = projector_block_norm(H, float(E), x, y, eigs=es)
        assert val == pytest.approx(abs(v[2]) * abs(v[7]), rel=1e-12, abs=1e-300)
        xx = projector_block_norm(H, float(E), x, x, eigs=es)
        yy = projector_block_norm(H, float(E), y, y, eigs=es)
        assert val <= np.sqrt(xx * yy) * (1 + 1e-12)


def test_projector_trace_matches_weights():
    cfg = ModelConfig(mode="continuum-discretized", h=0.5, domain=lattice_box(8),
                      disorder=DisorderDistribution(eta_max=1.0))
    H = assemble_hamiltonian(cfg, disorder=sample_disorder(cfg, 1, 0))
    vals, vecs = dense_brute_force(H)
    w = EnergyWindow(2.0, 10.0)
    rows = cell_rows_brute(H.coordinates(), [4.0])
    sel = (vals >= 2) & (vals <= 10)
    expected = np.sum(vecs[rows][:, sel] ** 2)
    es = eigenpairs_in_window(H, w)
    P = es.vectors[rows] @ es.vectors[rows].T
    assert np.trace(P) == pytest.approx(expected, rel=1e-10)


def test_degenerate_eigenspace_merged():
    # two decoupled identical chains give doubly degenerate eigenvalues
    from anderloc.model import Box
    cfg = ModelConfig(domain=(Box((0,), (4,)), Box((6,), (10,))),
                      disorder=DisorderDistribution(eta_max=0.0))
    H = assemble_hamiltonian(cfg)
    res = projector_block_norm(H, EnergyWindow(-1, 10), [[2.0]], [[8.0]])
    # x and y sit in different components, so every eigenprojector block vanishes
    np.testing.assert_allclose(res.per_energy[res.per_energy != 0], [], atol=0)
    assert res.window_norm == pytest.approx(0.0, abs=1e-12)


class TestCutoff:
    J = EnergyWindow(1.0, 2.0)

    def test_zero_in_collar_and_one_far_away(self):
        chi = gevrey_cutoff(self.J, 0.3, 6)
        E = np.linspace(1.0 - 0.3, 2.0 + 0.3, 200)
        assert np.all(chi(E) == 0)
        far = np.concatenate([np.linspace(-5, 1.0 - 0.6, 50), np.linspace(2.6, 9, 50)])
        assert np.all(chi(far) == 1)
        mid = np.linspace(-5, 9, 1000)
        assert np.all((chi(mid) >= 0) & (chi(mid) <= 1))

    @pytest.mark.parametrize("N", [4, 8, 16])
    def test_derivative_bounds_by_finite_differences(self, N):
        r = 0.25
        chi = CutoffFunction(self.J, r, N)
        step = 1e-4
        E = np.linspace(2.0 + r, 2.0 + 2 * r, 4001)
        vals = chi(np.linspace(2.0 + r - 8 * step, 2.0 + 2 * r + 8 * step, 4017))
        for k in range(1, min(4, N - 1) + 1):
            fd = np.diff(vals, n=k) / step**k
            # measured max of the numerical derivative against c (A N / r)^k
            assert np.abs(fd).max() <= chi.derivative_bound(k) * 1.01
            exact = chi(E, k)
            assert np.abs(exact).max() <= chi.derivative_bound(k)

    def test_order_budget(self):
        with pytest.raises(ValueError):
            CutoffFunction(self.J, 0.1, 41)
        with pytest.raises(ValueError):
            CutoffFunction(self.J, 0.1, 1)

    def test_order_schedule(self):
        for dist in (0.0, 3.0, 7.5, 20.0):
            N = cutoff_order_for_distance(dist, 0.4)
            assert N - 2 <= max(0.4 * dist, 0) < N - 1 or N == 2


def test_restricted_resolvent_limits():
    H = random_chain(30, seed=5)
    es = full_decomposition(H)
    lo, hi = es.values[0], es.values[-1]
    x, y = [[4.0]], [[9.0]]
    # cutoff vanishing on the whole spectrum
    zero = CutoffFunction(EnergyWindow(lo, hi), 0.5, 4)
    assert restricted_resolvent_block_norm(H, 1j, zero, x, y, eigs=es) == 0.0
    # cutoff equal to one on the whole spectrum
    one = CutoffFunction(EnergyWindow(hi + 10, hi + 11), 1.0, 4)
    z = 0.5 * (lo + hi) + 1j
    assert restricted_resolvent_block_norm(H, z, one, x, y, eigs=es) == pytest.approx(
        resolvent_block_norm(H, z, x, y), rel=1e-8)


def test_spectrum_gap():
    H = random_chain(10, eta_max=0.0)
    es = full_decomposition(H)
    assert spectrum_gap(-1.0, es) == pytest.approx(1 + free_chain_eigenvalues(10)[0])
