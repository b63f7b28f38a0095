import math

import numpy as np
import pytest

from anderloc.estimators import (
    BsQuery,
    EnsembleEstimate,
    bs_estimate,
    dynamical_proxy,
    ef_correlator,
    ef_correlator_profile,
    eigenfunction_decay_profile,
    estimate_spectral_bottom,
    frac_moment,
    frac_moment_profile,
    lifshitz_tail,
    run_ensemble,
    wegner_curve,
)
from anderloc.model import (
    DisorderDistribution,
    ModelConfig,
    assemble_hamiltonian,
    lattice_box,
    sample_disorder,
)
from anderloc.spectral import EigenSet, EnergyWindow, SpectralError, resolvent_block_norm
from anderloc.verifier import fit_decay


def chain(m=30, eta_max=10.0):
    return ModelConfig(domain=lattice_box(m), disorder=DisorderDistribution(eta_max=eta_max))


def test_estimate_from_samples():
    e = EnsembleEstimate.from_samples([1.0, 2.0, 3.0, 4.0], seed=1)
    assert e.mean == 2.5
    assert e.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert math.isnan(EnsembleEstimate.from_samples([1.0], 0).stderr)
    with pytest.raises(SpectralError):
        EnsembleEstimate.from_samples([1.0, np.nan], 0)


def test_ensemble_order_independent_of_threads():
    cfg = chain(20)

    def f(dis):
        return [float(dis.eta([[3]])[0]), float(dis.index)]

    a = run_ensemble(cfg, f, 17, 5, threads=1)
    b = run_ensemble(cfg, f, 17, 5, threads=4)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a[:, 1], np.arange(17))


def test_frac_moment_bounded_by_inverse_im():
    cfg = chain(20, 4.0)
    for im in (0.5, 0.1):
        e = frac_moment(cfg, [[5.0]], [[5.0]], 2.0 + im * 1j, 0.5, 20, keep_samples=True)
        assert np.all(e.samples <= (1 / im) ** 0.5 + 1e-12)


def test_frac_moment_zero_disorder_is_deterministic():
    cfg = chain(20, 0.0)
    e = frac_moment(cfg, [[5.0]], [[9.0]], 1.0 + 0.1j, 0.5, 5)
    assert e.stderr == 0.0
    H = assemble_hamiltonian(cfg)
    assert e.mean == pytest.approx(resolvent_block_norm(H, 1.0 + 0.1j, [[5.0]], [[9.0]]) ** 0.5,
                                   rel=1e-14)


def test_frac_moment_thread_determinism():
    cfg = chain(30)
    pairs = [([[5.0]], [[9.0]]), ([[5.0]], [[13.0]])]
    a = frac_moment_profile(cfg, pairs, 7 + 0.01j, 0.5, 16, seed=3, threads=1)
    b = frac_moment_profile(cfg, pairs, 7 + 0.01j, 0.5, 16, seed=3, threads=4)
    assert [(e.mean, e.stderr) for e in a] == [(e.mean, e.stderr) for e in b]


def test_jensen_direction():
    cfg = chain(30)
    x, y = [[5.0]], [[10.0]]
    half = frac_moment(cfg, x, y, 7 + 0.1j, 0.5, 200, keep_samples=True)
    full = frac_moment(cfg, x, y, 7 + 0.1j, 1.0, 200, keep_samples=True)
    np.testing.assert_allclose(half.samples ** 2, full.samples, rtol=1e-10)
    assert half.mean <= math.sqrt(full.mean) + 2 * half.stderr
    assert np.all(half.samples <= np.maximum(1.0, full.samples) + 1e-12)


def test_frac_moment_decays_at_strong_disorder():
    cfg = chain(40)
    pairs = [([[10.0]], [[10.0 + k]]) for k in (2, 4, 6, 8)]
    ests = frac_moment_profile(cfg, pairs, 7 + 0.1j, 0.5, 300, seed=1)
    fit = fit_decay([(k, e.mean, e.stderr) for k, e in zip((2, 4, 6, 8), ests)])
    assert fit.mu > 0
    means = [e.mean for e in ests]
    assert means == sorted(means, reverse=True)


def test_bs_query_validation():
    w = EnergyWindow(6, 8)
    with pytest.raises(ValueError):
        BsQuery(w, 5, 0.5, [([[0.0]], [[3.0]])], [7.0])
    with pytest.raises(ValueError):
        BsQuery(w, 1, 1.0, [([[0.0]], [[3.0]])], [7.0])
    with pytest.raises(ValueError):
        BsQuery(w, 1, 0.5, [([[0.0]], [[3.0]])], [9.0])
    with pytest.raises(ValueError):
        BsQuery(w, 1, 0.5, [([[0.0]], [[3.0]])], [7.0], im_z=(1.0,))


def test_bs_single_element_equals_frac_moment():
    cfg = chain(30)
    q = BsQuery(EnergyWindow(6, 8), 4, 0.5, [([[8.0]], [[12.0]])], [7.0], [0.1])
    res = bs_estimate(cfg, q, 30, seed=2)
    fm = frac_moment(cfg, [[8.0]], [[12.0]], 7 + 0.1j, 0.5, 30, seed=2)
    assert res.estimate.mean == fm.mean
    assert res.witness["z"] == [7.0, 0.1]


def test_bs_monotone_in_candidate_set():
    cfg = chain(30)
    base = [([[8.0]], [[14.0]])]
    more = base + [([[8.0]], [[16.0]]), ([[20.0]], [[14.0]])]
    a = bs_estimate(cfg, BsQuery(EnergyWindow(6, 8), 6, 0.5, base, [7.0], [0.1]), 20, 1)
    b = bs_estimate(cfg, BsQuery(EnergyWindow(6, 8), 6, 0.5, more, [6.5, 7.0], [0.1, 0.01]), 20, 1)
    assert b.estimate.mean >= a.estimate.mean


def test_bs_decreasing_in_L():
    cfg = chain(40)
    vals = []
    for L in (2, 4, 8, 16):
        q = BsQuery(EnergyWindow(6.5, 7.5), L, 0.5, [([[12.0]], [[12.0 + L]])], [7.0], [0.1])
        vals.append(bs_estimate(cfg, q, 200, 4).estimate)
    for a, b in zip(vals, vals[1:]):
        assert b.mean < a.mean + 2 * math.hypot(a.stderr, b.stderr)


def test_correlator_empty_window_is_zero():
    cfg = chain(20)
    e = ef_correlator(cfg, [[4.0]], [[8.0]], EnergyWindow(-10, -5), 5)
    assert e.mean == 0 and e.stderr == 0


def test_correlator_diagonal_whole_spectrum_at_least_one():
    cfg = chain(20)
    e = ef_correlator(cfg, [[4.0]], [[4.0]], EnergyWindow(-1, 100), 5, keep_samples=True)
    assert np.all(e.samples >= 1 - 1e-12)


def test_correlator_cauchy_schwarz():
    cfg = chain(25)
    w = EnergyWindow(3, 9)
    x, y = [[5.0]], [[12.0]]
    xy, xx, yy = ef_correlator_profile(cfg, [(x, y), (x, x), (y, y)], w, 20, keep_samples=True)
    assert np.all(xy.samples <= np.sqrt(xx.samples * yy.samples) + 1e-12)


def test_wegner_width_zero_and_growth():
    cfg = ModelConfig(domain=lattice_box(20), disorder=DisorderDistribution(eta_max=1.0))
    curve = wegner_curve(cfg, [[10.0]], 2.5, [0.0, 0.2, 0.4], 100, seed=1)
    assert curve[0][1].mean == 0
    assert curve[2][1].mean >= curve[1][1].mean
    with pytest.raises(ValueError):
        wegner_curve(cfg, [[10.0]], 2.5, [-0.1], 2)


def test_wegner_zero_disorder_is_a_step():
    cfg = ModelConfig(domain=lattice_box(20), disorder=DisorderDistribution(eta_max=0.0))
    curve = wegner_curve(cfg, [[10.0]], 2.0, [0.01, 0.02], 3)
    # no eigenvalue within 0.01 of 2.0 for the free chain of length 20 except the band centre
    assert all(e.stderr == 0 for _, e in curve)


def test_spectral_bottom_below_every_ground_energy():
    cfg = chain(20, 1.0)
    e0 = estimate_spectral_bottom(cfg, 20, seed=0)
    assert 0 <= e0 < 1


def test_lifshitz_extremes():
    cfg = chain(60, 1.0)
    pts, _ = lifshitz_tail(cfg, [8, 16], 50.0, 10, center=[30.0])
    assert all(p.probability == 1 for p in pts)
    pts, slope = lifshitz_tail(cfg, [8, 16], -50.0, 10, center=[30.0])
    assert all(p.probability == 0 for p in pts) and slope is None


def test_lifshitz_decreasing_in_L():
    # weak disorder so the tail is visible at L <= 16 with 300 samples
    cfg = chain(80, 0.3)
    pts, slope = lifshitz_tail(cfg, [4, 8, 16], 0.0, 300, seed=2, center=[40.0])
    probs = [p.probability for p in pts]
    assert probs[0] > probs[1] > probs[2]
    # the first interval lies entirely above the last one
    assert pts[0].ci_low > pts[2].ci_high


def test_dynamical_time_zero_is_projector_norm():
    cfg = chain(20, 4.0)
    w = EnergyWindow(1.0, 6.0)
    res = dynamical_proxy(cfg, [[5.0]], [[8.0]], w, [0.0], 10, keep_samples=True)
    H = assemble_hamiltonian(cfg, disorder=sample_disorder(cfg, 0, 0))
    from anderloc.spectral import projector_block_norm
    assert res.sup_time.samples[0] == pytest.approx(
        projector_block_norm(H, w, [[5.0]], [[8.0]]).window_norm, rel=1e-12)
    assert res.dominated


def test_eigenfunction_profile_normalized_and_decaying():
    cfg = chain(60)
    H = assemble_hamiltonian(cfg, disorder=sample_disorder(cfg, 1, 0))
    profiles = eigenfunction_decay_profile(H, EnergyWindow(6, 8))
    assert profiles
    for p in profiles:
        assert p.masses.sum() == pytest.approx(1.0, abs=1e-8)
    rates = [p.decay_rate() for p in profiles]
    assert np.mean([r > 0 for r in rates]) >= 0.9


def test_eigenfunction_profile_delta_vector():
    cfg = chain(10, 0.0)
    H = assemble_hamiltonian(cfg)
    v = np.zeros((H.dimension, 1))
    v[3, 0] = 1.0
    (p,) = eigenfunction_decay_profile(H, EigenSet(np.array([0.0]), v, np.zeros(1), "trial"))
    assert p.center == (4,)
