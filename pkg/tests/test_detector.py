import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radarcoord.afriat import afriat_matrix, certificate_slack
from radarcoord.core import NoiseModel, ProbeResponseDataset, substream
from radarcoord.detector import (
    EmpiricalCdf,
    Hypothesis,
    cdf_value,
    decide,
    detect,
    phi_hat,
    phi_star,
    psi_per_radar,
    relaxed_feasible,
    relaxed_feasible_lp,
    report_json,
    run_trial,
    sample_psi,
    type1_mc,
)
from radarcoord.forward import add_noise, generate_coordinated, generate_noncoordinated, default_config, sample_probes

GOLDEN = ProbeResponseDataset([[1.0, 0.5], [0.5, 1.0]], [[[1.0, 0.2]], [[0.2, 1.0]]])


def noisy_uniform(seed: int, T: int = 6, M: int = 2) -> ProbeResponseDataset:
    rng = np.random.default_rng(seed)
    ds = generate_noncoordinated(T, M, 2, rng)
    return add_noise(ds, NoiseModel(0.1), rng)


class TestPhiHat:
    @pytest.mark.parametrize("method", ["breakpoints", "bisection"])
    def test_golden(self, method):
        h = phi_hat(GOLDEN, 0, method=method)
        assert h.value == pytest.approx(0.4, abs=1e-9)

    def test_golden_certificate(self):
        h = phi_hat(GOLDEN, 0)
        a = afriat_matrix(GOLDEN, 0)
        assert h.attained and h.certified_at == h.value
        assert certificate_slack(a, h.certificate.u, h.certificate.lam, h.value) <= 1e-8

    def test_lp_agrees_away_from_breakpoints(self):
        for seed in range(20):
            a = afriat_matrix(noisy_uniform(seed), 0)
            knots = np.unique(-a[~np.eye(a.shape[0], dtype=bool)])
            for phi in np.linspace(knots[0] - 0.1, knots[-1] + 0.1, 41):
                if np.min(np.abs(knots - phi)) > 1e-3:
                    assert relaxed_feasible_lp(a, phi) == relaxed_feasible(a, phi)

    def test_single_observation(self):
        ds = ProbeResponseDataset([[1.0, 1.0]], [[[0.5, 0.5]]])
        h = phi_hat(ds, 0)
        assert h.value == 0.0 and h.degenerate

    def test_clean_coordinated_nonpositive(self):
        for seed in range(5):
            stat = phi_star(generate_coordinated(default_config(seed=seed)))
            assert np.all(stat.per_radar <= 0.0)
            assert stat.phi_star <= 1e-6

    def test_tol_must_be_positive(self):
        with pytest.raises(ValueError):
            phi_hat(GOLDEN, 0, tol=0.0)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            phi_hat(GOLDEN, 0, method="newton")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_methods_agree(self, seed):
        ds = noisy_uniform(seed)
        for i in range(ds.M):
            exact = phi_hat(ds, i).value
            bisect = phi_hat(ds, i, method="bisection").value
            assert exact <= bisect <= exact + 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_certificate_and_minimality(self, seed):
        ds = noisy_uniform(seed)
        for i in range(ds.M):
            h = phi_hat(ds, i)
            a = afriat_matrix(ds, i)
            assert certificate_slack(a, h.certificate.u, h.certificate.lam, h.certified_at) <= 1e-8
            assert h.value <= h.certified_at <= h.value + 1e-3
            assert np.all(h.certificate.lam >= 1.0 - 1e-12)
            assert relaxed_feasible(a, h.value) == h.attained
            assert not relaxed_feasible(a, h.value - 1e-12)
            assert relaxed_feasible(a, h.value + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-0.5, 0.5), st.floats(1e-4, 0.5))
    def test_monotone_feasibility(self, seed, phi, step):
        a = afriat_matrix(noisy_uniform(seed), 0)
        if relaxed_feasible(a, phi):
            assert relaxed_feasible(a, phi + step)


class TestPhiStar:
    def test_max_of_radars(self):
        ds = noisy_uniform(3, M=3)
        stat = phi_star(ds)
        assert stat.phi_star == stat.per_radar.max()
        assert [c.agent for c in stat.certificates] == [0, 1, 2]

    def test_single_radar(self):
        assert phi_star(GOLDEN).phi_star == phi_hat(GOLDEN, 0).value


class TestPsi:
    def test_zero_noise(self):
        cdf = sample_psi(sample_probes(10, 2, np.random.default_rng(0)), 3, NoiseModel(0.0), 50)
        assert np.all(cdf.samples == 0.0)

    def test_hand_example(self):
        probes = np.array([[1.0, 1.0], [1.0, 2.0]])
        eps = np.array([[[0.1, 0.0], [0.0, -0.1]]])  # (M=1, T=2, n=2)
        assert psi_per_radar(probes, eps)[0] == pytest.approx(0.2)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        probes = rng.uniform(0.1, 1.1, (5, 2))
        eps = rng.normal(size=(4, 3, 5, 2))
        got = psi_per_radar(probes, eps)
        for l in range(4):
            for i in range(3):
                ref = max(
                    probes[t] @ (eps[l, i, t] - eps[l, i, s]) for t in range(5) for s in range(5) if s != t
                )
                assert got[l, i] == pytest.approx(ref, abs=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 10))
    def test_nonnegative_with_equal_probes(self, seed, T):
        rng = np.random.default_rng(seed)
        probes = np.tile(rng.uniform(0.1, 1.1, 2), (T, 1))
        cdf = sample_psi(probes, 3, NoiseModel(0.2), 100, rng)
        assert cdf.samples.min() >= 0.0

    def test_nonnegative_at_default_configuration(self):
        probes = sample_probes(10, 2, substream(0, 0))
        cdf = sample_psi(probes, 3, NoiseModel(0.05), 100_000, substream(0, 2))
        assert cdf.samples.min() >= -1e-12

    def test_can_be_negative_with_two_unequal_probes(self):
        # alpha_1'd < 0 and alpha_2'd > 0 for d = eps_1 - eps_2
        probes = np.array([[1.0, 0.1], [0.1, 1.0]])
        eps = np.array([[[-1.0, 1.0], [0.0, 0.0]]])
        assert psi_per_radar(probes, eps)[0] == pytest.approx(-0.9)

    def test_reproducible(self):
        probes = sample_probes(10, 2, substream(1, 0))
        a = sample_psi(probes, 3, NoiseModel(0.1), 500, substream(1, 2))
        b = sample_psi(probes, 3, NoiseModel(0.1), 500, substream(1, 2), chunk=7)
        assert a.samples.tobytes() == b.samples.tobytes()

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            sample_psi(np.ones((3, 2)), 1, NoiseModel(0.1), 0)
        with pytest.raises(ValueError):
            sample_psi(np.ones((0, 2)), 1, NoiseModel(0.1), 5)


class TestCdfAndDecision:
    def test_cdf_values(self):
        cdf = EmpiricalCdf([3.0, 1.0, 2.0])
        assert cdf_value(cdf, 2.0) == pytest.approx(2 / 3)
        assert cdf_value(cdf, 0.5) == 0.0
        assert cdf_value(cdf, 3.0) == 1.0
        np.testing.assert_array_equal(cdf.samples, [1.0, 2.0, 3.0])

    def test_empty_cdf(self):
        with pytest.raises(ValueError):
            EmpiricalCdf([])

    def test_below_all_samples(self):
        d = decide(-1.0, EmpiricalCdf([0.1, 0.2]), 0.99)
        assert d.statistic == 1.0 and d.hypothesis is Hypothesis.H0

    def test_above_all_samples(self):
        d = decide(1.0, EmpiricalCdf([0.1, 0.2]), 0.01)
        assert d.statistic == 0.0 and d.hypothesis is Hypothesis.H1

    def test_hand_example(self):
        d = decide(0.15, EmpiricalCdf([0.1, 0.2, 0.3]), 0.5)
        assert d.statistic == pytest.approx(2 / 3)
        assert d.hypothesis is Hypothesis.H0

    def test_tie_goes_to_h1(self):
        d = decide(0.2, EmpiricalCdf([0.1, 0.2, 0.3, 0.4]), 0.5)
        assert d.statistic == 0.5 and d.hypothesis is Hypothesis.H1

    @pytest.mark.parametrize("gamma", [0.0, 1.0, -0.1])
    def test_gamma_range(self, gamma):
        with pytest.raises(ValueError):
            decide(0.0, EmpiricalCdf([0.0]), gamma)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=50), st.floats(-2, 2), st.floats(0, 2))
    def test_statistic_nonincreasing_in_test_value(self, samples, phi, bump):
        cdf = EmpiricalCdf(samples)
        lo, hi = decide(phi, cdf, 0.5), decide(phi + bump, cdf, 0.5)
        assert hi.statistic <= lo.statistic
        assert not (lo.hypothesis is Hypothesis.H1 and hi.hypothesis is Hypothesis.H0)

    def test_detect_golden(self):
        cdf = sample_psi(GOLDEN.probes, 1, NoiseModel(0.001), 500, substream(0, 2))
        assert detect(GOLDEN, cdf, 0.05).hypothesis is Hypothesis.H1

    def test_detect_clean(self):
        ds = generate_coordinated(default_config(seed=0))
        cdf = sample_psi(ds.probes, 3, NoiseModel(0.05), 500, substream(0, 2))
        d = detect(ds, cdf, 0.05)
        assert d.statistic == 1.0 and d.hypothesis is Hypothesis.H0


class TestNoiseBoundEquivalence:
    def test_phi_hat_below_psi_of_the_same_draws(self):
        for seed in range(10):
            clean = generate_coordinated(default_config(seed=seed))
            eps = np.random.default_rng(seed).normal(0.0, 0.05, clean.responses.shape)
            noisy = clean.with_responses(clean.responses + eps, noisy=True)
            psi = psi_per_radar(clean.probes, eps.transpose(1, 0, 2))
            stat = phi_star(noisy)
            assert np.all(stat.per_radar <= psi + 1e-9)


class TestMonteCarlo:
    def test_single_trial_rate(self):
        assert type1_mc(default_config(), NoiseModel(0.05), 0.1, 1, 100, seed=3) in (0.0, 1.0)

    def test_trials_positive(self):
        with pytest.raises(ValueError):
            type1_mc(default_config(), NoiseModel(0.05), 0.1, 0)

    def test_zero_noise_edge(self):
        # clean data give phi_star < 0, so the statistic is 1 and nothing is rejected
        assert type1_mc(default_config(), NoiseModel(0.0), 0.1, 5, 100, seed=0) == 0.0

    def test_deterministic(self):
        clean = generate_coordinated(default_config(seed=2))
        a = run_trial(clean, NoiseModel(0.1), 0.1, 200, 5)
        b = run_trial(clean, NoiseModel(0.1), 0.1, 200, 5)
        assert a == b


class TestReport:
    def test_fields(self):
        stat = phi_star(GOLDEN)
        cdf = EmpiricalCdf([0.0, 0.1])
        doc = json.loads(report_json(stat, decide(stat.phi_star, cdf, 0.1), 2, 7, 0.001))
        for key in ("phi_per_radar", "phi_star", "statistic", "gamma", "hypothesis", "L", "seed"):
            assert key in doc
        assert doc["hypothesis"] == "H1"
        assert doc["certificates"][0]["i"] == 1
        assert doc["phi_star"] == stat.phi_star
