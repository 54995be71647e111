import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pencap.mortality import (
    CohortState,
    EstimationError,
    MortalityObservation,
    PiecewiseLinearBasis,
    evolve_binomial,
    evolve_deterministic,
    fit_year_mle,
    log_likelihood,
    survival_probability,
)

BASIS = PiecewiseLinearBasis()


class TestBasis:
    def test_knot_values(self):
        np.testing.assert_array_equal(BASIS.evaluate(18), [1.0, 0.0, 0.0])
        np.testing.assert_array_equal(BASIS.evaluate(50), [0.0, 1.0, 0.0])
        np.testing.assert_array_equal(BASIS.evaluate(100), [0.0, 0.0, 1.0])

    def test_age_65(self):
        # hand evaluation: 2 - 65/50 = 0.7 and 65/50 - 1 = 0.3
        np.testing.assert_allclose(BASIS.evaluate(65), [0.0, 0.7, 0.3], atol=1e-15)

    def test_supports(self):
        vals = BASIS.evaluate(np.arange(51, 101))
        assert np.all(vals[:, 0] == 0.0), "first function vanishes above the break"
        vals = BASIS.evaluate(np.arange(18, 50))
        assert np.all(vals[:, 2] == 0.0), "last function vanishes below the break"

    def test_continuity(self):
        ages = np.linspace(18, 100, 4001)
        vals = BASIS.evaluate(ages)
        jumps = np.abs(np.diff(vals, axis=0)).max()
        assert jumps < 1e-3  # increments bounded by slope * grid step

    def test_partition_of_unity(self):
        ages = np.linspace(18, 100, 831)
        np.testing.assert_allclose(BASIS.evaluate(ages).sum(axis=1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("age", [17, 101, -3, 150])
    def test_age_domain(self, age):
        with pytest.raises(ValueError):
            BASIS.evaluate(age)

    def test_bad_knots(self):
        with pytest.raises(ValueError):
            PiecewiseLinearBasis((18.0, 18.0, 100.0))
        with pytest.raises(ValueError):
            PiecewiseLinearBasis((20.0, 100.0))


class TestSurvivalProbability:
    def test_neutral_factors(self):
        assert survival_probability(np.zeros(3), 65) == 0.5

    def test_hand_value(self):
        # u = 0.7*2 + 0.3*(-1) = 1.1
        expected = 1.0 / (1.0 + math.exp(-1.1))
        assert survival_probability(np.array([0.0, 2.0, -1.0]), 65) == pytest.approx(
            expected, rel=1e-12
        )

    def test_saturation_stays_inside_unit_interval(self):
        p = survival_probability(np.array([0.0, 0.0, 40.0]), 100)
        assert p < 1.0
        assert p == np.nextafter(1.0, 0.0)
        q = survival_probability(np.array([0.0, 0.0, -40.0]), 100)
        assert q > 0.0

    def test_extreme_logits_are_finite(self):
        for v3 in (700.0, -700.0, 5000.0, -5000.0):
            p = survival_probability(np.array([0.0, 0.0, v3]), 100)
            assert 0.0 < p < 1.0

    def test_knot_logit_identity(self):
        v = np.array([1.3, -0.4, 0.9])
        for age, vi in [(18, v[0]), (50, v[1]), (100, v[2])]:
            assert survival_probability(v, age) == 1.0 / (1.0 + np.exp(-vi))

    @given(
        v=st.tuples(st.floats(-8, 8), st.floats(-8, 8), st.floats(-8, 8)),
        age=st.integers(18, 100),
        bump=st.floats(1e-6, 1.0),
    )
    @settings(max_examples=50)
    def test_monotone_in_active_factors(self, v, age, bump):
        # strictness is checked away from sigmoid saturation, where a
        # float64 increment is guaranteed representable
        v = np.array(v)
        phi = BASIS.evaluate(age)
        base = survival_probability(v, age)
        for i in range(3):
            shifted = v.copy()
            shifted[i] += bump
            p = survival_probability(shifted, age)
            if phi[i] > 0:
                assert p > base
            else:
                assert p == base


class TestCohortEvolution:
    def test_binomial_certain_survival(self, rng):
        assert evolve_binomial(CohortState(65, 100), 1.0, rng) == CohortState(66, 100)

    def test_binomial_empty(self, rng):
        assert evolve_binomial(CohortState(70, 0), 0.9, rng).count == 0

    def test_binomial_mean(self):
        rng = np.random.default_rng(101)
        draws = rng.binomial(1000, 0.97, size=100_000)
        # CLT: se of the mean is sqrt(1000*0.97*0.03/1e5) = 0.017
        assert abs(draws.mean() - 970.0) < 0.5

    def test_binomial_moments_match(self):
        rng = np.random.default_rng(77)
        n, p, reps = 500, 0.9, 200_000
        draws = rng.binomial(n, p, size=reps)
        mean_se = math.sqrt(n * p * (1 - p) / reps)
        assert abs(draws.mean() - n * p) < 4 * mean_se
        var_se = n * p * (1 - p) * math.sqrt(2.0 / (reps - 1))
        assert abs(draws.var(ddof=1) - n * p * (1 - p)) < 4 * var_se

    def test_binomial_rejects_fractional_count(self, rng):
        with pytest.raises(ValueError):
            evolve_binomial(CohortState(65, 10.5), 0.9, rng)

    def test_deterministic(self):
        assert evolve_deterministic(CohortState(65, 100), 0.5) == CohortState(66, 50.0)
        assert evolve_deterministic(CohortState(65, 100), 1.0).count == 100.0

    def test_deterministic_chain(self):
        state = CohortState(65, 100)
        for p in (0.9, 0.8):
            state = evolve_deterministic(state, p)
        assert state.count == pytest.approx(72.0, rel=1e-12)
        assert state.age == 67

    def test_probability_domain(self, rng):
        with pytest.raises(ValueError):
            evolve_deterministic(CohortState(65, 10), 1.5)
        with pytest.raises(ValueError):
            evolve_binomial(CohortState(65, 10), -0.1, rng)


def _single_age_obs(age, exposure, survivors):
    return MortalityObservation(
        ages=np.array([age]), exposures=np.array([exposure]), survivors=np.array([survivors])
    )


class TestLogLikelihood:
    def test_symmetric_point(self):
        value, grad, _ = log_likelihood(np.zeros(3), _single_age_obs(65, 10, 5))
        assert value == pytest.approx(-10 * math.log(2), rel=1e-12)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_monotone_divergence(self):
        obs = _single_age_obs(65, 10, 5)
        values = [log_likelihood(np.full(3, u), obs)[0] for u in (-10, -100, -500)]
        assert values[0] > values[1] > values[2]

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        ages = np.arange(18, 101)
        exposures = rng.integers(50, 5000, size=ages.size)
        probs = rng.uniform(0.2, 0.99, size=ages.size)
        survivors = np.minimum(exposures, (exposures * probs).astype(np.int64))
        obs = MortalityObservation(ages, exposures, survivors)
        h = 1e-6
        for _ in range(5):
            v = rng.normal(0.0, 2.0, size=3)
            _, grad, hess = log_likelihood(v, obs)
            for i in range(3):
                e = np.zeros(3)
                e[i] = h
                fd = (log_likelihood(v + e, obs)[0] - log_likelihood(v - e, obs)[0]) / (2 * h)
                assert abs(grad[i] - fd) / max(abs(fd), 1.0) < 1e-5
                fd_row = (log_likelihood(v + e, obs)[1] - log_likelihood(v - e, obs)[1]) / (2 * h)
                np.testing.assert_allclose(hess[i], fd_row, rtol=1e-5, atol=1e-4)

    def test_hessian_negative_semidefinite(self):
        rng = np.random.default_rng(7)
        ages = np.arange(18, 101)
        exposures = np.full(ages.size, 1000)
        survivors = (exposures * 0.9).astype(np.int64)
        obs = MortalityObservation(ages, exposures, survivors)
        for _ in range(20):
            v = rng.normal(0.0, 3.0, size=3)
            _, _, hess = log_likelihood(v, obs)
            top = np.linalg.eigvalsh(hess)[-1]
            assert top <= 1e-9 * np.linalg.norm(hess)


class TestFit:
    def test_recovers_generating_factors(self):
        v_true = np.array([7.0, 5.0, 1.5])
        ages = np.arange(18, 101)
        exposures = np.full(ages.size, 1_000_000, dtype=np.int64)
        p = survival_probability(v_true, ages)
        survivors = np.round(exposures * p).astype(np.int64)
        obs = MortalityObservation(ages, exposures, survivors)
        v_hat = fit_year_mle(obs, tol=1e-5)
        np.testing.assert_allclose(v_hat, v_true, atol=1e-2)

    def test_single_age_single_function(self):
        basis = PiecewiseLinearBasis((18.0, 100.0))
        obs = _single_age_obs(50, 100, 50)
        v_hat = fit_year_mle(obs, basis)
        # logit(0.5) = 0 in both coordinates since phi1(50) + phi2(50) = 1
        value = float(BASIS.evaluate(50) @ np.zeros(3))
        assert value == 0.0
        np.testing.assert_allclose(basis.evaluate(50) @ v_hat, 0.0, atol=1e-8)

    def test_deterministic_fit(self):
        rng = np.random.default_rng(3)
        ages = np.arange(18, 101)
        exposures = rng.integers(100, 10_000, size=ages.size)
        survivors = (exposures * rng.uniform(0.5, 0.99, size=ages.size)).astype(np.int64)
        obs = MortalityObservation(ages, exposures, survivors)
        first = fit_year_mle(obs, tol=1e-8)
        second = fit_year_mle(obs, tol=1e-8)
        assert np.array_equal(first, second)

    def test_fit_is_local_maximum(self):
        rng = np.random.default_rng(11)
        ages = np.arange(18, 101)
        exposures = np.full(ages.size, 2000, dtype=np.int64)
        survivors = np.round(exposures * survival_probability(np.array([6.0, 4.0, 1.0]), ages))
        obs = MortalityObservation(ages, exposures, survivors.astype(np.int64))
        v_hat = fit_year_mle(obs, tol=1e-9)
        best = log_likelihood(v_hat, obs)[0]
        for _ in range(100):
            delta = rng.normal(size=3)
            delta *= 0.1 / np.linalg.norm(delta)
            assert log_likelihood(v_hat + delta, obs)[0] <= best

    def test_unidentifiable_names_basis_index(self):
        ages = np.arange(18, 51)  # no exposure above the break
        obs = MortalityObservation(
            ages, np.full(ages.size, 100, dtype=np.int64), np.full(ages.size, 90, dtype=np.int64)
        )
        with pytest.raises(EstimationError, match="basis function 3"):
            fit_year_mle(obs)

    def test_nonconvergence_reports_last_iterate(self):
        ages = np.arange(18, 101)
        exposures = np.full(ages.size, 1000, dtype=np.int64)
        survivors = (exposures * 0.8).astype(np.int64)
        obs = MortalityObservation(ages, exposures, survivors)
        with pytest.raises(EstimationError, match="no convergence") as err:
            fit_year_mle(obs, max_iter=1)
        assert err.value.last_iterate is not None
        assert np.all(np.isfinite(err.value.last_iterate))

    def test_saturated_data_fits_to_certain_survival(self):
        # all survivors: the optimum runs to infinity but the gradient
        # vanishes there, so the fit returns a saturated curve
        ages = np.arange(18, 101)
        exposures = np.full(ages.size, 1000, dtype=np.int64)
        obs = MortalityObservation(ages, exposures, exposures.copy())
        v_hat = fit_year_mle(obs, tol=1e-6)
        assert np.all(survival_probability(v_hat, ages) > 0.999)

    def test_observation_validation(self):
        with pytest.raises(ValueError):
            _single_age_obs(65, 10, 11)
        with pytest.raises(ValueError):
            _single_age_obs(10, 10, 5)
