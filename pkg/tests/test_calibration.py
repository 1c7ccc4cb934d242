import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rkhscal import (
    CalibrationProblem,
    Dataset,
    Design,
    MaternKernel,
    QuadratureRule,
    Simulator,
    estimate_theta,
    exponential_kernel,
    kernel_matrix,
    ko_objective,
    ko_objective_decomposed,
    krr_fit,
    krr_predict,
    lambda_schedule,
    residual_vector,
    rkhs_norm_sq_via_v,
    sobol_design,
    theta_prime_oracle,
)
from rkhscal import benchmark
from rkhscal.calibration import ko_objective_many
from rkhscal.errors import ConfigError, NumericalError
from rkhscal.experiment import generate_physical_data

EXP = exponential_kernel()


def problem(y, sim, lam=0.1, kernel=EXP, lo=-5.0, hi=5.0, X=None):
    X = X if X is not None else sobol_design(len(y))
    return CalibrationProblem(Dataset(X, y), sim, kernel, lam, lo, hi)


def zero_sim():
    return Simulator(lambda X, th: np.zeros(X.shape[0]), name="zero")


def random_problem(rng):
    n = int(rng.integers(2, 51))
    nu = float(rng.choice([0.5, 1.5, 2.5]))
    kernel = MaternKernel(nu, float(rng.uniform(0.3, 3.0)))
    X = Design(rng.uniform(-1, 1, n), -1.0, 1.0)
    y = rng.normal(size=n)
    sim = Simulator(lambda X, th: th[0] * np.sin(X[:, 0]) + th[1] * X[:, 0] ** 2, theta_dim=2)
    lam = float(10 ** rng.uniform(-4, 0))
    p = CalibrationProblem(Dataset(X, y), sim, kernel, lam, [-5, -5], [5, 5])
    return p, rng.uniform(-5, 5, 2)


class TestResidualAndObjective:
    def test_zero_simulator_residual(self):
        y = np.array([0.3, -1.0, 2.0])
        np.testing.assert_array_equal(residual_vector(problem(y, zero_sim()), [0.0]), y)

    def test_perfect_model_residual(self):
        X = sobol_design(15)
        xi = benchmark.true_process(X.points[:, 0])
        sim = Simulator(lambda X, th: benchmark.true_process(X[:, 0]))
        p = problem(xi, sim, X=X)
        assert np.all(residual_vector(p, [1.0]) == 0.0)
        assert ko_objective(p, [1.0]) == 0.0

    def test_scalar_objective(self):
        p = problem(np.array([1.0]), zero_sim(), lam=1.0, X=Design([0.0], -1, 1))
        assert ko_objective(p, [0.0]) == pytest.approx(0.5, rel=1e-15)
        terms = ko_objective_decomposed(p, [0.0])
        assert terms.train_term == pytest.approx(0.25, rel=1e-15)
        assert terms.norm_term == pytest.approx(0.25, rel=1e-15)
        assert terms.total == pytest.approx(0.5, rel=1e-15)

    def test_zero_residual_terms(self):
        p = problem(np.zeros(5), zero_sim())
        terms = ko_objective_decomposed(p, [0.0])
        assert (terms.train_term, terms.norm_term) == (0.0, 0.0)

    def test_benchmark_residual_at_zero(self):
        X = sobol_design(12)
        y = benchmark.true_process(X.points[:, 0]) + 0.01
        p = problem(y, benchmark.benchmark_simulator("difference"), X=X)
        # difference reading: y_s(x, 0) = integral of Phi(x - t) * 0.8 dt
        x = X.points[:, 0]
        ys0 = 0.8 * (2 - np.exp(-(1 + x)) - np.exp(-(1 - x)))
        np.testing.assert_allclose(residual_vector(p, [0.0]), y - ys0, rtol=1e-11)

    def test_identity_against_explicit_fit(self):
        rng = np.random.default_rng(1)
        X = sobol_design(30)
        y = rng.normal(size=30)
        sim = Simulator(lambda X, th: th[0] * np.cos(X[:, 0]))
        p = problem(y, sim, lam=0.02, X=X)
        Y = residual_vector(p, [0.4])
        fit = krr_fit(EXP, X, 0.02, y=Y)
        train = np.mean((Y - krr_predict(fit, X.points)) ** 2)
        norm = fit.coeffs @ kernel_matrix(EXP, X.points) @ fit.coeffs
        assert ko_objective(p, [0.4]) == pytest.approx(train + 0.02 * norm, rel=1e-8)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_decomposition_identity(self, seed):
        p, theta = random_problem(np.random.default_rng(seed))
        total = ko_objective(p, theta)
        terms = ko_objective_decomposed(p, theta)
        assert abs(total - terms.total) <= 1e-8 * total

    def test_vectorized_matches_scalar(self):
        p, _ = random_problem(np.random.default_rng(4))
        thetas = np.random.default_rng(5).uniform(-5, 5, (7, 2))
        np.testing.assert_allclose(ko_objective_many(p, thetas), [ko_objective(p, t) for t in thetas], rtol=1e-12)

    def test_positive_unless_zero_residual(self):
        p, _ = random_problem(np.random.default_rng(8))
        vals = ko_objective_many(p, np.random.default_rng(9).uniform(-5, 5, (50, 2)))
        assert np.all(vals > 0)


class TestProblemValidation:
    def test_empty_box(self):
        with pytest.raises(ConfigError):
            problem(np.zeros(3), zero_sim(), lo=1.0, hi=0.0)

    def test_nonpositive_lambda(self):
        with pytest.raises(ConfigError):
            problem(np.zeros(3), zero_sim(), lam=0.0)

    def test_theta_shape(self):
        with pytest.raises(ConfigError):
            residual_vector(problem(np.zeros(3), zero_sim()), [0.0, 1.0])

    def test_non_finite_simulator(self):
        sim = Simulator(lambda X, th: np.full(X.shape[0], np.inf))
        with pytest.raises(NumericalError):
            residual_vector(problem(np.zeros(3), sim), [0.0])


class TestEstimateTheta:
    def test_perfect_model_recovers_parameter(self):
        X = sobol_design(40)
        truth = 1.37
        f = lambda X, th: th[0] * np.sin(2 * X[:, 0]) + np.exp(th[0] * X[:, 0] / 3)  # noqa: E731
        sim = Simulator(f)
        p = problem(f(X.points, [truth]), sim, X=X)
        res = estimate_theta(p)
        assert res.theta_hat[0] == pytest.approx(truth, abs=1e-6)
        assert res.objective_value <= 1e-14

    def test_linear_path_exact(self):
        X = sobol_design(40)
        sim = Simulator(lambda X, th: th[0] * X[:, 0] + th[1], theta_dim=2, linear_in_theta=True)
        y = 0.7 * X.points[:, 0] - 1.2
        p = CalibrationProblem(Dataset(X, y), sim, EXP, 0.05, [-5, -5], [5, 5])
        res = estimate_theta(p, grid_points=21)
        np.testing.assert_allclose(res.theta_hat, [0.7, -1.2], atol=1e-10)
        assert res.trace["linear_exact"] is not None

    def test_symmetric_objective(self):
        # y_s = (theta - t0)^2 g(x): the objective is symmetric about t0
        X = sobol_design(25)
        t0 = 0.3
        sim = Simulator(lambda X, th: (th[0] - t0) ** 2 * np.cos(X[:, 0]))
        p = problem(np.zeros(25), sim, lo=t0 - 2.0, hi=t0 + 2.0, X=X)
        assert estimate_theta(p).theta_hat[0] == pytest.approx(t0, abs=1e-6)

    def test_ties_pick_smallest(self):
        # y_s = theta^2 g with data 2.25 g: minima at theta = -1.5 and 1.5
        X = sobol_design(20)
        sim = Simulator(lambda X, th: th[0] ** 2 * np.cos(X[:, 0]))
        p = problem(2.25 * np.cos(X.points[:, 0]), sim, X=X)
        res = estimate_theta(p)
        assert res.trace["ties"] == 2
        assert res.theta_hat[0] == pytest.approx(-1.5, abs=1e-6)

    def test_refined_not_worse_than_grid(self):
        rng = np.random.default_rng(2)
        X = sobol_design(30)
        sim = Simulator(lambda X, th: np.sin(th[0] * X[:, 0]))
        p = problem(np.sin(0.83 * X.points[:, 0]) + 0.05 * rng.normal(size=30), sim, lo=0, hi=3, X=X)
        res = estimate_theta(p)
        assert res.trace["refined_value"] <= res.trace["grid_value"]
        assert p.in_box(res.theta_hat)

    def test_multidimensional_nelder_mead(self):
        X = sobol_design(50)
        f = lambda X, th: np.sin(th[0] * X[:, 0]) + th[1] * X[:, 0] ** 2  # noqa: E731
        sim = Simulator(f, theta_dim=2)
        p = CalibrationProblem(Dataset(X, f(X.points, [1.1, -0.4])), sim, EXP, 0.05, [0, -2], [3, 2])
        res = estimate_theta(p, grid_points=31)
        np.testing.assert_allclose(res.theta_hat, [1.1, -0.4], atol=1e-5)

    def test_shift_invariance(self):
        rng = np.random.default_rng(6)
        X = sobol_design(30)
        base = Simulator(lambda X, th: np.tanh(th[0] * X[:, 0]))
        shifted = Simulator(lambda X, th: np.tanh(th[0] * X[:, 0]) + 3.0)
        y = np.tanh(0.6 * X.points[:, 0]) + 0.1 * rng.normal(size=30)
        a = estimate_theta(problem(y, base, lo=-3, hi=3, X=X)).theta_hat
        b = estimate_theta(problem(y + 3.0, shifted, lo=-3, hi=3, X=X)).theta_hat
        assert a[0] == pytest.approx(b[0], abs=1e-8)

    def test_benchmark_n600_single_replicate(self):
        tp = benchmark.theta_prime().theta_prime
        data = generate_physical_data(600, 0.1, seed=0)
        p = CalibrationProblem(
            data, benchmark.benchmark_simulator(), benchmark.KERNEL, lambda_schedule("improved", 600, 1, 1), -5, 5
        )
        assert abs(estimate_theta(p).theta_hat[0] - tp) <= 0.05

    @pytest.mark.parametrize("lam_kind", ["standard", 1e-6, 1e-10])
    def test_noise_free_consistency(self, lam_kind):
        tp = benchmark.theta_prime().theta_prime
        data = generate_physical_data(400, 0.0, seed=0)
        lam = lambda_schedule(lam_kind, 400, 1, 1) if isinstance(lam_kind, str) else lam_kind
        p = CalibrationProblem(data, benchmark.benchmark_simulator(), benchmark.KERNEL, lam, -5, 5)
        assert abs(estimate_theta(p).theta_hat[0] - tp) <= 0.02


class TestThetaPrimeOracle:
    def test_vanishing_norm(self):
        w = lambda t: 1 + t**2  # noqa: E731
        res = theta_prime_oracle(lambda th: lambda t: (th - 0.4) * w(t), EXP, -1, 1, (-2, 2), grid_points=41)
        assert res.theta_prime == pytest.approx(0.4, abs=1e-8)
        assert res.value == pytest.approx(0.0, abs=1e-15)

    def test_affine_vertex_agrees(self):
        res = theta_prime_oracle(lambda th: lambda t: np.exp(t) - th, EXP, -1, 1, (-5, 5), affine=True, grid_points=101)
        assert res.vertex is not None
        assert abs(res.theta_prime - res.vertex) <= 1e-8
        assert res.norms.shape == res.thetas.shape == (101,)

    def test_affine_vertex_flat_minimum(self):
        # golden section cannot resolve theta below sqrt(eps * f_min / curvature),
        # about 3e-8 here; the vertex path has no such floor
        res = theta_prime_oracle(
            lambda th: lambda t: np.cos(t) - th * t**2, EXP, -1, 1, (-5, 5), affine=True, grid_points=101
        )
        assert abs(res.theta_prime - res.vertex) <= 1e-7
        assert res.value == pytest.approx(res.vertex_value, rel=1e-12)

    def test_benchmark_reading_vertex(self):
        res = benchmark.theta_prime()
        assert abs(res.theta_prime - res.vertex) <= 1e-6

    def test_two_resolutions(self):
        coarse = QuadratureRule(32, 6)
        for theta in (-1.0, 0.0, 0.672, 2.5):
            a = benchmark.discrepancy(benchmark.ADOPTED_READING, theta)
            b = benchmark.discrepancy(benchmark.ADOPTED_READING, theta, coarse)
            assert abs(rkhs_norm_sq_via_v(a) - rkhs_norm_sq_via_v(b)) <= 1e-7


class TestBenchmark:
    def test_true_process_at_zero(self):
        assert benchmark.true_process(0.0) == pytest.approx(1 - np.exp(-2), rel=1e-15)

    def test_unknown_reading(self):
        with pytest.raises(ConfigError):
            benchmark.get_reading("nope")

    def test_simulator_is_affine_and_deterministic(self):
        sim = benchmark.benchmark_simulator()
        X = sobol_design(9).points
        a, b, c = sim(X, [0.0]), sim(X, [1.0]), sim(X, [2.5])
        np.testing.assert_allclose(c, a + 2.5 * (b - a), rtol=1e-13, atol=1e-15)
        np.testing.assert_array_equal(sim(X, [1.0]), b)

    def test_simulator_matches_discrepancy(self):
        X = sobol_design(7).points
        sim = benchmark.benchmark_simulator()
        zeta = benchmark.discrepancy(benchmark.ADOPTED_READING, 0.9)
        np.testing.assert_allclose(sim(X, [0.9]), benchmark.true_process(X[:, 0]) - zeta(X[:, 0]), rtol=1e-13)

    @pytest.mark.slow
    def test_select_reading(self):
        name, table = benchmark.select_reading()
        assert name == benchmark.ADOPTED_READING
        values = {row["reading"]: row["theta_prime"] for row in table}
        # frozen oracle values for the four candidate readings
        assert values["literal"] == pytest.approx(-2.35337, abs=1e-5)
        assert values["displayed"] == pytest.approx(-3.12456, abs=1e-5)
        assert values["difference"] == pytest.approx(-0.51077, abs=1e-5)
        assert values["weighted-difference"] == pytest.approx(0.78114, abs=1e-5)
