import math

import numpy as np
import pytest

from nipt import (
    Alphabet,
    NetworkModel,
    Pmf,
    ProjectionTable,
    Sensor,
    STATUS_BOUNDARY,
    STATUS_INFEASIBLE,
    STATUS_REFERENCE,
    STATUS_SOLVED,
    brute_force_project,
    build_table,
    discrete_gaussian_pmf,
    kl_divergence,
    l1_distance,
    make_mean_statistic,
    make_variance_statistic,
    max_achievable_q,
    product_pmf,
    project,
)
from nipt.projection import kkt_residual, sensor_max
from nipt.statistics import make_custom_statistic

from conftest import bernoulli_model, random_pmf


def bernoulli_oracle(p: float, eta: float):
    """Closed form for {0,1} scores (0,1), f0=(1-p,p), 0 < eta < 1-p.

    The constraint is f(1) >= p + eta and KL from f0 increases in f(1) above
    p, so the minimizer pins f(1) at p + eta exactly.
    """
    t = p + eta
    kl = t * math.log(t / p) + (1.0 - t) * math.log((1.0 - t) / (1.0 - p))
    return t, kl


class TestSensorMax:
    def test_mean_binary(self, binary_model):
        assert max_achievable_q(binary_model) == 1.0

    def test_two_sensor_additivity(self, binary_sensor):
        model = NetworkModel([binary_sensor, binary_sensor])
        assert max_achievable_q(model) == 2.0

    def test_variance_nine_letters(self):
        alph = Alphabet.integer_range(-4, 4)
        f0 = discrete_gaussian_pmf(alph, 1.0)
        stat = make_variance_statistic(f0, 1.0)
        assert sensor_max(stat, alph) == pytest.approx(15.0, abs=1e-12)

    def test_frank_wolfe_fallback_matches_closed_form(self):
        # custom copy of a variance statistic exercises the iterative path
        alph = Alphabet.integer_range(-2, 2)
        f0 = discrete_gaussian_pmf(alph, 1.0)
        ref = make_variance_statistic(f0)
        stat = make_custom_statistic(
            "var-copy", ref.eval_fn, ref.gradient_fn, ref.lipschitz
        )
        expected = 4.0 - f0.variance()
        assert sensor_max(stat, alph) == pytest.approx(expected, abs=1e-6)


class TestProject:
    def test_reference_feasible_at_eta_zero(self, binary_model):
        res = project(binary_model, 0.0)
        assert res.status == STATUS_REFERENCE
        assert res.kl_value == 0.0
        assert res.lam == 0.0
        assert res.factors[0] is binary_model.sensors[0].f0

    def test_infeasible_above_max(self, binary_model):
        res = project(binary_model, 1.5)
        assert res.status == STATUS_INFEASIBLE
        assert res.factors is None

    @pytest.mark.parametrize("p,eta", [(0.5, 0.25), (0.5, 0.4), (0.3, 0.1), (0.2, 0.6)])
    def test_bernoulli_closed_form(self, p, eta):
        model = bernoulli_model(p)
        res = project(model, eta, 1e-7)
        t, kl = bernoulli_oracle(p, eta)
        assert res.status == STATUS_SOLVED
        assert res.factors[0].probs[1] == pytest.approx(t, abs=1e-6)
        assert res.kl_value == pytest.approx(kl, abs=1e-6)

    def test_active_constraint_within_band(self, three_letter_variance_model):
        tol = 1e-6
        model = three_letter_variance_model
        res = project(model, 0.2, tol)
        assert res.status == STATUS_SOLVED
        band = tol * model.total_lipschitz
        assert abs(res.achieved_q - 0.2) <= band
        assert res.residual <= tol

    def test_boundary_at_exact_max(self, binary_model):
        res = project(binary_model, 1.0)
        assert res.status == STATUS_BOUNDARY
        np.testing.assert_allclose(res.factors[0].probs, [0.0, 1.0])
        assert res.kl_value == pytest.approx(math.log(2.0))
        assert res.lam is None

    def test_kl_splits_over_sensors(self, binary_sensor):
        model = NetworkModel([binary_sensor, binary_sensor])
        res = project(model, 0.8)
        parts = [kl_divergence(f, binary_sensor.f0) for f in res.factors]
        assert res.kl_value == pytest.approx(sum(parts), abs=1e-9)
        # symmetric sensors split the target evenly
        assert res.factors[0].probs[1] == pytest.approx(res.factors[1].probs[1], abs=1e-9)

    def test_gradient_representative_invariance(self):
        """Adding a constant to every gradient entry must not move the
        solution: the tilt renormalizes it away. Both statistics run the
        generic solver so the comparison isolates the representative."""
        alph = Alphabet.integer_range(-1, 1)
        f0 = Pmf.uniform(alph)
        var = make_variance_statistic(f0)
        plain = make_custom_statistic(
            "var-copy", var.eval_fn, var.gradient_fn, var.lipschitz
        )
        shifted = make_custom_statistic(
            "var-shifted",
            var.eval_fn,
            lambda f, _g=var.gradient_fn: np.asarray(_g(f)) + 5.0,
            var.lipschitz,
        )
        m_ref = NetworkModel([Sensor(alph, f0, plain)])
        m_shift = NetworkModel([Sensor(alph, f0, shifted)])
        r1 = project(m_ref, 0.2)
        r2 = project(m_shift, 0.2)
        assert l1_distance(r1.factors[0], r2.factors[0]) <= 1e-9
        # and the dedicated variance path lands on the same point
        r3 = project(NetworkModel([Sensor(alph, f0, var)]), 0.2)
        assert l1_distance(r1.factors[0], r3.factors[0]) <= 1e-6

    def test_kkt_residual_small_when_solved(self, three_letter_variance_model):
        res = project(three_letter_variance_model, 0.25, 1e-7)
        assert kkt_residual(three_letter_variance_model, res.factors, 0.25) <= 1e-5


class TestPythagorean:
    def test_inequality_on_random_feasible_joints(self, binary_sensor):
        """I(fhat||f0) >= I(fhat||f*) + I(f*||f0) for feasible fhat (smoke
        scale; acceptance runs 10^3 per instance)."""
        model = NetworkModel([binary_sensor, binary_sensor])
        eta = 0.6
        res = project(model, eta, 1e-8)
        f_star = product_pmf(res.factors)
        f0 = product_pmf([s.f0 for s in model.sensors])
        rng = np.random.default_rng(41)
        checked = 0
        while checked < 100:
            probs = rng.dirichlet(np.ones(4))
            joint = Pmf(f0.alphabet, probs)
            marginals = [
                Pmf(model.sensors[0].alphabet, [probs[0] + probs[1], probs[2] + probs[3]]),
                Pmf(model.sensors[0].alphabet, [probs[0] + probs[2], probs[1] + probs[3]]),
            ]
            if model.global_eval(marginals) < eta:
                continue
            lhs = kl_divergence(joint, f0)
            rhs = kl_divergence(joint, f_star) + res.kl_value
            assert lhs >= rhs - 1e-9
            checked += 1


class TestBruteForce:
    def test_matches_bernoulli_closed_form(self):
        model = bernoulli_model(0.5)
        res = brute_force_project(model, 0.3)
        t, kl = bernoulli_oracle(0.5, 0.3)
        assert res.factors[0].probs[1] == pytest.approx(t, abs=1e-3)
        assert res.kl_value == pytest.approx(kl, abs=1e-4)

    def test_eta_zero_returns_reference(self, binary_model):
        res = brute_force_project(binary_model, 0.0)
        assert res.kl_value == pytest.approx(0.0, abs=1e-12)

    def test_three_letter_variance_kkt(self, three_letter_variance_model):
        res = brute_force_project(three_letter_variance_model, 0.3)
        assert kkt_residual(three_letter_variance_model, res.factors, 0.3) <= 1e-2

    def test_agrees_with_fast_solver(self, three_letter_variance_model):
        fast = project(three_letter_variance_model, 0.25, 1e-7)
        slow = brute_force_project(three_letter_variance_model, 0.25)
        assert abs(fast.kl_value - slow.kl_value) <= 1e-4
        assert l1_distance(fast.factors[0], slow.factors[0]) <= 1e-3

    def test_product_structure_on_two_sensor_joint(self, binary_sensor):
        """The joint-space oracle lands on a product distribution."""
        model = NetworkModel([binary_sensor, binary_sensor])
        res = brute_force_project(model, 0.5)
        joint = res.joint
        assert joint is not None
        prod = product_pmf(res.factors)
        assert float(np.abs(joint - prod.probs).sum()) <= 1e-3


class TestTable:
    def test_bernoulli_feasibility_boundary(self):
        """c=2, kappa=0.25, max q = 0.5: n < 8 infeasible, n = 8 hits the
        maximum exactly (target 0.5), n > 8 solved interior."""
        model = bernoulli_model(0.5)
        table = build_table(model, 2.0, 0.25, 12)
        for n in range(1, 8):
            assert table.lookup(n).status == STATUS_INFEASIBLE, n
        entry8 = table.lookup(8)
        assert entry8.status == STATUS_BOUNDARY
        assert entry8.factors[0].probs[1] == pytest.approx(1.0)
        assert table.first_feasible_n() == 8
        for n in range(9, 13):
            assert table.lookup(n).status == STATUS_SOLVED, n

    def test_eta_and_lookup_range(self):
        model = bernoulli_model(0.5)
        table = build_table(model, 2.0, 0.25, 4)
        assert table.eta(4) == pytest.approx(0.75)
        with pytest.raises(KeyError):
            table.lookup(0)
        with pytest.raises(KeyError):
            table.lookup(5)

    def test_kl_non_increasing_over_feasible_range(self):
        model = bernoulli_model(0.5)
        table = build_table(model, 2.0, 0.25, 20)
        kls = [table.lookup(n).kl_value for n in range(8, 21)]
        for a, b in zip(kls, kls[1:]):
            assert b <= a + 1e-9

    def test_reference_feasible_needs_nonpositive_target(self, binary_model):
        # eta(n) = c/n + drift > 0 always, so no entry is reference-feasible
        table = build_table(binary_model, 1.0, 0.25, 10)
        statuses = {table.lookup(n).status for n in range(1, 11)}
        assert STATUS_REFERENCE not in statuses
        # but a direct nonpositive target is
        assert project(binary_model, -0.5).status == STATUS_REFERENCE

    def test_save_load_round_trip(self, tmp_path, three_letter_variance_model):
        model = three_letter_variance_model
        table = build_table(model, 1.5, 0.1, 10)
        path = tmp_path / "table.jsonl"
        table.save(path)
        loaded = ProjectionTable.load(path, model)
        assert loaded.scan_threshold == table.scan_threshold
        assert loaded.drift == table.drift
        assert loaded.n_max == table.n_max
        assert loaded.fingerprint == table.fingerprint
        for n in range(1, 11):
            a, b = table.lookup(n), loaded.lookup(n)
            assert a.status == b.status
            if a.factors is not None:
                assert l1_distance(a.factors[0], b.factors[0]) <= 1e-12
                assert b.kl_value == pytest.approx(a.kl_value, abs=1e-12)

    def test_load_rejects_wrong_model(self, tmp_path, binary_model, gauss9_model):
        table = build_table(binary_model, 1.0, 0.25, 4)
        path = tmp_path / "table.jsonl"
        table.save(path)
        with pytest.raises(ValueError):
            ProjectionTable.load(path, gauss9_model)

    def test_workers_do_not_change_results(self, three_letter_variance_model):
        model = three_letter_variance_model
        serial = build_table(model, 1.0, 0.1, 8, workers=1)
        parallel = build_table(model, 1.0, 0.1, 8, workers=2)
        for n in range(1, 9):
            a, b = serial.lookup(n), parallel.lookup(n)
            assert a.status == b.status
            if a.factors is not None:
                assert l1_distance(a.factors[0], b.factors[0]) == 0.0

    def test_zero_threshold_table(self, binary_model):
        # degenerate scan threshold: every target collapses to the drift
        table = build_table(binary_model, 0.0, 0.25, 3)
        for n in range(1, 4):
            entry = table.lookup(n)
            assert entry.status == STATUS_SOLVED
            assert entry.eta == pytest.approx(0.25)
