"""Supply/demand/excess maps, the projection step and their properties."""

import numpy as np
import pytest

from eqprice.gen import GenConfig, random_instance
from eqprice.maps import (
    ExcessEvaluator,
    InnerSolveFailed,
    demand,
    excess,
    nat_map,
    project_price,
    supply,
    vi_residual,
)
from eqprice.model import PriceDomain
from conftest import make_combined_1d, make_saturated_1d


class TestSupply:
    def test_interior_stationary_point(self, combined_1d):
        """max 4x - x^2 on [0,10] => x = 2"""
        np.testing.assert_allclose(supply(combined_1d, [4.0]), [2.0], atol=1e-9)

    def test_clipped_by_capacity(self, combined_1d):
        """p=30: stationary point 15 clipped to 10"""
        np.testing.assert_allclose(supply(combined_1d, [30.0]), [10.0], atol=1e-9)

    def test_negative_price_supplies_nothing(self, combined_1d):
        np.testing.assert_allclose(supply(combined_1d, [-2.0]), [0.0], atol=1e-9)


class TestDemand:
    def test_floor_binds_at_positive_price(self, combined_1d):
        """min x + x^2 with x>=2 => floor active"""
        np.testing.assert_allclose(demand(combined_1d, [1.0]), [2.0], atol=1e-9)

    def test_interior_at_negative_price(self, combined_1d):
        """min -6x + x^2 => x = 3, feasible"""
        np.testing.assert_allclose(demand(combined_1d, [-6.0]), [3.0], atol=1e-9)

    def test_clipped_by_capacity(self, combined_1d):
        np.testing.assert_allclose(demand(combined_1d, [-30.0]), [10.0], atol=1e-9)


class TestExcess:
    def test_balanced_at_equilibrium(self, combined_1d):
        ev = excess(combined_1d, [4.0])
        np.testing.assert_allclose(ev.excess, [0.0], atol=1e-9)
        np.testing.assert_allclose(ev.supply, [2.0], atol=1e-9)
        np.testing.assert_allclose(ev.demand, [2.0], atol=1e-9)

    def test_excess_demand_at_zero_price(self, combined_1d):
        ev = excess(combined_1d, [0.0])
        np.testing.assert_allclose(ev.excess, [-2.0], atol=1e-9)

    def test_excess_supply_at_high_price(self, combined_1d):
        ev = excess(combined_1d, [30.0])
        np.testing.assert_allclose(ev.excess, [8.0], atol=1e-9)

    def test_identity_by_construction(self, combined_1d, rng):
        for _ in range(10):
            p = rng.uniform(-5, 40, size=1)
            ev = excess(combined_1d, p)
            np.testing.assert_array_equal(ev.excess, ev.supply - ev.demand)


class TestProjectPrice:
    def test_orthant(self):
        np.testing.assert_allclose(
            project_price(PriceDomain.orthant(), [1.0, -2.0]), [1.0, 0.0]
        )

    def test_box(self):
        dom = PriceDomain.box([0.0, 0.0], [10.0, 10.0])
        np.testing.assert_allclose(project_price(dom, [12.0, 5.0]), [10.0, 5.0])

    def test_interior_unchanged(self):
        np.testing.assert_allclose(
            project_price(PriceDomain.orthant(), [3.0, 4.0]), [3.0, 4.0]
        )

    def test_idempotent_and_nonexpansive(self, rng):
        for dom in (PriceDomain.orthant(), PriceDomain.box([0.0, 0.0], [8.0, 8.0])):
            for _ in range(100):
                p = rng.uniform(-20, 20, size=2)
                q = rng.uniform(-20, 20, size=2)
                pp, qq = project_price(dom, p), project_price(dom, q)
                np.testing.assert_array_equal(project_price(dom, pp), pp)
                assert np.linalg.norm(pp - qq) <= np.linalg.norm(p - q) + 1e-12


class TestNatMap:
    def test_fixed_point_at_equilibrium(self, combined_1d):
        np.testing.assert_allclose(nat_map(combined_1d, [4.0], eta=1.0), [4.0], atol=1e-9)

    def test_excess_demand_raises_price(self, combined_1d):
        np.testing.assert_allclose(nat_map(combined_1d, [0.0], eta=1.0), [2.0], atol=1e-9)

    def test_step_from_two(self, combined_1d):
        """F(2) = 1 - 2 = -1, so T(2) = 2 + 1 = 3"""
        np.testing.assert_allclose(nat_map(combined_1d, [2.0], eta=1.0), [3.0], atol=1e-9)

    def test_warns_outside_admissible_step(self, combined_1d):
        with pytest.warns(UserWarning):
            nat_map(combined_1d, [2.0], eta=5.0)


class TestViResidual:
    def test_zero_at_equilibrium(self, combined_1d):
        assert vi_residual(combined_1d, [4.0], eta=1.0) <= 1e-8

    def test_scaled_distance_at_origin(self, combined_1d):
        assert np.isclose(vi_residual(combined_1d, [0.0], eta=1.0), 2.0)

    def test_zero_on_saturated_ray(self, saturated_1d):
        assert vi_residual(saturated_1d, [8.0], eta=1.0) <= 1e-9


class TestProblemBuilders:
    def test_evaluator_matches_standalone_solves(self, combined_1d, rng):
        # Same optima through the one-shot QP front end as through the
        # warm-started evaluator.
        from eqprice.maps import demand_problem, supply_problem
        from eqprice.qp import solve_qp

        ev = ExcessEvaluator(combined_1d)
        for _ in range(10):
            p = rng.uniform(-10, 40, size=1)
            s_direct = solve_qp(supply_problem(combined_1d, p)).x
            d_direct = solve_qp(demand_problem(combined_1d, p)).x
            np.testing.assert_allclose(ev.supply(p), s_direct, atol=1e-8)
            np.testing.assert_allclose(ev.demand(p), d_direct, atol=1e-8)


class TestEvaluatorCaching:
    def test_memo_avoids_repeat_solves(self, combined_1d):
        ev = ExcessEvaluator(combined_1d)
        p = np.array([4.0])
        ev.evaluate(p)
        solves = ev.qp_solves
        ev.evaluate(p)
        ev.nat_map(p)
        ev.vi_residual(p)
        assert ev.qp_solves == solves

    def test_parametric_basis_reuse(self, combined_1d):
        ev = ExcessEvaluator(combined_1d)
        for p in np.linspace(3.5, 4.5, 20):
            ev.evaluate(np.array([p]))
        # After the first couple of solves the optimal basis is reused.
        assert ev.fast_hits >= 30
        assert ev.qp_solves <= 8

    def test_iteration_limit_surfaces(self, combined_1d):
        ev = ExcessEvaluator(combined_1d)
        ev._supply.max_iter = 0
        with pytest.raises(InnerSolveFailed):
            ev.evaluate(np.array([4.0]))


@pytest.fixture(scope="module")
def generated():
    return random_instance(GenConfig(n=4, m=3, seed=11))


class TestLemmaProperties:
    """Map properties on one generated instance (the acceptance suite
    repeats these across ten instances)."""

    def test_nonexpansive_at_default_step(self, generated, rng):
        ev = ExcessEvaluator(generated)
        eta = generated.constants.mu_F
        for _ in range(100):
            p1 = rng.uniform(0, 100, size=4)
            p2 = rng.uniform(0, 100, size=4)
            t1, t2 = ev.nat_map(p1, eta=eta), ev.nat_map(p2, eta=eta)
            assert np.linalg.norm(t1 - t2) <= np.linalg.norm(p1 - p2) + 1e-7

    def test_supply_inverse_strongly_monotone(self, generated, rng):
        ev = ExcessEvaluator(generated)
        mu = generated.constants.mu_c
        for _ in range(100):
            p1 = rng.uniform(0, 100, size=4)
            p2 = rng.uniform(0, 100, size=4)
            ds = ev.supply(p1) - ev.supply(p2)
            assert (p1 - p2) @ ds >= mu * ds @ ds - 1e-7

    def test_negative_demand_inverse_strongly_monotone(self, generated, rng):
        ev = ExcessEvaluator(generated)
        mu = generated.constants.mu_t
        for _ in range(100):
            p1 = rng.uniform(0, 100, size=4)
            p2 = rng.uniform(0, 100, size=4)
            dd = -(ev.demand(p1) - ev.demand(p2))
            assert (p1 - p2) @ dd >= mu * dd @ dd - 1e-7

    def test_excess_monotone(self, generated, rng):
        ev = ExcessEvaluator(generated)
        for _ in range(100):
            p1 = rng.uniform(0, 100, size=4)
            p2 = rng.uniform(0, 100, size=4)
            df = ev.evaluate(p1).excess - ev.evaluate(p2).excess
            assert (p1 - p2) @ df >= -1e-7

    def test_maps_lipschitz(self, generated, rng):
        ev = ExcessEvaluator(generated)
        kc = generated.constants
        for _ in range(100):
            p1 = rng.uniform(0, 100, size=4)
            p2 = rng.uniform(0, 100, size=4)
            dp = np.linalg.norm(p1 - p2)
            assert np.linalg.norm(ev.supply(p1) - ev.supply(p2)) <= kc.L_c * dp + 1e-7
            assert np.linalg.norm(ev.demand(p1) - ev.demand(p2)) <= kc.L_t * dp + 1e-7
