"""Seeded instance generation: determinism, validity, documented defaults."""

import numpy as np
import pytest

from eqprice.gen import GenConfig, generate, max_utility, pd_from_factor, random_instance
from eqprice.model import min_eigenvalue, validate_instance


class _FixedFactorRng:
    """Stub generator returning queued factors, for exercising the product."""

    def __init__(self, *factors):
        self.queue = [np.asarray(f, dtype=float) for f in factors]

    def uniform(self, low, high, size=None):
        return self.queue.pop(0)


class TestPdFromFactor:
    def test_scalar_product(self):
        out = pd_from_factor(1, _FixedFactorRng([[2.0]]), min_eig=0.5)
        np.testing.assert_array_equal(out, [[4.0]])

    def test_identity_factor(self):
        out = pd_from_factor(2, _FixedFactorRng(np.eye(2)), min_eig=0.5)
        np.testing.assert_array_equal(out, np.eye(2))

    def test_redraw_below_floor(self):
        # First factor is singular; the second is accepted.
        out = pd_from_factor(
            2, _FixedFactorRng([[1.0, 1.0], [1.0, 1.0]], np.eye(2) * 2.0), min_eig=0.5
        )
        np.testing.assert_array_equal(out, np.eye(2) * 4.0)

    def test_output_symmetric_positive_definite(self, rng):
        for _ in range(25):
            n = int(rng.integers(1, 7))
            out = pd_from_factor(n, rng)
            assert np.max(np.abs(out - out.T)) <= 1e-12
            assert min_eigenvalue(out) >= 2.0


class TestRandomInstance:
    def test_seed_determinism(self):
        cfg = GenConfig(n=5, m=3, seed=42)
        a = random_instance(cfg)
        b = random_instance(cfg)
        for field in ("C", "B", "l"):
            np.testing.assert_array_equal(
                getattr(a.costs, field), getattr(b.costs, field)
            )
        np.testing.assert_array_equal(a.feasible.A, b.feasible.A)
        np.testing.assert_array_equal(a.feasible.b, b.feasible.b)
        np.testing.assert_array_equal(a.p0, b.p0)
        assert a.costs.M == b.costs.M

    def test_different_seeds_differ(self):
        a = random_instance(GenConfig(n=5, m=3, seed=1))
        b = random_instance(GenConfig(n=5, m=3, seed=2))
        assert not np.array_equal(a.costs.C, b.costs.C)

    def test_zero_feasible_and_demand_reachable(self):
        g = generate(GenConfig(n=6, m=4, seed=9))
        inst = g.instance
        assert np.all(inst.feasible.b > 0.0)
        assert inst.costs.M > 0.0
        assert inst.costs.M < g.max_utility
        assert np.all(inst.costs.l > 0.0)

    def test_box_domain_contains_p0(self):
        inst = random_instance(GenConfig(n=4, m=2, seed=3, domain_kind="box"))
        assert inst.domain.kind == "box"
        assert inst.domain.contains(inst.p0)
        assert not inst.p0_projected

    def test_validation_passes_in_bulk(self):
        # mu_F positive and a clean report on every draw; A > 0 bounds X.
        for seed in range(100):
            inst = random_instance(GenConfig(n=10, m=8, seed=seed))
            assert validate_instance(inst) == []
            assert inst.constants.mu_F > 0.0
            assert np.all(inst.feasible.A > 0.0)

    def test_gen_block_documents_choices(self):
        g = generate(GenConfig(n=3, m=2, seed=5))
        block = g.gen_block()
        assert block["seed"] == 5
        assert block["floor_fraction"] == 0.9
        assert "redraws" in block and set(block["redraws"]) == {"C", "B"}
        assert block["eta_rule"] == "mu_F"
        doc = g.json_doc()
        assert doc["gen"] == block

    def test_config_rejects_bad_ranges(self):
        with pytest.raises(ValueError):
            GenConfig(n=2, m=1, factor_range=(3.0, 3.0))
        with pytest.raises(ValueError):
            GenConfig(n=0, m=1)
        with pytest.raises(ValueError):
            GenConfig(n=2, m=1, floor_fraction=1.5)


class TestMaxUtility:
    def test_matches_interval_solution(self):
        # max 2x on {x >= 0, x <= 5} is 10.
        assert np.isclose(max_utility(np.array([2.0]), np.array([[1.0]]), np.array([5.0])), 10.0)
