import inspect

import numpy as np
import pytest

from gnbgbench.errors import DegenerateSamplesError
from gnbgbench.generator import DescriptorView
from gnbgbench.mutation import (
    ROLE_CMA,
    ROLE_PBEST,
    ROLE_SCOUT,
    ScoutMutation,
    _draw_excluding,
    assign_roles,
    cma_fresh,
    cma_gate,
    cma_reset,
    cma_sample,
    cma_update,
    mutate_pbest,
    mutate_scout,
    round_half_away,
)


def view(rotated=1, comps=1, dim=5, lb=-5.0, ub=5.0):
    return DescriptorView(
        dim=dim, lb=lb, ub=ub, comp_num=comps,
        lambda_all=np.ones(comps), omega_all=np.zeros((comps, 4)),
        rotation_flag=rotated,
    )


class TestGate:
    def test_open(self):
        assert cma_gate(view(1, 1), 180) is True

    def test_small_population_closes(self):
        assert cma_gate(view(1, 1), 5) is False
        assert cma_gate(view(1, 1), 6) is True

    def test_unrotated_closes(self):
        assert cma_gate(view(0, 1), 180) is False

    def test_multicomponent_closes(self):
        assert cma_gate(view(1, 3), 180) is False


class TestRoles:
    def test_fractions_at_180(self):
        roles = assign_roles(180, 0.2, 0.1, True, np.random.default_rng(0))
        assert int(np.sum(roles == ROLE_SCOUT)) == 36
        assert int(np.sum(roles == ROLE_CMA)) == 18
        assert int(np.sum(roles == ROLE_PBEST)) == 126

    def test_gate_closed_no_cma(self):
        roles = assign_roles(180, 0.2, 0.1, False, np.random.default_rng(0))
        assert int(np.sum(roles == ROLE_CMA)) == 0

    def test_endgame_four(self):
        roles = assign_roles(4, 0.2, 0.1, False, np.random.default_rng(0))
        assert int(np.sum(roles == ROLE_SCOUT)) == 1
        assert int(np.sum(roles == ROLE_PBEST)) == 3

    def test_round_half_away(self):
        assert round_half_away(0.5) == 1
        assert round_half_away(0.8) == 1
        assert round_half_away(0.4) == 0
        assert round_half_away(18.0) == 18


class TestIndexDistinctness:
    def test_draw_excluding_never_collides(self):
        # one million draws across population sizes 4..200
        rng = np.random.default_rng(42)
        total = 0
        for n in (4, 5, 8, 16, 50, 200):
            size = 170_000 if n > 4 else 150_000
            idx = rng.integers(n, size=size)
            ex1 = rng.integers(n, size=size)
            r1 = _draw_excluding(n, [idx, ex1], rng)
            assert not np.any(r1 == idx)
            assert not np.any(r1 == ex1)
            r2 = _draw_excluding(n, [idx, ex1, r1], rng)
            assert not np.any(r2 == idx)
            assert not np.any(r2 == ex1)
            assert not np.any(r2 == r1)
            total += 2 * size
        assert total >= 1_000_000

    def test_pbest_endgame_empty_archive(self):
        rng = np.random.default_rng(1)
        xs = rng.uniform(-5, 5, (4, 3))
        order = np.argsort(rng.uniform(size=4))
        for _ in range(2_000):
            v = mutate_pbest(2, xs, order, [], F=0.7, p_min=0.11, rng=rng)
            assert np.all(np.isfinite(v))

    def test_scout_endgame(self):
        rng = np.random.default_rng(2)
        xs = rng.uniform(-5, 5, (4, 3))
        for _ in range(2_000):
            v = mutate_scout(1, xs, 0.5, rng)
            assert np.all(np.isfinite(v))


class TestMutatePbest:
    def test_zero_f_returns_current(self):
        rng = np.random.default_rng(0)
        xs = rng.uniform(-5, 5, (10, 4))
        order = np.argsort(rng.uniform(size=10))
        v = mutate_pbest(3, xs, order, [], F=0.0, p_min=0.11, rng=rng)
        assert np.array_equal(v, xs[3])

    def test_identical_population_collapses(self):
        xs = np.tile(np.array([1.0, -2.0, 3.0]), (8, 1))
        order = np.arange(8)
        rng = np.random.default_rng(3)
        v = mutate_pbest(0, xs, order, [], F=0.9, p_min=0.11, rng=rng)
        assert np.allclose(v, xs[0])

    def test_archive_member_can_be_selected(self):
        rng = np.random.default_rng(4)
        xs = np.zeros((6, 2))
        order = np.arange(6)
        archive = [np.array([100.0, 100.0])]
        hits = 0
        for _ in range(500):
            v = mutate_pbest(0, xs, order, archive, F=1.0, p_min=0.11, rng=rng)
            if np.any(v != 0.0):
                hits += 1
        assert hits > 0


class TestMutateScout:
    def test_zero_f_is_some_member(self):
        rng = np.random.default_rng(5)
        xs = rng.uniform(-5, 5, (10, 3))
        v = mutate_scout(4, xs, 0.0, rng)
        matches = [j for j in range(10) if np.array_equal(v, xs[j])]
        assert matches and 4 not in matches

    def test_identical_population(self):
        xs = np.tile(np.array([0.5, 0.5]), (6, 1))
        v = mutate_scout(0, xs, 0.8, np.random.default_rng(6))
        assert np.allclose(v, xs[0])

    def test_base_uniform_chi_square(self):
        # r0 should be uniform over indices != i (identified via F = 0)
        n, i, draws = 10, 3, 100_000
        rng = np.random.default_rng(7)
        xs = np.eye(n)
        counts = np.zeros(n)
        for _ in range(draws):
            v = mutate_scout(i, xs, 0.0, rng)
            counts[int(np.argmax(v))] += 1
        assert counts[i] == 0
        expected = draws / (n - 1)
        chi2 = float(np.sum((counts[np.arange(n) != i] - expected) ** 2 / expected))
        assert chi2 < 30.0  # df=8, comfortably above the 99.9% quantile


class TestCma:
    def test_sample_step_to_zero_limit(self):
        cma = cma_fresh(np.array([1.0, -2.0, 0.5]), -5.0, 5.0)
        cma.step_size = 1e-12
        pt = cma_sample(cma, -5.0, 5.0, np.random.default_rng(0))
        assert np.allclose(pt, cma.mean, atol=1e-9)

    def test_sample_variance_matches_step(self):
        dim = 4
        cma = cma_fresh(np.zeros(dim), -50.0, 50.0)
        cma.step_size = 0.7
        rng = np.random.default_rng(1)
        pts = np.array([cma_sample(cma, -50.0, 50.0, rng) for _ in range(100_000)])
        var = pts.var(axis=0)
        assert np.all(np.abs(var - 0.49) < 0.049)

    def test_sample_within_bounds(self):
        cma = cma_fresh(np.array([4.9, -4.9]), -5.0, 5.0)
        cma.step_size = 3.0
        rng = np.random.default_rng(2)
        for _ in range(2_000):
            pt = cma_sample(cma, -5.0, 5.0, rng)
            assert np.all(pt >= -5.0) and np.all(pt <= 5.0)

    def test_update_mean_invariant_under_symmetry(self):
        cma = cma_fresh(np.zeros(2), -5.0, 5.0)
        delta = np.array([1.0, 0.0])
        ranked = [(delta, 1.0), (-delta, 1.0)]
        out = cma_update(cma, ranked)
        # symmetric pair with equal objective: recombination stays centered
        assert np.allclose(out.mean, np.zeros(2), atol=1e-12)

    def test_update_optimizes_sphere(self):
        rng = np.random.default_rng(0)
        dim = 5
        cma = cma_fresh(rng.uniform(-3, 3, dim), -5.0, 5.0)
        cma.step_size = 1.0
        for _ in range(200):
            pts = [cma_sample(cma, -5.0, 5.0, rng) for _ in range(8)]
            cma = cma_update(cma, [(p, float(np.sum(p * p))) for p in pts])
        assert np.linalg.norm(cma.mean) < 1e-3

    def test_covariance_stays_spd_under_fuzz(self):
        rng = np.random.default_rng(3)
        dim = 3
        cma = cma_fresh(np.zeros(dim), -10.0, 10.0)
        for _ in range(3_000):
            pts = rng.normal(cma.mean, 1.0, (6, dim))
            ranked = [(p, float(rng.uniform())) for p in pts]
            cma = cma_update(cma, ranked)
            vals = np.linalg.eigvalsh(cma.C)
            assert np.all(vals > 0)
            assert np.max(np.abs(cma.C - cma.C.T)) < 1e-10
            assert cma.step_size > 0

    def test_degenerate_samples_rejected(self):
        cma = cma_fresh(np.zeros(2), -5.0, 5.0)
        p = np.array([1.0, 1.0])
        with pytest.raises(DegenerateSamplesError):
            cma_update(cma, [(p, 1.0), (p.copy(), 1.0), (p.copy(), 2.0)])

    def test_reset_anchors_and_is_idempotent(self):
        rng = np.random.default_rng(4)
        cma = cma_fresh(np.zeros(3), -5.0, 5.0)
        for _ in range(5):
            pts = [cma_sample(cma, -5.0, 5.0, rng) for _ in range(6)]
            cma = cma_update(cma, [(p, float(np.sum(p * p))) for p in pts])
        anchor = np.array([1.0, 2.0, -3.0])
        once = cma_reset(cma, anchor, -5.0, 5.0)
        twice = cma_reset(once, anchor, -5.0, 5.0)
        for state in (once, twice):
            assert np.array_equal(state.mean, anchor)
            assert np.array_equal(state.C, np.eye(3))
            assert state.step_size == pytest.approx(0.3 * 10.0)
            assert np.all(state.p_sigma == 0) and np.all(state.p_c == 0)


class TestOperator:
    def make_operator(self, rotated=1, comps=1):
        return ScoutMutation(view(rotated, comps), scout_fraction=0.2,
                             cma_fraction=0.1, stagnation_window=5, p_min=0.11)

    def test_gate_closed_never_draws_cma(self):
        op = self.make_operator(rotated=0)
        rng = np.random.default_rng(0)
        xs = rng.uniform(-5, 5, (20, 5))
        fs = rng.uniform(size=20)
        for _ in range(10):
            op.begin_generation(xs, fs, [], xs[0], 0, rng)
            op.propose_batch(20, np.full(20, 0.5), rng)
        assert op.cma_samples_drawn == 0
        assert op.cma is None

    def test_gate_open_draws_cma(self):
        op = self.make_operator()
        rng = np.random.default_rng(1)
        xs = rng.uniform(-5, 5, (20, 5))
        fs = rng.uniform(size=20)
        op.begin_generation(xs, fs, [], xs[0], 0, rng)
        op.propose_batch(20, np.full(20, 0.5), rng)
        assert op.cma_samples_drawn == 2  # round(0.1 * 20)

    def test_scalar_dispatch_routes_by_role(self):
        op = self.make_operator()
        rng = np.random.default_rng(2)
        xs = rng.uniform(-5, 5, (10, 5))
        fs = rng.uniform(size=10)
        op.begin_generation(xs, fs, [], xs[0], 0, rng)
        roles = op.roles
        drawn_before = op.cma_samples_drawn
        i_cma = int(np.flatnonzero(roles == ROLE_CMA)[0])
        op.propose(i_cma, 0.5, rng)
        assert op.cma_samples_drawn == drawn_before + 1

    def test_reset_on_stagnation_threshold(self):
        op = self.make_operator()
        rng = np.random.default_rng(3)
        xs = rng.uniform(-5, 5, (12, 5))
        fs = rng.uniform(size=12)
        op.begin_generation(xs, fs, [], xs[0], 0, rng)
        op.cma.step_size = 123.0  # marker wiped by a reset
        for gen in range(1, 12):
            op.begin_generation(xs, fs, [], xs[1], gen, rng)
        assert op.cma.step_size == pytest.approx(0.3 * 10.0)
        assert np.array_equal(op.cma.mean, xs[1])

    def test_descriptor_only_surface(self):
        # the operator's whole input surface: descriptor view + population state
        params = inspect.signature(ScoutMutation.__init__).parameters
        assert "view" in params
        assert not any("inst" in name for name in params)
        gen_params = inspect.signature(ScoutMutation.begin_generation).parameters
        assert not any("inst" in name for name in gen_params)
