import math

import numpy as np
import pytest

from gnbgbench.engine import (
    EAConfig,
    HistoryMemory,
    lpsr_size,
    run_ea,
    sample_CR,
    sample_CR_batch,
    sample_F,
    sample_F_batch,
    update_memory,
)
from gnbgbench.errors import InvalidSpecError
from gnbgbench.generator import EvalCounter, InstanceSpec, make_instance


def convex_instance(dim=5, seed=0):
    spec = InstanceSpec(dim=dim, components=1, sigma_range=(-100.0, -90.0),
                        width_range=(1.0, 3.0), lambda_range=(1.0, 1.0),
                        mu_range=(0.0, 0.0), rotation=False)
    return make_instance(spec, seed)


class TestLpsr:
    def test_endpoints(self):
        assert lpsr_size(0, 500_000) == 180
        assert lpsr_size(500_000, 500_000) == 4

    def test_midpoint(self):
        assert lpsr_size(250_000, 500_000, 180, 4) == 92

    def test_monotone_nonincreasing(self):
        cap = 10_000
        sizes = [lpsr_size(u, cap) for u in range(0, cap + 1, 37)]
        assert all(a >= b for a, b in zip(sizes, sizes[1:]))

    def test_range_error(self):
        with pytest.raises(InvalidSpecError):
            lpsr_size(11, 10)


class _ForcedRng:
    """Deterministic stand-in driving sample_F/sample_CR edge branches."""

    def __init__(self, cauchy_values):
        self.values = list(cauchy_values)

    def integers(self, n, size=None):
        return 0

    def standard_cauchy(self, size=None):
        return self.values.pop(0)

    def standard_normal(self, size=None):
        return self.values.pop(0)


class TestSampleF:
    def test_clip_to_one(self):
        mem = HistoryMemory(4, f_init=1.0)
        rng = _ForcedRng([50.0])
        assert sample_F(mem, rng) == 1.0

    def test_fallback_after_100_attempts(self):
        mem = HistoryMemory(4, f_init=0.5)
        rng = _ForcedRng([-100.0] * 100)
        assert sample_F(mem, rng) == 0.1
        assert rng.values == []  # exactly 100 draws consumed

    def test_always_positive_at_most_one(self):
        mem = HistoryMemory(6, f_init=0.02)
        rng = np.random.default_rng(0)
        draws = sample_F_batch(mem, 200_000, rng)
        assert np.all(draws > 0)
        assert np.all(draws <= 1)

    def test_monte_carlo_median(self):
        mem = HistoryMemory(6, f_init=0.5)
        rng = np.random.default_rng(1)
        draws = sample_F_batch(mem, 1_000_000, rng)
        assert 0.45 <= float(np.median(draws)) <= 0.55

    def test_scalar_batch_agree_distributionally(self):
        mem = HistoryMemory(6, f_init=0.4)
        rng = np.random.default_rng(2)
        scalar = np.array([sample_F(mem, rng) for _ in range(20_000)])
        batch = sample_F_batch(mem, 20_000, np.random.default_rng(3))
        assert abs(np.median(scalar) - np.median(batch)) < 0.02


class TestSampleCR:
    def test_terminal_slot_returns_zero(self):
        mem = HistoryMemory(4, cr_init=0.5)
        mem.m_cr[:] = math.nan
        assert sample_CR(mem, np.random.default_rng(0)) == 0.0
        assert np.all(sample_CR_batch(mem, 100, np.random.default_rng(0)) == 0.0)

    def test_clip(self):
        mem = HistoryMemory(4, cr_init=0.5)
        rng = _ForcedRng([12.0])
        assert sample_CR(mem, rng) == 1.0

    def test_monte_carlo_mean(self):
        mem = HistoryMemory(6, cr_init=0.5)
        draws = sample_CR_batch(mem, 1_000_000, np.random.default_rng(4))
        assert 0.48 <= float(draws.mean()) <= 0.52


def lehmer_oracle(successes):
    """Direct-summation weighted Lehmer mean, independent of update_memory."""
    total = math.fsum(d for _, _, d in successes)
    num_f = math.fsum((d / total) * f * f for f, _, d in successes)
    den_f = math.fsum((d / total) * f for f, _, d in successes)
    num_cr = math.fsum((d / total) * cr * cr for _, cr, d in successes)
    den_cr = math.fsum((d / total) * cr for _, cr, d in successes)
    return num_f / den_f, (num_cr / den_cr if den_cr > 0 else None)


class TestUpdateMemory:
    def test_single_success(self):
        mem = HistoryMemory(4)
        update_memory(mem, [(0.5, 0.3, 1.0)])
        assert mem.m_f[0] == pytest.approx(0.5, abs=1e-15)
        assert mem.m_cr[0] == pytest.approx(0.3, abs=1e-15)
        assert mem.k == 1

    def test_worked_lehmer_example(self):
        mem = HistoryMemory(4)
        update_memory(mem, [(0.2, 0.1, 1.0), (0.8, 0.1, 1.0)])
        assert mem.m_f[0] == pytest.approx(0.68, abs=1e-12)

    def test_empty_no_change(self):
        mem = HistoryMemory(4)
        before_f = mem.m_f.copy()
        update_memory(mem, [])
        assert np.array_equal(mem.m_f, before_f)
        assert mem.k == 0

    def test_nonpositive_delta_rejected(self):
        mem = HistoryMemory(4)
        with pytest.raises(ValueError):
            update_memory(mem, [(0.5, 0.5, 0.0)])

    def test_terminal_marker_on_zero_cr(self):
        mem = HistoryMemory(4)
        update_memory(mem, [(0.5, 0.0, 1.0), (0.6, 0.0, 2.0)])
        assert math.isnan(mem.m_cr[0])
        # once terminal, the slot stays terminal
        mem.k = 0
        update_memory(mem, [(0.5, 0.9, 1.0)])
        assert math.isnan(mem.m_cr[0])

    def test_k_wraps(self):
        mem = HistoryMemory(2)
        for _ in range(3):
            update_memory(mem, [(0.5, 0.5, 1.0)])
        assert mem.k == 1

    def test_oracle_fuzz(self):
        rng = np.random.default_rng(10)
        for _ in range(10_000):
            n = int(rng.integers(1, 12))
            successes = [
                (float(rng.uniform(0.01, 1.0)), float(rng.uniform(0.01, 1.0)),
                 float(rng.uniform(1e-8, 100.0)))
                for _ in range(n)
            ]
            mem = HistoryMemory(3)
            update_memory(mem, successes)
            exp_f, exp_cr = lehmer_oracle(successes)
            assert mem.m_f[0] == pytest.approx(exp_f, abs=1e-12, rel=1e-12)
            assert mem.m_cr[0] == pytest.approx(exp_cr, abs=1e-12, rel=1e-12)

    def test_memory_bounds_after_fuzzed_updates(self):
        rng = np.random.default_rng(11)
        mem = HistoryMemory(4)
        for _ in range(2_000):
            n = int(rng.integers(1, 6))
            successes = [
                (float(rng.uniform(1e-6, 1.0)), float(rng.uniform(0.0, 1.0)),
                 float(rng.uniform(1e-9, 10.0)))
                for _ in range(n)
            ]
            update_memory(mem, successes)
            assert np.all((mem.m_f > 0) & (mem.m_f <= 1))
            live = mem.m_cr[~np.isnan(mem.m_cr)]
            assert np.all((live >= 0) & (live <= 1))


class TestRunEa:
    def test_budget_exactly_initialization(self):
        inst = convex_instance()
        cfg = EAConfig(n_init=20)
        res = run_ea(inst, 20, seed=0, ea_cfg=cfg)
        assert res.used == 20
        assert len(res.trace) == 1  # no generations fit

    def test_budget_below_init_rejected(self):
        inst = convex_instance()
        with pytest.raises(InvalidSpecError):
            run_ea(inst, 10, seed=0, ea_cfg=EAConfig(n_init=20))

    def test_determinism(self):
        inst = convex_instance()
        cfg = EAConfig(n_init=24)
        a = run_ea(inst, 2_000, seed=5, ea_cfg=cfg)
        b = run_ea(inst, 2_000, seed=5, ea_cfg=cfg)
        assert a.best_f == b.best_f
        assert np.array_equal(a.best_x, b.best_x)
        assert a.trace == b.trace

    def test_elitism_trace_monotone(self):
        inst = convex_instance(seed=3)
        res = run_ea(inst, 3_000, seed=1, ea_cfg=EAConfig(n_init=30))
        best_values = [f for _, f in res.trace]
        assert all(a >= b for a, b in zip(best_values, best_values[1:]))

    def test_budget_exactness(self):
        inst = convex_instance()
        for share in (500, 777, 1_234):
            res = run_ea(inst, share, seed=2, ea_cfg=EAConfig(n_init=24))
            assert res.used == share

    def test_population_tracks_schedule(self):
        inst = convex_instance()
        cfg = EAConfig(n_init=40)
        share = 4_000
        observed = []

        def probe(state, phase_used):
            observed.append((state.n, lpsr_size(phase_used, share, cfg.n_init, cfg.n_min)))

        run_ea(inst, share, seed=7, ea_cfg=cfg, on_generation=probe)
        assert observed
        assert all(n == expected for n, expected in observed)

    def test_shared_counter_external_cap(self):
        inst = convex_instance()
        counter = EvalCounter(10_000)
        res = run_ea(inst, 1_000, seed=0, ea_cfg=EAConfig(n_init=24), counter=counter)
        assert counter.used == 1_000
        assert res.used == 1_000

    def test_converges_on_smooth_convex(self):
        inst = convex_instance(dim=5, seed=9)
        res = run_ea(inst, 15_000, seed=0, ea_cfg=EAConfig(n_init=60))
        assert res.best_f - inst.optimum_value < 1e-6


class TestEAConfig:
    @pytest.mark.parametrize("bad", [
        dict(n_min=3),
        dict(p_min=0.0),
        dict(p_min=1.5),
        dict(scout_fraction=0.7, cma_fraction=0.4),
        dict(h_mem=0),
        dict(stagnation_window=0),
        dict(f_memory_init=0.0),
        dict(cr_memory_init=1.2),
    ])
    def test_invalid(self, bad):
        with pytest.raises(InvalidSpecError):
            EAConfig(**bad).check()
