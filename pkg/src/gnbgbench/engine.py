"""Success-history differential-evolution engine with linear population
shrink.

One EAState per run, single-threaded within the run. The generation loop
takes the mutation operator and crossover callable as plug-ins; parameter
sampling (Cauchy F, normal CR) adapts through a circular success-history
memory updated with improvement-weighted Lehmer means.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .crossover import CrossoverConfig, make_crossover_fn
from .errors import BudgetExhaustedError, InvalidSpecError
from .generator import (
    DescriptorView,
    EvalCounter,
    ProblemInstance,
    descriptor_view,
    evaluate_batch,
)
from .jsonio import csv_lines
from .mutation import ROLE_CMA, ScoutMutation

CR_TERMINAL = math.nan  # terminal memory marker: CR sampling pinned to 0


@dataclass
class EAConfig:
    n_init: int = 180
    n_min: int = 4
    h_mem: int = 6
    p_min: float = 0.11
    archive_rate: float = 1.0
    stagnation_window: int = 50
    scout_fraction: float = 0.20
    cma_fraction: float = 0.10
    f_memory_init: float = 0.5
    cr_memory_init: float = 0.5

    def check(self) -> None:
        if self.n_min < 4:
            raise InvalidSpecError("n_min must be >= 4")
        if self.n_init < self.n_min:
            raise InvalidSpecError("n_init must be >= n_min")
        if not 0 < self.p_min <= 1:
            raise InvalidSpecError("p_min must be in (0, 1]")
        if self.h_mem < 1:
            raise InvalidSpecError("h_mem must be >= 1")
        if not (0 <= self.scout_fraction <= 1 and 0 <= self.cma_fraction <= 1):
            raise InvalidSpecError("role fractions must be in [0, 1]")
        if self.scout_fraction + self.cma_fraction >= 1:
            raise InvalidSpecError("scout_fraction + cma_fraction must be < 1")
        if self.archive_rate < 0:
            raise InvalidSpecError("archive_rate must be nonnegative")
        if self.stagnation_window < 1:
            raise InvalidSpecError("stagnation_window must be >= 1")
        if not 0 < self.f_memory_init <= 1:
            raise InvalidSpecError("f_memory_init must be in (0, 1]")
        if not 0 <= self.cr_memory_init <= 1:
            raise InvalidSpecError("cr_memory_init must be in [0, 1]")


class HistoryMemory:
    """Circular success-history buffers for the F and CR sampling locations.

    m_cr entries may hold the terminal marker (NaN): once a slot terminates,
    CR sampled from it is pinned to 0 and the slot never recovers.
    """

    def __init__(self, h: int, f_init: float = 0.5, cr_init: float = 0.5):
        self.m_f = np.full(h, float(f_init))
        self.m_cr = np.full(h, float(cr_init))
        self.k = 0

    @property
    def h(self) -> int:
        return self.m_f.shape[0]


def lpsr_size(used: int, cap: int, n_init: int = 180, n_min: int = 4) -> int:
    """Linear shrink from n_init at used=0 to n_min at used=cap."""
    if not 0 <= used <= cap:
        raise InvalidSpecError("used must be in [0, cap]")
    size = int(math.floor(n_init - (n_init - n_min) * (used / cap) + 0.5))
    return max(n_min, min(n_init, size))


def sample_F(memory: HistoryMemory, rng: np.random.Generator) -> float:
    """Cauchy(m_f[r], 0.1): >1 clips to 1, <=0 redrawn up to 100 times,
    then 0.1. Always in (0, 1]."""
    loc = memory.m_f[int(rng.integers(memory.h))]
    for _ in range(100):
        f = loc + 0.1 * rng.standard_cauchy()
        if f > 1.0:
            return 1.0
        if f > 0.0:
            return float(f)
    return 0.1


def sample_CR(memory: HistoryMemory, rng: np.random.Generator) -> float:
    """Normal(m_cr[r], 0.1) clipped to [0,1]; a terminal slot returns 0."""
    loc = memory.m_cr[int(rng.integers(memory.h))]
    if math.isnan(loc):
        return 0.0
    cr = loc + 0.1 * rng.standard_normal()
    return float(min(1.0, max(0.0, cr)))


def sample_F_batch(memory: HistoryMemory, size: int, rng: np.random.Generator) -> np.ndarray:
    """size draws with sample_F semantics: per entry, clip above 1, redraw
    nonpositive values (same memory slot) up to 100 times, then fall back
    to 0.1."""
    locs = memory.m_f[rng.integers(memory.h, size=size)]
    out = locs + 0.1 * rng.standard_cauchy(size)
    np.minimum(out, 1.0, out=out)
    bad = out <= 0.0
    for _ in range(99):
        if not np.any(bad):
            break
        redraw = locs[bad] + 0.1 * rng.standard_cauchy(int(bad.sum()))
        np.minimum(redraw, 1.0, out=redraw)
        out[bad] = redraw
        bad = out <= 0.0
    out[bad] = 0.1
    return out


def sample_CR_batch(memory: HistoryMemory, size: int, rng: np.random.Generator) -> np.ndarray:
    """size draws with sample_CR semantics (terminal slots pinned to 0)."""
    locs = memory.m_cr[rng.integers(memory.h, size=size)]
    out = locs + 0.1 * rng.standard_normal(size)
    np.clip(out, 0.0, 1.0, out=out)
    out[np.isnan(locs)] = 0.0
    return out


def update_memory(memory: HistoryMemory, successes: list) -> HistoryMemory:
    """Improvement-weighted Lehmer update of slot k; k advances only when
    there were successes. Entries are (F, CR, delta_f) with delta_f > 0."""
    if not successes:
        return memory
    fs = np.array([s[0] for s in successes], dtype=float)
    crs = np.array([s[1] for s in successes], dtype=float)
    deltas = np.array([s[2] for s in successes], dtype=float)
    if np.any(deltas <= 0):
        raise ValueError("every success must have delta_f > 0")
    w = deltas / deltas.sum()
    memory.m_f[memory.k] = float(np.sum(w * fs * fs) / np.sum(w * fs))
    if math.isnan(memory.m_cr[memory.k]) or crs.max() == 0.0:
        memory.m_cr[memory.k] = CR_TERMINAL
    else:
        memory.m_cr[memory.k] = float(np.sum(w * crs * crs) / np.sum(w * crs))
    memory.k = (memory.k + 1) % memory.h
    return memory


def reflect_into_bounds(trial: np.ndarray, parent: np.ndarray, lb: float, ub: float) -> np.ndarray:
    """Midpoint reflection: violated coordinates move to the midpoint between
    the violated bound and the parent coordinate. Works elementwise on a
    single vector or a whole trial matrix with matching parents."""
    low = trial < lb
    if np.any(low):
        trial[low] = 0.5 * (lb + parent[low])
    high = trial > ub
    if np.any(high):
        trial[high] = 0.5 * (ub + parent[high])
    return trial


@dataclass
class EAState:
    """Per-run population state; owns its RNG stream."""

    xs: np.ndarray
    fs: np.ndarray
    archive: list
    memory: HistoryMemory
    best_x: np.ndarray
    best_f: float
    generation: int = 0
    stagnation_count: int = 0
    rng: np.random.Generator = None

    @property
    def n(self) -> int:
        return self.xs.shape[0]


@dataclass
class EAResult:
    best_x: np.ndarray
    best_f: float
    used: int
    trace: list = field(default_factory=list)


def uniform_init(n: int, dim: int, lb: float, ub: float, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(lb, ub, (n, dim))


def prime_spiral_init(n, dim, lb, ub, rng):
    """Inherited by name from the 2025 baseline; substitutable stub."""
    raise NotImplementedError("prime-spiral tessellation initialization is not specified")


def sobol_cluster_init(n, dim, lb, ub, rng):
    """Inherited by name from the 2025 baseline; substitutable stub."""
    raise NotImplementedError("Sobol-plus-cluster initialization is not specified")


INITIALIZERS = {
    "uniform": uniform_init,
    "prime_spiral": prime_spiral_init,
    "sobol_cluster": sobol_cluster_init,
}


def ea_generation(
    state: EAState,
    inst: ProblemInstance,
    counter: EvalCounter,
    deadline: int,
    mutator,
    crossover_fn,
    cfg: EAConfig,
) -> int:
    """One synchronous generation. Evaluates at most deadline - counter.used
    trials (a partial generation keeps the trials it evaluated). Returns the
    number of evaluations performed."""
    n = state.n
    m = min(n, deadline - counter.used)
    if m <= 0:
        return 0
    rng = state.rng
    xs, fs = state.xs, state.fs
    median_f = float(np.median(fs))

    mutator.begin_generation(xs, fs, state.archive, state.best_x, state.stagnation_count, rng)
    roles = mutator.roles

    Fs = sample_F_batch(state.memory, m, rng)
    cr_raws = sample_CR_batch(state.memory, m, rng)
    mutants = mutator.propose_batch(m, Fs, rng)
    trials, CRs = crossover_fn(
        xs[:m], mutants, cr_raws, state.generation, fs[:m] < median_f, rng
    )
    trials = reflect_into_bounds(trials, xs[:m], inst.lb, inst.ub)

    tfs = evaluate_batch(inst, trials, counter)

    prev_best = state.best_f
    cap = int(round(cfg.archive_rate * n))
    strict = np.flatnonzero(tfs < fs[:m])
    accepted = tfs <= fs[:m]

    successes = [(float(Fs[i]), float(CRs[i]), float(fs[i] - tfs[i])) for i in strict]
    for i in strict:
        if cap > 0:
            if len(state.archive) >= cap:
                state.archive[int(rng.integers(len(state.archive)))] = xs[i].copy()
            else:
                state.archive.append(xs[i].copy())

    cma_results = []
    if mutator.cma is not None:
        for i in np.flatnonzero(roles[:m] == ROLE_CMA):
            cma_results.append((trials[i].copy(), float(tfs[i])))

    xs[:m][accepted] = trials[accepted]
    fs[:m][accepted] = tfs[accepted]
    gen_best = int(np.argmin(tfs))
    if tfs[gen_best] < state.best_f:
        state.best_f = float(tfs[gen_best])
        state.best_x = trials[gen_best].copy()

    best_improved = state.best_f < prev_best
    mutator.end_generation(cma_results, best_improved, state.best_x, state.best_f)
    update_memory(state.memory, successes)

    if prev_best - state.best_f > 1e-12 * max(1.0, abs(prev_best)):
        state.stagnation_count = 0
    else:
        state.stagnation_count += 1
    state.generation += 1
    return m


def shrink_population(state: EAState, new_size: int, archive_rate: float,
                      rng: np.random.Generator) -> None:
    """Drop the worst individuals down to new_size; shrink the archive to its
    new capacity by random eviction."""
    if new_size < state.n:
        keep = np.argsort(state.fs, kind="stable")[:new_size]
        keep.sort()
        state.xs = state.xs[keep]
        state.fs = state.fs[keep]
    cap = int(round(archive_rate * new_size))
    while len(state.archive) > cap:
        state.archive.pop(int(rng.integers(len(state.archive))))


def run_ea(
    inst: ProblemInstance,
    budget_share: int,
    seed: int | None = None,
    *,
    rng: np.random.Generator | None = None,
    counter: EvalCounter | None = None,
    ea_cfg: EAConfig | None = None,
    crossover_fn=None,
    view: DescriptorView | None = None,
    mutator=None,
    initializer=uniform_init,
    on_generation=None,
) -> EAResult:
    """Run the EA phase for exactly budget_share evaluations (deterministic in
    (inst, seed)). The trace records (phase evaluations used, best_f) after
    initialization and after every generation."""
    cfg = ea_cfg or EAConfig()
    cfg.check()
    if budget_share < cfg.n_init:
        raise InvalidSpecError(
            f"budget_share {budget_share} cannot cover one initialization of {cfg.n_init}"
        )
    if rng is None:
        rng = np.random.default_rng(seed)
    if counter is None:
        counter = EvalCounter(budget_share)
    if view is None:
        view = descriptor_view(inst)
    if crossover_fn is None:
        crossover_fn = make_crossover_fn(CrossoverConfig())
    if mutator is None:
        mutator = ScoutMutation(
            view,
            scout_fraction=cfg.scout_fraction,
            cma_fraction=cfg.cma_fraction,
            stagnation_window=cfg.stagnation_window,
            p_min=cfg.p_min,
        )

    start_used = counter.used
    deadline = min(start_used + budget_share, counter.cap)

    xs = initializer(cfg.n_init, inst.dim, inst.lb, inst.ub, rng)
    fs = evaluate_batch(inst, xs, counter)
    best = int(np.argmin(fs))
    state = EAState(
        xs=xs,
        fs=fs,
        archive=[],
        memory=HistoryMemory(cfg.h_mem, cfg.f_memory_init, cfg.cr_memory_init),
        best_x=xs[best].copy(),
        best_f=float(fs[best]),
        rng=rng,
    )
    trace = [(counter.used - start_used, state.best_f)]

    while counter.used < deadline:
        try:
            ea_generation(state, inst, counter, deadline, mutator, crossover_fn, cfg)
        except BudgetExhaustedError:
            break
        phase_used = counter.used - start_used
        shrink_population(state, lpsr_size(phase_used, budget_share, cfg.n_init, cfg.n_min),
                          cfg.archive_rate, rng)
        trace.append((phase_used, state.best_f))
        if on_generation is not None:
            on_generation(state, phase_used)

    return EAResult(state.best_x, state.best_f, counter.used - start_used, trace)


def trace_csv(trace: list) -> str:
    """Per-generation convergence trace as CSV (used,best_f)."""
    return csv_lines(["used", "best_f"], [[u, f] for u, f in trace])
