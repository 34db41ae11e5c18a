"""Scout-augmented mutation with a gated CMA-ES branch.

Three per-generation roles:
  * pbest  — current-to-pbest/1 with archive (the framework default),
  * scout  — rand/1 over the population only, keeping diversity by drawing
             base and differentials from random members instead of the elite,
  * cma    — samples from a covariance-adaptation distribution; only active
             on rotated single-component landscapes with population >= 6.

The operator sees only a DescriptorView plus population state; there is no
access path to component positions, depths, widths, or rotation matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import DegenerateSamplesError
from .generator import DescriptorView

ROLE_PBEST = 0
ROLE_SCOUT = 1
ROLE_CMA = 2


class Role(IntEnum):
    PBEST = ROLE_PBEST
    SCOUT = ROLE_SCOUT
    CMA = ROLE_CMA


def round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def cma_gate(view: DescriptorView, n: int) -> bool:
    """Open only on rotated single-component functions with n >= 6."""
    return view.rotation_flag == 1 and view.comp_num == 1 and n >= 6


def assign_roles(
    n: int,
    scout_fraction: float,
    cma_fraction: float,
    gate_open: bool,
    rng: np.random.Generator,
) -> np.ndarray:
    """Role labels for one generation: scouts first, CMA second, rest pbest."""
    n_scout = min(n, round_half_away(scout_fraction * n))
    n_cma = min(n - n_scout, round_half_away(cma_fraction * n)) if gate_open else 0
    roles = np.full(n, ROLE_PBEST, dtype=np.int8)
    perm = rng.permutation(n)
    roles[perm[:n_scout]] = ROLE_SCOUT
    roles[perm[n_scout : n_scout + n_cma]] = ROLE_CMA
    return roles


def _pick_excluding(n: int, exclude: tuple, rng: np.random.Generator) -> int:
    """Uniform draw from range(n) minus exclude. Rejection first, then exact."""
    for _ in range(16):
        r = int(rng.integers(n))
        if r not in exclude:
            return r
    pool = [j for j in range(n) if j not in exclude]
    return pool[int(rng.integers(len(pool)))]


def _draw_excluding(n: int, exclusions: list, rng: np.random.Generator) -> np.ndarray:
    """Vectorized uniform draws from range(n), entry j avoiding every
    exclusions[e][j]. Rejection resampling; terminates because each entry
    excludes at most len(exclusions) < n values."""
    size = exclusions[0].shape[0]
    r = rng.integers(n, size=size)
    bad = np.zeros(size, dtype=bool)
    for ex in exclusions:
        bad |= r == ex
    while np.any(bad):
        r[bad] = rng.integers(n, size=int(bad.sum()))
        bad = np.zeros(size, dtype=bool)
        for ex in exclusions:
            bad |= r == ex
    return r


def mutate_pbest(
    i: int,
    xs: np.ndarray,
    order: np.ndarray,
    archive: list,
    F: float,
    p_min: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """current-to-pbest/1: v = x_i + F (x_pbest - x_i) + F (x_r1 - x_r2).

    pbest is uniform over the top max(2, round(p*n)) by objective, with
    p = max(p_min, 2/n). r2 may come from the archive; with an empty archive
    (including the n = 4 endgame) it comes from the population alone.
    """
    n = xs.shape[0]
    p = max(p_min, 2.0 / n)
    top = max(2, round_half_away(p * n))
    pbest = int(order[int(rng.integers(top))])
    r1 = _pick_excluding(n, (i, pbest), rng)
    r2 = _pick_excluding(n + len(archive), (i, pbest, r1), rng)
    x2 = xs[r2] if r2 < n else archive[r2 - n]
    return xs[i] + F * (xs[pbest] - xs[i]) + F * (xs[r1] - x2)


def mutate_scout(i: int, xs: np.ndarray, F: float, rng: np.random.Generator) -> np.ndarray:
    """rand/1 with base and both differentials from random members, all != i."""
    n = xs.shape[0]
    r0 = _pick_excluding(n, (i,), rng)
    r1 = _pick_excluding(n, (i, r0), rng)
    r2 = _pick_excluding(n, (i, r0, r1), rng)
    return xs[r0] + F * (xs[r1] - xs[r2])


@dataclass
class CmaState:
    """Covariance-adaptation sampler state (mean, step size, covariance,
    evolution paths). sqrt_c / inv_sqrt_c are cached factorizations."""

    mean: np.ndarray
    step_size: float
    C: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    iterations: int = 0
    sqrt_c: np.ndarray = field(default=None, repr=False)
    inv_sqrt_c: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.sqrt_c is None:
            self._refactor()

    def _refactor(self) -> None:
        self.C = 0.5 * (self.C + self.C.T)
        vals, vecs = np.linalg.eigh(self.C)
        floor = 1e-14 * max(float(vals.max()), 1e-300)
        vals = np.maximum(vals, floor)
        self.C = (vecs * vals) @ vecs.T
        self.sqrt_c = (vecs * np.sqrt(vals)) @ vecs.T
        self.inv_sqrt_c = (vecs / np.sqrt(vals)) @ vecs.T


def cma_fresh(anchor: np.ndarray, lb: float, ub: float) -> CmaState:
    dim = anchor.shape[0]
    return CmaState(
        mean=np.asarray(anchor, dtype=float).copy(),
        step_size=0.3 * (ub - lb),
        C=np.eye(dim),
        p_sigma=np.zeros(dim),
        p_c=np.zeros(dim),
    )


def cma_reset(cma: CmaState, anchor: np.ndarray, lb: float, ub: float) -> CmaState:
    """Fresh state anchored at the current best; idempotent."""
    return cma_fresh(anchor, lb, ub)


def cma_sample(cma: CmaState, lb: float, ub: float, rng: np.random.Generator) -> np.ndarray:
    """mean + step * C^{1/2} z, midpoint-reflected into bounds against the mean."""
    dim = cma.mean.shape[0]
    x = cma.mean + cma.step_size * (cma.sqrt_c @ rng.standard_normal(dim))
    low = x < lb
    if np.any(low):
        x[low] = 0.5 * (lb + cma.mean[low])
    high = x > ub
    if np.any(high):
        x[high] = 0.5 * (ub + cma.mean[high])
    return x


def cma_update(cma: CmaState, ranked_samples: list) -> CmaState:
    """Rank-mu plus rank-one covariance update with cumulative step-size
    adaptation, standard constants for the effective population size."""
    if len(ranked_samples) < 2:
        raise ValueError("cma_update needs at least 2 samples")
    ranked = sorted(ranked_samples, key=lambda sf: sf[1])
    X = np.array([sf[0] for sf in ranked], dtype=float)
    if np.all(X == X[0]):
        raise DegenerateSamplesError("all samples identical; covariance would collapse")

    n = cma.mean.shape[0]
    lam = len(ranked)
    mu = lam // 2
    raw = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
    w = raw / raw.sum()
    mu_eff = 1.0 / float(np.sum(w**2))

    # spread weights evenly inside groups of equal objective value, so a
    # symmetric equal-f sample set leaves the mean where it is
    w_full = np.zeros(lam)
    w_full[:mu] = w
    fvals = np.array([sf[1] for sf in ranked])
    start = 0
    for j in range(1, lam + 1):
        if j == lam or fvals[j] != fvals[start]:
            w_full[start:j] = w_full[start:j].mean()
            start = j

    c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
    c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
    c_1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
    chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))

    active = w_full > 0
    w_act = w_full[active]
    Y = (X[active] - cma.mean) / cma.step_size
    y_w = w_act @ Y
    mean_new = cma.mean + cma.step_size * y_w

    p_sigma = (1.0 - c_sigma) * cma.p_sigma + math.sqrt(
        c_sigma * (2.0 - c_sigma) * mu_eff
    ) * (cma.inv_sqrt_c @ y_w)
    norm_ps = float(np.linalg.norm(p_sigma))
    h_sigma = (
        norm_ps / math.sqrt(1.0 - (1.0 - c_sigma) ** (2 * (cma.iterations + 1)))
        < (1.4 + 2.0 / (n + 1.0)) * chi_n
    )
    p_c = (1.0 - c_c) * cma.p_c + (
        math.sqrt(c_c * (2.0 - c_c) * mu_eff) * y_w if h_sigma else 0.0
    )

    rank_mu = (Y.T * w_act) @ Y
    C_new = (
        (1.0 - c_1 - c_mu) * cma.C
        + c_1 * (np.outer(p_c, p_c) + (0.0 if h_sigma else c_c * (2.0 - c_c)) * cma.C)
        + c_mu * rank_mu
    )
    step_new = cma.step_size * math.exp((c_sigma / d_sigma) * (norm_ps / chi_n - 1.0))

    out = CmaState(
        mean=mean_new,
        step_size=step_new,
        C=C_new,
        p_sigma=p_sigma,
        p_c=p_c,
        iterations=cma.iterations + 1,
        sqrt_c=np.empty(0),
    )
    out._refactor()
    return out


class ScoutMutation:
    """Per-run mutation operator: role assignment, dispatch, and CMA lifecycle.

    cma_samples_drawn counts every covariance-branch proposal for gate audits.
    """

    def __init__(self, view: DescriptorView, scout_fraction: float, cma_fraction: float,
                 stagnation_window: int, p_min: float):
        self.view = view
        self.scout_fraction = scout_fraction
        self.cma_fraction = cma_fraction
        self.stagnation_window = stagnation_window
        self.p_min = p_min
        self.cma: CmaState | None = None
        self.cma_samples_drawn = 0
        self._gens_since_reset = 0
        self._roles: np.ndarray | None = None
        self._order: np.ndarray | None = None
        self._xs = None
        self._archive = None

    @property
    def roles(self) -> np.ndarray:
        return self._roles

    def begin_generation(
        self,
        xs: np.ndarray,
        fs: np.ndarray,
        archive: list,
        best_x: np.ndarray,
        stagnation_count: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        n = xs.shape[0]
        gate = cma_gate(self.view, n)
        self._roles = assign_roles(n, self.scout_fraction, self.cma_fraction, gate, rng)
        self._order = np.argsort(fs, kind="stable")
        self._xs = xs
        self._archive = archive
        if gate:
            self._gens_since_reset += 1
            if self.cma is None:
                self.cma = cma_fresh(best_x, self.view.lb, self.view.ub)
                self._gens_since_reset = 0
            elif (
                stagnation_count >= self.stagnation_window
                and self._gens_since_reset >= self.stagnation_window
            ):
                self.cma = cma_reset(self.cma, best_x, self.view.lb, self.view.ub)
                self._gens_since_reset = 0
        return self._roles

    def propose(self, i: int, F: float, rng: np.random.Generator) -> np.ndarray:
        role = self._roles[i]
        if role == ROLE_SCOUT:
            return mutate_scout(i, self._xs, F, rng)
        if role == ROLE_CMA:
            self.cma_samples_drawn += 1
            return cma_sample(self.cma, self.view.lb, self.view.ub, rng)
        return mutate_pbest(i, self._xs, self._order, self._archive, F, self.p_min, rng)

    def propose_batch(self, m: int, Fs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Mutants for individuals 0..m-1 in one shot, grouped by role
        (pbest, scout, then cma) with the same per-role semantics as the
        scalar operators."""
        xs = self._xs
        n = xs.shape[0]
        dim = xs.shape[1]
        roles = self._roles[:m]
        mutants = np.empty((m, dim))

        pb = np.flatnonzero(roles == ROLE_PBEST)
        if pb.size:
            p = max(self.p_min, 2.0 / n)
            top = max(2, round_half_away(p * n))
            pbest = self._order[rng.integers(top, size=pb.size)]
            r1 = _draw_excluding(n, [pb, pbest], rng)
            n_arch = len(self._archive)
            r2 = _draw_excluding(n + n_arch, [pb, pbest, r1], rng)
            X2 = np.empty((pb.size, dim))
            from_pop = r2 < n
            X2[from_pop] = xs[r2[from_pop]]
            if n_arch and np.any(~from_pop):
                arch = np.asarray(self._archive)
                X2[~from_pop] = arch[r2[~from_pop] - n]
            F = Fs[pb][:, None]
            mutants[pb] = xs[pb] + F * (xs[pbest] - xs[pb]) + F * (xs[r1] - X2)

        sc = np.flatnonzero(roles == ROLE_SCOUT)
        if sc.size:
            r0 = _draw_excluding(n, [sc], rng)
            r1 = _draw_excluding(n, [sc, r0], rng)
            r2 = _draw_excluding(n, [sc, r0, r1], rng)
            mutants[sc] = xs[r0] + Fs[sc][:, None] * (xs[r1] - xs[r2])

        cm = np.flatnonzero(roles == ROLE_CMA)
        if cm.size:
            self.cma_samples_drawn += cm.size
            Z = rng.standard_normal((cm.size, dim))
            pts = self.cma.mean + self.cma.step_size * (Z @ self.cma.sqrt_c.T)
            lb, ub = self.view.lb, self.view.ub
            low = pts < lb
            pts[low] = 0.5 * (lb + np.broadcast_to(self.cma.mean, pts.shape)[low])
            high = pts > ub
            pts[high] = 0.5 * (ub + np.broadcast_to(self.cma.mean, pts.shape)[high])
            mutants[cm] = pts
        return mutants

    def end_generation(self, cma_results: list, best_improved: bool, best_x, best_f) -> None:
        """Feed the evaluated covariance-branch trials back; the run best is
        appended as an extra sample when it improved this generation."""
        if self.cma is None or not cma_results:
            return
        samples = list(cma_results)
        if best_improved:
            samples.append((np.asarray(best_x, dtype=float), float(best_f)))
        if len(samples) < 2:
            return
        try:
            self.cma = cma_update(self.cma, samples)
        except DegenerateSamplesError:
            self.cma = cma_reset(self.cma, best_x, self.view.lb, self.view.ub)
            self._gens_since_reset = 0
