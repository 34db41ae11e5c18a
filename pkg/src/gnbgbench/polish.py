"""Multi-start quasi-Newton polish under strict budget accounting.

The compliant plan draws every start from the search itself: the EA's best
point, four uniform perturbations of it (2/5/10/20% of the domain width),
and three uniform restarts. The leaky variant (kept only to demonstrate
metadata leakage, and flagged non-compliant on every output record)
additionally seeds one start per component minimum position.

This module receives a bare objective callable plus scalar bounds; the
compliant path has no way to read instance structure. Seed points for the
leaky variant are injected by the caller.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import BudgetExhaustedError, GateViolationError, InvalidSpecError

PERTURBATION_RADII = (0.02, 0.05, 0.10, 0.20)
N_RANDOM_RESTARTS = 3


class PolishVariant(str, Enum):
    COMPLIANT_B = "compliant"
    LEAKY_A = "leaky"


@dataclass
class LocalOptConfig:
    history_pairs: int = 10
    fd_step_rel: float = 1e-8  # finite-difference step as a fraction of (ub - lb)
    grad_tol: float = 1e-12
    max_iters_per_start: int = 0  # 0 = unbounded; the budget governs

    def check(self) -> None:
        if self.history_pairs < 1 or self.fd_step_rel <= 0 or self.grad_tol <= 0:
            raise InvalidSpecError("local optimizer settings must be positive")
        if self.max_iters_per_start < 0:
            raise InvalidSpecError("max_iters_per_start must be >= 0")


@dataclass
class PolishPlan:
    starts: list
    per_start_budget: int
    variant: PolishVariant


def build_plan(
    ea_best: np.ndarray,
    lb: float,
    ub: float,
    rng: np.random.Generator,
    variant: PolishVariant,
    seed_points: list | None = None,
    per_start_budget: int = 0,
) -> PolishPlan:
    """Start list in priority order. The compliant variant rejects any
    injected seed points outright."""
    variant = PolishVariant(variant)
    if variant is PolishVariant.COMPLIANT_B:
        if seed_points is not None:
            raise GateViolationError(
                "compliant polish must not receive structural seed points"
            )
        starts: list = []
    else:
        if seed_points is None:
            raise InvalidSpecError("leaky polish requires the structural seed points")
        starts = [np.clip(np.asarray(p, dtype=float), lb, ub) for p in seed_points]

    ea_best = np.asarray(ea_best, dtype=float)
    dim = ea_best.shape[0]
    width = ub - lb
    starts.append(ea_best.copy())
    for r in PERTURBATION_RADII:
        p = ea_best + rng.uniform(-r * width, r * width, dim)
        starts.append(np.clip(p, lb, ub))
    for _ in range(N_RANDOM_RESTARTS):
        starts.append(rng.uniform(lb, ub, dim))
    return PolishPlan(starts=starts, per_start_budget=per_start_budget, variant=variant)


def _fd_gradient(f, x: np.ndarray, lb: float, ub: float, h: float) -> np.ndarray:
    """Central differences, 2*dim evaluations, probe steps shrunk at the box
    edge so probes stay feasible."""
    dim = x.shape[0]
    g = np.empty(dim)
    for j in range(dim):
        hp = min(h, ub - x[j])
        hm = min(h, x[j] - lb)
        if hp + hm <= 0.0:
            g[j] = 0.0
            continue
        xp = x.copy()
        xp[j] += hp
        xm = x.copy()
        xm[j] -= hm
        g[j] = (f(xp) - f(xm)) / (hp + hm)
    return g


def _two_loop(g: np.ndarray, s_list: list, y_list: list) -> np.ndarray:
    """L-BFGS two-loop recursion; returns the quasi-Newton step -H g."""
    q = g.copy()
    k = len(s_list)
    rhos = [1.0 / float(np.dot(y, s)) for s, y in zip(s_list, y_list)]
    alphas = [0.0] * k
    for i in range(k - 1, -1, -1):
        alphas[i] = rhos[i] * float(np.dot(s_list[i], q))
        q -= alphas[i] * y_list[i]
    if k:
        q *= float(np.dot(s_list[-1], y_list[-1]) / np.dot(y_list[-1], y_list[-1]))
    for i in range(k):
        beta = rhos[i] * float(np.dot(y_list[i], q))
        q += (alphas[i] - beta) * s_list[i]
    return -q


def local_minimize(f_eval, x0: np.ndarray, lb: float, ub: float,
                   cfg: LocalOptConfig | None = None):
    """Bound-constrained limited-memory quasi-Newton descent.

    Gradients are central finite differences; steps are projected onto the
    box and accepted under a backtracking Armijo test. Every objective call
    goes through f_eval, which is expected to charge the shared counter and
    raise BudgetExhaustedError when the allotment runs out; the best point
    seen by then is returned. Never returns a value above f(x0).
    """
    cfg = cfg or LocalOptConfig()
    cfg.check()
    x = np.clip(np.asarray(x0, dtype=float), lb, ub)
    h = cfg.fd_step_rel * (ub - lb)

    best_x = x.copy()
    best_f = np.inf

    def f(pt):
        nonlocal best_x, best_f
        v = float(f_eval(pt))
        if v < best_f:
            best_f = v
            best_x = pt.copy()
        return v

    try:
        fx = f(x)
        s_list: list = []
        y_list: list = []
        g = _fd_gradient(f, x, lb, ub, h)
        iters = 0
        while True:
            iters += 1
            if cfg.max_iters_per_start and iters > cfg.max_iters_per_start:
                break
            pg = g.copy()
            at_lo = x <= lb
            at_hi = x >= ub
            pg[at_lo & (pg > 0)] = 0.0
            pg[at_hi & (pg < 0)] = 0.0
            if float(np.max(np.abs(pg))) <= cfg.grad_tol:
                break

            d = _two_loop(g, s_list, y_list)
            if np.dot(d, g) >= 0.0:  # not a descent direction; restart memory
                s_list.clear()
                y_list.clear()
                d = -g

            alpha = 1.0
            accepted = False
            for _ in range(30):
                xn = np.clip(x + alpha * d, lb, ub)
                step = xn - x
                if not np.any(step):
                    break  # projected onto the current point; cannot move
                gs = float(np.dot(g, step))
                if gs >= 0.0:
                    alpha *= 0.5  # projection turned the step uphill; shrink
                    continue
                fn = f(xn)
                if fn <= fx + 1e-4 * gs:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break  # no progress along any backtracked step

            gn = _fd_gradient(f, xn, lb, ub, h)
            s = xn - x
            y = gn - g
            ys = float(np.dot(y, s))
            if ys > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(y)):
                s_list.append(s)
                y_list.append(y)
                if len(s_list) > cfg.history_pairs:
                    s_list.pop(0)
                    y_list.pop(0)
            x, fx, g = xn, fn, gn
    except BudgetExhaustedError:
        pass

    if not np.isfinite(best_f):  # not even f(x0) fit in the budget
        return np.clip(np.asarray(x0, dtype=float), lb, ub), float("inf")
    return best_x, best_f


@dataclass
class PolishResult:
    best_x: np.ndarray
    best_f: float
    starts_run: int = 0
    plan: PolishPlan | None = None


def run_polish(
    objective,
    lb: float,
    ub: float,
    ea_best_x: np.ndarray,
    ea_best_f: float,
    counter,
    rng: np.random.Generator,
    variant: PolishVariant,
    cfg: LocalOptConfig | None = None,
    seed_points: list | None = None,
) -> PolishResult:
    """Spend whatever budget remains on the multi-start plan.

    The remaining budget is split equally over the remaining starts; budget a
    start leaves unused rolls over to the next. The result never exceeds the
    EA best.
    """
    cfg = cfg or LocalOptConfig()
    best_x = np.asarray(ea_best_x, dtype=float).copy()
    best_f = float(ea_best_f)

    remaining = counter.remaining
    if remaining <= 0:
        return PolishResult(best_x, best_f, 0, None)

    plan = build_plan(ea_best_x, lb, ub, rng, variant, seed_points)
    plan.per_start_budget = remaining // len(plan.starts)

    starts_run = 0
    n_starts = len(plan.starts)
    for idx, x0 in enumerate(plan.starts):
        left = counter.remaining
        if left <= 0:
            break
        share = left // (n_starts - idx)
        if share <= 0:
            continue
        deadline = counter.used + share

        def limited(pt):
            if counter.used >= deadline:
                raise BudgetExhaustedError("per-start allotment exhausted")
            return objective(pt)

        xb, fb = local_minimize(limited, x0, lb, ub, cfg)
        starts_run += 1
        if fb < best_f:
            best_f = fb
            best_x = xb.copy()

    return PolishResult(best_x, best_f, starts_run, plan)
