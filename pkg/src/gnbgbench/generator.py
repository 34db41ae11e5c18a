"""Composition-function benchmark generator with certified optima.

A problem instance is the pointwise minimum over k rotated, nonlinearly
transformed quadratic components. Each component owns a basin whose depth
(sigma), principal-axis widths, rotation, and nonlinearity exponent are
drawn deterministically from a seeded spec. Exactly one component receives
the strictly minimal depth, so the global optimum (value and position) is
known analytically and carried on the instance.

The blackbox split: solvers receive a DescriptorView (dimension, bounds,
component count, per-component lambda/omega, rotation flag) and a metered
evaluate(); the structural fields (minimum positions, depths, widths,
rotation matrices) stay on the instance and are never exported through
the descriptor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhaustedError, InvalidSpecError, InvariantViolationError
from .jsonio import dumps

_ORTHO_TOL = 1e-10


@dataclass
class TransformParams:
    """Coefficients of the log-sine coordinate warp.

    mu_pos/mu_neg shape plateaus on the positive/negative half-axes;
    omega holds the four angular frequencies of the modulation terms.
    mu_pos = mu_neg = 0 makes the transform the identity.
    """

    mu_pos: float = 0.0
    mu_neg: float = 0.0
    omega: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        if self.omega.shape != (4,):
            raise InvalidSpecError("omega must have exactly 4 entries")
        if self.mu_pos < 0 or self.mu_neg < 0 or np.any(self.omega < 0):
            raise InvalidSpecError("transform coefficients must be nonnegative")


@dataclass
class Component:
    """One basin of the composition: minimum position m, depth sigma,
    axis widths, rotation R, and basin-nonlinearity exponent lam."""

    m: np.ndarray
    sigma: float
    widths: np.ndarray
    R: np.ndarray
    lam: float
    transform: TransformParams

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.widths = np.asarray(self.widths, dtype=float)
        self.R = np.asarray(self.R, dtype=float)

    @property
    def dim(self) -> int:
        return self.m.shape[0]

    def check(self) -> None:
        dim = self.dim
        if self.widths.shape != (dim,) or self.R.shape != (dim, dim):
            raise InvariantViolationError("component shape mismatch")
        if np.any(self.widths <= 0):
            raise InvariantViolationError("widths must be positive")
        if self.lam <= 0:
            raise InvariantViolationError("lambda must be positive")
        err = np.max(np.abs(self.R @ self.R.T - np.eye(dim)))
        if err > _ORTHO_TOL:
            raise InvariantViolationError(f"rotation not orthogonal (max error {err:.3e})")


@dataclass
class ProblemInstance:
    """A composition function with analytically certified optimum."""

    dim: int
    lb: float
    ub: float
    components: list[Component]
    optimum_value: float
    optimum_position: np.ndarray
    instance_seed: int

    def __post_init__(self):
        self.optimum_position = np.asarray(self.optimum_position, dtype=float)

    def check(self) -> None:
        if self.lb >= self.ub:
            raise InvariantViolationError("lb must be < ub")
        if not self.components:
            raise InvariantViolationError("at least one component required")
        for c in self.components:
            c.check()
            if c.dim != self.dim:
                raise InvariantViolationError("component dimension mismatch")
            if np.any(c.m <= self.lb) or np.any(c.m >= self.ub):
                raise InvariantViolationError("component minimum must lie strictly inside bounds")
        sigmas = [c.sigma for c in self.components]
        best = int(np.argmin(sigmas))
        if self.optimum_value != sigmas[best]:
            raise InvariantViolationError("optimum_value must equal the minimal component depth")
        if not np.array_equal(self.optimum_position, self.components[best].m):
            raise InvariantViolationError("optimum_position must be the argmin component position")
        val = raw_value(self, self.optimum_position)
        if abs(val - self.optimum_value) > 1e-12:
            raise InvariantViolationError("evaluate(optimum_position) != optimum_value")


@dataclass
class DescriptorView:
    """Blackbox-visible landscape descriptors. Carries no minimum position,
    no depth, no widths, and no rotation-matrix entries."""

    dim: int
    lb: float
    ub: float
    comp_num: int
    lambda_all: np.ndarray
    omega_all: np.ndarray
    rotation_flag: int

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "lb": self.lb,
            "ub": self.ub,
            "comp_num": self.comp_num,
            "lambda_all": self.lambda_all.tolist(),
            "omega_all": self.omega_all.tolist(),
            "rotation_flag": self.rotation_flag,
        }


class EvalCounter:
    """Per-run evaluation meter. used never exceeds cap; charging past the
    cap raises BudgetExhaustedError before any evaluation happens."""

    def __init__(self, cap: int):
        if cap < 1:
            raise InvalidSpecError("budget cap must be positive")
        self.cap = int(cap)
        self.used = 0

    @property
    def remaining(self) -> int:
        return self.cap - self.used

    def charge(self, n: int = 1) -> None:
        if self.used + n > self.cap:
            raise BudgetExhaustedError(f"budget exhausted ({self.used}/{self.cap}, requested {n})")
        self.used += n


def transform(y: np.ndarray, params: TransformParams) -> np.ndarray:
    """Elementwise log-sine warp. Sign-preserving; fixes 0; identity when mu=0."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    w1, w2, w3, w4 = params.omega
    pos = y > 0
    if np.any(pos):
        ly = np.log(y[pos])
        out[pos] = y[pos] * np.exp(params.mu_pos * (np.sin(w1 * ly) + np.sin(w2 * ly)))
    neg = y < 0
    if np.any(neg):
        a = -y[neg]
        la = np.log(a)
        out[neg] = -(a * np.exp(params.mu_neg * (np.sin(w3 * la) + np.sin(w4 * la))))
    return out


def component_value(x: np.ndarray, c: Component) -> float:
    """sigma + (sum_i widths_i * z_i^2)^lam with z = T(R (x - m))."""
    z = transform(c.R @ (np.asarray(x, dtype=float) - c.m), c.transform)
    q = float(np.dot(c.widths, z * z))
    return c.sigma + q**c.lam


def _component_values_batch(X: np.ndarray, c: Component) -> np.ndarray:
    Z = transform((X - c.m) @ c.R.T, c.transform)
    q = (Z * Z) @ c.widths
    return c.sigma + q**c.lam


def raw_value(inst: ProblemInstance, x: np.ndarray) -> float:
    """Uncounted single evaluation (instance tooling and oracles only)."""
    return min(component_value(x, c) for c in inst.components)


def raw_values(inst: ProblemInstance, X: np.ndarray) -> np.ndarray:
    """Uncounted batch evaluation over rows of X (oracles, certification)."""
    X = np.asarray(X, dtype=float)
    vals = _component_values_batch(X, inst.components[0])
    for c in inst.components[1:]:
        np.minimum(vals, _component_values_batch(X, c), out=vals)
    return vals


def evaluate(inst: ProblemInstance, x: np.ndarray, counter: EvalCounter) -> float:
    """Metered evaluation: min over components; charges exactly one unit."""
    counter.charge(1)
    return raw_value(inst, x)


def evaluate_batch(inst: ProblemInstance, X: np.ndarray, counter: EvalCounter) -> np.ndarray:
    """Metered batch evaluation; charges one unit per row of X."""
    X = np.asarray(X, dtype=float)
    counter.charge(X.shape[0])
    return raw_values(inst, X)


@dataclass
class InstanceSpec:
    """Generation ranges for one instance family. A degenerate range (a, a)
    pins the parameter."""

    dim: int = 30
    components: int = 3
    lb: float = -100.0
    ub: float = 100.0
    sigma_range: tuple[float, float] = (-1000.0, -900.0)
    width_range: tuple[float, float] = (1.0, 10.0)
    lambda_range: tuple[float, float] = (0.25, 1.0)
    mu_range: tuple[float, float] = (0.0, 0.3)
    omega_range: tuple[float, float] = (0.0, 20.0)
    rotation: bool = False
    sigma_separation: float = 1.0
    position_margin: float = 0.05

    def check(self) -> None:
        if self.components < 1:
            raise InvalidSpecError("component count must be >= 1")
        if self.dim < 1:
            raise InvalidSpecError("dimension must be >= 1")
        if self.lb >= self.ub:
            raise InvalidSpecError("lb must be < ub")
        for name, (lo, hi) in (
            ("sigma_range", self.sigma_range),
            ("width_range", self.width_range),
            ("lambda_range", self.lambda_range),
            ("mu_range", self.mu_range),
            ("omega_range", self.omega_range),
        ):
            if lo > hi:
                raise InvalidSpecError(f"{name} is empty")
        if self.width_range[0] <= 0:
            raise InvalidSpecError("widths must be positive")
        if self.lambda_range[0] <= 0:
            raise InvalidSpecError("lambda must be positive")
        if self.mu_range[0] < 0 or self.omega_range[0] < 0:
            raise InvalidSpecError("mu and omega must be nonnegative")
        if not 0 <= self.position_margin < 0.5:
            raise InvalidSpecError("position_margin must be in [0, 0.5)")
        if self.sigma_separation <= 0:
            raise InvalidSpecError("sigma_separation must be positive (certifies a unique optimum)")

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "components": self.components,
            "lb": self.lb,
            "ub": self.ub,
            "sigma_range": list(self.sigma_range),
            "width_range": list(self.width_range),
            "lambda_range": list(self.lambda_range),
            "mu_range": list(self.mu_range),
            "omega_range": list(self.omega_range),
            "rotation": self.rotation,
            "sigma_separation": self.sigma_separation,
            "position_margin": self.position_margin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceSpec":
        kwargs = dict(d)
        for key in ("sigma_range", "width_range", "lambda_range", "mu_range", "omega_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-like orthogonal matrix: QR of a standard-normal matrix with the
    diagonal sign corrected so Q is uniquely determined."""
    A = rng.standard_normal((dim, dim))
    Q, R = np.linalg.qr(A)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def make_instance(spec: InstanceSpec, seed: int) -> ProblemInstance:
    """Deterministic instance construction. One component is pushed strictly
    below the rest by sigma_separation, certifying a unique optimum."""
    spec.check()
    rng = np.random.default_rng(seed)
    w = spec.ub - spec.lb
    lo = spec.lb + spec.position_margin * w
    hi = spec.ub - spec.position_margin * w

    comps: list[Component] = []
    for _ in range(spec.components):
        m = rng.uniform(lo, hi, spec.dim)
        sigma = float(rng.uniform(*spec.sigma_range))
        widths = rng.uniform(*spec.width_range, spec.dim)
        lam = float(rng.uniform(*spec.lambda_range))
        mu_pos = float(rng.uniform(*spec.mu_range))
        mu_neg = float(rng.uniform(*spec.mu_range))
        omega = rng.uniform(*spec.omega_range, 4)
        R = random_rotation(spec.dim, rng) if spec.rotation else np.eye(spec.dim)
        comps.append(Component(m, sigma, widths, R, lam, TransformParams(mu_pos, mu_neg, omega)))

    best = int(rng.integers(spec.components))
    floor_sigma = min(c.sigma for c in comps)
    comps[best].sigma = floor_sigma - spec.sigma_separation

    inst = ProblemInstance(
        dim=spec.dim,
        lb=spec.lb,
        ub=spec.ub,
        components=comps,
        optimum_value=comps[best].sigma,
        optimum_position=comps[best].m.copy(),
        instance_seed=int(seed) & 0xFFFFFFFFFFFFFFFF,
    )
    inst.check()
    return inst


def descriptor_view(inst: ProblemInstance) -> DescriptorView:
    """The Fig.-4-style visible slice: lambda/omega per component, rotation
    flag, bounds. No access path back to positions, depths, widths, or R."""
    rotated = any(not np.array_equal(c.R, np.eye(inst.dim)) for c in inst.components)
    return DescriptorView(
        dim=inst.dim,
        lb=inst.lb,
        ub=inst.ub,
        comp_num=len(inst.components),
        lambda_all=np.array([c.lam for c in inst.components]),
        omega_all=np.array([c.transform.omega for c in inst.components]),
        rotation_flag=1 if rotated else 0,
    )


def instance_to_dict(inst: ProblemInstance) -> dict:
    return {
        "format_version": 1,
        "dim": inst.dim,
        "lb": inst.lb,
        "ub": inst.ub,
        "instance_seed": inst.instance_seed,
        "components": [
            {
                "m": c.m.tolist(),
                "sigma": c.sigma,
                "widths": c.widths.tolist(),
                "R": c.R.tolist(),
                "lambda": c.lam,
                "mu_pos": c.transform.mu_pos,
                "mu_neg": c.transform.mu_neg,
                "omega": c.transform.omega.tolist(),
            }
            for c in inst.components
        ],
        "optimum_value": inst.optimum_value,
        "optimum_position": inst.optimum_position.tolist(),
    }


def instance_from_dict(d: dict) -> ProblemInstance:
    try:
        if d.get("format_version") != 1:
            raise InvariantViolationError(f"unsupported format_version {d.get('format_version')!r}")
        comps = [
            Component(
                m=np.array(cd["m"], dtype=float),
                sigma=float(cd["sigma"]),
                widths=np.array(cd["widths"], dtype=float),
                R=np.array(cd["R"], dtype=float),
                lam=float(cd["lambda"]),
                transform=TransformParams(
                    mu_pos=float(cd["mu_pos"]),
                    mu_neg=float(cd["mu_neg"]),
                    omega=np.array(cd["omega"], dtype=float),
                ),
            )
            for cd in d["components"]
        ]
        inst = ProblemInstance(
            dim=int(d["dim"]),
            lb=float(d["lb"]),
            ub=float(d["ub"]),
            components=comps,
            optimum_value=float(d["optimum_value"]),
            optimum_position=np.array(d["optimum_position"], dtype=float),
            instance_seed=int(d["instance_seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvariantViolationError):
            raise
        raise InvalidSpecError(f"malformed instance document: {exc}") from exc
    inst.check()
    return inst


def instance_json(inst: ProblemInstance) -> str:
    return dumps(instance_to_dict(inst)) + "\n"


def save_instance(inst: ProblemInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(instance_json(inst))


def load_instance(path) -> ProblemInstance:
    import json

    with open(path, "r", encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidSpecError(f"instance file is not valid JSON: {exc}") from exc
    return instance_from_dict(d)


def instances_equal(a: ProblemInstance, b: ProblemInstance) -> bool:
    """Field-by-field bit-exact comparison (round-trip checks)."""
    if (a.dim, a.lb, a.ub, a.instance_seed) != (b.dim, b.lb, b.ub, b.instance_seed):
        return False
    if a.optimum_value != b.optimum_value:
        return False
    if not np.array_equal(a.optimum_position, b.optimum_position):
        return False
    if len(a.components) != len(b.components):
        return False
    for ca, cb in zip(a.components, b.components):
        if ca.sigma != cb.sigma or ca.lam != cb.lam:
            return False
        if ca.transform.mu_pos != cb.transform.mu_pos or ca.transform.mu_neg != cb.transform.mu_neg:
            return False
        if not (
            np.array_equal(ca.m, cb.m)
            and np.array_equal(ca.widths, cb.widths)
            and np.array_equal(ca.R, cb.R)
            and np.array_equal(ca.transform.omega, cb.transform.omega)
        ):
            return False
    return True


def grid_minimum(inst: ProblemInstance, points_per_axis: int = 501) -> float:
    """Dense-grid minimum for 2-D instances (independent certification oracle)."""
    if inst.dim != 2:
        raise InvalidSpecError("grid oracle is defined for 2-D instances only")
    axis = np.linspace(inst.lb, inst.ub, points_per_axis)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    X = np.column_stack([gx.ravel(), gy.ravel()])
    return float(raw_values(inst, X).min())


def grid_gap_bound(inst: ProblemInstance, points_per_axis: int = 501) -> float:
    """Sound upper bound on grid_min - optimum_value from the warp's growth
    envelope |T(y)| <= |y| * exp(2 mu)."""
    h = (inst.ub - inst.lb) / (points_per_axis - 1)
    best = min(inst.components, key=lambda c: c.sigma)
    mu = max(best.transform.mu_pos, best.transform.mu_neg)
    r2 = inst.dim * (h / 2) ** 2
    q = float(np.max(best.widths)) * math.exp(4.0 * mu) * r2
    return q**best.lam
