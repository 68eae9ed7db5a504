"""Stochastic interacting-population models with density-dependent prices.

A model is a d-species diffusion

    dX_i = b_i(X) dt + sigma_i(X) dw_i - dY_i + dZ_i,

where Y/Z are the cumulative harvest/seeding processes, f_i(x) is the
marginal income per unit harvested, g_i(x) the marginal cost per unit
seeded, and delta the discount rate. The origin is absorbing for the
uncontrolled flow: b(0) = sigma(0) = 0, so extinct populations can only be
revived by seeding.

Three presets cover the stock examples: a 1-D logistic population, a 2-D
competitive Lotka-Volterra system, and a 2-D predator-prey system. All
presets carry diagonal noise sigma_i(x) = sigma_i * x_i; a full-matrix
noise hook (``diffusion_matrix``) exists for custom models.

Coefficient callables must be vectorized: they take arrays of shape
(..., d) and return arrays of the same shape (the kernel builder and the
path simulator evaluate them in batch).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Coefficient = Callable[[np.ndarray], np.ndarray]

PRESET_IDS = ("logistic_1d", "competition_2d", "predator_prey_2d")


class ModelError(ValueError):
    """Bad model construction or preset parameters."""


@dataclass(frozen=True)
class Model:
    """Immutable d-species model; safe to share across solver workers.

    drift, diffusion_row, harvest_price and seed_cost map (..., d) state
    arrays to (..., d) values. diffusion_row holds the diagonal noise
    coefficients (sigma_1(x), ..., sigma_d(x)); when ``diffusion_matrix``
    is given it overrides the diagonal and must return (..., d, d).
    """

    dim: int
    drift: Coefficient
    diffusion_row: Coefficient
    harvest_price: Coefficient
    seed_cost: Coefficient
    discount: float
    diffusion_matrix: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ModelError(f"dim must be a positive integer, got {self.dim}")
        if not np.isfinite(self.discount) or self.discount <= 0:
            raise ModelError(f"discount must be > 0, got {self.discount}")

    def covariance(self, x: np.ndarray) -> np.ndarray:
        """a(x) = sigma(x) sigma(x)' with shape (..., d, d)."""
        x = np.asarray(x, dtype=float)
        if self.diffusion_matrix is not None:
            sig = np.asarray(self.diffusion_matrix(x), dtype=float)
            return sig @ np.swapaxes(sig, -1, -2)
        row = np.asarray(self.diffusion_row(x), dtype=float)
        out = np.zeros(x.shape + (self.dim,))
        idx = np.arange(self.dim)
        out[..., idx, idx] = row**2
        return out

    def covariance_diag(self, x: np.ndarray) -> np.ndarray:
        """Diagonal of a(x), shape (..., d)."""
        if self.diffusion_matrix is None:
            row = np.asarray(self.diffusion_row(np.asarray(x, dtype=float)), dtype=float)
            return row**2
        a = self.covariance(x)
        return np.diagonal(a, axis1=-2, axis2=-1)


def constant_price(values: float | Sequence[float], dim: int) -> Coefficient:
    """Price function equal to ``values`` (scalar or per-species) everywhere."""
    vec = np.broadcast_to(np.asarray(values, dtype=float), (dim,)).copy()

    def price(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(vec, x.shape).copy()

    return price


def piecewise_affine_cost(high: float, low: float, knee_start: float, knee_end: float) -> Coefficient:
    """1-D seeding cost: ``high`` up to knee_start, affine down to ``low`` at knee_end.

    Continuous and non-increasing provided high >= low and knee_start < knee_end.
    """
    if not (knee_start < knee_end):
        raise ModelError("piecewise cost needs knee_start < knee_end")
    if not (high >= low > 0):
        raise ModelError("piecewise cost needs high >= low > 0")
    slope = (low - high) / (knee_end - knee_start)

    def cost(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.clip(high + slope * (x - knee_start), low, high)

    return cost


def _price_from_param(value, dim: int, name: str) -> Coefficient:
    """Interpret a preset price parameter: number, per-species sequence,
    piecewise dict (1-D), or a ready-made callable."""
    if callable(value):
        return value
    if isinstance(value, dict):
        if dim != 1:
            raise ModelError(f"piecewise {name} is only supported for 1-D presets")
        extra = set(value) - {"high", "low", "knee_start", "knee_end"}
        if extra:
            raise ModelError(f"unknown keys in piecewise {name}: {sorted(extra)}")
        try:
            return piecewise_affine_cost(
                float(value["high"]), float(value["low"]),
                float(value["knee_start"]), float(value["knee_end"]),
            )
        except KeyError as missing:
            raise ModelError(f"piecewise {name} needs key {missing}") from None
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape not in ((1,), (dim,)):
        raise ModelError(f"{name} must be a scalar or length-{dim} sequence")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ModelError(f"{name} must be positive and finite, got {value}")
    return constant_price(arr, dim)


def _require_positive(params: dict, names: Sequence[str]) -> None:
    for name in names:
        v = params[name]
        if not np.isfinite(v) or v <= 0:
            raise ModelError(f"preset parameter {name!r} must be positive and finite, got {v}")


def _require_nonnegative(params: dict, names: Sequence[str]) -> None:
    # noise may be switched off entirely; the scheme degenerates to drift upwinding
    for name in names:
        v = params[name]
        if not np.isfinite(v) or v < 0:
            raise ModelError(f"preset parameter {name!r} must be nonnegative and finite, got {v}")


_LOGISTIC_DEFAULTS = dict(b=3.0, c=2.0, sigma=1.0, delta=0.05, f=1.0, g=3.0)
_COMPETITION_DEFAULTS = dict(
    b1=3.0, a11=2.0, a12=1.0, sigma1=3.0,
    b2=2.0, a21=1.0, a22=2.0, sigma2=3.0,
    delta=0.05, f=(1.0, 2.0), g=(4.0, 4.0),
)
_PREDATOR_PREY_DEFAULTS = dict(
    b1=2.0, a11=1.2, a12=1.0, sigma1=1.2,
    b2=1.0, a21=1.2, a22=7.0, sigma2=1.3,
    delta=0.05, f=(1.0, 1.0), g=(6.0, 6.0),
)

_PRESET_DEFAULTS = {
    "logistic_1d": _LOGISTIC_DEFAULTS,
    "competition_2d": _COMPETITION_DEFAULTS,
    "predator_prey_2d": _PREDATOR_PREY_DEFAULTS,
}


def _merge_params(preset_id: str, params: Optional[dict]) -> dict:
    defaults = _PRESET_DEFAULTS[preset_id]
    merged = dict(defaults)
    for key, value in (params or {}).items():
        if key not in defaults:
            raise ModelError(f"unknown parameter {key!r} for preset {preset_id!r}")
        merged[key] = value
    for key, value in merged.items():
        if key in ("f", "g"):
            continue
        merged[key] = float(value)
    return merged


def make_preset(preset_id: str, params: Optional[dict] = None) -> Model:
    """Build one of the stock models, optionally overriding its parameters.

    logistic_1d:       dX = X(b - cX) dt + sigma X dw
    competition_2d:    dX_i = X_i(b_i - a_i1 X_1 - a_i2 X_2) dt + sigma_i X_i dw_i
    predator_prey_2d:  prey as in competition; predator drift
                       X_2(-b2 + a21 X_1 - a22 X_2).
    """
    if preset_id not in _PRESET_DEFAULTS:
        raise ModelError(f"unknown preset {preset_id!r}; expected one of {PRESET_IDS}")
    p = _merge_params(preset_id, params)

    if preset_id == "logistic_1d":
        _require_positive(p, ("b", "c", "delta"))
        _require_nonnegative(p, ("sigma",))
        b, c, sigma = p["b"], p["c"], p["sigma"]

        def drift(x):
            x = np.asarray(x, dtype=float)
            return x * (b - c * x)

        def diffusion_row(x):
            x = np.asarray(x, dtype=float)
            return sigma * x

        return Model(
            dim=1,
            drift=drift,
            diffusion_row=diffusion_row,
            harvest_price=_price_from_param(p["f"], 1, "f"),
            seed_cost=_price_from_param(p["g"], 1, "g"),
            discount=p["delta"],
        )

    _require_positive(p, ("b1", "a11", "a12", "b2", "a21", "a22", "delta"))
    _require_nonnegative(p, ("sigma1", "sigma2"))
    b1, a11, a12, s1 = p["b1"], p["a11"], p["a12"], p["sigma1"]
    b2, a21, a22, s2 = p["b2"], p["a21"], p["a22"], p["sigma2"]
    predator = preset_id == "predator_prey_2d"

    def drift(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        d1 = x1 * (b1 - a11 * x1 - a12 * x2)
        if predator:
            d2 = x2 * (-b2 + a21 * x1 - a22 * x2)
        else:
            d2 = x2 * (b2 - a21 * x1 - a22 * x2)
        return np.stack([d1, d2], axis=-1)

    def diffusion_row(x):
        x = np.asarray(x, dtype=float)
        return np.stack([s1 * x[..., 0], s2 * x[..., 1]], axis=-1)

    return Model(
        dim=2,
        drift=drift,
        diffusion_row=diffusion_row,
        harvest_price=_price_from_param(p["f"], 2, "f"),
        seed_cost=_price_from_param(p["g"], 2, "g"),
        discount=p["delta"],
    )


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    worst_state: Optional[tuple] = None
    worst_magnitude: Optional[float] = None
    detail: str = ""
    blocking: bool = True  # standing assumptions block a solve; growth bounds only inform


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of sampling-based assumption checks; never raises."""

    bound: float
    sample_step: float
    checks: tuple[ValidationCheck, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        """True when every standing assumption holds. The drift-growth
        bound is advisory: it only gates the linear value bound, and e.g.
        predator-prey drifts genuinely violate it off the prey axis."""
        return all(c.passed for c in self.checks if c.blocking)

    def check(self, name: str) -> ValidationCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def drift_growth_constant(self) -> Optional[float]:
        c = self.check("drift-growth-bound")
        return c.worst_magnitude if c.passed else None

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            where = "" if c.worst_state is None else f" at {c.worst_state}"
            lines.append(f"{c.name}: {status}{where} {c.detail}".rstrip())
        return "\n".join(lines)


def _sample_lattice(bound: float, step: float, dim: int) -> np.ndarray:
    n = int(round(bound / step)) + 1
    axes = np.arange(n) * step
    mesh = np.meshgrid(*([axes] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def validate(model: Model, domain_bound: float, sample_step: float) -> ValidationReport:
    """Audit the standing assumptions on a sample lattice over [0, U]^d.

    Checks: absorbing origin, strict price gap f < g, price monotonicity,
    diagonal dominance of a(x), and the linear drift-growth bound
    b_i(x) <= delta x_i + C. Failures are recorded, not thrown.
    """
    if domain_bound <= 0 or sample_step <= 0:
        raise ModelError("domain_bound and sample_step must be positive")
    ratio = domain_bound / sample_step
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise ModelError(f"sample_step {sample_step} does not divide bound {domain_bound}")

    d = model.dim
    pts = _sample_lattice(domain_bound, sample_step, d)
    checks: list[ValidationCheck] = []

    origin = np.zeros(d)
    b0 = np.asarray(model.drift(origin), dtype=float)
    s0 = np.asarray(model.diffusion_row(origin), dtype=float)
    if model.diffusion_matrix is not None:
        s0 = np.asarray(model.diffusion_matrix(origin), dtype=float).ravel()
    mag0 = float(max(np.max(np.abs(b0)), np.max(np.abs(s0))))
    checks.append(ValidationCheck(
        "absorbing-origin", mag0 == 0.0, tuple(origin), mag0,
        "b(0) and sigma(0) vanish" if mag0 == 0.0 else "nonzero coefficient at the origin",
    ))

    f = np.asarray(model.harvest_price(pts), dtype=float)
    g = np.asarray(model.seed_cost(pts), dtype=float)
    f_max = f.max(axis=0)
    g_min = g.min(axis=0)
    gap_violation = float(np.max(f_max - g_min))
    worst_i = int(np.argmax(f_max - g_min))
    checks.append(ValidationCheck(
        "price-gap", gap_violation < 0.0,
        tuple(pts[int(np.argmax(f[:, worst_i]))]), gap_violation,
        f"max f - min g = {gap_violation:.6g} (species {worst_i + 1})",
    ))

    mono_worst = -np.inf
    mono_state = None
    n_axis = int(round(domain_bound / sample_step)) + 1
    shape = (n_axis,) * d
    for price, label in ((f, "f"), (g, "g")):
        cube = price.reshape(shape + (d,))
        for axis in range(d):
            inc = np.diff(cube, axis=axis)  # should be <= 0
            worst = float(inc.max()) if inc.size else -np.inf
            if worst > mono_worst:
                mono_worst = worst
                flat = int(np.argmax(inc))
                idx = np.unravel_index(flat, inc.shape)
                state = np.array(idx[:-1], dtype=float) * sample_step
                mono_state = tuple(state)
    checks.append(ValidationCheck(
        "price-monotonicity", mono_worst <= 1e-12, mono_state,
        mono_worst, f"largest increase along an axis = {mono_worst:.3g}",
    ))

    a = model.covariance(pts)  # (n, d, d)
    diag = np.diagonal(a, axis1=-2, axis2=-1)
    off = np.sum(np.abs(a), axis=-1) - np.abs(diag)
    margin = diag - off
    worst_margin = float(margin.min())
    flat = int(np.argmin(margin.min(axis=-1)))
    checks.append(ValidationCheck(
        "diag-dominance", worst_margin >= -1e-12, tuple(pts[flat]),
        worst_margin, f"min_i a_ii - sum_j |a_ij| = {worst_margin:.6g}",
    ))

    b = np.asarray(model.drift(pts), dtype=float)
    excess = b - model.discount * pts  # b_i(x) - delta x_i, want <= C
    growth = float(max(0.0, excess.max()))
    outer = np.any(np.isclose(pts, domain_bound), axis=-1)
    outer_max = float(excess[outer].max()) if outer.any() else -np.inf
    inner_max = float(excess[~outer].max()) if (~outer).any() else -np.inf
    unbounded = outer_max > max(inner_max, 0.0) + 1e-12
    flat = int(np.argmax(excess.max(axis=-1)))
    detail = (
        "unbounded at sampled points"
        if unbounded
        else f"smallest C with b_i(x) <= delta x_i + C: C = {growth:.6g}"
    )
    checks.append(ValidationCheck(
        "drift-growth-bound", not unbounded, tuple(pts[flat]), growth, detail,
        blocking=False,
    ))

    return ValidationReport(bound=domain_bound, sample_step=sample_step, checks=tuple(checks))
