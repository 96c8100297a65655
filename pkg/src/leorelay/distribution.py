"""Conditional contact angle distribution and its distance reparametrisation.

The conditional contact angle is the dome angle between the transmitter
and the nearest satellite that lies inside both visibility caps. Its CDF
at ``theta`` is the probability that the lens formed by the transmitter's
radius-``theta`` cap and the receiver cap holds at least one of the
``n_sat`` satellites.

The lens area is approximated as two projected slices, one per cap, whose
widths come from a split solver in :mod:`leorelay.geometry`. When one cap
sits inside the other there is no cutting line and the lens is the inner
cap, evaluated as a slice of full width.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from numpy.typing import ArrayLike

from leorelay.errors import CertainOutageError, CurveInvariantError, DomainError, InfeasibleScenarioError
from leorelay.geometry import (
    SYMMETRIC_THRESHOLD,
    GeometryConfig,
    RelayScenario,
    cap_slice_area,
    clip_unit,
    closed_form_offsets,
    feasibility_check,
    overlap_split_root_solve,
)

__all__ = [
    "AngleDomain",
    "CdfCurve",
    "Convention",
    "RelayScenario",
    "Source",
    "analytic_cdf_curve",
    "angle_to_distance",
    "conditional_contact_cdf",
    "conditional_contact_cdf_normalized",
    "conditional_contact_distance_cdf",
    "conditional_contact_pdf",
    "contact_angle_domain",
    "contact_distance_domain",
    "distance_to_angle",
    "expect_over_contact_distance",
    "lens_area_fraction",
    "relay_survival",
]

Solver = Literal["closed_form", "root_solve"]

PDF_STEP = 1e-5


class Convention(str, enum.Enum):
    DEFECTIVE = "defective"
    NORMALIZED = "normalized"


class Source(str, enum.Enum):
    ANALYTIC = "analytic"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class AngleDomain:
    lower_rad: float
    upper_rad: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.lower_rad <= self.upper_rad <= math.pi):
            raise DomainError(f"invalid angle domain [{self.lower_rad}, {self.upper_rad}]")

    def grid(self, size: int) -> np.ndarray:
        if size < 2:
            raise DomainError(f"grid size must be at least 2, got {size}")
        return np.linspace(self.lower_rad, self.upper_rad, size)


@dataclass(frozen=True, eq=False)
class CdfCurve:
    """A sampled CDF.

    ``abscissa`` holds angles in radians or distances in km depending on
    ``variable``. ``clamped`` is set when part of the requested range lay
    outside the contact angle domain and was evaluated at the nearest edge.
    """

    abscissa: np.ndarray
    probability: np.ndarray
    convention: Convention
    source: Source
    fingerprint: str
    variable: Literal["angle", "distance"] = "angle"
    clamped: bool = False
    std_error: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        x = np.asarray(self.abscissa, dtype=float)
        p = np.asarray(self.probability, dtype=float)
        if x.shape != p.shape or x.ndim != 1:
            raise CurveInvariantError("abscissa and probability must be 1-D arrays of equal length")
        if not np.all(np.isfinite(p)) or np.any((p < 0.0) | (p > 1.0)):
            raise CurveInvariantError("probabilities must lie in [0, 1]")
        if np.any(np.diff(x) <= 0.0):
            raise CurveInvariantError("abscissae must be strictly increasing")
        if np.any(np.diff(p) < 0.0):
            raise CurveInvariantError("probabilities must be nondecreasing")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.abscissa.tolist(), self.probability.tolist()))


def _require_feasible(scenario: RelayScenario) -> None:
    report = feasibility_check(scenario)
    if not report.intersects:
        c = scenario.separation_rad
        raise InfeasibleScenarioError(
            "visibility caps do not intersect: theta_m1 + theta_m2 = "
            f"{scenario.theta_m1_rad + scenario.theta_m2_rad:.6f} rad <= 4*asin(d/(2*R_earth)) = "
            f"{2.0 * c:.6f} rad (d = {scenario.distance_km} km)"
        )


def contact_angle_domain(scenario: RelayScenario) -> AngleDomain:
    """Range of possible conditional contact angles.

    ``lower = max(0, c - theta_m2/2)`` and
    ``upper = min(theta_m1/2, c + theta_m2/2)`` where ``c`` is the ground
    separation angle.
    """
    _require_feasible(scenario)
    c = scenario.separation_rad
    lower = max(0.0, c - 0.5 * scenario.theta_m2_rad)
    upper = min(0.5 * scenario.theta_m1_rad, c + 0.5 * scenario.theta_m2_rad)
    return AngleDomain(lower, upper)


def _split_offsets(theta: np.ndarray, half2: float, c: float, solver: Solver) -> np.ndarray:
    """Raw first-slice widths for transmitter half-angles ``theta`` (lens interior only)."""
    if solver == "closed_form":
        a = np.cos(theta)
        b = math.cos(half2)
        x1 = closed_form_offsets(a, b, c)
        width = theta + half2 - c
        o1 = theta - x1
        symmetric = np.abs(a - b) < SYMMETRIC_THRESHOLD
        return np.where(symmetric, 0.5 * width, o1)
    if solver == "root_solve":
        return np.array([overlap_split_root_solve(2.0 * t, 2.0 * half2, c).theta_o1_rad for t in theta])
    raise DomainError(f"unknown split solver {solver!r}")


def lens_area_fraction(
    scenario: RelayScenario, theta: ArrayLike, *, solver: Solver = "closed_form"
) -> float | np.ndarray:
    """Approximate fraction of the shell inside the eligibility lens at ``theta``.

    Evaluated on the unit sphere, so the result does not depend on the
    shell radius. ``theta`` is clamped to the contact angle domain.
    """
    domain = contact_angle_domain(scenario)
    th = np.clip(np.asarray(theta, dtype=float), domain.lower_rad, domain.upper_rad)
    scalar = th.ndim == 0
    th = np.atleast_1d(th)
    c = scenario.separation_rad
    half2 = 0.5 * scenario.theta_m2_rad
    theta_m2 = scenario.theta_m2_rad

    area = np.zeros_like(th)
    empty = th <= domain.lower_rad
    tx_inside = ~empty & (th + c <= half2)
    rx_inside = ~empty & ~tx_inside & (half2 + c <= th)
    lens = ~empty & ~tx_inside & ~rx_inside

    if np.any(tx_inside):
        t = th[tx_inside]
        area[tx_inside] = cap_slice_area(2.0 * t, 2.0 * t)
    if np.any(rx_inside):
        area[rx_inside] = cap_slice_area(theta_m2, theta_m2)
    if np.any(lens):
        t = th[lens]
        width = t + half2 - c
        o1 = _split_offsets(t, half2, c, solver)
        o2 = width - o1
        # the cutting line lies inside the lens, so each slice width is in [0, width]
        o1 = np.clip(o1, 0.0, np.minimum(width, 2.0 * t))
        o2 = np.clip(o2, 0.0, np.minimum(width, theta_m2))
        two_slices = cap_slice_area(2.0 * t, o1) + cap_slice_area(theta_m2, o2)
        # the lens lies inside both caps; near containment the two slices overshoot
        full_caps = np.minimum(cap_slice_area(2.0 * t, 2.0 * t), cap_slice_area(theta_m2, theta_m2))
        area[lens] = np.minimum(two_slices, full_caps)

    frac = area / (4.0 * math.pi)
    return float(frac[0]) if scalar else frac


def log_relay_survival(scenario: RelayScenario, theta: ArrayLike, solver: Solver) -> np.ndarray:
    p = lens_area_fraction(scenario, theta, solver=solver)
    return scenario.n_sat * np.log1p(-np.asarray(p))


def relay_survival(scenario: RelayScenario, theta: ArrayLike, *, solver: Solver = "closed_form"):
    """``1 - F(theta)`` computed without cancellation."""
    out = np.exp(log_relay_survival(scenario, theta, solver))
    return float(out) if np.ndim(out) == 0 else out


def conditional_contact_cdf(
    scenario: RelayScenario, theta: ArrayLike, *, solver: Solver = "closed_form"
) -> float | np.ndarray:
    """Defective CDF of the conditional contact angle.

    ``F(theta) = 1 - (1 - A(theta)/(4*pi*R_sat^2))**n_sat`` where ``A`` is
    the approximate lens area. Below the domain the CDF is 0; above it the
    value at the upper bound is returned, which falls short of 1 by the
    relay outage probability.

    Raises:
        InfeasibleScenarioError: if the two caps cannot intersect.
    """
    out = -np.expm1(log_relay_survival(scenario, theta, solver))
    return float(out) if np.ndim(out) == 0 else out


def conditional_contact_cdf_normalized(
    scenario: RelayScenario, theta: ArrayLike, *, solver: Solver = "closed_form"
) -> float | np.ndarray:
    """CDF conditioned on a relay existing, so it reaches 1 at the upper bound."""
    total = conditional_contact_cdf(scenario, contact_angle_domain(scenario).upper_rad, solver=solver)
    if total == 0.0:
        raise CertainOutageError(
            f"relay probability is zero for scenario {scenario.fingerprint()}; cannot normalize"
        )
    out = np.minimum(np.asarray(conditional_contact_cdf(scenario, theta, solver=solver)) / total, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def conditional_contact_pdf(
    scenario: RelayScenario,
    theta: float,
    *,
    solver: Solver = "closed_form",
    step: float = PDF_STEP,
    full_output: bool = False,
):
    """Density of the conditional contact angle by finite differences.

    Central difference with step ``step``; within one step of a domain
    edge a one-sided difference is used. Outside the domain the density
    is 0. With ``full_output=True`` returns ``(density, one_sided)``.
    """
    domain = contact_angle_domain(scenario)
    lo, hi = domain.lower_rad, domain.upper_rad
    if theta < lo or theta > hi:
        return (0.0, False) if full_output else 0.0
    left, right = theta - step, theta + step
    one_sided = False
    if left < lo:
        left, one_sided = theta, True
    if right > hi:
        right, one_sided = theta, True
    if right <= left:
        return (0.0, True) if full_output else 0.0
    f = conditional_contact_cdf(scenario, np.array([left, right]), solver=solver)
    density = max(float((f[1] - f[0]) / (right - left)), 0.0)
    return (density, one_sided) if full_output else density


def angle_to_distance(geometry: GeometryConfig, theta_c: ArrayLike) -> float | np.ndarray:
    """Ground-to-satellite distance for a contact angle (law of cosines).

    Uses ``d^2 = (R_sat - R_earth)^2 + 4*R_earth*R_sat*sin^2(theta/2)``,
    which is the usual law of cosines without cancellation near nadir.
    """
    th = np.asarray(theta_c, dtype=float)
    if np.any((th < 0.0) | (th > math.pi)):
        raise DomainError("contact angle must lie in [0, pi]")
    re, rs = geometry.earth_radius_km, geometry.shell_radius_km
    d = np.sqrt((rs - re) ** 2 + 4.0 * re * rs * np.sin(0.5 * th) ** 2)
    return float(d) if d.ndim == 0 else d


def distance_to_angle(geometry: GeometryConfig, d_c: ArrayLike) -> float | np.ndarray:
    d = np.asarray(d_c, dtype=float)
    re, rs = geometry.earth_radius_km, geometry.shell_radius_km
    lo, hi = rs - re, rs + re
    # one ulp of slack at the ends so round-tripped endpoints are accepted
    if np.any((d < lo * (1 - 1e-15)) | (d > hi * (1 + 1e-15))):
        raise DomainError(f"contact distance must lie in [{lo}, {hi}] km")
    s2 = np.maximum(d**2 - lo**2, 0.0) / (4.0 * re * rs)
    th = 2.0 * np.arcsin(clip_unit(np.sqrt(s2), "half-angle sine"))
    return float(th) if th.ndim == 0 else th


def contact_distance_domain(scenario: RelayScenario) -> tuple[float, float]:
    dom = contact_angle_domain(scenario)
    return (
        angle_to_distance(scenario.geometry, dom.lower_rad),
        angle_to_distance(scenario.geometry, dom.upper_rad),
    )


def conditional_contact_distance_cdf(
    scenario: RelayScenario, d_c: ArrayLike, *, solver: Solver = "closed_form"
) -> float | np.ndarray:
    """Defective CDF of the conditional contact distance."""
    return conditional_contact_cdf(scenario, distance_to_angle(scenario.geometry, d_c), solver=solver)


def expect_over_contact_distance(
    scenario: RelayScenario,
    integrand: Callable[[np.ndarray], ArrayLike],
    grid_size: int = 2048,
    *,
    solver: Solver = "closed_form",
    cdf: Callable[[np.ndarray], ArrayLike] | None = None,
) -> float:
    """Stieltjes integral of ``integrand`` against the contact distance CDF.

    Trapezoidal rule on a uniform distance grid spanning the contact
    distance domain. The CDF is defective, so ``integrand = 1`` returns
    the relay probability ``F(upper) - F(lower)``. ``cdf`` overrides the
    analytic CDF with any callable of distance, e.g. an empirical one.
    """
    if grid_size < 2:
        raise DomainError(f"grid_size must be at least 2, got {grid_size}")
    lo, hi = contact_distance_domain(scenario)
    grid = np.linspace(lo, hi, grid_size)
    if cdf is None:
        weights = np.asarray(conditional_contact_distance_cdf(scenario, grid, solver=solver))
    else:
        weights = np.asarray(cdf(grid), dtype=float)
    values = np.broadcast_to(np.asarray(integrand(grid), dtype=float), grid.shape)
    if not np.all(np.isfinite(values)):
        raise DomainError("integrand must be finite on the contact distance domain")
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(weights)))


def analytic_cdf_curve(
    scenario: RelayScenario,
    thetas: ArrayLike | None = None,
    *,
    grid_size: int = 201,
    convention: Convention | str = Convention.DEFECTIVE,
    solver: Solver = "closed_form",
) -> CdfCurve:
    """Analytic CDF sampled on ``thetas`` or on a uniform grid over the domain."""
    convention = Convention(convention)
    domain = contact_angle_domain(scenario)
    grid = domain.grid(grid_size) if thetas is None else np.asarray(thetas, dtype=float)
    clamped = bool(np.any(grid < domain.lower_rad) or np.any(grid > domain.upper_rad))
    if convention is Convention.DEFECTIVE:
        prob = conditional_contact_cdf(scenario, grid, solver=solver)
    else:
        prob = conditional_contact_cdf_normalized(scenario, grid, solver=solver)
    return CdfCurve(
        abscissa=grid,
        probability=np.atleast_1d(prob),
        convention=convention,
        source=Source.ANALYTIC,
        fingerprint=scenario.fingerprint(),
        clamped=clamped,
        meta={"solver": solver},
    )
