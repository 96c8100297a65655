"""Spherical geometry primitives.

Dome angles, chord conversions, cap areas, the projected slice-area
quadrature and the two solvers that split a cap-intersection lens into
one slice per cap.

All angles are radians. Lengths are kilometres unless a function says
otherwise; areas scale with the square of the radius passed in.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike

from leorelay.errors import (
    DomainError,
    GeometryDegeneracyError,
    InfeasibleScenarioError,
    NumericalDomainError,
)

EARTH_RADIUS_KM = 6371.0

QUADRATURE_NODES = 128
SYMMETRIC_THRESHOLD = 1e-9
BISECTION_XTOL = 1e-12
_UNIT_SLACK = 1e-12


def clip_unit(x: ArrayLike, what: str = "argument") -> np.ndarray:
    """Clamp an arcsin/arccos argument to [-1, 1].

    Values further than 1e-12 outside the interval indicate a real bug
    upstream and raise instead of being silently clamped.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + _UNIT_SLACK):
        worst = float(np.max(np.abs(x)))
        raise NumericalDomainError(f"{what} outside [-1, 1] beyond slack: |x| = {worst!r}")
    return np.clip(x, -1.0, 1.0)


@dataclass(frozen=True)
class GeometryConfig:
    """Earth sphere and satellite shell, both centred at the origin."""

    shell_radius_km: float
    earth_radius_km: float = EARTH_RADIUS_KM

    def __post_init__(self) -> None:
        if not (self.earth_radius_km > 0):
            raise DomainError(f"earth_radius_km must be positive, got {self.earth_radius_km}")
        if not (self.shell_radius_km > self.earth_radius_km):
            raise DomainError(
                f"shell_radius_km ({self.shell_radius_km}) must exceed "
                f"earth_radius_km ({self.earth_radius_km})"
            )

    @classmethod
    def from_altitude(cls, altitude_km: float, earth_radius_km: float = EARTH_RADIUS_KM) -> GeometryConfig:
        return cls(shell_radius_km=earth_radius_km + altitude_km, earth_radius_km=earth_radius_km)

    @property
    def altitude_km(self) -> float:
        return self.shell_radius_km - self.earth_radius_km


@dataclass(frozen=True)
class SphericalCap:
    """A cap described by its maximum dome angle (twice its half-angle)."""

    max_dome_angle_rad: float

    def __post_init__(self) -> None:
        if not (0.0 < self.max_dome_angle_rad < math.pi):
            raise DomainError(f"max dome angle must lie in (0, pi), got {self.max_dome_angle_rad}")

    @property
    def half_angle_rad(self) -> float:
        return 0.5 * self.max_dome_angle_rad


@dataclass(frozen=True)
class RelayScenario:
    """One transmitter/receiver pair served by a binomial satellite shell.

    ``theta_m1_rad`` and ``theta_m2_rad`` are the maximum dome angles of the
    transmitter and receiver visibility caps; ``distance_km`` is the
    straight-line chord between the two ground nodes.
    """

    geometry: GeometryConfig
    theta_m1_rad: float
    theta_m2_rad: float
    distance_km: float
    n_sat: int

    def __post_init__(self) -> None:
        for name in ("theta_m1_rad", "theta_m2_rad"):
            value = getattr(self, name)
            # up to 2*pi so the simulator can model a cap covering the whole shell
            if not (0.0 < value <= 2.0 * math.pi):
                raise DomainError(f"{name} must lie in (0, 2*pi], got {value}")
        if not (0.0 <= self.distance_km <= 2.0 * self.geometry.earth_radius_km):
            raise DomainError(
                f"distance_km must lie in [0, {2.0 * self.geometry.earth_radius_km}], got {self.distance_km}"
            )
        if int(self.n_sat) != self.n_sat or self.n_sat < 1:
            raise DomainError(f"n_sat must be a positive integer, got {self.n_sat}")

    @property
    def separation_rad(self) -> float:
        """Dome angle between the two ground nodes."""
        return central_angle_from_chord(self.distance_km, self.geometry.earth_radius_km)

    def replace(self, **changes) -> RelayScenario:
        fields = {
            "geometry": self.geometry,
            "theta_m1_rad": self.theta_m1_rad,
            "theta_m2_rad": self.theta_m2_rad,
            "distance_km": self.distance_km,
            "n_sat": self.n_sat,
        }
        fields.update(changes)
        return RelayScenario(**fields)

    def fingerprint(self) -> str:
        g = self.geometry
        return (
            f"Re={g.earth_radius_km!r};Rs={g.shell_radius_km!r};tm1={self.theta_m1_rad!r};"
            f"tm2={self.theta_m2_rad!r};d={self.distance_km!r};N={int(self.n_sat)}"
        )


def central_angle_from_chord(chord_km: float, sphere_radius_km: float) -> float:
    """Dome angle subtended by a chord: ``2*asin(chord / (2*radius))``."""
    if sphere_radius_km <= 0:
        raise DomainError(f"sphere radius must be positive, got {sphere_radius_km}")
    if not (0.0 <= chord_km <= 2.0 * sphere_radius_km):
        raise DomainError(f"chord {chord_km} km outside [0, {2.0 * sphere_radius_km}]")
    return 2.0 * math.asin(min(chord_km / (2.0 * sphere_radius_km), 1.0))


def chord_from_central_angle(angle: float, sphere_radius_km: float) -> float:
    if sphere_radius_km <= 0:
        raise DomainError(f"sphere radius must be positive, got {sphere_radius_km}")
    if not (0.0 <= angle <= math.pi):
        raise DomainError(f"angle {angle} outside [0, pi]")
    return 2.0 * sphere_radius_km * math.sin(0.5 * angle)


def cap_full_area(cap: SphericalCap | float, radius_km: float) -> float:
    """Exact area of a cap: ``2*pi*R^2*(1 - cos(theta_d/2))``."""
    theta_d = cap.max_dome_angle_rad if isinstance(cap, SphericalCap) else float(cap)
    if not (0.0 <= theta_d <= 2.0 * math.pi):
        raise DomainError(f"max dome angle {theta_d} outside [0, 2*pi]")
    # 1 - cos(x) = 2 sin^2(x/2) keeps precision for small caps
    return 4.0 * math.pi * radius_km**2 * math.sin(0.25 * theta_d) ** 2


@lru_cache(maxsize=8)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def cap_slice_area(
    theta_d: ArrayLike,
    theta_o: ArrayLike,
    radius_km: float = 1.0,
    *,
    nodes: int = QUADRATURE_NODES,
) -> float | np.ndarray:
    """Projected-chord area of the slice of width ``theta_o`` cut from a cap.

    The cap has maximum dome angle ``theta_d``. Its base disc has radius
    ``R_cone = R*sin(theta_d/2)`` and the cut sits at
    ``l_low = R*cos(theta_d/2)*tan(theta_d/2 - theta_o)`` from the disc
    centre. The area is the integral over ``l`` in ``[l_low, R_cone]`` of
    ``2*R*asin(sqrt(R_cone^2 - l^2) / R)``.

    The substitution ``l = R_cone*sin(phi)`` removes the square-root
    behaviour at the upper limit; the smooth result is integrated with
    fixed-order Gauss-Legendre. Broadcasts over array inputs.

    Raises:
        DomainError: if ``theta_d`` is outside (0, pi) or ``theta_o`` is
            outside [0, theta_d].
    """
    td = np.asarray(theta_d, dtype=float)
    to = np.asarray(theta_o, dtype=float)
    td, to = np.broadcast_arrays(td, to)
    if np.any(~((td > 0.0) & (td < math.pi))):
        raise DomainError(f"theta_d must lie in (0, pi); got {td[~((td > 0) & (td < math.pi))].ravel()[:3]}")
    if np.any((to < 0.0) | (to > td)):
        bad = (to < 0.0) | (to > td)
        raise DomainError(f"theta_o must lie in [0, theta_d]; got theta_o={to[bad].ravel()[:3]}")

    half = 0.5 * td
    k = np.sin(half)  # R_cone / R
    ratio = clip_unit(np.tan(half - to) / np.tan(half), "slice cut ratio")
    phi_lo = np.arcsin(ratio)
    # theta_o == 0 gives ratio == 1 exactly, so the interval collapses to zero width
    span = 0.5 * math.pi - phi_lo

    x, w = _gauss_legendre(nodes)
    phi = phi_lo[..., None] + 0.5 * span[..., None] * (x + 1.0)
    kc = k[..., None] * np.cos(phi)
    integrand = 2.0 * np.arcsin(clip_unit(kc, "slice chord")) * kc
    area = radius_km**2 * 0.5 * span * np.sum(w * integrand, axis=-1)
    if area.ndim == 0:
        return float(area)
    return area


def slice_area_quadrature_check(theta_d: float, theta_o: float, radius_km: float = 1.0) -> float:
    """Relative change in the slice area when the node count is doubled."""
    coarse = cap_slice_area(theta_d, theta_o, radius_km, nodes=QUADRATURE_NODES)
    fine = cap_slice_area(theta_d, theta_o, radius_km, nodes=2 * QUADRATURE_NODES)
    if fine == 0.0:
        return abs(coarse)
    return abs(fine - coarse) / abs(fine)


class SplitMethod(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    ROOT_SOLVE = "root_solve"
    SYMMETRIC_LIMIT = "symmetric_limit"


@dataclass(frozen=True)
class OverlapSplit:
    """How a lens between two caps is divided by its common cutting line.

    ``theta_o1_rad`` and ``theta_o2_rad`` are the raw solver outputs: slice
    widths measured inward from each cap's far rim. They always sum to the
    lens width ``theta_d1/2 + theta_d2/2 - c``. The physically meaningful
    values lie in ``[0, lens_width]``; :meth:`clamped_angles` projects onto
    that range.
    """

    theta_o1_rad: float
    theta_o2_rad: float
    method: SplitMethod
    theta_d1_rad: float
    theta_d2_rad: float
    separation_rad: float

    @property
    def lens_width_rad(self) -> float:
        return 0.5 * self.theta_d1_rad + 0.5 * self.theta_d2_rad - self.separation_rad

    @property
    def sum_residual(self) -> float:
        return self.theta_o1_rad + self.theta_o2_rad - self.lens_width_rad

    def clamped_angles(self) -> tuple[float, float]:
        w = self.lens_width_rad
        hi1 = min(w, self.theta_d1_rad)
        hi2 = min(w, self.theta_d2_rad)
        return min(max(self.theta_o1_rad, 0.0), hi1), min(max(self.theta_o2_rad, 0.0), hi2)

    @property
    def clamped(self) -> bool:
        return self.clamped_angles() != (self.theta_o1_rad, self.theta_o2_rad)


def _check_split_inputs(theta_d1: float, theta_d2: float, c: float) -> float:
    for name, v in (("theta_d1", theta_d1), ("theta_d2", theta_d2)):
        if not (0.0 < v < math.pi):
            raise DomainError(f"{name} must lie in (0, pi), got {v}")
    if not (0.0 <= c <= math.pi):
        raise DomainError(f"separation must lie in [0, pi], got {c}")
    width = 0.5 * theta_d1 + 0.5 * theta_d2 - c
    if not width > 0.0:
        raise InfeasibleScenarioError(
            f"caps do not intersect: theta_d1/2 + theta_d2/2 = {0.5 * (theta_d1 + theta_d2)!r} "
            f"<= separation {c!r}"
        )
    return width


def closed_form_offsets(a: ArrayLike, b: ArrayLike, c: ArrayLike) -> np.ndarray:
    """Offset of the cutting line from cap 1's axis under the quadratic cosine model.

    Solves ``a/(1 - x1^2/2) = b/(1 - (c - x1)^2/2)`` for the root that stays
    finite as ``a -> b``. Written in the rationalised form
    ``(a*c^2 - 2*(a-b)) / (a*c + sqrt(2*(a-b)^2 + a*b*c^2))``, which equals
    ``(a*c - sqrt(.)) / (a - b)`` but has no cancellation near ``a == b``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    disc = 2.0 * (a - b) ** 2 + a * b * c**2
    if np.any(disc < 0.0):
        raise NumericalDomainError(
            f"negative discriminant 2a^2-4ab+2b^2+abc^2 for a={a!r}, b={b!r}, c={c!r}"
        )
    return (a * c**2 - 2.0 * (a - b)) / (a * c + np.sqrt(disc))


def overlap_split_closed_form(theta_d1: float, theta_d2: float, c: float) -> OverlapSplit:
    """Split the lens using the second-order cosine approximation.

    With ``a = cos(theta_d1/2)`` and ``b = cos(theta_d2/2)``, caps that are
    equal to within 1e-9 in ``a - b`` get the exact equal split.
    """
    width = _check_split_inputs(theta_d1, theta_d2, c)
    a = math.cos(0.5 * theta_d1)
    b = math.cos(0.5 * theta_d2)
    if abs(a - b) < SYMMETRIC_THRESHOLD:
        return OverlapSplit(0.5 * width, 0.5 * width, SplitMethod.SYMMETRIC_LIMIT, theta_d1, theta_d2, c)
    x1 = float(closed_form_offsets(a, b, c))
    o1 = 0.5 * theta_d1 - x1
    return OverlapSplit(o1, width - o1, SplitMethod.CLOSED_FORM, theta_d1, theta_d2, c)


def cutting_line_residual(theta_d1: float, theta_d2: float, theta_o1: float, theta_o2: float) -> float:
    """Mismatch between the two cap-base distances to the shared cutting line."""
    return math.cos(0.5 * theta_d1) / math.cos(0.5 * theta_d1 - theta_o1) - math.cos(
        0.5 * theta_d2
    ) / math.cos(0.5 * theta_d2 - theta_o2)


def overlap_split_root_solve(theta_d1: float, theta_d2: float, c: float) -> OverlapSplit:
    """Split the lens by solving the exact cutting-line equation.

    Eliminates ``theta_o2`` through the lens-width constraint and bisects
    on ``theta_o1`` over ``[0, lens_width]`` to 1e-12 rad.

    Raises:
        GeometryDegeneracyError: if the residual has no sign change on the
            bracket (one cap contains the other).
    """
    width = _check_split_inputs(theta_d1, theta_d2, c)
    a = math.cos(0.5 * theta_d1)
    b = math.cos(0.5 * theta_d2)
    if abs(a - b) < SYMMETRIC_THRESHOLD:
        return OverlapSplit(0.5 * width, 0.5 * width, SplitMethod.SYMMETRIC_LIMIT, theta_d1, theta_d2, c)

    def g(o1: float) -> float:
        return cutting_line_residual(theta_d1, theta_d2, o1, width - o1)

    lo, hi = 0.0, width
    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0.0:
        hi = lo
    elif g_hi == 0.0:
        lo = hi
    elif (g_lo > 0.0) == (g_hi > 0.0):
        raise GeometryDegeneracyError(
            f"no sign change on [0, {width!r}] for theta_d1={theta_d1!r}, theta_d2={theta_d2!r}, "
            f"c={c!r} (residuals {g_lo!r}, {g_hi!r})"
        )
    while hi - lo > BISECTION_XTOL:
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if g_mid == 0.0:
            lo = hi = mid
            break
        if (g_mid > 0.0) == (g_lo > 0.0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    o1 = 0.5 * (lo + hi)
    return OverlapSplit(o1, width - o1, SplitMethod.ROOT_SOLVE, theta_d1, theta_d2, c)


@dataclass(frozen=True)
class FeasibilityReport:
    intersects: bool
    los_valid: bool
    margin_rad: float


def feasibility_check(scenario: RelayScenario) -> FeasibilityReport:
    """Do the two visibility caps overlap?

    ``margin_rad`` is ``theta_m1 + theta_m2 - 4*asin(d/(2*R_earth))``; the
    caps intersect when it is positive, or whenever the ground nodes
    coincide. ``los_valid`` reports whether both maximum dome angles stay
    below the ground separation, the line-of-sight condition under which
    the split construction was derived. It is advisory only.
    """
    c = scenario.separation_rad
    margin = scenario.theta_m1_rad + scenario.theta_m2_rad - 2.0 * c
    intersects = margin > 0.0
    los_valid = scenario.theta_m1_rad < c and scenario.theta_m2_rad < c
    return FeasibilityReport(intersects=intersects, los_valid=los_valid, margin_rad=margin)


def max_dome_angle_from_elevation(geometry: GeometryConfig, min_elevation_rad: float) -> float:
    """Maximum dome angle of the cap seen above a minimum elevation angle."""
    if not (0.0 <= min_elevation_rad < 0.5 * math.pi):
        raise DomainError(f"elevation must lie in [0, pi/2), got {min_elevation_rad}")
    ratio = geometry.earth_radius_km * math.cos(min_elevation_rad) / geometry.shell_radius_km
    return 2.0 * (math.acos(ratio) - min_elevation_rad)


def elevation_from_max_dome_angle(geometry: GeometryConfig, max_dome_angle_rad: float) -> float:
    """Inverse of :func:`max_dome_angle_from_elevation`."""
    half = 0.5 * max_dome_angle_rad
    rs, re = geometry.shell_radius_km, geometry.earth_radius_km
    elevation = math.atan2(rs * math.cos(half) - re, rs * math.sin(half))
    if elevation < 0.0:
        raise DomainError(f"cap with max dome angle {max_dome_angle_rad} extends below the horizon")
    return elevation
