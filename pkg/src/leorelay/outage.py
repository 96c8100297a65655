"""Relay outage: no satellite inside the lens shared by both ground nodes.

Single-relay outage is the survival function of the conditional contact
angle at the top of its domain. A bent-pipe route with ``n_hops``
satellite hops divides the ground arc into equal sub-arcs; hops are
treated as independent, so the route survives only if every hop does.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from leorelay.distribution import Solver, contact_angle_domain, log_relay_survival
from leorelay.errors import DomainError
from leorelay.geometry import RelayScenario, feasibility_check

DEFAULT_MAX_HOPS = 64


@dataclass(frozen=True)
class OutageQuery:
    scenario: RelayScenario
    n_hops: int = 1
    target_outage: float | None = None

    def __post_init__(self) -> None:
        if int(self.n_hops) != self.n_hops or self.n_hops < 1:
            raise DomainError(f"n_hops must be a positive integer, got {self.n_hops}")
        if self.target_outage is not None and not (0.0 < self.target_outage < 1.0):
            raise DomainError(f"target outage must lie in (0, 1), got {self.target_outage}")


@dataclass(frozen=True)
class OutageResult:
    """Outage probability plus the bookkeeping needed to audit it.

    ``log_probability`` and ``log_success`` are ``log(probability)`` and
    ``log(1 - probability)`` evaluated directly, so both tails stay
    resolvable after ``probability`` rounds to 0 or 1. ``feasible`` is
    False when the per-hop caps cannot intersect; the probability is then 1.
    """

    probability: float
    log_probability: float
    log_success: float
    feasible: bool
    n_hops: int
    hop_distance_km: float

    def __float__(self) -> float:
        return self.probability


def single_relay_outage(scenario: RelayScenario, *, solver: Solver = "closed_form") -> OutageResult:
    """Probability that no satellite is visible to both ground nodes."""
    if not feasibility_check(scenario).intersects:
        return OutageResult(1.0, 0.0, -math.inf, False, 1, scenario.distance_km)
    upper = contact_angle_domain(scenario).upper_rad
    log_p = float(log_relay_survival(scenario, upper, solver))
    success = -math.expm1(log_p)
    log_ok = math.log(success) if success > 0.0 else -math.inf
    return OutageResult(math.exp(log_p), log_p, log_ok, True, 1, scenario.distance_km)


def hop_chord_distance(d: float, n_hops: int, earth_radius: float) -> float:
    """Chord of one hop when the ground arc is cut into ``n_hops`` equal pieces."""
    if int(n_hops) != n_hops or n_hops < 1:
        raise DomainError(f"n_hops must be a positive integer, got {n_hops}")
    if not (0.0 <= d <= 2.0 * earth_radius):
        raise DomainError(f"distance {d} km outside [0, {2.0 * earth_radius}]")
    if n_hops == 1:
        return d
    return 2.0 * earth_radius * math.sin(math.asin(d / (2.0 * earth_radius)) / n_hops)


def multi_relay_outage(
    scenario: RelayScenario, n_hops: int, *, solver: Solver = "closed_form"
) -> OutageResult:
    """Outage of a route with ``n_hops`` satellite relays.

    ``1 - (1 - P_hop)**n_hops`` with ``P_hop`` the single-relay outage at
    the per-hop chord. One hop reduces to :func:`single_relay_outage`.
    """
    hop_d = hop_chord_distance(scenario.distance_km, n_hops, scenario.geometry.earth_radius_km)
    if n_hops == 1:
        return single_relay_outage(scenario, solver=solver)
    hop = single_relay_outage(scenario.replace(distance_km=hop_d), solver=solver)
    if not hop.feasible:
        return OutageResult(1.0, 0.0, -math.inf, False, n_hops, hop_d)
    log_ok = n_hops * hop.log_success
    p = -math.expm1(log_ok)
    # for tiny per-hop outage the route outage is n_hops times it to first order
    log_p = math.log(p) if p > 0.0 else math.log(n_hops) + hop.log_probability
    return OutageResult(p, log_p, log_ok, True, n_hops, hop_d)


def outage_hop_sweep(
    scenario: RelayScenario, max_hops: int = DEFAULT_MAX_HOPS, *, solver: Solver = "closed_form"
) -> list[OutageResult]:
    return [multi_relay_outage(scenario, n, solver=solver) for n in range(1, max_hops + 1)]


def min_hops_for_outage_target(
    scenario: RelayScenario,
    epsilon: float,
    *,
    max_hops: int = DEFAULT_MAX_HOPS,
    solver: Solver = "closed_form",
) -> int | None:
    """Smallest hop count whose route outage is at most ``epsilon``.

    Returns None when no count up to ``max_hops`` meets the target.
    """
    if not (0.0 < epsilon < 1.0):
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
    if max_hops < 1:
        raise DomainError(f"max_hops must be positive, got {max_hops}")
    for n in range(1, max_hops + 1):
        if multi_relay_outage(scenario, n, solver=solver).probability <= epsilon:
            return n
    return None
