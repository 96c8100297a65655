"""Seeded Monte-Carlo ground truth for the analytic formulas.

Trials are split into fixed-size chunks. Chunk ``k`` draws from its own
Philox stream keyed by ``(seed, k)``, so results depend only on
``(seed, trials, chunk_size)`` and never on how many workers run the
chunks or in which order they finish.

Ground nodes sit at canonical positions: the transmitter at the north
pole and the receiver rotated towards +x by the ground separation angle.
The model is rotationally symmetric, so nothing is lost.

Satellites only matter if they fall inside the lens shared by both
visibility caps. Instead of drawing all ``n_sat`` shell points per trial,
the samplers draw the number of satellites inside a cap that bounds the
lens from ``Binomial(n_sat, cap_fraction)`` and then place that many
points uniformly in the cap. For a binomial point process this has
exactly the same law as full-shell sampling; :func:`trial_contact_angle`
keeps the full-shell version for reference.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Literal, Sequence, TypeVar

import numpy as np
from numpy.typing import ArrayLike

from leorelay.distribution import CdfCurve, Convention, Source
from leorelay.errors import CertainOutageError, DomainError
from leorelay.geometry import RelayScenario, cap_full_area

T = TypeVar("T")


@dataclass(frozen=True)
class McConfig:
    trials: int
    seed: int = 0
    chunk_size: int = 10_000

    def __post_init__(self) -> None:
        if int(self.trials) != self.trials or self.trials < 1:
            raise DomainError(f"trials must be a positive integer, got {self.trials}")
        if int(self.chunk_size) != self.chunk_size or self.chunk_size < 1:
            raise DomainError(f"chunk_size must be a positive integer, got {self.chunk_size}")
        if not (0 <= self.seed < 2**64):
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def chunks(self) -> list[tuple[int, int]]:
        """``(chunk_index, trials_in_chunk)`` pairs covering all trials."""
        full, rest = divmod(self.trials, self.chunk_size)
        out = [(k, self.chunk_size) for k in range(full)]
        if rest:
            out.append((full, rest))
        return out


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    std_error: float
    trials: int
    seed: int


def chunk_rng(seed: int, chunk_index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one chunk; ``stream`` separates independent uses."""
    ss = np.random.SeedSequence(seed, spawn_key=(stream, chunk_index))
    return np.random.Generator(np.random.Philox(ss))


def _map_chunks(fn: Callable[[int, int], T], mc: McConfig, workers: int) -> list[T]:
    chunks = mc.chunks()
    if workers <= 1 or len(chunks) == 1:
        return [fn(k, n) for k, n in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda kn: fn(*kn), chunks))


def _bernoulli_estimate(hits: int, mc: McConfig) -> McEstimate:
    p = hits / mc.trials
    return McEstimate(p, math.sqrt(p * (1.0 - p) / mc.trials), mc.trials, mc.seed)


# -- sampling primitives ---------------------------------------------------


def sample_unit_sphere(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform points on the unit sphere: z uniform on [-1, 1], azimuth uniform."""
    z = rng.uniform(-1.0, 1.0, size)
    phi = rng.uniform(0.0, 2.0 * math.pi, size)
    s = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


def sample_cap(
    rng: np.random.Generator, size: int, half_angle: float, center_polar: float = 0.0
) -> np.ndarray:
    """Uniform points in a cap whose centre lies in the x-z plane.

    The centre is at polar angle ``center_polar`` from +z, tilted toward +x.
    Uses ``1 - z`` uniform on ``[0, 1 - cos(half_angle)]`` so points near
    the centre keep full precision.
    """
    half_angle = min(half_angle, math.pi)
    depth = 2.0 * math.sin(0.5 * half_angle) ** 2  # 1 - cos(half_angle)
    u = rng.uniform(0.0, depth, size)
    phi = rng.uniform(0.0, 2.0 * math.pi, size)
    z = 1.0 - u
    s = np.sqrt(np.maximum(u * (2.0 - u), 0.0))
    x = s * np.cos(phi)
    y = s * np.sin(phi)
    if center_polar == 0.0:
        return np.stack([x, y, z], axis=-1)
    cm, sm = math.cos(center_polar), math.sin(center_polar)
    return np.stack([x * cm + z * sm, y, -x * sm + z * cm], axis=-1)


def _angle_from_pole(points: np.ndarray) -> np.ndarray:
    return np.arctan2(np.hypot(points[..., 0], points[..., 1]), points[..., 2])


def place_ground_nodes(scenario: RelayScenario) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors of transmitter and receiver, separated by the ground dome angle."""
    c = scenario.separation_rad
    tx = np.array([0.0, 0.0, 1.0])
    rx = np.array([math.sin(c), 0.0, math.cos(c)])
    return tx, rx


def _lens_bounding_cap(r1: float, r2: float, c: float) -> tuple[float, float] | None:
    """Smallest convenient cap containing the intersection of two caps.

    Caps have half-angles ``r1`` (centred on the pole) and ``r2`` (centred
    at polar angle ``c``). Returns ``(center_polar, half_angle)`` or None
    if the intersection is empty.
    """
    r1, r2 = min(r1, math.pi), min(r2, math.pi)
    if c >= r1 + r2:
        return None
    candidates = [(0.0, r1), (c, r2)]
    if c > abs(r1 - r2) and r1 < 0.5 * math.pi and r2 < 0.5 * math.pi and c > 0.0:
        # centre halfway across the lens; farthest lens points are the two rim crossings
        m = 0.5 * (c - r2 + r1)
        cos_w = (math.cos(r2) - math.cos(r1) * math.cos(c)) / (math.sin(r1) * math.sin(c))
        cos_w = min(max(cos_w, -1.0), 1.0)
        cos_delta = math.cos(m) * math.cos(r1) + math.sin(m) * math.sin(r1) * cos_w
        delta = math.acos(min(max(cos_delta, -1.0), 1.0))
        half = max(delta, 0.5 * (r1 + r2 - c)) * (1.0 + 1e-9) + 1e-12
        candidates.append((m, half))
    return min(candidates, key=lambda mc: mc[1])


def _cap_fraction(half_angle: float) -> float:
    return math.sin(0.5 * min(half_angle, math.pi)) ** 2


def _contact_angles_chunk(
    rng: np.random.Generator, n_trials: int, n_sat: int, r1: float, r2: float, c: float
) -> np.ndarray:
    """Per-trial conditional contact angle, +inf on outage."""
    out = np.full(n_trials, np.inf)
    bound = _lens_bounding_cap(r1, r2, c)
    if bound is None:
        return out
    center, half = bound
    counts = rng.binomial(n_sat, _cap_fraction(half), n_trials)
    total = int(counts.sum())
    if total == 0:
        return out
    pts = sample_cap(rng, total, half, center)
    cos_tx = pts[:, 2]
    cos_rx = pts[:, 0] * math.sin(c) + pts[:, 2] * math.cos(c)
    eligible = (cos_tx >= math.cos(min(r1, math.pi))) & (cos_rx >= math.cos(min(r2, math.pi)))
    angle = np.where(eligible, _angle_from_pole(pts), np.inf)
    nonempty = counts > 0
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])[nonempty]
    out[nonempty] = np.minimum.reduceat(angle, starts)
    return out


def _scenario_radii(scenario: RelayScenario) -> tuple[float, float, float]:
    return 0.5 * scenario.theta_m1_rad, 0.5 * scenario.theta_m2_rad, scenario.separation_rad


def trial_contact_angle(scenario: RelayScenario, rng: np.random.Generator) -> float:
    """One trial by brute force: all ``n_sat`` satellites on the whole shell.

    Returns the smallest transmitter dome angle among satellites inside
    both caps, or ``inf`` if there is none (relay outage).
    """
    r1, r2, c = _scenario_radii(scenario)
    sats = sample_unit_sphere(rng, int(scenario.n_sat))
    tx, rx = place_ground_nodes(scenario)
    eligible = (sats @ tx >= math.cos(min(r1, math.pi))) & (sats @ rx >= math.cos(min(r2, math.pi)))
    if not np.any(eligible):
        return math.inf
    return float(np.min(_angle_from_pole(sats[eligible])))


def trial_contact_angles(scenario: RelayScenario, mc: McConfig, *, workers: int = 1) -> np.ndarray:
    """Contact angle of every trial in order; ``inf`` marks an outage."""
    r1, r2, c = _scenario_radii(scenario)
    n_sat = int(scenario.n_sat)

    def run(k: int, n: int) -> np.ndarray:
        return _contact_angles_chunk(chunk_rng(mc.seed, k), n, n_sat, r1, r2, c)

    return np.concatenate(_map_chunks(run, mc, workers))


def empirical_cdf_from_samples(
    samples: np.ndarray,
    grid: ArrayLike,
    *,
    convention: Convention | str = Convention.DEFECTIVE,
    fingerprint: str = "",
    meta: dict | None = None,
) -> CdfCurve:
    convention = Convention(convention)
    grid = np.asarray(grid, dtype=float)
    finite = np.sort(samples[np.isfinite(samples)])
    n = len(samples) if convention is Convention.DEFECTIVE else len(finite)
    if n == 0:
        raise CertainOutageError("no trial found a relay; normalized empirical CDF undefined")
    prob = np.searchsorted(finite, grid, side="right") / n
    return CdfCurve(
        abscissa=grid,
        probability=prob,
        convention=convention,
        source=Source.EMPIRICAL,
        fingerprint=fingerprint,
        std_error=np.sqrt(prob * (1.0 - prob) / n),
        meta=dict(meta or {}),
    )


def empirical_cdf(
    scenario: RelayScenario,
    mc: McConfig,
    grid: ArrayLike,
    *,
    convention: Convention | str = Convention.DEFECTIVE,
    workers: int = 1,
) -> CdfCurve:
    """Empirical CDF of the conditional contact angle.

    Defective convention: outage trials never count. Normalized: divided by
    the number of trials that found a relay.
    """
    samples = trial_contact_angles(scenario, mc, workers=workers)
    return empirical_cdf_from_samples(
        samples,
        grid,
        convention=convention,
        fingerprint=scenario.fingerprint(),
        meta={"trials": mc.trials, "seed": mc.seed, "chunk_size": mc.chunk_size},
    )


def outage_frequency(scenario: RelayScenario, mc: McConfig, *, workers: int = 1) -> McEstimate:
    """Fraction of trials with no satellite visible to both ground nodes."""
    angles = trial_contact_angles(scenario, mc, workers=workers)
    return _bernoulli_estimate(int(np.count_nonzero(np.isinf(angles))), mc)


def _hop_angles(total: float, n_hops: int) -> np.ndarray:
    return np.arange(n_hops + 1) * (total / n_hops)


def multi_hop_outage_frequency(
    scenario: RelayScenario,
    n_hops: int,
    mc: McConfig,
    *,
    shared_constellation: bool = False,
    workers: int = 1,
) -> McEstimate:
    """Fraction of trials in which at least one hop has no relay.

    Ground relays split the arc into ``n_hops`` equal pieces. By default
    every hop sees its own independent constellation, matching the
    product-form route outage. ``shared_constellation=True`` uses one
    full-shell constellation for all hops, which is physically closer but
    correlates neighbouring hops.
    """
    if int(n_hops) != n_hops or n_hops < 1:
        raise DomainError(f"n_hops must be a positive integer, got {n_hops}")
    r1, r2, c_total = _scenario_radii(scenario)
    n_sat = int(scenario.n_sat)
    c_hop = c_total / n_hops

    if not shared_constellation:

        def run(k: int, n: int) -> int:
            angles = _contact_angles_chunk(chunk_rng(mc.seed, k), n * n_hops, n_sat, r1, r2, c_hop)
            return int(np.count_nonzero(np.isinf(angles).reshape(n, n_hops).any(axis=1)))

    else:
        nodes = _hop_angles(c_total, n_hops)
        node_vecs = np.stack([np.sin(nodes), np.zeros_like(nodes), np.cos(nodes)], axis=-1)
        cos1, cos2 = math.cos(min(r1, math.pi)), math.cos(min(r2, math.pi))

        def run(k: int, n: int) -> int:
            sats = sample_unit_sphere(chunk_rng(mc.seed, k), (n, n_sat))
            dots = sats @ node_vecs.T  # (n, n_sat, n_hops + 1)
            ok = (dots[..., :-1] >= cos1) & (dots[..., 1:] >= cos2)
            return int(np.count_nonzero(~ok.any(axis=1).all(axis=1)))

    return _bernoulli_estimate(sum(_map_chunks(run, mc, workers)), mc)


def _hit_fraction(
    mc: McConfig,
    workers: int,
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    inside: Callable[[np.ndarray], np.ndarray],
) -> float:
    def run(k: int, n: int) -> int:
        return int(np.count_nonzero(inside(sampler(chunk_rng(mc.seed, k, stream=1), n))))

    return sum(_map_chunks(run, mc, workers)) / mc.trials


def _area_estimate(frac: float, bound_area: float, mc: McConfig) -> McEstimate:
    return McEstimate(
        bound_area * frac, bound_area * math.sqrt(frac * (1.0 - frac) / mc.trials), mc.trials, mc.seed
    )


def slice_area_estimate(
    theta_d: float,
    theta_o: float,
    radius: float,
    mc: McConfig,
    *,
    cut: Literal["slab", "radial"] = "slab",
    bounding: Literal["cap", "sphere"] = "cap",
    workers: int = 1,
) -> McEstimate:
    """Hit-count area of the slice of width ``theta_o`` cut from a cap.

    The cap of maximum dome angle ``theta_d`` is centred on +z and the
    slice lies toward +x. ``cut="slab"`` uses the plane parallel to the
    axis at ``x = cos(theta_d/2)*tan(theta_d/2 - theta_o)`` (the projected
    cut); ``cut="radial"`` uses the plane through the sphere centre at dome
    angle ``theta_d/2 - theta_o`` from the axis. Samples are drawn inside
    the cap (known exact area) or over the whole sphere.
    """
    if not (0.0 < theta_d < math.pi and 0.0 <= theta_o <= theta_d):
        raise DomainError(f"need 0 < theta_d < pi and 0 <= theta_o <= theta_d, got {theta_d}, {theta_o}")
    half = 0.5 * theta_d
    tilt = half - theta_o
    cos_half = math.cos(half)
    if cut == "slab":
        offset = cos_half * math.tan(tilt)

        def beyond(p: np.ndarray) -> np.ndarray:
            return p[:, 0] >= offset

    elif cut == "radial":
        ct, st = math.cos(tilt), math.sin(tilt)

        def beyond(p: np.ndarray) -> np.ndarray:
            return p[:, 0] * ct - p[:, 2] * st >= 0.0

    else:
        raise DomainError(f"unknown cut {cut!r}")

    if bounding == "cap":
        bound_area = cap_full_area(theta_d, radius)

        def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
            return sample_cap(rng, n, half)

        def inside(p: np.ndarray) -> np.ndarray:
            return beyond(p)

    elif bounding == "sphere":
        bound_area = 4.0 * math.pi * radius**2

        def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
            return sample_unit_sphere(rng, n)

        def inside(p: np.ndarray) -> np.ndarray:
            return (p[:, 2] >= cos_half) & beyond(p)

    else:
        raise DomainError(f"unknown bounding region {bounding!r}")

    if theta_o == 0.0:
        return McEstimate(0.0, 0.0, mc.trials, mc.seed)
    return _area_estimate(_hit_fraction(mc, workers, sampler, inside), bound_area, mc)


def overlap_area_estimate(
    scenario: RelayScenario, theta: float, mc: McConfig, *, workers: int = 1
) -> McEstimate:
    """Hit-count area (km^2 on the shell) of the exact eligibility lens at ``theta``.

    The lens is the radius-``theta`` cap around the transmitter intersected
    with the receiver cap. Samples are drawn uniformly inside the
    transmitter cap, whose area is known exactly.
    """
    if not (0.0 <= theta <= math.pi):
        raise DomainError(f"theta must lie in [0, pi], got {theta}")
    radius = scenario.geometry.shell_radius_km
    if theta == 0.0:
        return McEstimate(0.0, 0.0, mc.trials, mc.seed)
    _, r2, c = _scenario_radii(scenario)
    cos_r2 = math.cos(min(r2, math.pi))
    sc, cc = math.sin(c), math.cos(c)

    def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
        return sample_cap(rng, n, theta)

    def inside(p: np.ndarray) -> np.ndarray:
        return p[:, 0] * sc + p[:, 2] * cc >= cos_r2

    bound_area = cap_full_area(2.0 * theta, radius)
    return _area_estimate(_hit_fraction(mc, workers, sampler, inside), bound_area, mc)


def ks_statistic(
    samples: np.ndarray,
    cdf: Callable[[np.ndarray], ArrayLike],
    *,
    normalized: bool = False,
    cdf_sup: float | None = None,
) -> float:
    """Kolmogorov-Smirnov distance between trial samples and a model CDF.

    ``inf`` samples are outages. In the defective convention they stay in
    the denominator, and ``cdf_sup`` (the model's limiting value) extends
    the comparison past the largest finite sample.
    """
    finite = np.sort(samples[np.isfinite(samples)])
    n = len(finite) if normalized else len(samples)
    if len(finite) == 0:
        raise CertainOutageError("no relay found in any trial")
    f = np.asarray(cdf(finite), dtype=float)
    i = np.arange(1, len(finite) + 1)
    stat = max(float(np.max(i / n - f)), float(np.max(f - (i - 1) / n)))
    if cdf_sup is not None:
        stat = max(stat, abs(cdf_sup - len(finite) / n))
    return stat


def pooled_z_score(estimate: McEstimate, expected: float) -> float:
    """Standardised gap between an MC proportion and a model value.

    Uses the larger of the sample and model Bernoulli variances so that an
    estimate of exactly 0 or 1 does not produce a zero standard error.
    """
    var = max(estimate.estimate * (1.0 - estimate.estimate), expected * (1.0 - expected))
    se = math.sqrt(var / estimate.trials)
    gap = abs(estimate.estimate - expected)
    if se == 0.0:
        return 0.0 if gap == 0.0 else math.inf
    return gap / se


def joint_std_errors(a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    return np.sqrt(np.square(a) + np.square(b))
