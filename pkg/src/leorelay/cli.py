"""Command-line front end.

Subcommands: ``cdf``, ``outage``, ``multihop``, ``simulate``, ``compare``
and ``area``. Humans speak degrees and kilometres; everything is converted
to radians at this boundary.

Settings resolve as flags > environment (``LEORELAY_<NAME>``) > config
file (``--config``, flat ``key = value`` lines) > built-in defaults.

Exit codes: 0 success, 2 user or configuration error, 3 internal
invariant failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from leorelay import __version__
from leorelay.distribution import (
    CdfCurve,
    Convention,
    analytic_cdf_curve,
    conditional_contact_cdf,
    contact_angle_domain,
)
from leorelay.errors import CurveInvariantError, LeoRelayError
from leorelay.geometry import (
    EARTH_RADIUS_KM,
    GeometryConfig,
    RelayScenario,
    cap_slice_area,
    max_dome_angle_from_elevation,
)
from leorelay.montecarlo import (
    McConfig,
    empirical_cdf_from_samples,
    ks_statistic,
    slice_area_estimate,
    trial_contact_angles,
)
from leorelay.outage import DEFAULT_MAX_HOPS, min_hops_for_outage_target, multi_relay_outage, single_relay_outage

ENV_PREFIX = "LEORELAY_"
EXIT_USAGE = 2
EXIT_INVARIANT = 3


class UsageError(LeoRelayError, ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


@dataclass(frozen=True)
class Option:
    name: str
    default: Any
    parse: Callable[[str], Any]
    help: str
    many: bool = False
    choices: tuple[str, ...] | None = None


OPTIONS: dict[str, Option] = {
    o.name: o
    for o in [
        Option("altitude_km", [550.0], _floats, "shell altitude(s) above the Earth surface", many=True),
        Option("shell_radius_km", None, float, "shell radius; alternative to --altitude-km"),
        Option("earth_radius_km", EARTH_RADIUS_KM, float, "Earth radius"),
        Option("theta_m1_deg", [45.0], _floats, "transmitter cap max dome angle(s), degrees", many=True),
        Option("theta_m2_deg", 45.0, float, "receiver cap max dome angle, degrees"),
        Option("min_elevation_deg", None, float, "derive both max dome angles from this elevation mask"),
        Option("distance_km", [3000.0], _floats, "ground chord distance(s)", many=True),
        Option("n_sat", [3000], _ints, "satellite count(s)", many=True),
        Option("grid_size", 201, int, "points on the contact angle grid"),
        Option("solver", "closed_form", str, "lens split solver", choices=("closed_form", "root_solve")),
        Option("convention", "defective", str, "CDF convention", choices=("defective", "normalized")),
        Option("format", "csv", str, "output format", choices=("csv", "json")),
        Option("trials", 200_000, int, "Monte-Carlo trials"),
        Option("seed", 42, int, "Monte-Carlo master seed"),
        Option("chunk_size", 10_000, int, "trials per deterministic chunk"),
        Option("workers", 1, int, "worker threads (results do not depend on this)"),
        Option("gap_threshold", 0.03, float, "sup-gap threshold flagged by compare"),
        Option("d_min_km", 250.0, float, "distance sweep start"),
        Option("d_max_km", 6000.0, float, "distance sweep end"),
        Option("d_step_km", 250.0, float, "distance sweep step"),
        Option("n_hops", [1, 2, 3, 4, 5, 6, 7, 8], _ints, "hop counts", many=True),
        Option("epsilon", None, float, "target route outage for the hop search"),
        Option("max_hops", DEFAULT_MAX_HOPS, int, "largest hop count searched"),
        Option("theta_d_deg", 45.0, float, "cap max dome angle for area, degrees"),
        Option("theta_o_deg", 22.5, float, "slice dome angle for area, degrees"),
        Option("radius_km", None, float, "sphere radius for area (default: shell radius)"),
        Option("cut", "slab", str, "slice region used by the area estimate", choices=("slab", "radial")),
    ]
}

SCENARIO_OPTS = (
    "altitude_km",
    "shell_radius_km",
    "earth_radius_km",
    "theta_m1_deg",
    "theta_m2_deg",
    "min_elevation_deg",
    "distance_km",
    "n_sat",
    "solver",
)
OUTPUT_OPTS = ("format",)
MC_OPTS = ("trials", "seed", "chunk_size", "workers")

COMMANDS: dict[str, tuple[str, tuple[str, ...]]] = {
    "cdf": ("analytic conditional contact angle CDF", SCENARIO_OPTS + ("grid_size", "convention") + OUTPUT_OPTS),
    "outage": (
        "single-relay outage against ground distance",
        tuple(o for o in SCENARIO_OPTS if o != "distance_km") + ("distance_km", "d_min_km", "d_max_km", "d_step_km")
        + OUTPUT_OPTS,
    ),
    "multihop": ("route outage against hop count", SCENARIO_OPTS + ("n_hops", "epsilon", "max_hops") + OUTPUT_OPTS),
    "simulate": ("Monte-Carlo empirical CDF", SCENARIO_OPTS + ("grid_size", "convention") + MC_OPTS + OUTPUT_OPTS),
    "compare": (
        "analytic vs Monte-Carlo CDF",
        SCENARIO_OPTS + ("grid_size", "convention", "gap_threshold") + MC_OPTS + OUTPUT_OPTS,
    ),
    "area": (
        "projected slice area, optionally against a hit-count estimate",
        ("altitude_km", "shell_radius_km", "earth_radius_km", "theta_d_deg", "theta_o_deg", "radius_km", "cut")
        + MC_OPTS + OUTPUT_OPTS,
    ),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leorelay", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"leorelay {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, help="flat key = value settings file")
        p.add_argument("--output", "-o", type=Path, help="write data here (metadata goes to <output>.meta.json)")
        if name == "area":
            p.add_argument("--mc", action="store_true", help="also run the hit-count estimate")
        for key in dict.fromkeys(opts):
            opt = OPTIONS[key]
            flag = "--" + key.replace("_", "-")
            kwargs: dict[str, Any] = {"dest": key, "default": None, "help": opt.help}
            if opt.many:
                kwargs["nargs"] = "+"
                kwargs["type"] = _scalar_parser(opt)
            else:
                kwargs["type"] = opt.parse
            if opt.choices:
                kwargs["choices"] = opt.choices
            p.add_argument(flag, **kwargs)
    return parser


def _scalar_parser(opt: Option) -> Callable[[str], Any]:
    return int if opt.parse is _ints else float


def read_config_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.lower().replace("-", "_")] = value
    return values


def resolve_settings(args: argparse.Namespace, opts: Iterable[str], environ: dict[str, str]) -> dict[str, Any]:
    opts = list(dict.fromkeys(opts))
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_values) - set(OPTIONS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    settings: dict[str, Any] = {}
    for key in opts:
        opt = OPTIONS[key]
        value = opt.default
        env_key = ENV_PREFIX + key.upper()
        for raw in (file_values.get(key), environ.get(env_key)):
            if raw is None:
                continue
            try:
                value = opt.parse(raw)
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {raw!r}") from exc
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            value = flag_value
        if opt.choices and value is not None and value not in opt.choices:
            raise UsageError(f"{key} must be one of {opt.choices}, got {value!r}")
        settings[key] = value
    return settings


# -- scenario construction ---------------------------------------------------


def _geometries(s: dict[str, Any]) -> list[GeometryConfig]:
    earth = s["earth_radius_km"]
    if s.get("shell_radius_km") is not None:
        return [GeometryConfig(shell_radius_km=s["shell_radius_km"], earth_radius_km=earth)]
    return [GeometryConfig.from_altitude(h, earth) for h in s["altitude_km"]]


def _check_exclusive(args: argparse.Namespace) -> None:
    if getattr(args, "altitude_km", None) is not None and getattr(args, "shell_radius_km", None) is not None:
        raise UsageError("give either --altitude-km or --shell-radius-km, not both")


def _scenarios(s: dict[str, Any], distances: Sequence[float]) -> list[tuple[dict[str, Any], RelayScenario]]:
    out = []
    for geom, n_sat, tm1_deg, d in itertools.product(_geometries(s), s["n_sat"], s["theta_m1_deg"], distances):
        if s.get("min_elevation_deg") is not None:
            tm = max_dome_angle_from_elevation(geom, math.radians(s["min_elevation_deg"]))
            tm1, tm2 = tm, tm
        else:
            tm1, tm2 = math.radians(tm1_deg), math.radians(s["theta_m2_deg"])
        key = {
            "altitude_km": geom.altitude_km,
            "n_sat": int(n_sat),
            "theta_m1_deg": math.degrees(tm1),
            "theta_m2_deg": math.degrees(tm2),
            "distance_km": d,
        }
        out.append((key, RelayScenario(geom, tm1, tm2, d, int(n_sat))))
    return out


def _swept(s: dict[str, Any], distances: Sequence[float], with_distance: bool = True) -> list[str]:
    cols = []
    if s.get("shell_radius_km") is None and len(s["altitude_km"]) > 1:
        cols.append("altitude_km")
    if len(s["n_sat"]) > 1:
        cols.append("n_sat")
    if len(s["theta_m1_deg"]) > 1 and s.get("min_elevation_deg") is None:
        cols.append("theta_m1_deg")
    if with_distance and len(distances) > 1:
        cols.append("distance_km")
    return cols


# -- output ------------------------------------------------------------------


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def render_csv(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def emit(
    columns: Sequence[str],
    rows: list[Sequence[Any]],
    meta: dict[str, Any],
    settings: dict[str, Any],
    output: Path | None,
    stdout,
    stderr,
) -> None:
    meta = _jsonable(meta)
    if settings.get("format") == "json":
        payload = {"meta": meta, "data": [dict(zip(columns, _jsonable(list(r)))) for r in rows]}
        text = json.dumps(payload, indent=2) + "\n"
        meta_text = None
    else:
        text = render_csv(columns, rows)
        meta_text = json.dumps(meta, indent=2) + "\n"
    if output is None:
        stdout.write(text)
        if meta_text is not None:
            stderr.write(meta_text)
    else:
        output.write_text(text, newline="\n")
        if meta_text is not None:
            output.with_name(output.name + ".meta.json").write_text(meta_text)


def _base_meta(command: str, settings: dict[str, Any]) -> dict[str, Any]:
    return {"tool": "leorelay", "version": __version__, "command": command, "config": dict(settings)}


# -- commands ------------------------------------------------------------------


def _checked(curve: CdfCurve) -> CdfCurve:
    curve.validate()
    return curve


def cmd_cdf(s: dict[str, Any]) -> tuple[list[str], list[list[Any]], dict[str, Any]]:
    distances = s["distance_km"]
    swept = _swept(s, distances)
    rows: list[list[Any]] = []
    curves_meta = []
    for key, sc in _scenarios(s, distances):
        curve = _checked(analytic_cdf_curve(sc, grid_size=s["grid_size"], convention=s["convention"], solver=s["solver"]))
        dom = contact_angle_domain(sc)
        relay_p = conditional_contact_cdf(sc, dom.upper_rad, solver=s["solver"])
        curves_meta.append({**key, "domain_rad": [dom.lower_rad, dom.upper_rad], "relay_probability": relay_p})
        for th, p in zip(curve.abscissa, curve.probability):
            rows.append([key[c] for c in swept] + [th, math.degrees(th), p])
    meta = _base_meta("cdf", s)
    meta["curves"] = curves_meta
    return swept + ["theta_rad", "theta_deg", "cdf"], rows, meta


def _distance_sweep(s: dict[str, Any], explicit: list[float] | None) -> list[float]:
    if explicit is not None:
        return list(explicit)
    lo, hi, step = s["d_min_km"], s["d_max_km"], s["d_step_km"]
    if step <= 0 or hi < lo:
        raise UsageError("distance sweep needs d_step_km > 0 and d_max_km >= d_min_km")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(n)]


def cmd_outage(s: dict[str, Any], explicit_distances: list[float] | None) -> tuple[list[str], list[list[Any]], dict[str, Any]]:
    distances = _distance_sweep(s, explicit_distances)
    swept = _swept(s, distances, with_distance=False)
    rows: list[list[Any]] = []
    groups: dict[tuple, list[tuple[float, float, bool]]] = {}
    for key, sc in _scenarios(s, distances):
        res = single_relay_outage(sc, solver=s["solver"])
        group = tuple(key[c] for c in swept)
        groups.setdefault(group, []).append((key["distance_km"], res.probability, res.feasible))
        rows.append(list(group) + [key["distance_km"], res.probability])
    flags = []
    for group, pts in groups.items():
        probs = [p for _, p, _ in pts]
        flags.append(
            {
                **dict(zip(swept, group)),
                "nondecreasing_in_d": bool(all(b >= a for a, b in zip(probs, probs[1:]))),
                "infeasible_distances_km": [d for d, _, ok in pts if not ok],
            }
        )
    meta = _base_meta("outage", s)
    meta["distances_km"] = distances
    meta["sanity"] = flags
    return swept + ["d_km", "p_outage"], rows, meta


def cmd_multihop(s: dict[str, Any]) -> tuple[list[str], list[list[Any]], dict[str, Any]]:
    scenarios = _scenarios(s, s["distance_km"])
    if len(scenarios) != 1:
        raise UsageError("multihop takes a single scenario (one value per scenario option)")
    key, sc = scenarios[0]
    meta = _base_meta("multihop", s)
    if s.get("epsilon") is not None:
        hops = list(range(1, s["max_hops"] + 1))
        meta["min_hops"] = min_hops_for_outage_target(sc, s["epsilon"], max_hops=s["max_hops"], solver=s["solver"])
    else:
        hops = s["n_hops"]
    rows = []
    for n in hops:
        res = multi_relay_outage(sc, n, solver=s["solver"])
        rows.append([n, res.probability])
    meta["hop_distances_km"] = {
        str(n): multi_relay_outage(sc, n, solver=s["solver"]).hop_distance_km for n in hops
    }
    return ["n_hops", "p_outage"], rows, meta


def _mc_config(s: dict[str, Any]) -> McConfig:
    return McConfig(trials=s["trials"], seed=s["seed"], chunk_size=s["chunk_size"])


def _single_scenario(s: dict[str, Any]) -> tuple[dict[str, Any], RelayScenario]:
    scenarios = _scenarios(s, s["distance_km"])
    if len(scenarios) != 1:
        raise UsageError("this command takes a single scenario (one value per scenario option)")
    return scenarios[0]


def cmd_simulate(s: dict[str, Any]) -> tuple[list[str], list[list[Any]], dict[str, Any]]:
    key, sc = _single_scenario(s)
    mc = _mc_config(s)
    grid = contact_angle_domain(sc).grid(s["grid_size"])
    samples = trial_contact_angles(sc, mc, workers=s["workers"])
    curve = _checked(
        empirical_cdf_from_samples(samples, grid, convention=s["convention"], fingerprint=sc.fingerprint())
    )
    rows = [[t, math.degrees(t), p, e] for t, p, e in zip(grid, curve.probability, curve.std_error)]
    meta = _base_meta("simulate", s)
    meta["scenario"] = key
    meta["outage_fraction"] = float(np.mean(np.isinf(samples)))
    return ["theta_rad", "theta_deg", "cdf_mc", "std_error"], rows, meta


def cmd_compare(s: dict[str, Any]) -> tuple[list[str], list[list[Any]], dict[str, Any]]:
    key, sc = _single_scenario(s)
    mc = _mc_config(s)
    convention = Convention(s["convention"])
    analytic = _checked(analytic_cdf_curve(sc, grid_size=s["grid_size"], convention=convention, solver=s["solver"]))
    grid = analytic.abscissa
    samples = trial_contact_angles(sc, mc, workers=s["workers"])
    empirical = _checked(
        empirical_cdf_from_samples(samples, grid, convention=convention, fingerprint=sc.fingerprint())
    )
    gap = np.abs(analytic.probability - empirical.probability)
    relay_p = conditional_contact_cdf(sc, grid[-1], solver=s["solver"])
    normalized = convention is Convention.NORMALIZED

    def model(x: np.ndarray) -> np.ndarray:
        f = np.asarray(conditional_contact_cdf(sc, x, solver=s["solver"]))
        return f / relay_p if normalized else f

    ks = ks_statistic(samples, model, normalized=normalized, cdf_sup=None if normalized else relay_p)
    sup_gap = float(gap.max())
    se_scale = float(np.max(empirical.std_error))
    threshold = s["gap_threshold"]
    if 3.0 * se_scale >= threshold:
        status = "inconclusive"
    else:
        status = "breach" if sup_gap > threshold else "pass"
    rows = [
        [t, math.degrees(t), a, e, g]
        for t, a, e, g in zip(grid, analytic.probability, empirical.probability, gap)
    ]
    meta = _base_meta("compare", s)
    meta["scenario"] = key
    meta["summary"] = {
        "sup_gap": sup_gap,
        "ks_statistic": ks,
        "mc_std_error_max": se_scale,
        "gap_threshold": threshold,
        "threshold_status": status,
        "convention": convention.value,
        "analytic_relay_probability": relay_p,
        "mc_outage_fraction": float(np.mean(np.isinf(samples))),
    }
    return ["theta_rad", "theta_deg", "cdf_analytic", "cdf_mc", "abs_gap"], rows, meta


def cmd_area(s: dict[str, Any], run_mc: bool) -> tuple[list[str], list[list[Any]], dict[str, Any]]:
    radius = s["radius_km"]
    if radius is None:
        radius = _geometries(s)[0].shell_radius_km
    td, to = math.radians(s["theta_d_deg"]), math.radians(s["theta_o_deg"])
    area = cap_slice_area(td, to, radius)
    columns = ["theta_d_rad", "theta_o_rad", "radius_km", "area_analytic_km2"]
    row: list[Any] = [td, to, radius, area]
    meta = _base_meta("area", s)
    if run_mc:
        est = slice_area_estimate(td, to, radius, _mc_config(s), cut=s["cut"], workers=s["workers"])
        rel = (area - est.estimate) / est.estimate if est.estimate else (0.0 if area == 0 else math.inf)
        columns += ["area_mc_km2", "mc_std_error_km2", "rel_gap"]
        row += [est.estimate, est.std_error, rel]
    return columns, [row], meta


def main(argv: Sequence[str] | None = None, *, stdout=None, stderr=None, environ=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    environ = os.environ if environ is None else environ
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    try:
        _check_exclusive(args)
        settings = resolve_settings(args, COMMANDS[command][1], environ)
        if command == "cdf":
            result = cmd_cdf(settings)
        elif command == "outage":
            result = cmd_outage(settings, args.distance_km)
        elif command == "multihop":
            result = cmd_multihop(settings)
        elif command == "simulate":
            result = cmd_simulate(settings)
        elif command == "compare":
            result = cmd_compare(settings)
        else:
            result = cmd_area(settings, args.mc)
        emit(*result, settings, args.output, stdout, stderr)
    except CurveInvariantError as exc:
        stderr.write(f"leorelay: internal invariant failure: {exc}\n")
        return EXIT_INVARIANT
    except (LeoRelayError, ValueError, OSError) as exc:
        stderr.write(f"leorelay: error: {exc}\n")
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
