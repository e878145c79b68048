"""Command-line front end.

Exit codes: 0 success, 1 scientific failure (a bound, certificate or
refinement failed), 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, serialize
from .checks import verify_scenario
from .errors import ShilnikovError, UsageError
from .fields import FieldSpec, check_hypotheses
from .flow import EventSpec, integrate
from .maps import ALPHA_CAP, OuterBackend, ScenarioConfig, calibrate, inner_map, return_data
from .symbolic import (
    CurveSegment,
    ItineraryBuilder,
    SymbolSequence,
    build_forward_itinerary,
    build_window_trajectory,
    classify_angle,
    find_crossings,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
PLOT_KINDS = ("inner-spiral", "return-curve", "phase-portrait")
SPIRAL_ROWS = 512
CURVE_ROWS = 1024


@dataclass(frozen=True)
class RunConfig:
    """Inputs of a run, read from the JSON config file."""

    field: FieldSpec
    epsilon: float
    eta: float
    beta: float
    delta2_hint: Optional[float] = None
    omega_eps: float = 0.0
    kappa: tuple = ((1.0, 0.0), (0.0, 1.0))
    alpha_cap: float = ALPHA_CAP
    outer: OuterBackend = OuterBackend()
    grid_count: int = 4096
    seed: int = 0

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise UsageError("config must be a JSON object")
        try:
            hint = obj.get("delta2_hint")
            return cls(
                field=FieldSpec.from_json(obj["field"]),
                epsilon=float(obj["epsilon"]),
                eta=float(obj["eta"]),
                beta=float(obj["beta"]),
                delta2_hint=None if hint is None else float(hint),
                omega_eps=float(obj.get("omega_eps", 0.0)),
                kappa=tuple(tuple(float(v) for v in row) for row in obj.get("kappa", [[1, 0], [0, 1]])),
                alpha_cap=float(obj.get("alpha_cap", ALPHA_CAP)),
                outer=OuterBackend.from_json(obj.get("outer", {})),
                grid_count=int(obj.get("grid_count", 4096)),
                seed=int(obj.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, UsageError):
                raise
            raise UsageError(f"malformed config: {exc!r}") from exc


@dataclass
class RunManifest:
    command: str
    config_path: str
    outputs: list
    wall_time_s: float
    tool_version: str
    config_hash: str

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "config_path": self.config_path,
            "outputs": list(self.outputs),
            "wall_time_s": self.wall_time_s,
            "tool_version": self.tool_version,
            "config_hash": self.config_hash,
        }


def _read_json(path: str) -> tuple[dict, str]:
    """Parsed file and the sha256 of its canonical form (sorted keys, no whitespace)."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
        obj = json.loads(raw)
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc
    canon = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return obj, hashlib.sha256(canon).hexdigest()


class _Run:
    def __init__(self, args, source: str):
        self.args = args
        self.source = source
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.start = time.perf_counter()
        self.obj, self.hash = _read_json(source)

    def write_json(self, name: str, obj) -> Path:
        p = self.out / name
        serialize.dump(obj, p)
        self.outputs.append(str(p))
        return p

    def write_csv(self, name: str, header: list, rows) -> Path:
        p = self.out / name
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
        self.outputs.append(str(p))
        return p

    def add_output(self, p: Path) -> None:
        self.outputs.append(str(p))

    def finish(self) -> None:
        man = RunManifest(
            self.args.command,
            self.source,
            self.outputs,
            time.perf_counter() - self.start,
            __version__,
            self.hash,
        )
        serialize.dump(man.to_json(), self.out / "manifest.json")


def _scenario(run: _Run, tol_scale: float = 1.0) -> ScenarioConfig:
    cfg = ScenarioConfig.from_json(run.obj)
    if tol_scale != 1.0:
        cfg = cfg.with_(kernel_rtol=cfg.kernel_rtol * tol_scale)
    return cfg


def cmd_certify(args) -> int:
    run = _Run(args, args.config)
    rc = RunConfig.from_json(run.obj)
    seed = rc.seed if args.seed is None else args.seed
    cert = check_hypotheses(rc.field, rc.epsilon, rc.eta, grid_count=rc.grid_count, seed=seed)
    run.write_json("certificate.json", cert.to_json())
    run.finish()
    if not cert.passed:
        print(f"certificate failed: {', '.join(cert.failed_conditions())}", file=sys.stderr)
        return EXIT_FAIL
    print(f"certificate passed: eta_measured={cert.eta_measured:.6g} <= eta={rc.eta:.6g}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    run = _Run(args, args.config)
    rc = RunConfig.from_json(run.obj)
    cfg = calibrate(
        rc.field,
        rc.epsilon,
        rc.eta,
        rc.beta,
        rc.delta2_hint,
        omega_eps=rc.omega_eps,
        kappa=rc.kappa,
        alpha_cap=rc.alpha_cap,
        outer=rc.outer,
        grid_count=rc.grid_count,
        seed=rc.seed if args.seed is None else args.seed,
        tol_scale=args.tol_scale,
    )
    run.write_json("scenario.json", cfg.to_json())
    run.finish()
    print(f"alpha={cfg.alpha:.6g} delta2={cfg.delta2:.6g} delta1={cfg.delta1:.6g} psi_eps={cfg.psi_eps:.6g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    run = _Run(args, args.scenario)
    cfg = _scenario(run, args.tol_scale)
    rows = verify_scenario(cfg, seed=0 if args.seed is None else args.seed)
    ok = all(r.passed for r in rows)
    run.write_json("report.json", {"passed": ok, "rows": [r.to_json() for r in rows]})
    run.finish()
    for r in rows:
        slack = "" if r.worst_slack is None else f"  slack={r.worst_slack:.3g}"
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}{slack}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_itinerary(args) -> int:
    if args.symbols is None:
        raise UsageError("--symbols is required")
    J = args.window
    seq = SymbolSequence.from_string(args.symbols, offset=-J)
    if J < 0 or J >= len(seq):
        raise UsageError(f"window {J} must lie in [0, len(symbols) - 1]")
    run = _Run(args, args.scenario)
    cfg = _scenario(run, args.tol_scale)
    builder = ItineraryBuilder(cfg)
    if J == 0:
        res = build_forward_itinerary(cfg, None, seq, builder=builder)
    else:
        res = build_window_trajectory(cfg, None, seq, J, len(seq) - J, builder=builder, compare=True)
    run.write_json("itinerary.json", res.to_json())
    rows = [
        (j - J, p.psi, p.delta, phi, m.value, lev)
        for j, (p, phi, m, lev) in enumerate(zip(res.orbit, res.angles, res.memberships, res.levels))
    ]
    run.write_csv("orbit.csv", ["j", "psi", "delta", "phi", "membership", "level"], rows)
    run.finish()
    print(f"realized {seq} with {len(res.orbit)} orbit points")
    return EXIT_OK


def _plot_spiral(run: _Run, cfg: ScenarioConfig) -> None:
    rows = []
    for d in np.geomspace(1e-6, 0.9, SPIRAL_ROWS):
        res = inner_map(cfg, (0.0, float(d)))
        rows.append((float(d), float(res.exit_point[0]), float(res.exit_point[1]), res.exit_radius, res.exit_angle))
    run.write_csv("inner_spiral.csv", ["delta", "e1", "e2", "radius", "phi"], rows)


def _plot_return_curve(run: _Run, cfg: ScenarioConfig) -> None:
    c = find_crossings(cfg, None, CurveSegment(cfg.delta1, cfg.delta2))
    marks = {c.a0: "a0", c.b0: "b0", c.a1: "a1", c.b1: "b1"}
    ts = sorted(set(np.geomspace(cfg.delta1, cfg.delta2, CURVE_ROWS).tolist()) | set(marks))
    rows = []
    for t in ts:
        rd = return_data(cfg, 0.0, t)
        rows.append((t, float(rd.z[0]), float(rd.z[1]), rd.phi, classify_angle(cfg, rd.phi).value, marks.get(t, "")))
    run.write_csv("return_curve.csv", ["t", "psi", "delta", "phi", "membership", "marker"], rows)
    run.write_json("crossings.json", {"a0": c.a0, "b0": c.b0, "a1": c.a1, "b1": c.b1})


def _plot_phase(run: _Run, cfg: ScenarioConfig, x0) -> None:
    x = np.array(x0, dtype=float)
    t_max = 10.0 * (-math.log(max(abs(x[2]), 1e-300))) / max(cfg.eigen.u - cfg.eta, 0.5 * cfg.eigen.u) + 1.0
    traj, _ = integrate(cfg.field, cfg.epsilon, x, t_max, [EventSpec.exit_b1()])
    p = run.out / "phase_portrait.csv"
    traj.to_csv(p)
    run.add_output(p)


def _parse_point(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--x0 must be three comma-separated numbers, got {text!r}") from exc
    if len(vals) != 3:
        raise UsageError(f"--x0 must have three components, got {text!r}")
    return vals


def cmd_plotdata(args) -> int:
    if args.what not in PLOT_KINDS:
        raise UsageError(f"--what must be one of {', '.join(PLOT_KINDS)}")
    x0 = _parse_point(args.x0)
    run = _Run(args, args.scenario)
    cfg = _scenario(run, args.tol_scale)
    if args.what == "inner-spiral":
        _plot_spiral(run, cfg)
    elif args.what == "return-curve":
        _plot_return_curve(run, cfg)
    else:
        _plot_phase(run, cfg, x0)
    run.finish()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shilnikov-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, source: str):
        p.add_argument(f"--{source}", required=True, help=f"{source} JSON file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="sampling seed")
        p.add_argument("--tol-scale", type=float, default=1.0, help="scale factor for integrator tolerances")

    p = sub.add_parser("certify", help="measure eta on B1 and check the standing hypotheses")
    common(p, "config")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("calibrate", help="compute all constants of a scenario")
    common(p, "config")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("verify", help="sampled pass/fail table for a calibrated scenario")
    common(p, "scenario")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("itinerary", help="realize a symbol sequence by an orbit of the return map")
    common(p, "scenario")
    p.add_argument("--symbols", required=True, help="word over 0/1")
    p.add_argument("--window", type=int, default=0, help="number of leading symbols with negative index")
    p.set_defaults(func=cmd_itinerary)

    p = sub.add_parser("plotdata", help="CSV point clouds for plotting")
    common(p, "scenario")
    p.add_argument("--what", required=True, help="|".join(PLOT_KINDS))
    p.add_argument("--x0", default="0,0,0.1", help="start point of the phase portrait")
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.tol_scale <= 0 or not math.isfinite(args.tol_scale):
        print("error: --tol-scale must be a positive number", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShilnikovError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
