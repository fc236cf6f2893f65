"""
Command-line front end.

    curvgap list
    curvgap frame --manifold s4 --point 1,1,1,1
    curvgap verify all --manifold s4 --alpha0 "8*sqrt(6)*pi" --format json

Exit codes: 0 when every verdict passed or was skipped, 1 when any failed
(a theorem inconsistency counts as a failure), 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .catalog import CATALOG, CatalogError, ManifestError, chart_variant, chart_variants, resolve
from .expr import ExprError, evaluate, parse, variables
from .geometry import CurvatureJets, GeometryError
from .quadrature import GridSpec, QuadratureError
from .verify import CHECK_IDS, QUANTITIES, TOL_INTEGRAL, TOL_POINTWISE, CheckOptions, VerifyError, run_checks

__all__ = ["RunConfig", "main", "cmd_list", "cmd_frame", "cmd_verify", "UsageError"]

MIN_JET_ORDER = 4
DEFAULT_THETAS = (-1.0, 1.0, 2.0)


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    manifold: str | None = None
    manifest: str | None = None
    grid: tuple[int, ...] | None = None
    jet_order: int = 4
    tol_integral: float = TOL_INTEGRAL
    tol_pointwise: float = TOL_POINTWISE
    thetas: tuple[float, ...] = DEFAULT_THETAS
    alpha0: float | None = None
    seed: int = 0
    format: str = "text"
    timing: bool = False
    workers: int = 1
    checks: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if (self.manifold is None) == (self.manifest is None):
            raise UsageError("give exactly one of --manifold or --manifest")
        if self.jet_order < MIN_JET_ORDER:
            raise UsageError(f"--jet-order must be >= {MIN_JET_ORDER}")
        if self.grid is not None and any(c < 4 for c in self.grid):
            raise UsageError("grid counts must be >= 4")
        if self.alpha0 is not None and not self.alpha0 > 0:
            raise UsageError("--alpha0 must be positive")
        if self.workers < 1:
            raise UsageError("--workers must be >= 1")
        if not (self.tol_integral > 0 and self.tol_pointwise > 0):
            raise UsageError("tolerances must be positive")
        bad = [c for c in self.checks if c not in CHECK_IDS + ("all",)]
        if bad:
            raise UsageError(f"unknown check id {bad[0]!r}; valid: {', '.join(CHECK_IDS + ('all',))}")

    def load(self):
        try:
            return resolve(self.manifold, self.manifest)
        except (CatalogError, ExprError, GeometryError, OSError) as exc:
            raise UsageError(str(exc)) from exc

    def grid_for(self, m) -> GridSpec:
        counts = self.grid
        if counts is not None and len(counts) not in (1, m.dim):
            raise UsageError(f"--grid needs 1 or {m.dim} counts, got {len(counts)}")
        try:
            return GridSpec.for_manifold(m, counts)
        except QuadratureError as exc:
            raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _real(text: str) -> float:
    """A number or a constant expression such as ``8*sqrt(6)*pi``."""
    try:
        e = parse(text, dim=1)
    except ExprError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r} ({exc})") from exc
    if variables(e):
        raise argparse.ArgumentTypeError(f"constant expected, got {text!r}")
    v = float(evaluate(e, np.zeros(1)))
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"not finite: {text!r}")
    return v


def _counts(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be integers like 24 or 24,24,24,24, got {text!r}")


def _point(text: str) -> tuple[float, ...]:
    return tuple(_real(t.strip()) for t in text.split(","))


def _add_manifold_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--manifold", help="catalog selector, e.g. s4 or 'scaled(s2xs2,1/3)'")
    src.add_argument("--manifest", help="path to a manifest file")
    p.add_argument("--jet-order", type=int, default=4)
    p.add_argument("--format", choices=("text", "json"), default="text")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="curvgap", description="Curvature pipeline and curvature-gap checks.")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="catalog entries and constructors")

    fr = sub.add_parser("frame", help="curvature invariants at one point")
    _add_manifold_args(fr)
    fr.add_argument("--point", type=_point, required=True, help="comma separated chart coordinates")

    ve = sub.add_parser("verify", help="run checks")
    ve.add_argument("checks", nargs="+", help=f"check ids: {', '.join(CHECK_IDS)} or all")
    _add_manifold_args(ve)
    ve.add_argument("--grid", type=_counts, help="nodes per axis: 24 or a,b,c,d")
    ve.add_argument("--tol", type=float, help="override both tolerances")
    ve.add_argument("--tol-integral", type=float, default=TOL_INTEGRAL)
    ve.add_argument("--tol-pointwise", type=float, default=TOL_POINTWISE)
    ve.add_argument("--theta", type=float, action="append", help="repeatable; default -1, 1, 2")
    ve.add_argument("--alpha0", type=_real, help="Yamabe lower bound (Theorems B, C and Sobolev)")
    ve.add_argument("--seed", type=int, default=0)
    ve.add_argument("--timing", action="store_true", help="record wall time per verdict")
    ve.add_argument("--workers", type=int, default=1)
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(
        manifold=ns.manifold,
        manifest=ns.manifest,
        jet_order=ns.jet_order,
        format=ns.format,
    )
    if ns.command == "verify":
        cfg.grid = ns.grid
        cfg.tol_integral = ns.tol if ns.tol is not None else ns.tol_integral
        cfg.tol_pointwise = ns.tol if ns.tol is not None else ns.tol_pointwise
        cfg.thetas = tuple(ns.theta) if ns.theta else DEFAULT_THETAS
        cfg.alpha0 = ns.alpha0
        cfg.seed = ns.seed
        cfg.timing = ns.timing
        cfg.workers = ns.workers
        cfg.checks = list(ns.checks)
    return cfg


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _flag_text(flags: dict) -> str:
    return " ".join(f"{k}={'yes' if v else 'no'}" for k, v in sorted(flags.items()))


def cmd_list() -> str:
    lines = ["catalog:"]
    for key in CATALOG:
        m = CATALOG[key]()
        chi = "?" if m.chi is None else str(m.chi)
        lines.append(f"  {key:<8} dim={m.dim}  χ={chi:<2}  {_flag_text(m.flags)}")
    lines += [
        "constructors:",
        "  round_sphere(n, r)     polar chart, n-1 open axes and one periodic",
        "  flat_torus(n, period)  periodic axes",
        "  product(a, b)",
        "  scaled(m, c)           metric c*g",
        "  perturbed(m, seed, eps)  g + eps*h with a seeded random h",
    ]
    return "\n".join(lines)


FRAME_QUANTITIES = ("R", "E_norm", "W_norm", "C_norm", "B_norm", "Q")


def cmd_frame(cfg: RunConfig, point) -> dict[str, float]:
    m = cfg.load()
    p = np.asarray(point, dtype=float)
    if p.shape != (m.dim,):
        raise UsageError(f"point needs {m.dim} coordinates, got {len(p)}")
    if not m.contains(p):
        raise UsageError(f"point {tuple(float(x) for x in p)} is not strictly inside the chart domain of {m.name}")
    [(_, alt, perms)] = chart_variants(m, p[None, :])
    g = m.metric if perms is None else chart_variant(m, perms).metric
    try:
        cj = CurvatureJets(g, alt, cfg.jet_order)
        det = float(np.linalg.det(cj.g_at(0).value[..., 0]))
    except GeometryError as exc:
        raise UsageError(str(exc)) from exc
    if not det > 0:
        raise UsageError(f"metric singular at {tuple(float(x) for x in p)}")
    out: dict[str, float] = {}
    for name in FRAME_QUANTITIES:
        if name == "Q" and m.dim != 4:
            continue
        try:
            out[name] = float(np.asarray(QUANTITIES[name][1](cj)[name])[0])
        except GeometryError:
            continue
    if "R" in out and m.dim >= 2:
        out["lambda"] = out["R"] / (m.dim * (m.dim - 1))
    return out


def _fmt(v: float) -> str:
    return f"{v:.10g}"


def format_verdicts_text(verdicts) -> str:
    lines = []
    for v in verdicts:
        status = v.status.upper() if not v.skipped else v.status
        vals = "  ".join(f"{k}={_fmt(x)}" for k, x in v.values.items())
        t = f"  [{v.seconds:.2f}s]" if v.seconds is not None else ""
        lines.append(f"{status:<6} {v.check:<17} {v.manifold}  {vals}{t}")
    n_fail = sum(v.failed for v in verdicts)
    n_skip = sum(v.skipped for v in verdicts)
    lines.append(f"{len(verdicts)} verdicts: {len(verdicts) - n_fail - n_skip} passed, {n_fail} failed, {n_skip} skipped")
    return "\n".join(lines)


def cmd_verify(cfg: RunConfig):
    m = cfg.load()
    grid = cfg.grid_for(m)
    opts = CheckOptions(
        thetas=cfg.thetas,
        alpha0=cfg.alpha0,
        seed=cfg.seed,
        tol_integral=cfg.tol_integral,
        tol_pointwise=cfg.tol_pointwise,
        timing=cfg.timing,
    )
    try:
        verdicts = run_checks(m, cfg.checks, grid, cfg.jet_order, opts, workers=cfg.workers)
    except (VerifyError, CatalogError) as exc:
        raise UsageError(str(exc)) from exc
    code = 1 if any(v.failed for v in verdicts) else 0
    return code, verdicts


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)  # exits with 2 on malformed arguments
    try:
        if ns.command == "list":
            print(cmd_list())
            return 0
        cfg = config_from_args(ns)
        cfg.validate()
        if ns.command == "frame":
            vals = cmd_frame(cfg, ns.point)
            if cfg.format == "json":
                print(json.dumps(vals, indent=2))
            else:
                for k, v in vals.items():
                    print(f"{k:<8} {_fmt(v)}")
            return 0
        code, verdicts = cmd_verify(cfg)
        if cfg.format == "json":
            print(json.dumps([v.to_json() for v in verdicts], indent=2))
        else:
            print(format_verdicts_text(verdicts))
        return code
    except ManifestError as exc:
        print(f"curvgap: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"curvgap: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
