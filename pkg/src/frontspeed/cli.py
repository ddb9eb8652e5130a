"""Command-line entry point: ``frontspeed <task> ...``.

Exit codes: 0 success, 1 configuration / input error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FrontSpeedError, InputError, NumericalError

TASKS = ("speed", "kcurve", "profile", "ansatz", "simulate", "asymptotics", "sweep", "verify")

DEFAULTS = {
    "field": {"preset": "sine", "amplitude": 2.0, "period": 1.0},
    "reaction": "logistic",
    "rho": 1.0,
    "cone": {"alpha": math.pi / 2, "beta": math.pi / 2},
    "force": False,
    "seed": 0,
}


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def _angle(v, name):
    if isinstance(v, str):
        s = v.strip().lower()
        if s.endswith(("deg", "°")) or "degree" in s:
            raise InputError(f"{name}: angles are accepted in radians only")
        try:
            v = float(s)
        except ValueError:
            raise InputError(f"{name}: not a number: {v!r}") from None
    v = float(v)
    if not (0.0 < v < math.pi):
        raise InputError(f"{name} = {v} is outside (0, pi); angles are in radians only")
    return v


def _to_plain(v):
    if isinstance(v, dict):
        return {k: _to_plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_to_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def canonical_json(obj) -> str:
    return json.dumps(_to_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(cfg: dict) -> str:
    """Stable digest of a resolved config (output locations excluded)."""
    body = {k: v for k, v in cfg.items() if k not in ("output", "output_dir", "jobs")}
    return hashlib.sha256(canonical_json(body).encode()).hexdigest()[:16]


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file not found: {p}")
    try:
        with p.open() as fh:
            data = json.load(fh)
    except json.JSONDecodeError as e:
        raise InputError(f"{p}: invalid JSON ({e})") from None
    if not isinstance(data, dict):
        raise InputError(f"{p}: top level must be an object")
    return data


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "field":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(task: str, cfg: dict, extra: dict | None = None) -> dict:
    """Apply defaults and validate the shared keys."""
    r = _merge(DEFAULTS, TASK_DEFAULTS.get(task, {}))
    r = _merge(r, cfg)
    if extra:
        r = _merge(r, {k: v for k, v in extra.items() if v is not None})
    r["task"] = task
    cone = r.get("cone", {})
    r["cone"] = {"alpha": _angle(cone.get("alpha"), "alpha"),
                 "beta": _angle(cone.get("beta"), "beta")}
    rho = float(r["rho"])
    if not (rho > 0 and math.isfinite(rho)):
        raise InputError(f"rho must be positive, got {rho}")
    r["rho"] = rho
    return _to_plain(r)


TASK_DEFAULTS = {
    "kcurve": {"lambda_min": 0.05, "lambda_max": 5.0, "points": 64, "branch": "left"},
    "profile": {"branch": "left", "delta": 0.05, "H": None, "nx": 32, "hy": 1 / 32},
    "ansatz": {"delta": 0.05, "strip": {"nx": 32, "hy": 1 / 32},
               "grid": {"nx": 256, "ny": 512, "x_periods": 8, "hy": None}},
    "simulate": {"grid": {"nx": 256, "ny": 1024, "x_periods": 8, "hy": None},
                 "time": {"dt": None, "t_end": 40.0, "t_burn": None},
                 "scheme": "imex", "advection": "upwind", "lateral": None,
                 "frame_speed": None, "initial": "indicator", "sample_every": 10,
                 "snapshot_every": 0, "ratio_depth": 2.0},
    "asymptotics": {"which": "large-advection", "values": None, "gamma_exp": 0.5,
                    "outer_values": None, "n": 256},
}


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _field(spec):
    from .periodicfield import build_field, field_from_csv, field_from_json

    if isinstance(spec, dict) and "csv" in spec:
        return field_from_csv(spec["csv"], spec.get("period"))
    if isinstance(spec, dict) and "json" in spec:
        return field_from_json(spec["json"])
    return build_field(spec)


def _objects(r):
    from .periodicfield import ConeSpec, build_reaction

    return (_field(r["field"]), build_reaction(r["reaction"]), float(r["rho"]),
            ConeSpec(r["cone"]["alpha"], r["cone"]["beta"]))


def _stamp(r: dict, payload: dict) -> dict:
    out = {"software_version": __version__, "config_hash": config_hash(r)}
    out.update(_to_plain(payload))
    return out


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump(_to_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_resolved(r: dict, out: Path, directory: bool = False):
    """Resolved config sits next to the outputs."""
    if directory:
        target = out / "config.resolved.json"
    else:
        target = out.with_name(out.stem + ".config.json")
    _write_json(target, dict(r, software_version=__version__, config_hash=config_hash(r)))


def _csv_header(fh, r):
    fh.write(f"# software_version={__version__} config_hash={config_hash(r)}\n")


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

def task_speed(r: dict) -> dict:
    from .speeds import conical_min_speed

    q, f, rho, cone = _objects(r)
    res = conical_min_speed(rho, q, f, cone, force=bool(r.get("force")))
    return res.to_dict()


def _branch_matrix(r, cone):
    from .periodicfield import DiffusionMatrix

    if r.get("branch") == "right":
        return DiffusionMatrix.cone_B(cone.beta), cone.beta
    if r.get("branch") == "left":
        return DiffusionMatrix.cone_A(cone.alpha), cone.alpha
    raise InputError("branch must be 'left' or 'right'")


def task_kcurve(r: dict, out: Path | None):
    from .speeds import k_curve

    q, f, rho, cone = _objects(r)
    M, gamma = _branch_matrix(r, cone)
    if r.get("gamma") is not None:
        gamma = _angle(r["gamma"], "gamma")
    M = M.scale(rho)
    lo, hi, n = float(r["lambda_min"]), float(r["lambda_max"]), int(r["points"])
    if not (0 < lo < hi) or n < 2:
        raise InputError("need 0 < lambda_min < lambda_max and points >= 2")
    lams = np.linspace(lo, hi, n)
    rows = [(l, k_curve(M, q, gamma, f.fprime0, float(l)).k) for l in lams]
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        _csv_header(fh, r)
        w = csv.writer(fh)
        w.writerow(["lambda", "k", "k_over_lambda"])
        for l, k in rows:
            w.writerow([repr(float(l)), repr(float(k)), repr(float(k / l))])
    finally:
        if out:
            fh.close()
    return {"points": len(rows)}


def _strip_for(r, q, f, rho, cone, side, c):
    from .frontprofile import slow_decay_rate, solve_strip_front
    from .periodicfield import DiffusionMatrix

    angle = cone.alpha if side == "left" else cone.beta
    M = (DiffusionMatrix.cone_A(angle) if side == "left" else DiffusionMatrix.cone_B(angle)).scale(rho)
    cs = c * math.sin(angle)
    H = r.get("H")
    if H is None:
        lam1, _, _ = slow_decay_rate(M, q, angle, f.fprime0, cs)
        H = 10.0 * max(1.0, 1.0 / lam1) + 2.0
    hy = float(r.get("hy", 1 / 32))
    ny = 2 * int(math.ceil(H / hy))
    return solve_strip_front(M, q, angle, cs, float(H), int(r.get("nx", 32)), ny, f=f)


def task_profile(r: dict, out: Path | None):
    from .speeds import conical_min_speed

    q, f, rho, cone = _objects(r)
    c = r.get("c")
    if c is None:
        c = (1 + float(r["delta"])) * conical_min_speed(rho, q, f, cone, force=r["force"]).c_star
    prof = _strip_for(r, q, f, rho, cone, r["branch"], float(c))
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        _csv_header(fh, r)
        w = csv.writer(fh)
        w.writerow(["X", "Y", "phi"])
        for i, X in enumerate(prof.X):
            for j, Y in enumerate(prof.Y):
                w.writerow([repr(float(X)), repr(float(Y)), repr(float(prof.phi[i, j]))])
    finally:
        if out:
            fh.close()
    return {"c": float(c), "strip_speed": prof.c, "residual": prof.residual_sup,
            "lambda_1": prof.lam1, "iterations": prof.iterations}


def task_ansatz(r: dict):
    from .frontprofile import assemble_conical
    from .sim2d import Field2D
    from .speeds import conical_min_speed

    q, f, rho, cone = _objects(r)
    star = conical_min_speed(rho, q, f, cone, force=r["force"])
    c = (1 + float(r["delta"])) * star.c_star
    strip = dict(r["strip"])
    pa = _strip_for(strip, q, f, rho, cone, "left", c)
    pb = _strip_for(strip, q, f, rho, cone, "right", c)
    g = r["grid"]
    grid = Field2D.grid(int(g["nx"]), int(g["ny"]), q.period, int(g["x_periods"]), g.get("hy"))
    ans = assemble_conical(pa, pb, cone, grid, rho, q, f)
    lo, hi = ans.conical_conditions(cone)
    return {"c_star": star.c_star, "c": c, "sandwich_ok": ans.sandwich_ok,
            "residual_under_min": ans.residual_under_min,
            "residual_over_max": ans.residual_over_max,
            "conical_conditions": {"under_far_below": lo, "over_far_above": hi},
            "strip_residuals": [pa.residual_sup, pb.residual_sup]}


def task_simulate(r: dict, out: Path | None):
    from .sim2d import SimConfig, run_speed_measurement

    q, f, rho, cone = _objects(r)
    g, tm = r["grid"], r["time"]
    cfg = SimConfig(nx=int(g["nx"]), ny=int(g["ny"]), x_periods=int(g["x_periods"]),
                    hy=g.get("hy"), T=float(tm["t_end"]), dt=tm.get("dt"), t_burn=tm.get("t_burn"),
                    sample_every=int(r["sample_every"]), mode=r["scheme"],
                    advection=r["advection"], lateral=r["lateral"],
                    frame_speed=r["frame_speed"], initial=r["initial"],
                    ratio_depth=float(r["ratio_depth"]))
    snap_every = int(r.get("snapshot_every") or 0)
    hook = None
    if out is not None and snap_every > 0:
        sdir = out / "snapshots"
        sdir.mkdir(parents=True, exist_ok=True)

        def hook(n, t, U):
            if n % snap_every == 0:
                np.savetxt(sdir / f"u_{n:08d}.csv", U, delimiter=",",
                           header=f"software_version={__version__} config_hash={config_hash(r)} t={t!r}")
    d = run_speed_measurement(rho, q, f, cone, cfg, on_step=hook)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with (out / "levelset.csv").open("w", newline="") as fh:
            _csv_header(fh, r)
            w = csv.writer(fh)
            w.writerow(["t", f"y_half_col{d.probe_column}"])
            for t, y in zip(d.times, d.positions):
                w.writerow([repr(float(t)), repr(float(y))])
    return d.to_dict()


def task_asymptotics(r: dict, out: Path | None):
    from . import asymptotics as A

    q, f, rho, cone = _objects(r)
    which = r["which"]
    vals = r.get("values")
    if vals is None:
        raise InputError("asymptotics needs 'values' (the scan parameter grid)")
    if which == "small-reaction":
        scan = A.scan_small_reaction(rho, q, f, cone, float(r["gamma_exp"]), vals)
    elif which == "large-diffusion":
        scan = A.scan_large_diffusion(rho, q, f, cone, float(r["gamma_exp"]), vals)
    elif which == "large-advection":
        scan = A.scan_large_advection(rho, q, f, cone, vals, n=int(r["n"]))
    elif which in ("double-1-15", "double-1-16"):
        outer = r.get("outer_values")
        if outer is None:
            raise InputError("double limits need 'outer_values'")
        kind = r.get("outer", "eps")
        label = ("1.15-" if which.endswith("15") else "1.16-") + kind
        scan = A.scan_double_limits(rho, q, f, cone, vals, outer, label)
    elif which == "homogenization":
        scan = A.scan_homogenization(rho, q, f, cone, vals)
    else:
        raise InputError(f"unknown asymptotics scan {which!r}")
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        _csv_header(fh, r)
        w = csv.writer(fh)
        w.writerow(["param", "computed", "predicted", "deviation"])
        for p, c, t, dv in scan.rows():
            w.writerow([repr(float(p)), repr(float(c)), repr(float(t)), repr(float(dv))])
    finally:
        if out:
            fh.close()
    return {"label": scan.label, "predicted": scan.predicted_limit,
            "final_deviation": float(scan.deviations[-1]), "passing": scan.passing}


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

SWEEP_TASKS = {"speed": task_speed}


def _set_path(d: dict, dotted: str, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def _flatten(d: dict, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def sweep_points(spec: dict) -> list[dict]:
    """Cartesian product of ``grid`` ({dotted.key: [values]}) over ``base``."""
    task = spec.get("task", "speed")
    if task not in SWEEP_TASKS:
        raise InputError(f"sweeps support tasks {sorted(SWEEP_TASKS)}, got {task!r}")
    grid = spec.get("grid")
    if not isinstance(grid, dict) or not grid:
        raise InputError("sweep needs a non-empty 'grid' mapping")
    keys = sorted(grid)
    for k in keys:
        if not isinstance(grid[k], list) or not grid[k]:
            raise InputError(f"sweep grid entry {k!r} must be a non-empty list")
    pts = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cfg = copy.deepcopy(spec.get("base", {}))
        for k, v in zip(keys, combo):
            _set_path(cfg, k, v)
        pts.append({"task": task, "config": cfg})
    return pts


def _run_point(point: dict) -> dict:
    task = point["task"]
    try:
        r = resolve(task, point["config"])
    except FrontSpeedError as e:
        # unresolvable point: hash the raw config instead
        r = dict(point["config"], task=task)
        return {"config_hash": config_hash(r), "inputs": _flatten(_to_plain(point["config"])),
                "error": {"type": type(e).__name__, "message": str(e)}}
    rec = {"config_hash": config_hash(r), "inputs": _flatten(r)}
    try:
        rec["outputs"] = _to_plain(SWEEP_TASKS[task](r))
    except FrontSpeedError as e:
        rec["error"] = {"type": type(e).__name__, "message": str(e)}
    return rec


def _point_hash(point):
    try:
        return config_hash(resolve(point["task"], point["config"]))
    except FrontSpeedError:
        return config_hash(dict(point["config"], task=point["task"]))


def run_sweep(spec: dict, out_dir: Path, jobs: int = 1) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "sweep.jsonl"
    done = set()
    if path.exists():
        with path.open() as fh:
            for line in fh:
                line = line.strip()
                if line:
                    try:
                        done.add(json.loads(line)["config_hash"])
                    except (json.JSONDecodeError, KeyError):
                        continue
    points = sweep_points(spec)
    todo = [p for p in points if _point_hash(p) not in done]
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            records = list(ex.map(_run_point, todo))
    else:
        records = [_run_point(p) for p in todo]
    # single writer, input order
    with path.open("a") as fh:
        for rec in records:
            rec["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
            rec["software_version"] = __version__
            fh.write(json.dumps(_to_plain(rec), sort_keys=True) + "\n")
    return {"points": len(points), "computed": len(todo), "skipped": len(points) - len(todo),
            "failed": sum(1 for r in records if "error" in r), "path": str(path)}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=["zero", "sine", "cosine", "sawtooth"])
    p.add_argument("--amp", type=float, help="preset amplitude")
    p.add_argument("--period", type=float, help="advection period L")
    p.add_argument("--field-csv", help="two-column x,value CSV for q")
    p.add_argument("--f", dest="reaction", help="reaction: logistic | power:<p>")
    p.add_argument("--rho", type=float)
    p.add_argument("--alpha", help="left cone angle (radians)")
    p.add_argument("--beta", help="right cone angle (radians)")
    p.add_argument("--force", action="store_true", default=None,
                   help="evaluate alpha + beta > pi (no theoretical guarantee)")
    p.add_argument("--out", help="output file or directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frontspeed", description="KPP conical front speeds in shear flows")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="task", required=True)
    for t in ("speed", "kcurve", "profile", "ansatz", "simulate", "asymptotics"):
        p = sub.add_parser(t)
        _common(p)
        if t == "kcurve":
            p.add_argument("--lambda-min", type=float)
            p.add_argument("--lambda-max", type=float)
            p.add_argument("--points", type=int)
            p.add_argument("--branch", choices=["left", "right"])
            p.add_argument("--gamma", help="override the direction angle (radians)")
        if t == "profile":
            p.add_argument("--branch", choices=["left", "right"])
            p.add_argument("--c", type=float, help="vertical conical speed (strip speed c sin angle)")
            p.add_argument("--H", type=float)
            p.add_argument("--nx", type=int)
            p.add_argument("--hy", type=float)
        if t == "asymptotics":
            p.add_argument("--which", choices=["small-reaction", "large-diffusion", "large-advection",
                                               "double-1-15", "double-1-16", "homogenization"])
    p = sub.add_parser("sweep")
    p.add_argument("--config", required=True, help="sweep spec JSON: {task, base, grid}")
    p.add_argument("--out", required=True, help="output directory (sweep.jsonl)")
    p.add_argument("--jobs", type=int, default=None, help="parallel points (default $FRONTSPEED_JOBS or 1)")
    p = sub.add_parser("verify")
    p.add_argument("--suite", choices=["trivial", "all"], default="trivial")
    return ap


def _cli_overrides(a) -> dict:
    o = {}
    if a.preset or a.amp is not None or a.period is not None:
        fld = {}
        if a.preset:
            fld["preset"] = a.preset
        if a.amp is not None:
            fld["amplitude"] = a.amp
        if a.period is not None:
            fld["period"] = a.period
        o["field_patch"] = fld
    if a.field_csv:
        o["field"] = {"csv": a.field_csv, **({"period": a.period} if a.period else {})}
    if a.reaction:
        s = a.reaction
        if s.startswith("power:"):
            o["reaction"] = {"kind": "power", "p": float(s.split(":", 1)[1])}
        else:
            o["reaction"] = s
    if a.rho is not None:
        o["rho"] = a.rho
    cone = {}
    if a.alpha is not None:
        cone["alpha"] = a.alpha
    if a.beta is not None:
        cone["beta"] = a.beta
    if cone:
        o["cone"] = cone
    if a.force:
        o["force"] = True
    for k in ("lambda_min", "lambda_max", "points", "branch", "gamma", "c", "H", "nx", "hy", "which"):
        v = getattr(a, k, None)
        if v is not None:
            o[k] = v
    return o


def _dispatch(a) -> int:
    if a.task == "verify":
        from .verify import run_suite

        ok = run_suite(a.suite, stream=sys.stdout)
        return 0 if ok else 2
    if a.task == "sweep":
        spec = load_config(a.config)
        jobs = a.jobs if a.jobs is not None else int(os.environ.get("FRONTSPEED_JOBS", "1") or 1)
        if jobs < 1:
            raise InputError("--jobs must be >= 1")
        summary = run_sweep(spec, Path(a.out), jobs)
        print(json.dumps(summary, sort_keys=True))
        return 0
    cfg = load_config(a.config) if a.config else {}
    over = _cli_overrides(a)
    patch = over.pop("field_patch", None)
    if patch:
        base = cfg.get("field", DEFAULTS["field"])
        if not isinstance(base, dict):
            base = {"preset": base}
        if "preset" in patch and patch["preset"] != base.get("preset"):
            base = {k: v for k, v in base.items() if k == "period"}
        over["field"] = dict(base, **patch)
    r = resolve(a.task, cfg, over)
    out = Path(a.out) if a.out else None
    if a.task == "speed":
        payload = _stamp(r, task_speed(r))
    elif a.task == "kcurve":
        payload = _stamp(r, task_kcurve(r, out))
    elif a.task == "profile":
        payload = _stamp(r, task_profile(r, out))
    elif a.task == "ansatz":
        payload = _stamp(r, task_ansatz(r))
    elif a.task == "simulate":
        payload = _stamp(r, task_simulate(r, out))
    else:
        payload = _stamp(r, task_asymptotics(r, out))
    text = json.dumps(_to_plain(payload), indent=2, sort_keys=True)
    if out is None:
        print(text)
        return 0
    if a.task == "simulate":
        _write_json(out / "diagnostics.json", payload)
        _write_resolved(r, out, directory=True)
    elif a.task in ("speed", "ansatz"):
        _write_json(out, payload)
        _write_resolved(r, out)
    else:
        _write_resolved(r, out)
    print(text)
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    try:
        return _dispatch(a)
    except InputError as e:
        print(f"frontspeed: error: {e}", file=sys.stderr)
        return 1
    except NumericalError as e:
        print(f"frontspeed: numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
