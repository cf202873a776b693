"""Config-driven experiment runner.

Subcommands ``spectrum``, ``dirac``, ``portrait``, ``gan2d`` and ``verify`` read
their section of a JSON config, validate it against the bundled schema and
write CSV / JSON / SVG artifacts into the output directory.

Exit codes: 0 success, 1 a verification check failed, 2 config error.
"""

import argparse
import csv
import io
import itertools
import json
import math
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import dirac, gan2d, spectral
from .errors import ConfigurationError, DivergenceError, InvalidInputError, NoStableStepError
from .objectives import make_loss
from .verify import run_verify

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2

COMMANDS = ("spectrum", "dirac", "portrait", "gan2d", "verify")
FORMATS = ("csv", "json", "svg")
DEFAULT_OUT = "ganlab-out"

DEFAULT_H_GRID = (0.1, 0.5, 1.0)
DEFAULT_BOUNDS = (-2.0, 2.0, -2.0, 2.0)
DEFAULT_GRID = 15
DEFAULT_STEPS = 1000
MAX_POLYLINE_POINTS = 4000
SWEEP_KEYS = ("dataset", "method", "gamma", "lr", "hidden", "seed")


class FieldError(ConfigurationError):
    """Config error tied to a location in the config document."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# config loading


def load_schema() -> dict:
    return json.loads(resources.files("ganlab").joinpath("config_schema.json").read_text())


def _path_str(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def validate_config(doc) -> dict:
    """Raise :class:`FieldError` naming the offending field if ``doc`` is invalid."""
    validator = jsonschema.Draft202012Validator(load_schema())
    err = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if err is not None:
        raise FieldError(_path_str(err.absolute_path), err.message)
    return doc


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise FieldError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise FieldError("<file>", f"invalid JSON in {path}: {exc}") from exc
    return validate_config(doc)


def _build(path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigurationError, InvalidInputError, TypeError) as exc:
        if isinstance(exc, FieldError):
            raise
        raise FieldError(path, str(exc)) from exc


def method_from(value, path) -> dirac.MethodSpec:
    if isinstance(value, str):
        return _build(path, dirac.MethodSpec, value)
    return _build(path, dirac.MethodSpec, **value)


def loss_for(method: dirac.MethodSpec, name, path):
    """The configured loss, or the method default; WGAN variants force the linear loss."""
    if name is None:
        return method.default_loss()
    if method.kind in dirac.LINEAR_LOSS_METHODS and name != "linear":
        raise FieldError(path, f"{method.kind} requires the linear loss, got {name!r}")
    return make_loss(name)


def rule_from(value, path):
    """``(UpdateRule or None, step size)``; ``None`` stands for the continuous flow."""
    value = value or {"kind": "simgd"}
    h = value.get("h", dirac.ALTGD_DEFAULT_STEP if value["kind"] == "altgd" else dirac.SIMGD_DEFAULT_STEP)
    if value["kind"] == "flow":
        return None, h
    if value["kind"] == "simgd":
        return _build(path, dirac.UpdateRule.simgd, h, value.get("h_d")), h
    return _build(path, dirac.UpdateRule.altgd, h, value.get("n_g", 1), value.get("n_d", 1), value.get("h_d")), h


def state_from(value, method, path):
    if value is None:
        value = [1.0, 0.0, 1.0] if method.state_dim == 3 else [1.0, 0.0]
    if len(value) != method.state_dim:
        raise FieldError(path, f"{method.discriminator} discriminator needs {method.state_dim} coordinates")
    s = _build(path, dirac.DiracState.from_sequence, value)
    if method.kind == "wgan" and abs(s.psi) > method.g0:
        raise FieldError(path, f"initial psi must satisfy |psi| <= g0 = {method.g0}")
    return s


def bounds_from(value, path):
    bounds = tuple(float(b) for b in (value if value is not None else DEFAULT_BOUNDS))
    if not (bounds[0] < bounds[1] and bounds[2] < bounds[3]):
        raise FieldError(path, "need theta_min < theta_max and psi_min < psi_max")
    return bounds


def dataset_from(value, path):
    if isinstance(value, str):
        return _build(path, gan2d.Dataset2D, value)
    return _build(path, gan2d.Dataset2D, **value)


def train_config_from(value, seed, path) -> gan2d.TrainConfig:
    kw = dict(value or {})
    if "dataset" in kw:
        kw["dataset"] = dataset_from(kw["dataset"], f"{path}.dataset")
    for name in ("generator", "discriminator"):
        if name in kw:
            kw[name] = _build(f"{path}.{name}", gan2d.ArchSpec, **kw[name])
    return _build(path, gan2d.TrainConfig, seed=seed, **kw)


# ---------------------------------------------------------------------------
# serialization


def fmt(x) -> str:
    """Shortest round-trip text for floats; empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def json_text(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


class Artifacts:
    """Writes the requested formats into ``out`` and remembers what it wrote."""

    def __init__(self, out, formats):
        self.out = Path(out)
        self.formats = tuple(formats)
        self.written = []

    def write(self, name, text):
        kind = name.rsplit(".", 1)[-1]
        if kind not in self.formats:
            return
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        with open(path, "w", newline="") as fh:
            fh.write(text)
        self.written.append(str(path))


# ---------------------------------------------------------------------------
# SVG phase portraits


def _svg_num(x) -> str:
    return f"{x:.3f}"


def portrait_svg(grid: dirac.PortraitGrid, bounds, trajectory=None, g0=None, title="") -> str:
    """SVG 1.1 drawing of a vector-field grid, an optional trajectory and the WGAN clip region."""
    size, margin = 480.0, 40.0
    t0, t1, p0, p1 = bounds
    span = size - 2 * margin

    def to_xy(theta, psi):
        return margin + (theta - t0) / (t1 - t0) * span, margin + (p1 - psi) / (p1 - p0) * span

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size:.0f}" height="{size:.0f}" '
        f'viewBox="0 0 {size:.0f} {size:.0f}">',
        f"<title>{title}</title>",
        '<defs><clipPath id="plot"><rect x="40" y="40" width="400" height="400"/></clipPath></defs>',
        '<rect x="0" y="0" width="480" height="480" fill="white"/>',
    ]
    if g0 is not None:
        # psi outside [-g0, g0] is unreachable for the clipped discriminator
        for lo, hi in ((g0, max(p1, g0)), (min(p0, -g0), -g0)):
            if hi <= lo or hi <= p0 or lo >= p1:
                continue
            xa, ya = to_xy(t0, min(hi, p1))
            xb, yb = to_xy(t1, max(lo, p0))
            out.append(
                f'<rect class="forbidden" x="{_svg_num(xa)}" y="{_svg_num(ya)}" width="{_svg_num(xb - xa)}" '
                f'height="{_svg_num(yb - ya)}" fill="#f2c4c4" fill-opacity="0.6"/>'
            )
        out.append(f'<text x="44" y="36" font-size="11" fill="#a33">|psi| &gt; {g0:g} forbidden</text>')
    out.append('<rect x="40" y="40" width="400" height="400" fill="none" stroke="black"/>')
    mag = np.hypot(grid.dtheta, grid.dpsi)
    vmax = float(mag.max()) if mag.size else 0.0
    n = grid.theta.shape[1]
    cell = span / max(n - 1, 1)
    out.append('<g class="field" stroke="#4060a0" stroke-width="1" fill="#4060a0">')
    for i in range(grid.theta.shape[0]):
        for j in range(n):
            m = mag[i, j]
            x, y = to_xy(grid.theta[i, j], grid.psi[i, j])
            if vmax == 0 or m == 0:
                out.append(f'<circle cx="{_svg_num(x)}" cy="{_svg_num(y)}" r="1.5"/>')
                continue
            length = 0.8 * cell * math.sqrt(m / vmax)
            ux, uy = grid.dtheta[i, j] / m, -grid.dpsi[i, j] / m
            xe, ye = x + length * ux, y + length * uy
            head = min(4.0, 0.4 * length)
            la = (xe - head * (ux - 0.5 * uy), ye - head * (uy + 0.5 * ux))
            lb = (xe - head * (ux + 0.5 * uy), ye - head * (uy - 0.5 * ux))
            out.append(
                f'<line x1="{_svg_num(x)}" y1="{_svg_num(y)}" x2="{_svg_num(xe)}" y2="{_svg_num(ye)}"/>'
                f'<polygon points="{_svg_num(xe)},{_svg_num(ye)} {_svg_num(la[0])},{_svg_num(la[1])} '
                f'{_svg_num(lb[0])},{_svg_num(lb[1])}"/>'
            )
    out.append("</g>")
    if trajectory is not None and len(trajectory) > 0:
        pts = trajectory.points[:, :2]
        stride = max(1, math.ceil(len(pts) / MAX_POLYLINE_POINTS))
        idx = list(range(0, len(pts), stride))
        if idx[-1] != len(pts) - 1:
            idx.append(len(pts) - 1)
        coords = " ".join(f"{_svg_num(a)},{_svg_num(b)}" for a, b in (to_xy(*pts[k]) for k in idx))
        out.append(
            f'<polyline class="trajectory" clip-path="url(#plot)" points="{coords}" fill="none" '
            f'stroke="#c03020" stroke-width="1.5"/>'
        )
        sx, sy = to_xy(*pts[0])
        out.append(f'<circle class="start" cx="{_svg_num(sx)}" cy="{_svg_num(sy)}" r="4" fill="#20a040"/>')
    out.append(f'<text x="240" y="470" font-size="12" text-anchor="middle">theta [{t0:g}, {t1:g}]</text>')
    out.append(
        f'<text x="14" y="240" font-size="12" text-anchor="middle" transform="rotate(-90 14 240)">'
        f"psi [{p0:g}, {p1:g}]</text>"
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# spectrum


def spectrum_rows(section: dict) -> list:
    methods = section.get("methods") or list(dirac.METHODS)
    hs = [float(h) for h in section.get("h", DEFAULT_H_GRID)]
    rows = []
    for i, value in enumerate(methods):
        path = f"spectrum.methods[{i}]"
        method = method_from(value, path)
        name = section.get("loss")
        if method.kind in dirac.LINEAR_LOSS_METHODS:
            name = "linear"
        loss = loss_for(method, name, "spectrum.loss")
        row = {
            "method": method.kind,
            "discriminator": method.discriminator,
            "loss": loss.kind,
            "gamma": method.gamma if method.kind in ("wgangp", "gradient_penalty", "consensus") else None,
            "sigma": method.sigma if method.kind == "instance_noise" else None,
            "g0": method.g0 if method.kind in dirac.LINEAR_LOSS_METHODS else None,
            "eigenvalues": None,
            "continuous": "undefined",
            "discrete": {fmt(h): "undefined" for h in hs},
            "max_stable_step": None,
            "critical_name": None,
            "critical_value": None,
        }
        if method.kind == "gradient_penalty":
            row["critical_name"], row["critical_value"] = "gamma", dirac.critical_gamma(loss)
        elif method.kind == "instance_noise":
            row["critical_name"], row["critical_value"] = "sigma", dirac.critical_sigma(loss)
        try:
            jac = dirac.equilibrium_jacobian(method, loss)
        except Exception as exc:  # no differentiable equilibrium: the row stays undefined
            row["note"] = str(exc)
            rows.append(row)
            continue
        spec = spectral.eigvals(jac)
        row["eigenvalues"] = [[float(z.real), float(z.imag)] for z in spec.eigenvalues]
        row["continuous"] = spectral.classify(spec).continuous
        row["discrete"] = {fmt(h): spectral.classify(spec, h).discrete for h in hs}
        try:
            row["max_stable_step"] = spectral.max_stable_step(spec)
        except NoStableStepError:
            pass
        rows.append(row)
    return rows


def run_spectrum(cfg: dict, art: Artifacts) -> int:
    section = cfg.get("spectrum", {})
    rows = spectrum_rows(section)
    hs = list(rows[0]["discrete"]) if rows else []
    header = ["method", "discriminator", "loss", "gamma", "sigma", "g0", "eig_real", "eig_imag", "continuous"]
    header += [f"discrete_h={h}" for h in hs] + ["max_stable_step", "critical_name", "critical_value"]
    table = []
    for r in rows:
        ev = r["eigenvalues"] or []
        table.append(
            [r["method"], r["discriminator"], r["loss"], r["gamma"], r["sigma"], r["g0"],
             ";".join(fmt(a) for a, _ in ev), ";".join(fmt(b) for _, b in ev), r["continuous"]]
            + [r["discrete"][h] for h in hs]
            + [r["max_stable_step"], r["critical_name"], r["critical_value"]]
        )
    art.write("spectrum.csv", csv_text(header, table))
    art.write("spectrum.json", json_text({"seed": cfg.get("seed", 0), "h": [float(h) for h in hs], "rows": rows}))
    for r in rows:
        ev = r["eigenvalues"]
        shown = "n/a" if ev is None else ", ".join(f"{a:+.6g}{b:+.6g}i" for a, b in ev)
        print(f"{r['method']:<18} {r['discriminator']:<11} {shown:<40} {r['continuous']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Dirac trajectories and portraits


def run_trajectory(method, loss, rule, h, s0, steps, horizon=None, record_every=1):
    """``(Trajectory, diverged, message)``; a divergence keeps the finite prefix."""
    try:
        if rule is None:
            T = horizon if horizon is not None else steps * h
            traj = dirac.flow_continuous(s0, method, loss, h, T, record_every)
        else:
            traj = dirac.simulate(s0, rule, method, loss, steps)
        return traj, False, None
    except DivergenceError as exc:
        return exc.trajectory, True, str(exc)


def trajectory_rows(traj, h=None):
    """CSV rows ``(step, theta, psi[, psi1], radius)``; continuous flows report the RK4 step index."""
    steps = traj.steps if h is None else np.rint(traj.steps / h)
    rows = []
    for k, p, r in zip(steps, traj.points, traj.radii):
        rows.append([int(k)] + [float(v) for v in p] + [float(r)])
    return rows


def trajectory_header(dim):
    return ["step", "theta", "psi"] + (["psi1"] if dim == 3 else []) + ["radius"]


def _equilibrium_summary(method, loss, rule):
    try:
        jac = dirac.equilibrium_jacobian(method, loss)
    except Exception:
        return None
    spec = spectral.eigvals(jac)
    out = {
        "eigenvalues": [[float(z.real), float(z.imag)] for z in spec.eigenvalues],
        "continuous": spectral.classify(spec).continuous,
    }
    if rule is not None:
        upd = spectral.eigvals(dirac.update_jacobian(rule, method, loss))
        v = spectral.classify(upd)
        out["update_spectral_radius"] = v.discrete_rate
        out["discrete"] = v.discrete
    return out


def run_dirac(cfg: dict, art: Artifacts) -> int:
    section = cfg.get("dirac", {})
    method = method_from(section.get("method", "standard"), "dirac.method")
    loss = loss_for(method, section.get("loss"), "dirac.loss")
    rule, h = rule_from(section.get("rule"), "dirac.rule")
    s0 = state_from(section.get("initial"), method, "dirac.initial")
    steps = section.get("steps", DEFAULT_STEPS)
    traj, diverged, message = run_trajectory(
        method, loss, rule, h, s0, steps, section.get("horizon"), section.get("record_every", 1)
    )
    rows = trajectory_rows(traj, h if rule is None else None)
    art.write("dirac_trajectory.csv", csv_text(trajectory_header(method.state_dim), rows))
    final = rows[-1]
    summary = {
        "seed": cfg.get("seed", 0),
        "method": section.get("method", "standard"),
        "loss": loss.kind,
        "rule": section.get("rule", {"kind": "simgd"}),
        "initial": list(s0.as_tuple()),
        "steps": steps,
        "rows": len(rows),
        "diverged": diverged,
        "divergence": message,
        "final_state": final[1:-1],
        "final_radius": final[-1],
        "equilibrium": _equilibrium_summary(method, loss, rule),
    }
    art.write("dirac_summary.json", json_text(summary))
    if "svg" in art.formats and method.discriminator == "linear":
        bounds = bounds_from(section.get("bounds"), "dirac.bounds")
        grid = dirac.portrait_grid(method, loss, bounds, section.get("grid", DEFAULT_GRID))
        g0 = method.g0 if method.kind == "wgan" else None
        art.write("dirac_portrait.svg", portrait_svg(grid, bounds, traj, g0, f"{method.kind} dynamics"))
    state = "diverged" if diverged else "finished"
    print(f"{method.kind}: {state} after {len(rows) - 1} recorded steps, final radius {final[-1]:.6g}")
    return EXIT_OK


def run_portrait(cfg: dict, art: Artifacts) -> int:
    section = cfg.get("portrait", {})
    method = method_from(section.get("method", "standard"), "portrait.method")
    if method.discriminator != "linear":
        raise FieldError("portrait.method.discriminator", "portraits are drawn for the linear discriminator only")
    loss = loss_for(method, section.get("loss"), "portrait.loss")
    bounds = bounds_from(section.get("bounds"), "portrait.bounds")
    n = section.get("grid", DEFAULT_GRID)
    grid = dirac.portrait_grid(method, loss, bounds, n)
    traj = None
    info = None
    if "trajectory" in section:
        ts = section["trajectory"]
        rule, h = rule_from(ts.get("rule"), "portrait.trajectory.rule")
        s0 = state_from(ts.get("initial"), method, "portrait.trajectory.initial")
        traj, diverged, message = run_trajectory(method, loss, rule, h, s0, ts.get("steps", DEFAULT_STEPS))
        info = {"rows": len(traj), "diverged": diverged, "divergence": message}
    rows = [
        [float(grid.theta[i, j]), float(grid.psi[i, j]), float(grid.dtheta[i, j]), float(grid.dpsi[i, j])]
        for i in range(n)
        for j in range(n)
    ]
    art.write("portrait.csv", csv_text(["theta", "psi", "dtheta", "dpsi"], rows))
    g0 = method.g0 if method.kind == "wgan" else None
    art.write(
        "portrait.json",
        json_text({"method": section.get("method", "standard"), "loss": loss.kind, "bounds": list(bounds),
                   "grid": n, "forbidden_g0": g0, "trajectory": info}),
    )
    art.write("portrait.svg", portrait_svg(grid, bounds, traj, g0, f"{method.kind} vector field"))
    print(f"{method.kind}: {n}x{n} field samples over {list(bounds)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# 2D GAN runs and sweeps


def sweep_configs(section: dict, seed: int) -> list:
    """``[(setting, TrainConfig)]`` for a single run or the cartesian sweep grid."""
    base = train_config_from(section.get("run"), seed, "gan2d.run")
    grid = section.get("sweep")
    if not grid:
        return [(_setting(base), base)]
    axes = [grid.get(k, [None]) for k in SWEEP_KEYS]
    out, seen = [], set()
    for combo in itertools.product(*axes):
        kw = {}
        for key, value in zip(SWEEP_KEYS, combo):
            if value is None:
                continue
            if key == "dataset":
                kw["dataset"] = dataset_from(value, "gan2d.sweep.dataset")
            elif key == "hidden":
                kw["generator"] = replace(base.generator, hidden=value)
                kw["discriminator"] = replace(base.discriminator, hidden=value)
            else:
                kw[key] = value
        if kw.get("method", base.method) == "unregularized":
            kw["gamma"] = base.gamma  # unused; keeps one entry per unregularized setting
        cfg = _build("gan2d.sweep", replace, base, **kw)
        key = json.dumps(cfg.to_dict(), sort_keys=True)
        if key not in seen:
            seen.add(key)
            out.append((_setting(cfg), cfg))
    return out


def _setting(cfg: gan2d.TrainConfig) -> dict:
    return {
        "dataset": cfg.dataset.kind,
        "method": cfg.method,
        "gamma": None if cfg.method == "unregularized" else cfg.gamma,
        "lr": cfg.lr,
        "hidden": cfg.generator.hidden,
        "seed": cfg.seed,
    }


def _train_entry(cfg):
    report = gan2d.train(cfg)
    doc = report.to_dict()
    return doc.pop("wall_time"), doc


def summarize_sweep(runs: list) -> list:
    """Median final W1 over seeds per setting, then the best setting per (dataset, method, hidden).

    Diverged runs count as infinitely bad; a setting whose median is infinite reports ``None``.
    """
    groups = {}
    for run in runs:
        s = run["setting"]
        key = (s["dataset"], s["method"], s["hidden"], s["gamma"], s["lr"])
        groups.setdefault(key, []).append(run)
    best = {}
    for key, members in groups.items():
        vals = [math.inf if r["final_w1"] is None else r["final_w1"] for r in members]
        med = statistics.median(vals)
        cand = {
            "dataset": key[0], "method": key[1], "hidden": key[2], "gamma": key[3], "lr": key[4],
            "median_final_w1": _finite_or_none(med),
            "seeds": [r["setting"]["seed"] for r in members],
            "n_diverged": sum(r["diverged"] for r in members),
            "_score": med,
        }
        slot = key[:3]
        if slot not in best or med < best[slot]["_score"]:
            best[slot] = cand
    rows = list(best.values())
    for r in rows:
        peers = sorted(
            (o["_score"] for o in rows if (o["dataset"], o["hidden"]) == (r["dataset"], r["hidden"]))
        )
        r["rank"] = peers.index(r["_score"]) + 1
    for r in rows:
        del r["_score"]
    return rows


def run_gan2d(cfg: dict, art: Artifacts, jobs=None) -> int:
    section = cfg.get("gan2d", {})
    entries = sweep_configs(section, cfg.get("seed", 0))
    jobs = jobs or section.get("jobs", 1)
    configs = [c for _, c in entries]
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_entry, configs))
    else:
        results = [_train_entry(c) for c in configs]
    runs = []
    for i, ((setting, _), (wall, doc)) in enumerate(zip(entries, results)):
        runs.append({"run": i, "setting": setting, **doc})
        w1 = "diverged" if doc["diverged"] else f"final_w1={doc['final_w1']}"
        print(f"run {i}: {setting['dataset']} {setting['method']} seed={setting['seed']} {w1} ({wall:.1f}s)")
    summary = summarize_sweep(runs)
    art.write("gan2d_report.json", json_text({"runs": runs, "summary": summary}))
    curve_rows = [
        [r["run"], r["setting"]["dataset"], r["setting"]["method"], r["setting"]["gamma"], r["setting"]["lr"],
         r["setting"]["hidden"], r["setting"]["seed"], it, w1]
        for r in runs
        for it, w1 in r["w1_curve"]
    ]
    art.write(
        "gan2d_curves.csv",
        csv_text(["run", "dataset", "method", "gamma", "lr", "hidden", "seed", "iteration", "w1"], curve_rows),
    )
    art.write(
        "gan2d_summary.csv",
        csv_text(
            ["dataset", "method", "hidden", "gamma", "lr", "median_final_w1", "n_seeds", "n_diverged", "rank"],
            [[s["dataset"], s["method"], s["hidden"], s["gamma"], s["lr"], s["median_final_w1"], len(s["seeds"]),
              s["n_diverged"], s["rank"]] for s in summary],
        ),
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# verification


def run_verify_cmd(cfg: dict, art: Artifacts, suites=None, inject=None) -> int:
    section = cfg.get("verify", {})
    suites = suites or section.get("suites")
    inject = inject if inject is not None else section.get("inject")
    report = _build("verify.suites", run_verify, suites, inject, cfg.get("seed", 0))
    art.write("verify.json", json_text(report.to_dict()))
    art.write(
        "verify.csv",
        csv_text(
            ["suite", "name", "passed", "value", "tolerance", "detail"],
            [[r.suite, r.name, r.passed, _finite_or_none(r.value), r.tolerance, r.detail] for r in report.results],
        ),
    )
    failed = report.failures()
    print(f"{len(report.results) - len(failed)}/{len(report.results)} checks passed")
    for r in failed:
        print(f"FAIL {r.suite}/{r.name}: value={r.value} tolerance={r.tolerance} {r.detail}".rstrip())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ganlab", description="Dirac-GAN convergence lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help=f"output directory (default {DEFAULT_OUT})")
        p.add_argument("--format", help="comma-separated subset of csv,json,svg")
        if name == "verify":
            p.add_argument("--suite", action="append", help="suite to run (repeatable or comma-separated)")
            p.add_argument("--inject", help="deliberate fault to check that the suite catches it")
        if name == "gan2d":
            p.add_argument("--jobs", type=int, help="worker processes for sweeps")
    return parser


def _formats(text, cfg):
    if text is None:
        return tuple(cfg.get("formats", FORMATS))
    items = [t.strip() for t in text.split(",") if t.strip()]
    bad = [t for t in items if t not in FORMATS]
    if bad or not items:
        raise FieldError("--format", f"choose from {','.join(FORMATS)}, got {text!r}")
    return tuple(items)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = dict(load_config(args.config))
        if args.seed is not None:
            if args.seed < 0:
                raise FieldError("--seed", "must be >= 0")
            cfg["seed"] = args.seed
        art = Artifacts(args.out or cfg.get("out", DEFAULT_OUT), _formats(args.format, cfg))
        if args.command == "spectrum":
            code = run_spectrum(cfg, art)
        elif args.command == "dirac":
            code = run_dirac(cfg, art)
        elif args.command == "portrait":
            code = run_portrait(cfg, art)
        elif args.command == "gan2d":
            if args.jobs is not None and args.jobs < 1:
                raise FieldError("--jobs", "must be >= 1")
            code = run_gan2d(cfg, art, args.jobs)
        else:
            suites = None
            if args.suite:
                suites = [s.strip() for item in args.suite for s in item.split(",") if s.strip()]
            code = run_verify_cmd(cfg, art, suites, args.inject)
    except ConfigurationError as exc:
        path = getattr(exc, "path", "<config>")
        msg = str(exc) if isinstance(exc, FieldError) else f"{path}: {exc}"
        print(f"config error at {msg}", file=sys.stderr)
        return EXIT_CONFIG
    for path in art.written:
        print(f"wrote {path}")
    return code


if __name__ == "__main__":
    sys.exit(main())
