"""Command-line front door: ``python -m bcechoice <command> [config.json] [flags]``.

Every command reads an experiment configuration (JSON, validated against
``CONFIG_SCHEMA``), applies command-line overrides on top of it (flags win
over the file), and writes its outputs plus an echo of the effective
configuration to the output directory. Rerunning from the echoed
``config.json`` reproduces every file.

Exit codes: 0 success; 1 the model was found infeasible where it should
not be (for example an empty identified set, or the true parameter of a
preset rejected under its own population probabilities); 2 runtime
failure, including any solver failure unless ``--tolerate-failures``.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .counterfactual import CovariateMap, complete_info_counterfactual, shift_intervals
from .dgp import (PRESETS, EmpiricalDistribution, PopulationInfoMix, population_probs, preset,
                  simulate)
from .discretize import GridSpec
from .errors import BCEChoiceError
from .bce import predicted_polytope
from .identify import (FEASIBLE, ThetaGrid, build_grid_annealing, check_point, halton_cloud,
                       identified_set)
from .inference import confidence_region, test_statistic
from .journal import Journal
from .mle import fit_mle
from .model import complete_info_choice_probs, degenerate_info_choice_probs
from .parallel import WORKERS_ENV, worker_count

log = logging.getLogger("bcechoice")

SCHEMA_ID = "bcechoice/experiment-config/v1"

_grid_spec = {
    "type": "object",
    "properties": {
        "mode": {"enum": ["explicit", "values", "quantiles"]},
        "points": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "count": {"type": "integer", "minimum": 2},
        "lo": {"type": ["number", "null"]},
        "hi": {"type": ["number", "null"]},
    },
    "required": ["mode"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$id": SCHEMA_ID,
    "type": "object",
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "preset": {"enum": list(PRESETS)},
        "theta": {"type": "array", "items": {"type": "number"}},
        "mix": {"type": "object"},
        "discretization": {
            "type": "object",
            "properties": {
                "s_grid": _grid_spec, "eta_grid": _grid_spec,
                "r_count": {"type": "integer", "minimum": 2},
                "eta_count": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "data": {
            "type": "object",
            "properties": {
                "source": {"enum": ["population", "file", "simulate"]},
                "path": {"type": "string"},
                "n": {"type": "integer"},
                "seed": {"type": "integer"},
                "mode": {"enum": ["discrete", "continuous"]},
            },
            "required": ["source"],
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["box", "points", "halton", "annealing"]},
                "bounds": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                                      "minItems": 2, "maxItems": 2}},
                "steps": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "points": {"type": "array", "items": {"type": "array",
                                                      "items": {"type": "number"}}},
                "center": {"type": "array", "items": {"type": "number"}},
                "scale": {"type": "array", "items": {"type": "number"}},
                "n_points": {"type": "integer", "minimum": 1},
                "n_keep": {"type": "integer", "minimum": 1},
                "starts": {"type": "array", "items": {"type": "array",
                                                      "items": {"type": "number"}}},
                "temperatures": {"type": "array", "items": {"type": "number"}},
                "max_iter": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer"},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "inference": {
            "type": "object",
            "properties": {
                "alphas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                                      "exclusiveMaximum": 1}, "minItems": 1},
                "draws": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "method": {"enum": ["dual", "hull", "minnorm"]},
            },
            "additionalProperties": False,
        },
        "counterfactual": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["shift", "complete"]},
                "map": {"type": "object", "additionalProperties": {"type": "string"}},
                "targets": {"type": "array", "items": {"type": "string"}},
                "points": {"type": "array", "items": {"type": "array",
                                                      "items": {"type": "number"}}},
                "mode": {"enum": ["exact", "simulate"]},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "mle": {
            "type": "object",
            "properties": {
                "info": {"enum": ["complete", "degenerate"]},
                "likelihood": {"enum": ["discretized", "closed-form"]},
                "start": {"type": "array", "items": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "plots": {
            "type": "object",
            "properties": {
                "hull_x": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
            "additionalProperties": False,
        },
        "workers": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
    },
    "required": ["preset"],
    "additionalProperties": False,
}

DEFAULTS = {
    "schema": SCHEMA_ID,
    "data": {"source": "population"},
    "inference": {"alphas": [0.05, 0.5], "draws": 500, "seed": 0, "method": "dual"},
    "counterfactual": {"kind": "shift", "map": {}, "mode": "exact", "seed": 0},
    "mle": {"info": "complete", "likelihood": "discretized"},
    "output": "bcechoice-out",
}


class UsageError(Exception):
    """Configuration problem reported with exit code 2."""


# ---------------------------------------------------------------------------
# Configuration


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    """Defaults, then the file, then command-line overrides; validated at the end."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        with open(path) as fh:
            cfg = _merge(cfg, json.load(fh))
    cfg = _merge(cfg, overrides)
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        raise UsageError(f"invalid configuration at {where}: {err.message}") from None
    return cfg


def _overrides(args) -> dict:
    o: dict = {}
    if args.preset:
        o["preset"] = args.preset
    if args.output:
        o["output"] = args.output
    if args.workers is not None:
        o["workers"] = args.workers
    data = {}
    for key in ("n", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "data", None):
        data.update(source="file", path=args.data)
    if data:
        o["data"] = data
    inf = {}
    if getattr(args, "draws", None) is not None:
        inf["draws"] = args.draws
    if getattr(args, "alpha", None):
        inf["alphas"] = args.alpha
    if getattr(args, "method", None):
        inf["method"] = args.method
    if inf:
        o["inference"] = inf
    return o


def _build_preset(cfg: dict):
    disc = {}
    for key, val in cfg.get("discretization", {}).items():
        disc[key] = GridSpec.from_dict(val) if isinstance(val, dict) else val
    pr = preset(cfg["preset"], **disc)
    theta = np.asarray(cfg["theta"], float) if "theta" in cfg else pr.theta
    if theta.shape != pr.theta.shape:
        raise UsageError(f"theta needs {pr.theta.size} entries for preset {pr.name}")
    mix = PopulationInfoMix.from_dict(cfg["mix"]) if "mix" in cfg else pr.mix
    return pr, theta, mix


def _grid(cfg: dict, pr, family, objective=None) -> ThetaGrid:
    g = cfg.get("grid", {"kind": "box"})
    names = family.param_names
    bounds = g.get("bounds") or [list(b) for b in pr.bounds]
    if not bounds:
        raise UsageError("grid bounds are required for this preset")
    if not all(np.isfinite(np.asarray(bounds, float)).ravel()):
        raise UsageError("grid bounds must be finite")
    kind = g["kind"]
    if kind == "box":
        steps = g.get("steps") or list(pr.steps)
        if len(steps) != len(names):
            raise UsageError("one grid step per parameter")
        return ThetaGrid.box(names, bounds, steps)
    if kind == "points":
        return ThetaGrid(np.asarray(g["points"], float), names, "explicit", tuple(map(tuple, bounds)))
    if kind == "halton":
        pts = halton_cloud(np.asarray(g["center"], float), np.asarray(g["scale"], float),
                           g.get("n_points", 1000), g.get("n_keep", 200), g.get("seed", 0), bounds)
        return ThetaGrid(pts, names, "halton", tuple(map(tuple, bounds)))
    if objective is None:
        raise UsageError("annealing grids need sample data")
    steps = g.get("steps") or list(pr.steps)
    return build_grid_annealing(objective, np.asarray(g["starts"], float),
                                g.get("temperatures", [1.0]), g.get("max_iter", 100),
                                g.get("seed", 0), bounds, steps, names)


def _sample(cfg: dict, pr, theta, mix, workers) -> EmpiricalDistribution | None:
    data = cfg["data"]
    src = data["source"]
    if src == "population":
        return None
    if src == "file":
        if "path" not in data:
            raise UsageError("data.path is required for file data")
        problem = pr.family.problem(theta)
        return EmpiricalDistribution.from_csv(data["path"], problem.actions.labels,
                                              problem.covariates.labels)
    n = data.get("n")
    if n is None or n < 1:
        raise UsageError("data.n must be a positive sample size")
    return simulate(pr.family, theta, mix, n, data.get("seed", 0), data.get("mode", "discrete"),
                    workers=workers)


def _probs(cfg, pr, theta, mix, sample) -> np.ndarray:
    if sample is None:
        return population_probs(pr.family, theta, mix)
    return sample.conditional


# ---------------------------------------------------------------------------
# Output helpers


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _echo(out: Path, cfg: dict, command: str) -> None:
    _write(out / "config.json", json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    manifest = {"command": command, "version": __version__, "schema": SCHEMA_ID}
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _hull_plot_rows(problem, xs) -> list:
    """Vertices of the predicted set plus the complete/degenerate points, per ``x``."""
    rows = []
    com = complete_info_choice_probs(problem)
    deg = degenerate_info_choice_probs(problem)
    Y = problem.shape[0]
    for x in xs:
        poly = predicted_polytope(problem, x, coords=range(Y))
        verts = poly.vertices
        if poly.dimension == 2:
            # order the polygon for plotting
            loc = (verts - verts.mean(axis=0)) @ poly.basis
            verts = verts[np.argsort(np.arctan2(loc[:, 1], loc[:, 0]))]
        for v in verts:
            rows.append([problem.covariates.labels[x], "vertex"] + [f"{p:.12g}" for p in v])
        rows.append([problem.covariates.labels[x], "complete"] + [f"{p:.12g}" for p in com[x]])
        rows.append([problem.covariates.labels[x], "degenerate"] + [f"{p:.12g}" for p in deg[x]])
    return rows


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(cfg: dict, args) -> int:
    pr, theta, mix = _build_preset(cfg)
    data = cfg["data"]
    if data["source"] != "simulate":
        raise UsageError("simulate needs data.source = 'simulate' (or --n)")
    sample = _sample(cfg, pr, theta, mix, cfg.get("workers"))
    out = _out_dir(cfg)
    sample.to_csv(out / "data.csv")
    probs = population_probs(pr.family, theta, mix)
    _write(out / "population.csv", _csv(
        [[y, x, f"{probs[i, j]:.12g}"] for i, x in enumerate(sample.covariates)
         for j, y in enumerate(sample.actions)], ["y", "x", "probability"]))
    _echo(out, cfg, "simulate")
    log.info("wrote %d observations to %s", sample.n, out / "data.csv")
    return 0


def cmd_identify(cfg: dict, args) -> int:
    pr, theta, mix = _build_preset(cfg)
    workers = cfg.get("workers")
    sample = _sample(cfg, pr, theta, mix, workers)
    probs = _probs(cfg, pr, theta, mix, sample)
    grid = _grid(cfg, pr, pr.family)
    out = _out_dir(cfg)
    journal = Journal(out / "identify.journal")
    report = identified_set(pr.family, grid, probs, workers=workers, journal=journal)
    _write(out / "identify.csv", report.to_csv())
    _write(out / "projections.csv", _csv(
        [[name, text] for name, text in report.projection_table().items()],
        ["parameter", "projection"]))
    _write(out / "feasible_points.csv", _csv(
        [[f"{v:.12g}" for v in p] for p in report.feasible_points], list(grid.names)))
    result = {"projections": report.projection_table(), "n_points": len(grid),
              "n_feasible": int(report.feasible_mask.sum()), "failures": report.failures,
              "meta": report.metadata}
    if cfg.get("plots", {}).get("hull_x"):
        problem = pr.family.problem(theta)
        rows = _hull_plot_rows(problem, cfg["plots"]["hull_x"])
        _write(out / "hull.csv", _csv(rows, ["x", "kind"] + list(problem.actions.labels)))
    _write(out / "report.json", json.dumps({"identify": result, "config": cfg,
                                            "version": __version__}, indent=2, sort_keys=True,
                                           default=str) + "\n")
    _echo(out, cfg, "identify")
    print(json.dumps(report.projection_table(), ensure_ascii=False))
    if report.failures and not args.tolerate_failures:
        log.error("%d grid points hit solver failures", report.failures)
        return 2
    if not report.feasible_mask.any():
        log.error("the identified set is empty on this grid")
        return 1
    if sample is None:
        verdict, _ = check_point(pr.family.problem(theta), probs)
        if verdict != FEASIBLE:
            log.error("the true parameter is not feasible under its own population probabilities")
            return 1
    return 0


def cmd_region(cfg: dict, args) -> int:
    pr, theta, mix = _build_preset(cfg)
    workers = cfg.get("workers")
    sample = _sample(cfg, pr, theta, mix, workers)
    if sample is None:
        raise UsageError("region needs sample data (data.source 'file' or 'simulate')")
    inf = cfg["inference"]

    def objective(t):
        try:
            return test_statistic(pr.family.problem(t), sample, "dual")
        except (BCEChoiceError, ValueError):
            return np.inf

    grid = _grid(cfg, pr, pr.family, objective)
    out = _out_dir(cfg)
    journal = Journal(out / "region.journal")
    report = confidence_region(pr.family, grid, sample, inf["alphas"], inf["draws"], inf["seed"],
                               inf["method"], workers=workers, journal=journal)
    _write(out / "region.csv", report.to_csv())
    for a in report.alphas:
        pts = report.region(a)
        _write(out / f"region_{a:g}.csv", _csv([[f"{v:.12g}" for v in p] for p in pts],
                                               list(grid.names)))
    summary = {}
    for a in report.alphas:
        pts = report.region(a)
        summary[f"{a:g}"] = {name: ([float(pts[:, k].min()), float(pts[:, k].max())]
                                    if len(pts) else None)
                             for k, name in enumerate(grid.names)}
    _write(out / "report.json", json.dumps({"region": report.to_dict(), "projections": summary,
                                            "config": cfg, "version": __version__},
                                           indent=2, sort_keys=True) + "\n")
    _echo(out, cfg, "region")
    print(json.dumps(summary))
    failures = sum(s == "solver-failure" for s in report.status)
    if failures and not args.tolerate_failures:
        log.error("%d grid points hit solver failures", failures)
        return 2
    if all(len(report.region(a)) == 0 for a in report.alphas):
        log.error("every grid point was rejected")
        return 1
    return 0


def cmd_counterfactual(cfg: dict, args) -> int:
    pr, theta, mix = _build_preset(cfg)
    workers = cfg.get("workers")
    sample = _sample(cfg, pr, theta, mix, workers)
    probs = _probs(cfg, pr, theta, mix, sample)
    cf = cfg["counterfactual"]
    problem = pr.family.problem(theta)
    p_x = pr.family.covariate_pmf if sample is None else sample.p_x
    if "points" in cf:
        points = np.asarray(cf["points"], float)
    else:
        grid = _grid(cfg, pr, pr.family)
        rep = identified_set(pr.family, grid, probs, workers=workers)
        points = rep.feasible_points
    if len(points) == 0:
        log.error("no parameter values to evaluate the counterfactual at")
        return 1
    out = _out_dir(cfg)
    if cf["kind"] == "shift":
        cmap = CovariateMap.from_labels(problem.covariates, cf.get("map", {}))
        targets = None
        if cf.get("targets"):
            targets = [problem.actions.index(a) for a in cf["targets"]]
        res = shift_intervals(pr.family, points, cmap, probs, p_x, targets, workers=workers)
    else:
        res = complete_info_counterfactual(pr.family, points, probs, p_x, cf.get("mode", "exact"),
                                           seed=cf.get("seed", 0), workers=workers)
    _write(out / "intervals.csv", res.to_csv())
    _write(out / "per_point.csv", res.per_point_csv())
    _write(out / "report.json", json.dumps({"counterfactual": res.to_dict(), "config": cfg,
                                            "version": __version__}, indent=2, sort_keys=True)
           + "\n")
    _echo(out, cfg, "counterfactual")
    print(res.to_csv(), end="")
    if res.excluded and not args.tolerate_failures and len(res.excluded) == len(points):
        log.error("every parameter value was excluded")
        return 1
    return 0


def cmd_mle(cfg: dict, args) -> int:
    pr, theta, mix = _build_preset(cfg)
    sample = _sample(cfg, pr, theta, mix, cfg.get("workers"))
    m = cfg["mle"]
    if sample is None:
        data = population_probs(pr.family, theta, mix) * pr.family.covariate_pmf[:, None]
    else:
        data = sample
    grid = _grid(cfg, pr, pr.family).points if pr.bounds or "grid" in cfg else None
    start = np.asarray(m["start"], float) if "start" in m else None
    if grid is None and start is None:
        start = theta
    bounds = cfg.get("grid", {}).get("bounds") or (list(pr.bounds) or None)
    res = fit_mle(pr.family, data, m["info"], m["likelihood"], grid, start, bounds)
    out = _out_dir(cfg)
    payload = dict(res.to_dict(), names=list(pr.family.param_names))
    _write(out / "mle.json", json.dumps({"mle": payload, "config": cfg, "version": __version__},
                                        indent=2, sort_keys=True) + "\n")
    _echo(out, cfg, "mle")
    print(json.dumps(payload))
    return 0


COMMANDS = {"simulate": cmd_simulate, "identify": cmd_identify, "region": cmd_region,
            "counterfactual": cmd_counterfactual, "mle": cmd_mle}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bcechoice",
        description="Identification, inference and counterfactuals for discrete choice "
                    "under unknown information structures.",
        epilog=f"Worker count: --workers, else config 'workers', else ${WORKERS_ENV}, else 1.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config", nargs="?", help="experiment configuration (JSON)")
        s.add_argument("--preset", choices=PRESETS)
        s.add_argument("--output", "-o")
        s.add_argument("--workers", type=int)
        s.add_argument("--tolerate-failures", action="store_true",
                       help="exit 0 even if some solves failed")
        s.add_argument("--data", help="CSV of y,x,count rows")
        s.add_argument("--n", type=int, help="sample size for simulated data")
        s.add_argument("--seed", type=int, help="simulation seed")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "region":
            s.add_argument("--draws", type=int, help="bootstrap draws")
            s.add_argument("--alpha", type=float, action="append", help="significance level")
            s.add_argument("--method", choices=["dual", "hull", "minnorm"])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = _overrides(args)
    if args.command == "simulate" and args.n is not None:
        overrides.setdefault("data", {})["source"] = "simulate"
    if args.n is not None and args.n < 1:
        parser.error("--n must be at least 1")
    try:
        cfg = load_config(args.config, overrides)
        if "workers" in cfg:
            os.environ[WORKERS_ENV] = str(worker_count(cfg["workers"]))
        return COMMANDS[args.command](cfg, args)
    except UsageError as err:
        print(f"bcechoice: error: {err}", file=sys.stderr)
        return 2
    except (BCEChoiceError, ValueError, OSError, KeyError) as err:
        print(f"bcechoice: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
