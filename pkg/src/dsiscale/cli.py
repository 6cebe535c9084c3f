"""Batch command line front end.

    dsiscale COMMAND --config CONFIG.json --out DIR [--seed N] [--data CSV] [--workers N]

Commands: simulate, covariance, estimate, mse-study, lamperti, estimate-scale.
Artifacts go to ``DIR/<command>-<hash>/`` where the hash covers the command,
the effective configuration and the bytes of any input file, so a rerun
overwrites identical files.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import covariance as cv
from .data import ingest_csv
from .errors import ConfigError, DSIError
from .estimator import estimate, estimate_scale, resample_series, suggest_grouping
from .experiments import DEFAULT_H_GRID, mse_study
from .lamperti import SampledPath, lamperti_forward, lamperti_inverse
from .scale_grid import scheme_problems
from .simulator import (
    StudySpec,
    gen_dsi_study_series,
    gen_study_batch,
    sample_exact_paths,
    write_paths_binary,
    write_paths_csv,
)

COMMANDS = ("simulate", "covariance", "estimate", "mse-study", "lamperti", "estimate-scale")

# allowed keys per section; None marks a free-form nested dict checked elsewhere
SCHEMA = {
    "seed": None,
    "workers": None,
    "scheme": {"lambda", "boundaries", "n_scales"},
    "model": {"H", "beta", "G", "mu"},
    "simulate": {"kind", "grid", "n_paths", "format"},
    "covariance": {"grid"},
    "study": {"H_vec", "sigma_vec", "lambda", "points_per_scale", "n_scales"},
    "mse_study": {"h_grid", "n_reps", "h_offsets", "deterministic"},
    "estimate": {"data", "partition", "grouping", "suggest_eps"},
    "estimate.data": {"path", "date_column", "value_column", "start", "end"},
    "estimate.partition": {"b", "lambda", "offsets", "sub_bounds", "direction", "index_base"},
    "lamperti": {"input", "direction", "H", "alpha"},
    "estimate_scale": {"input", "range", "n_candidates", "q", "origin", "flat_threshold"},
}

NEEDS = {
    "simulate": ("simulate",),
    "covariance": ("scheme", "model", "covariance"),
    "estimate": ("estimate",),
    "mse-study": ("study",),
    "lamperti": ("lamperti",),
    "estimate-scale": ("estimate_scale",),
}


def load_config(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}"]) from None


def validate(command: str, cfg: dict) -> list[str]:
    """Every problem with ``cfg`` for ``command``; empty when valid."""
    problems = []
    for key, val in cfg.items():
        if key not in SCHEMA or "." in key:
            problems.append(f"unknown top-level key {key!r}")
            continue
        allowed = SCHEMA[key]
        if allowed is not None:
            if not isinstance(val, dict):
                problems.append(f"section {key!r} must be an object")
                continue
            for sub in val:
                if sub not in allowed:
                    problems.append(f"unknown key {key}.{sub}")
            for sub in val:
                nested = SCHEMA.get(f"{key}.{sub}")
                if nested is not None and isinstance(val[sub], dict):
                    problems += [f"unknown key {key}.{sub}.{k}" for k in val[sub] if k not in nested]
    for section in NEEDS[command]:
        if section not in cfg:
            problems.append(f"command {command!r} needs section {section!r}")
    if problems:
        return problems

    if "scheme" in cfg:
        s = cfg["scheme"]
        for k in ("lambda", "boundaries", "n_scales"):
            if k not in s:
                problems.append(f"scheme.{k} is required")
        if not problems:
            problems += [f"scheme: {p}" for p in scheme_problems(s["lambda"], s["boundaries"], s["n_scales"])]
    if "model" in cfg and "scheme" in cfg and not problems:
        mdl = cfg["model"]
        missing = [k for k in ("H", "beta", "G", "mu") if k not in mdl]
        problems += [f"model.{k} is required" for k in missing]
        if not missing:
            q = len(cfg["scheme"]["boundaries"]) - 1
            G = np.asarray(mdl["G"], dtype=float)
            if G.size == q * q:
                G = G.reshape(q, q)
            problems += [
                f"model: {p}"
                for p in cv.model_problems(q, mdl["H"], mdl["beta"], G, np.asarray(mdl["mu"], dtype=float))
            ]
    if command == "simulate":
        kind = cfg["simulate"].get("kind", "exact")
        if kind not in ("exact", "study"):
            problems.append(f"simulate.kind must be 'exact' or 'study', got {kind!r}")
        need = ("scheme", "model") if kind == "exact" else ("study",)
        problems += [f"simulate kind {kind!r} needs section {s!r}" for s in need if s not in cfg]
        if kind == "exact" and "grid" not in cfg["simulate"]:
            problems.append("simulate.grid is required for kind 'exact'")
        if cfg["simulate"].get("format", "csv") not in ("csv", "binary", "both"):
            problems.append("simulate.format must be csv, binary or both")
    if command in ("simulate", "mse-study") and "study" in cfg:
        problems += _study_problems(cfg["study"])
    if command == "covariance" and "grid" not in cfg["covariance"]:
        problems.append("covariance.grid is required")
    if command == "estimate":
        est = cfg["estimate"]
        part = est.get("partition", {})
        for k in ("b", "lambda", "offsets"):
            if k not in part:
                problems.append(f"estimate.partition.{k} is required")
        if part.get("direction", "forward") not in ("forward", "backward"):
            problems.append("estimate.partition.direction must be forward or backward")
        if "data" not in est:
            problems.append("estimate.data is required (path may come from --data)")
    if command == "lamperti":
        lp = cfg["lamperti"]
        for k in ("direction", "H", "alpha"):
            if k not in lp:
                problems.append(f"lamperti.{k} is required")
        if lp.get("direction") not in (None, "forward", "inverse"):
            problems.append("lamperti.direction must be forward or inverse")
        if "alpha" in lp and not lp["alpha"] > 1:
            problems.append("lamperti.alpha must be > 1")
    if command == "estimate-scale":
        es = cfg["estimate_scale"]
        if "range" not in es:
            problems.append("estimate_scale.range is required")
        if "input" not in es and "study" not in cfg:
            problems.append("estimate-scale needs estimate_scale.input (or --data) or a 'study' section")
        if "study" in cfg:
            problems += _study_problems(cfg["study"])
    return problems


def _study_problems(st: dict) -> list[str]:
    if "H_vec" not in st:
        return ["study.H_vec is required"]
    try:
        _study_spec(st)
    except ValueError as exc:
        return [f"study: {p}" for p in str(exc).split("; ")]
    return []


def _study_spec(st: dict) -> StudySpec:
    return StudySpec(
        tuple(st["H_vec"]),
        tuple(st["sigma_vec"]) if "sigma_vec" in st else None,
        float(st.get("lambda", 2.0)),
        int(st.get("points_per_scale", 80)),
        int(st.get("n_scales", 4)),
    )


def _model(cfg: dict) -> cv.SubsidiaryModel:
    return cv.SubsidiaryModel.from_dict({**cfg["scheme"], **cfg["model"]})


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_table(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _cmd_simulate(cfg, out: Path, seed: int, workers: int) -> dict:
    sim = cfg["simulate"]
    n = int(sim.get("n_paths", 1))
    fmt = sim.get("format", "csv")
    if sim.get("kind", "exact") == "exact":
        grid = np.asarray(sim["grid"], dtype=float)
        paths = sample_exact_paths(_model(cfg), grid, n, seed, workers)
    else:
        spec = _study_spec(cfg["study"])
        grid = spec.times()
        paths = gen_study_batch(spec, n, seed, workers)
    if fmt in ("csv", "both"):
        (out / "tables").mkdir(exist_ok=True)
        write_paths_csv(paths, grid, out / "tables" / "paths.csv")
    if fmt in ("binary", "both"):
        write_paths_binary(paths, out / "paths.dsi1")
    return {"n_paths": n, "grid_size": int(grid.size), "seed": seed, "format": fmt}


def _cmd_covariance(cfg, out: Path, seed: int, workers: int) -> dict:
    model = _model(cfg)
    grid = np.asarray(cfg["covariance"]["grid"], dtype=float)
    S, rep = cv.cov_matrix(model, grid, workers)
    means = [cv.process_mean(model, t) for t in grid]
    _write_table(out / "tables" / "covariance.csv", ["t", *[_fmt(t) for t in grid]],
                 ([float(t), *map(float, S[a])] for a, t in enumerate(grid)))
    _write_table(out / "tables" / "mean.csv", ["t", "mean"], ([float(t), float(m)] for t, m in zip(grid, means)))
    return {"grid": grid.tolist(), "min_eigenvalue": rep.min_eigenvalue, "factorized": rep.factorized,
            "jitter": rep.jitter}


def _cmd_estimate(cfg, out: Path, seed: int, workers: int, data: str | None) -> dict:
    est_cfg = cfg["estimate"]
    d = est_cfg["data"]
    path = data or d.get("path")
    if path is None:
        raise ConfigError(["estimate.data.path is required when --data is not given"])
    series = ingest_csv(path, d.get("date_column", "Date"), d.get("value_column", "Close"),
                        (d.get("start"), d.get("end")))
    p = est_cfg["partition"]
    offsets = p["offsets"]
    if isinstance(offsets, dict):
        offsets = list(range(int(offsets["start"]), int(offsets["stop"]) + 1))
    sampled, part = resample_series(
        series.closes, p["b"], float(p["lambda"]), offsets, p.get("sub_bounds"),
        p.get("direction", "forward"), int(p.get("index_base", 0)),
    )
    est = estimate(sampled, part)
    report = {"rows": len(series), "first_date": series.dates[0].isoformat(),
              "last_date": series.dates[-1].isoformat(), **est.to_dict(),
              "counts": part.counts().tolist(),
              "suggested_grouping": suggest_grouping(est.per_sub, float(est_cfg.get("suggest_eps", 0.05)))}
    if "grouping" in est_cfg:
        merged = estimate(sampled, part.merged(est_cfg["grouping"]))
        report["merged"] = {"grouping": est_cfg["grouping"], **merged.to_dict(),
                            "counts": part.merged(est_cfg["grouping"]).counts().tolist()}
    _write_table(out / "tables" / "per_pair.csv", ["pair", *[f"H_{i + 1}" for i in range(part.q)]],
                 ([f"{j + 1}-{j + 2}", *map(float, row)] for j, row in enumerate(est.per_pair)))
    _write_table(out / "tables" / "sampled_series.csv", ["position", "value"],
                 ([float(t), float(v)] for t, v in zip(sampled.times, sampled.values)))
    (out / "report.txt").write_text(est.report())
    return report


def _cmd_mse_study(cfg, out: Path, seed: int, workers: int) -> dict:
    spec = _study_spec(cfg["study"])
    ms = cfg.get("mse_study", {})
    rep = mse_study(spec, ms.get("h_grid", list(DEFAULT_H_GRID)), int(ms.get("n_reps", 100)), seed,
                    ms.get("h_offsets"), bool(ms.get("deterministic", False)), workers)
    (out / "tables").mkdir(exist_ok=True)
    (out / "tables" / "mse.csv").write_text(rep.to_csv())
    return rep.to_dict()


def _cmd_lamperti(cfg, out: Path, seed: int, workers: int, data: str | None) -> dict:
    lp = cfg["lamperti"]
    src = data or lp.get("input")
    if src is None:
        raise ConfigError(["lamperti.input is required when --data is not given"])
    path = SampledPath.from_csv(src)
    fn = lamperti_forward if lp["direction"] == "forward" else lamperti_inverse
    res = fn(path, float(lp["H"]), float(lp["alpha"]))
    (out / "tables").mkdir(exist_ok=True)
    res.to_csv(out / "tables" / "transformed.csv")
    return {"direction": lp["direction"], "H": lp["H"], "alpha": lp["alpha"], "points": len(res)}


def _cmd_estimate_scale(cfg, out: Path, seed: int, workers: int, data: str | None) -> dict:
    es = cfg["estimate_scale"]
    src = data or es.get("input")
    series = SampledPath.from_csv(src) if src else gen_dsi_study_series(_study_spec(cfg["study"]), seed)
    lo, hi = es["range"]
    lam, cands, scores, flat = estimate_scale(series, (float(lo), float(hi)), int(es.get("n_candidates", 101)),
                                              int(es.get("q", 4)), es.get("origin"),
                                              float(es.get("flat_threshold", 0.05)))
    _write_table(out / "tables" / "scores.csv", ["lambda", "score"],
                 ([float(c), float(s)] for c, s in zip(cands, scores)))
    return {"lambda_hat": lam, "no_scale_preference": flat, "heuristic": True}


def config_hash(command: str, cfg: dict, data: str | None) -> str:
    h = hashlib.sha256()
    h.update(command.encode())
    h.update(json.dumps(cfg, sort_keys=True).encode())
    for p in _input_files(command, cfg, data):
        h.update(Path(p).read_bytes())
    return h.hexdigest()[:12]


def _input_files(command: str, cfg: dict, data: str | None) -> list[str]:
    if data:
        return [data]
    if command == "estimate":
        p = cfg.get("estimate", {}).get("data", {}).get("path")
    elif command == "lamperti":
        p = cfg.get("lamperti", {}).get("input")
    elif command == "estimate-scale":
        p = cfg.get("estimate_scale", {}).get("input")
    else:
        p = None
    return [p] if p else []


def run(command: str, config: str | Path, out_dir: str | Path, seed: int | None = None,
        data: str | None = None, workers: int | None = None) -> tuple[int, Path | None]:
    """Execute one command; returns (exit status, artifact directory)."""
    try:
        if command not in COMMANDS:
            raise ConfigError([f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}"])
        cfg = load_config(config)
        problems = validate(command, cfg)
        if problems:
            raise ConfigError(problems)
        if seed is not None:
            cfg["seed"] = seed
        seed_val = int(cfg.get("seed", 0))
        n_workers = int(workers if workers is not None else cfg.get("workers", 1))
        # worker count never changes results, so it stays out of the hash
        hashed = {k: v for k, v in cfg.items() if k != "workers"}
        target = Path(out_dir) / f"{command}-{config_hash(command, hashed, data)}"
        target.mkdir(parents=True, exist_ok=True)
        if command in ("estimate", "lamperti", "estimate-scale"):
            result = HANDLERS[command](cfg, target, seed_val, n_workers, data)
        else:
            result = HANDLERS[command](cfg, target, seed_val, n_workers)
        _write_json(target / "report.json", {"command": command, "config": hashed, "result": result})
        return 0, target
    except DSIError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "problems": getattr(exc, "problems", [str(exc)])}
        print(json.dumps(err), file=sys.stderr)
        return (2 if isinstance(exc, ConfigError) else 1), None
    except (OSError, ValueError, KeyError, TypeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "problems": [str(exc)]}
        print(json.dumps(err), file=sys.stderr)
        return 1, None


HANDLERS = {
    "simulate": _cmd_simulate,
    "covariance": _cmd_covariance,
    "estimate": _cmd_estimate,
    "mse-study": _cmd_mse_study,
    "lamperti": _cmd_lamperti,
    "estimate-scale": _cmd_estimate_scale,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dsiscale", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--data", help="input CSV (index closes for estimate, time/value for lamperti)")
    parser.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    args = parser.parse_args(argv)
    status, target = run(args.command, args.config, args.out, args.seed, args.data, args.workers)
    if target is not None:
        print(target)
    return status


if __name__ == "__main__":
    sys.exit(main())
