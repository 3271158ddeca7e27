"""Command-line front end.

Subcommands::

    rtlasso simulate --config design.json --seed 1 --out data/
    rtlasso fit      --data data/ --out run/
    rtlasso select   --data data/ --out run/
    rtlasso oracle   --data data/ --config oracle.json --out run/
    rtlasso bench    --config bench.json --seed 0 --jobs 4 --out bench/

Exit codes: 0 success, 2 configuration, 3 ingestion, 4 solver, 5 I/O.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import read_csv, write_csv
from .errors import (DimensionMismatch, IngestionError, InvalidConfig,
                     NotConverged, RTLError, StageError, ValidationError)
from .pipeline import PipelineConfig, run_oracle, run_rtl, screen_sources
from .simulation import METHODS, CellResult, SimDesign, generate, sweep

log = logging.getLogger("rtlasso")

EXIT_OK, EXIT_CONFIG, EXIT_INGEST, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4, 5


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def load_config(path):
    """Read the JSON config; a missing path means an empty config."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidConfig("config", f"{path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise InvalidConfig("config", "top level must be a JSON object")
    return cfg


def _pipeline_config(cfg, seed):
    pc = PipelineConfig.from_dict(cfg.get("pipeline", {}))
    return replace(pc, seed=seed) if seed is not None else pc


def _design(cfg, seed):
    d = SimDesign.from_dict(cfg.get("design", {}))
    return replace(d, seed=seed) if seed is not None else d


def _load_panel(args, cfg):
    """Target and sources from ``--data DIR`` or from config paths."""
    if args.data is not None:
        root = Path(args.data)
        target_path = root / "target.csv"
        if not target_path.exists():
            raise IngestionError(target_path, 0, "file not found")
        source_paths = sorted(root.glob("source_*.csv"),
                              key=lambda q: int(q.stem.split("_")[1]))
    else:
        if "target" not in cfg:
            raise InvalidConfig("target", "give --data or a 'target' path")
        target_path = Path(cfg["target"])
        source_paths = [Path(s) for s in cfg.get("sources", [])]
    for q in [target_path, *source_paths]:
        if not q.exists():
            raise IngestionError(q, 0, "file not found")
    target = read_csv(target_path, id="target", kind="target")
    sources = [read_csv(q, id=q.stem, kind="source") for q in source_paths]
    return target, sources


def cmd_simulate(args, cfg):
    design = _design(cfg, args.seed)
    inst = generate(design)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "target.csv", inst.target)
    for j, s in enumerate(inst.sources):
        write_csv(out / f"source_{j}.csv", s)
    truth = {"design": design.to_dict(), "seed": design.seed,
             "beta": inst.truth_beta.values.tolist(),
             "e": inst.truth_e.values.tolist(),
             "source_betas": [b.values.tolist() for b in inst.truth_source_betas],
             "shifts": inst.truth_shifts}
    _write(out / "truth.json", _dump(truth))
    log.info("wrote %d source files to %s", len(inst.sources), out)
    return EXIT_OK


def cmd_fit(args, cfg):
    config = _pipeline_config(cfg, args.seed)
    target, sources = _load_panel(args, cfg)
    rep = run_rtl(target, sources, config)
    _write(Path(args.out) / "report.json", rep.to_json())
    log.info("mode=%s selected=%s", rep.mode,
             list(rep.selection.selected) if rep.selection else [])
    return EXIT_OK


def cmd_oracle(args, cfg):
    config = _pipeline_config(cfg, args.seed)
    target, sources = _load_panel(args, cfg)
    known = cfg.get("known_A")
    shifts = cfg.get("known_shifts")
    if known is None and args.data is not None:
        truth = Path(args.data) / "truth.json"
        if truth.exists():
            shifts = json.loads(truth.read_text())["shifts"]
            known = [j for j, s in enumerate(shifts) if s <= config.h]
    if known is None:
        raise InvalidConfig("known_A", "oracle mode needs the useful source set")
    rep = run_oracle(target, sources, known, config, known_shifts=shifts)
    _write(Path(args.out) / "report.json", rep.to_json())
    return EXIT_OK


def cmd_select(args, cfg):
    config = _pipeline_config(cfg, args.seed)
    target, sources = _load_panel(args, cfg)
    sel, c = screen_sources(target, sources, config)
    d = sel.to_dict()
    # shifts back on the original coefficient scale
    for row in d["shift_table"]:
        row["h_hat"] = row["h_hat"] / c
    d["h"] = config.h
    _write(Path(args.out) / "selection.json", _dump(d))
    return EXIT_OK


def _bench_plan(cfg, args):
    """Designs, methods and reps from a bench config.

    ``designs`` lists SimDesign payloads; alternatively ``base`` plus a
    ``grid`` of field -> values expands to their Cartesian product.  The
    default of 1000 replicates is slow; ``"reps": 50`` gives a quick pass.
    """
    reps = int(cfg.get("reps", 1000))
    if reps < 1:
        raise InvalidConfig("reps", "must be >= 1")
    methods = list(args.method or cfg.get("methods", ["lasso", "rlasso", "rtl"]))
    for m in methods:
        if m not in METHODS:
            raise InvalidConfig("methods", f"unknown method {m!r}")
    if "designs" in cfg:
        designs = [SimDesign.from_dict(d) for d in cfg["designs"]]
    else:
        base = cfg.get("base", {})
        grid = cfg.get("grid", {"corruption_fraction": [0.1 * i for i in range(1, 10)]})
        designs = [SimDesign.from_dict(base)]
        for key, values in grid.items():
            designs = [SimDesign.from_dict({**d.to_dict(), key: v})
                       for d in designs for v in values]
    return designs, methods, reps


def _cell_to_json(c):
    return {"design_index": c.design_index, "method": c.method, "reps": c.reps,
            "ser": list(c.ser), "sign": list(c.sign), "errors": list(c.errors)}


def _cell_from_json(d):
    return CellResult(d["design_index"], d["method"], d["reps"],
                      tuple(d["ser"]), tuple(d["sign"]), tuple(d["errors"]))


def cmd_bench(args, cfg):
    seed = 0 if args.seed is None else args.seed
    designs, methods, reps = _bench_plan(cfg, args)
    config = PipelineConfig.from_dict(cfg.get("pipeline", {}))
    sweep_def = {"designs": [d.to_dict() for d in designs], "methods": methods,
            "reps": reps, "seed": seed, "pipeline": config.to_dict()}
    fingerprint = hashlib.sha256(_dump(sweep_def).encode()).hexdigest()
    out = Path(args.out)
    manifest_path = out / "manifest.json"
    done = {}
    if manifest_path.exists():
        old = json.loads(manifest_path.read_text())
        if old.get("fingerprint") == fingerprint:
            for d in old.get("completed", []):
                c = _cell_from_json(d)
                done[(c.design_index, c.method)] = c
            log.info("resuming: %d cells already complete", len(done))
        else:
            log.info("existing manifest belongs to another sweep; starting over")
    manifest = {"fingerprint": fingerprint, "sweep": sweep_def,
                "versions": {"rtlasso": __version__, "numpy": np.__version__},
                "completed": [_cell_to_json(c) for c in done.values()],
                "finished": False}

    def record(cell):
        manifest["completed"].append(_cell_to_json(cell))
        manifest["completed"].sort(key=lambda d: (d["design_index"], d["method"]))
        _write(manifest_path, _dump(manifest))
        log.info("cell design=%d method=%s done (%d failures)",
                 cell.design_index, cell.method, len(cell.errors))

    _write(manifest_path, _dump(manifest))
    table = sweep(designs, methods, reps, seed=seed, config=config,
                  jobs=args.jobs, skip=done, on_cell=record)
    _write(out / "bench.csv", table.to_csv())
    manifest["finished"] = True
    _write(manifest_path, _dump(manifest))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "select": cmd_select,
            "oracle": cmd_oracle, "bench": cmd_bench}


def build_parser():
    ap = argparse.ArgumentParser(prog="rtlasso", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("fit", "select", "oracle"):
            p.add_argument("--data", help="directory with target.csv and source_<j>.csv")
        if name == "bench":
            p.add_argument("--jobs", type=int, default=1)
            p.add_argument("--method", action="append", choices=METHODS)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (IngestionError, DimensionMismatch) as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except (StageError, NotConverged) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RTLError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
