"""hulldenoise command line: generate | denoise | hypocycloid | oracle-eval | cryoem | bounds.

Exit codes: 0 ok, 2 config error, 3 stage failure, 4 resource cap.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np
from filelock import FileLock, Timeout

from .config import Config, load_config
from .datagen import Dataset, ManifoldSpec, make_dataset
from .errors import ConfigError, DenoiseError, OutputLocked, StageError
from .experiments import bounds_report, cryoem_run, hypocycloid_study, oracle_eval
from .projection import DenoiseConfig, denoise

log = logging.getLogger("hulldenoise")


def jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path: str, data) -> None:
    with open(path, "w") as fh:
        json.dump(jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_rows(path: str, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if row.get(c) is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                        for c in columns])


def _seeded(section: dict, seed: int | None) -> dict:
    if seed is not None:
        section["seed"] = seed
    return section


def dataset_from_config(cfg: Config, seed: int | None) -> Dataset:
    data = _seeded(cfg.section("data"), seed)
    spec = ManifoldSpec(data["manifold"], data["ambient_dim"], data["a"], data["n_cusps"], data["radius"])
    return make_dataset(spec, data["n0"], data["n1"], data["n"], data["sigma"], data["seed"])


def _load_dataset(path: str) -> Dataset:
    try:
        return Dataset.load(path)
    except (OSError, KeyError, ValueError) as exc:
        raise StageError("data", f"cannot load dataset from {path}: {exc}") from exc


def cmd_generate(cfg: Config, args) -> None:
    try:
        ds = dataset_from_config(cfg, args.seed)
    except ValueError as exc:
        raise ConfigError(f"{cfg.path or '<defaults>'}: [data] {exc}") from exc
    ds.save(args.out)
    log.info("wrote %d points to %s", len(ds.clean), args.out)


def denoise_config(section: dict, args) -> DenoiseConfig:
    keys = {k: v for k, v in section.items() if k != "dataset"}
    if args.exact_oracle:
        keys["provider"] = "exact"
    keys["threads"] = args.threads
    return DenoiseConfig(**keys)


def cmd_denoise(cfg: Config, args) -> None:
    section = cfg.section("denoise")
    path = args.dataset or section["dataset"]
    if path:
        ds = _load_dataset(path)
    else:
        try:
            ds = dataset_from_config(cfg, args.seed)
        except ValueError as exc:
            raise ConfigError(f"[data] {exc}") from exc
    report = denoise(ds, denoise_config(section, args))
    report.write(args.out)
    s = report.summary()
    log.info("reduction ratio %s over %d targets", s.get("reduction_ratio"), s["targets"])


def cmd_hypocycloid(cfg: Config, args) -> None:
    h = _seeded(cfg.section("hypocycloid"), args.seed)
    results = hypocycloid_study(h["source"], h["sigmas"], h["count"], h["bins"], h["a"], h["n_cusps"],
                                h["vertex_window"], h["seed"])
    summary = {"source": h["source"], "count": h["count"], "bins": h["bins"], "seed": h["seed"],
               "vertex_window": h["vertex_window"], "a": h["a"], "n_cusps": h["n_cusps"], "runs": []}
    for res in results:
        name = f"hist_sigma_{res['sigma']:g}.csv"
        edges = res["bin_edges"]
        rows = [{"bin": i, "s_lo": float(edges[i]), "s_hi": float(edges[i + 1]), "count": int(c)}
                for i, c in enumerate(res["histogram"])]
        write_rows(os.path.join(args.out, name), rows, ["bin", "s_lo", "s_hi", "count"])
        summary["runs"].append({k: res[k] for k in ("sigma", "inside", "outside", "vertex_counts",
                                                    "vertex_fractions", "source_fraction", "modal_bin",
                                                    "perimeter")} | {"histogram_csv": name})
    write_json(os.path.join(args.out, "summary.json"), summary)


def _read_hyperplanes(path: str, dim: int):
    """CSV with header b0,...,b{dim-1},t: one unit normal and offset per row."""
    expected = [f"b{j}" for j in range(dim)] + ["t"]
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != expected:
                raise ConfigError(f"{path}:1: hyperplane header must be {','.join(expected)}")
            table = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    except OSError as exc:
        raise ConfigError(f"cannot read hyperplanes {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    table = table.reshape(-1, dim + 1)
    normals = table[:, :dim]
    if np.any(np.abs(np.linalg.norm(normals, axis=1) - 1) > 1e-9):
        raise ConfigError(f"{path}: hyperplane normals must be unit vectors")
    # remove rounding left by CSV text so the stricter Hyperplane check holds
    return normals / np.linalg.norm(normals, axis=1, keepdims=True), table[:, dim]


def cmd_oracle_eval(cfg: Config, args) -> None:
    o = _seeded(cfg.section("oracle_eval"), args.seed)
    path = args.dataset or o["dataset"]
    ds = _load_dataset(path) if path else dataset_from_config(cfg, args.seed)
    planes = _read_hyperplanes(o["hyperplanes"], ds.ambient_dim) if o["hyperplanes"] else None
    try:
        rows, summary = oracle_eval(ds, o["deltas"], o["queries"], o["max_distance"], o["d"], o["c_M"],
                                    o["grid"], o["seed"], planes)
    except ValueError as exc:
        raise StageError("oracle", str(exc)) from exc
    dim = ds.ambient_dim
    columns = (["delta", "query"] + [f"b{j}" for j in range(dim)]
               + ["t", "exact", "estimate", "raw", "error", "clamped", "j_final", "Gamma_est",
                  "log_Gamma_quad", "envelope_lo", "envelope_hi", "contained"])
    write_rows(os.path.join(args.out, "queries.csv"), rows, columns)
    write_json(os.path.join(args.out, "summary.json"), summary)


def cmd_cryoem(cfg: Config, args) -> None:
    c = _seeded(cfg.section("cryoem"), args.seed)
    provider = "exact" if args.exact_oracle else c["provider"]
    ds, report, extra = cryoem_run(c["k"], c["n_pix"], c["density"], c["count"], c["n0"], c["n1"],
                                   c["sigma_rel"], c["D"], c["mesh"], c["delta"], provider, c["c_M"],
                                   c["seed"], args.threads)
    ds.save(os.path.join(args.out, "dataset"))
    report.write(os.path.join(args.out, "report"))
    write_json(os.path.join(args.out, "cryoem.json"), extra | {"summary": report.summary(),
                                                               "budget": report.budget,
                                                               "constants": report.constants,
                                                               "notes": report.notes})


def cmd_bounds(cfg: Config, args) -> None:
    b = cfg.section("bounds")
    try:
        out = bounds_report(**b)
    except ValueError as exc:
        raise ConfigError(f"[bounds] {exc}") from exc
    write_json(os.path.join(args.out, "bounds.json"), out)


COMMANDS = {
    "generate": cmd_generate,
    "denoise": cmd_denoise,
    "hypocycloid": cmd_hypocycloid,
    "oracle-eval": cmd_oracle_eval,
    "cryoem": cmd_cryoem,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hulldenoise", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config file (sectioned key = value)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--exact-oracle", action="store_true",
                       help="use exact hull support values instead of the statistical oracle")
        if name in ("denoise", "oracle-eval"):
            p.add_argument("dataset", nargs="?", help="dataset directory (default: generate from [data])")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return 2
    out = os.path.abspath(args.out)
    lock = FileLock(out.rstrip(os.sep) + ".lock")
    try:
        cfg = load_config(args.config)
        os.makedirs(out, exist_ok=True)
        try:
            lock.acquire(timeout=0)
        except Timeout as exc:
            raise OutputLocked(f"output directory {out} is in use by another run") from exc
        try:
            COMMANDS[args.command](cfg, args)
        finally:
            lock.release()
    except DenoiseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return StageError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
