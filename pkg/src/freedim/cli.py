"""Command-line front end.

Every subcommand needs ``--seed``; options may also come from ``--config file.json``
(keys are option names with dashes or underscores; explicit flags win).
Exit codes: 0 pass, 2 quantitative failure (report still written), 1 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - running from a checkout
        return "0.1.0"


# -- parsing helpers ----------------------------------------------------------------


def _ints(text) -> list[int]:
    if isinstance(text, list):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def _floats(text) -> list[float]:
    if isinstance(text, list):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


DEFAULTS = {
    "sample": {"eps": 0.05, "count": 1, "degree": 2, "iters": 500, "output": "samples"},
    "dim": {"mode": "delta_top", "omega": 0.1, "samples": 40, "eps": 0.01},
    "cover": {"metric": "OpNorm", "eps": 0.01, "omega_grid": "0.4,0.2,0.1", "k": 1},
    "orbit-dist": {"restarts": 8},
    "mf-check": {"check": "approx", "eps": 0.05, "degree": 2, "tol": 0.08, "battery_size": 12,
                 "sizes": "50,100,200"},
    "free-product": {"sizes": "50,100,200", "output": "free_product"},
    "battery": {"degree": 2},
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="freedim", description="Microstate and free-dimension laboratory.")
    parser.add_argument("--version", action="version", version=tool_version())
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON file with option values")
        p.add_argument("--seed", type=int, help="random seed (required)")
        p.add_argument("--format", choices=["json", "csv", "table"])
        return p

    p = common(sub.add_parser("sample", help="sample microstates to HTUP1 files"))
    p.add_argument("--presentation")
    p.add_argument("--k", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--degree", type=int, help="battery word degree")
    p.add_argument("--iters", type=int)
    p.add_argument("--output", help="output directory")

    p = common(sub.add_parser("dim", help="dimension estimators"))
    p.add_argument("--mode", choices=["delta_top", "ktop2", "k2_tracial", "capacity"])
    p.add_argument("--presentation")
    p.add_argument("--k-list", dest="k_list")
    p.add_argument("--omega", type=float)
    p.add_argument("--traces", help="JSON list of traces")
    p.add_argument("--samples", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--output")

    p = common(sub.add_parser("cover", help="brute-force covering counts"))
    p.add_argument("--presentation")
    p.add_argument("--k", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--omega-grid", dest="omega_grid")
    p.add_argument("--metric", choices=["OpNorm", "Trace2", "Orbit2"])
    p.add_argument("--grid-step", dest="grid_step", type=float)
    p.add_argument("--output")

    p = common(sub.add_parser("orbit-dist", help="unitary-orbit distance of two HTUP1 files"))
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--restarts", type=int)
    p.add_argument("--oracle", action="store_true", default=None, help="also print the sorted-spectrum value")
    p.add_argument("--witness", help="write the optimal unitary to this .npy file")
    p.add_argument("--output")

    p = common(sub.add_parser("mf-check", help="matrix-model checks"))
    p.add_argument("--check", choices=["approx", "convergence", "free-product"])
    p.add_argument("--presentation")
    p.add_argument("--k-list", dest="k_list")
    p.add_argument("--eps", type=float)
    p.add_argument("--degree", type=int)
    p.add_argument("--models", help="comma-separated HTUP1 files of increasing size")
    p.add_argument("--left")
    p.add_argument("--right")
    p.add_argument("--sizes")
    p.add_argument("--seeds", help="comma-separated seeds for free-product runs")
    p.add_argument("--tol", type=float)
    p.add_argument("--battery-size", dest="battery_size", type=int)
    p.add_argument("--output")

    p = common(sub.add_parser("free-product", help="write free-product matrix models"))
    p.add_argument("--left")
    p.add_argument("--right")
    p.add_argument("--sizes")
    p.add_argument("--output", help="output directory")

    p = common(sub.add_parser("battery", help="print or write a polynomial battery"))
    p.add_argument("--presentation")
    p.add_argument("--n", type=int, help="generator count when no presentation is given")
    p.add_argument("--degree", type=int)
    p.add_argument("--output")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge --config values under explicit flags, apply defaults, check the seed."""
    cfg = {k: v for k, v in vars(args).items() if k not in ("config",)}
    if args.config:
        try:
            extra = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        for key, val in extra.items():
            key = key.replace("-", "_")
            if key not in cfg:
                raise UsageError(f"unknown config key {key!r}")
            if cfg[key] is None:
                cfg[key] = val
    for key, val in DEFAULTS.get(args.command, {}).items():
        if cfg.get(key) is None:
            cfg[key] = val
    if cfg.get("seed") is None:
        raise UsageError("--seed is required")
    return cfg


def _need(cfg, *keys):
    for key in keys:
        if cfg.get(key) is None:
            raise UsageError(f"--{key.replace('_', '-')} is required")


def _emit(cfg: dict, report: dict, text: str | None = None):
    report = dict(report)
    report["config"] = {k: v for k, v in cfg.items() if v is not None}
    report["tool_version"] = tool_version()
    blob = json.dumps(report, sort_keys=True, indent=2, default=_json_default) + "\n"
    out = cfg.get("output")
    if out and cfg.get("command") not in ("sample", "free-product"):
        Path(out).write_text(blob, encoding="utf-8")
    if cfg.get("format") == "table" and text is not None:
        print(text)
    elif not out or cfg.get("command") in ("sample", "free-product"):
        print(blob, end="")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def _finite(x: float):
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf"


# -- subcommands ------------------------------------------------------------------------


def cmd_sample(cfg: dict) -> int:
    from .matrixcore import write_htup
    from .microstates import (
        MicrostateParams,
        default_radius,
        load_presentation,
        membership_defect,
        presentation_battery,
        sample_from_model,
        sample_penalty,
        target_norms,
    )

    _need(cfg, "presentation", "k")
    p = load_presentation(cfg["presentation"])
    battery = presentation_battery(p, degree=cfg["degree"])
    targets = target_norms(p, battery)
    params = MicrostateParams(cfg["k"], cfg["eps"], default_radius(p), battery)
    outdir = Path(cfg["output"])
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(cfg["count"]):
        seed = [cfg["seed"], i]
        t = sample_from_model(p, cfg["k"], seed)
        method = "exact"
        if t is None:
            t = sample_penalty(p, params, seed=seed, iters=cfg["iters"], targets=targets).tuple
            method = "penalty"
        defect, worst = membership_defect(t, targets, params)
        name = f"sample_{i:03d}.htup"
        write_htup(t, outdir / name)
        rows.append({"file": name, "defect": defect, "worst_index": worst, "method": method,
                     "pass": bool(defect <= cfg["eps"])})
    ok = all(r["pass"] for r in rows)
    report = {"samples": rows, "battery_label": battery.label, "pass": ok}
    cfg = dict(cfg)
    (outdir / "report.json").write_text(
        json.dumps({**report, "config": cfg, "tool_version": tool_version()}, sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    table = "\n".join(f"{r['file']}  defect={r['defect']:.3e}  {r['method']}" for r in rows)
    _emit(cfg, report, table)
    return EXIT_OK if ok else EXIT_FAIL


def _load_traces(path, p):
    from .dimension import TraceSpec

    items = json.loads(Path(path).read_text(encoding="utf-8"))
    out = []
    for i, item in enumerate(items):
        name = item.get("name", f"trace{i}")
        m = int(item["m"])
        if "weights" in item:
            out.append(TraceSpec.from_weights(p, item["weights"], m, name))
        else:
            moments = {}
            for key, val in item["moments"].items():
                word = tuple(int(x) for x in key.split(",") if x.strip())
                moments[word] = complex(*val) if isinstance(val, list) else float(val)
            out.append(TraceSpec(moments, m, p.num_generators, name))
    return out


def cmd_dim(cfg: dict) -> int:
    from .dimension import delta_top_exponent, k2_tracial_exponent, ktop2_exponent, orbit_capacity
    from .microstates import load_presentation

    _need(cfg, "presentation", "k_list")
    p = load_presentation(cfg["presentation"])
    ks = _ints(cfg["k_list"])
    mode = cfg["mode"]
    if mode == "delta_top":
        rep = delta_top_exponent(p, ks, seed=cfg["seed"])
    elif mode == "ktop2":
        rep = ktop2_exponent(p, ks, omega=cfg["omega"], seed=cfg["seed"])
    else:
        _need(cfg, "traces")
        traces = _load_traces(cfg["traces"], p)
        kw = dict(samples=cfg["samples"], epsilon=cfg["eps"], seed=cfg["seed"])
        if mode == "k2_tracial":
            rep = k2_tracial_exponent(p, traces[0], ks, cfg["omega"], **kw)
        else:
            rep = orbit_capacity(p, traces, ks, cfg["omega"], **kw)
            best = rep.rows[-1].diagnostics.get("estimate_trace")
            print(f"argmax trace: {best}", file=sys.stderr)
    report = rep.to_dict()
    if cfg.get("format") == "csv":
        lines = ["k,value"] + [f"{r.k},{_finite(r.value)}" for r in rep.rows]
        print("\n".join(lines))
        return EXIT_OK
    _emit(cfg, report, rep.table())
    return EXIT_OK


def cmd_cover(cfg: dict) -> int:
    from .covering import brute_force_cover, estimates_to_csv
    from .microstates import load_presentation

    _need(cfg, "presentation")
    p = load_presentation(cfg["presentation"])
    grid = _floats(cfg["omega_grid"])
    if any(w <= 0 for w in grid) or any(b >= a for a, b in zip(grid, grid[1:])):
        raise UsageError("omega grid must be strictly decreasing positives")
    ests = []
    for w in grid:
        e = brute_force_cover(p, cfg["k"], w, cfg["eps"], cfg["metric"], cfg.get("grid_step"))
        ests.append(type(e)(**{**e.__dict__, "seed": cfg["seed"]}))
    text = estimates_to_csv(ests, cfg.get("output"))
    if not cfg.get("output"):
        print(text, end="")
    return EXIT_OK


def cmd_orbit_dist(cfg: dict) -> int:
    from .matrixcore import OrbitOptions, orbit_distance, read_htup, sorted_spectrum_distance

    a, b = read_htup(cfg["file_a"]), read_htup(cfg["file_b"])
    if a.mats.shape != b.mats.shape:
        raise UsageError(f"shape mismatch: {a.mats.shape} vs {b.mats.shape}")
    opts = OrbitOptions(restarts=cfg["restarts"], seed=cfg["seed"])
    dist, w = orbit_distance(a, b, opts)
    report = {"distance": dist, "n": a.n, "k": a.k}
    text = f"distance {dist:.12g}"
    if cfg.get("oracle"):
        if a.n != 1:
            raise UsageError("--oracle needs single-matrix files")
        ref = sorted_spectrum_distance(a.mats[0], b.mats[0])
        report.update({"oracle": ref, "gap": abs(dist - ref)})
        text += f"\noracle   {ref:.12g}\ngap      {abs(dist - ref):.3e}"
    if cfg.get("witness"):
        np.save(cfg["witness"], w)
    _emit(cfg, report, text)
    return EXIT_OK


def cmd_mf_check(cfg: dict) -> int:
    from .matrixcore import read_htup
    from .mfcheck import (
        ModelSequence,
        build_free_product_model,
        check_approximation_property,
        mf_report,
        mixed_word_battery,
        model_sequence,
    )
    from .microstates import FreeProduct, load_presentation, presentation_battery, presentation_hash

    check = cfg["check"]
    if check == "approx":
        _need(cfg, "presentation", "k_list")
        p = load_presentation(cfg["presentation"])
        battery = presentation_battery(p, degree=cfg["degree"])
        rep = check_approximation_property(p, _ints(cfg["k_list"]), cfg["eps"], battery, seed=cfg["seed"])
        report = {
            "presentation_hash": presentation_hash(p),
            "battery_label": battery.label,
            "per_k": [{"k": k, "defect": d, "pass": ok} for k, d, ok in rep.per_k],
            "pass": rep.passed,
            "seeds": [cfg["seed"]],
        }
        table = "\n".join(f"k={k:>3}  defect={d:.3e}  {'pass' if ok else 'FAIL'}" for k, d, ok in rep.per_k)
        _emit(cfg, report, table)
        return EXIT_OK if rep.passed else EXIT_FAIL
    if check == "convergence":
        _need(cfg, "presentation", "models")
        p = load_presentation(cfg["presentation"])
        tuples = [read_htup(path) for path in str(cfg["models"]).split(",")]
        ms = ModelSequence(tuple((t.k, t) for t in tuples), p)
        battery = presentation_battery(p, degree=cfg["degree"])
        report = mf_report(ms, battery, [cfg["seed"]], cfg["tol"])
        _emit(cfg, report, _deviation_text(report))
        return EXIT_OK if report["pass"] else EXIT_FAIL
    _need(cfg, "left", "right")
    left, right = load_presentation(cfg["left"]), load_presentation(cfg["right"])
    a = model_sequence(left, [_smallest_size(left)])
    b = model_sequence(right, [_smallest_size(right)])
    sizes = _ints(cfg["sizes"])
    seeds = _ints(cfg["seeds"]) if cfg.get("seeds") else [cfg["seed"]]
    battery = mixed_word_battery(cfg["battery_size"]) if left.num_generators + right.num_generators == 2 \
        else presentation_battery(FreeProduct(left, right), degree=cfg["degree"])
    runs = [mf_report(build_free_product_model(a, b, sizes, s), battery, [s], cfg["tol"]) for s in seeds]
    dev = np.mean([np.max(np.array(r["deviations"]), axis=0) for r in runs], axis=0)
    report = {
        "presentation_hash": runs[0]["presentation_hash"],
        "battery_label": battery.label,
        "sizes": sizes,
        "seeds": seeds,
        "mean_max_deviation": dev.tolist(),
        "decreasing": bool(np.all(np.diff(dev) < 0)),
        "certified": runs[0]["certified"],
        "pass": bool(dev[-1] <= cfg["tol"]),
        "runs": runs,
    }
    table = "\n".join(f"t={t:>5}  mean max deviation={d:.3e}" for t, d in zip(sizes, dev))
    _emit(cfg, report, table)
    return EXIT_OK if report["pass"] else EXIT_FAIL


def _smallest_size(p) -> int:
    from .microstates import sample_from_model

    for k in range(1, 64):
        if sample_from_model(p, k, None) is not None:
            return k
    raise UsageError(f"no small model for {p.kind}")


def _deviation_text(report: dict) -> str:
    worst = np.max(np.array(report["deviations"]), axis=0)
    lines = [f"k={k:>5}  max deviation={d:.3e}" for k, d in zip(report["sizes"], worst)]
    lines.append(f"trend {report['trend']}  {'pass' if report['pass'] else 'FAIL'}")
    return "\n".join(lines)


def cmd_free_product(cfg: dict) -> int:
    from .matrixcore import write_htup
    from .mfcheck import build_free_product_model, model_sequence
    from .microstates import load_presentation

    _need(cfg, "left", "right")
    left, right = load_presentation(cfg["left"]), load_presentation(cfg["right"])
    a = model_sequence(left, [_smallest_size(left)])
    b = model_sequence(right, [_smallest_size(right)])
    ms = build_free_product_model(a, b, _ints(cfg["sizes"]), cfg["seed"])
    outdir = Path(cfg["output"])
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    for k, t in ms.models:
        name = f"free_product_{k}.htup"
        write_htup(t, outdir / name)
        files.append(name)
    _emit(cfg, {"files": files, "sizes": ms.sizes, "certified": ms.certified})
    return EXIT_OK


def cmd_battery(cfg: dict) -> int:
    from .microstates import load_presentation, presentation_battery
    from .ncpoly import default_battery, format_poly

    if cfg.get("presentation"):
        battery = presentation_battery(load_presentation(cfg["presentation"]), degree=cfg["degree"])
    else:
        _need(cfg, "n")
        battery = default_battery(cfg["n"], cfg["degree"])
    text = "\n".join(format_poly(q) for q in battery.polys) + "\n"
    if cfg.get("output"):
        Path(cfg["output"]).write_text(f"# {battery.label}\n" + text, encoding="utf-8")
    else:
        print(text, end="")
    return EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "dim": cmd_dim,
    "cover": cmd_cover,
    "orbit-dist": cmd_orbit_dist,
    "mf-check": cmd_mf_check,
    "free-product": cmd_free_product,
    "battery": cmd_battery,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"freedim: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, TypeError, LookupError) as exc:
        print(f"freedim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
