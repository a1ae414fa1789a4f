"""Command-line surface: translate, compare, analyze-stats, bench-mem.

Every run writes its fully-resolved configuration next to its outputs so
results are reproducible from the artifacts alone. Flags are flat to keep
ablation sweeps scriptable; ``--config FILE`` loads a JSON object of flag
defaults (command-line flags still win).

Exit codes: 0 success, 1 runtime failure inside the engine, 2 bad flags or
unusable configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .generator import Generator, GeneratorConfig
from .imageio import read_image, signed_to_u8, write_image
from .metrics import (
    histogram_correlation,
    seam_discrepancy,
    sobel_gradient_ycbcr,
    ssim,
    stats_similarity,
)
from .normalize import NormMode, build_kernel
from .pipeline import DEFAULT_FULL_IN_PIXEL_BUDGET, make_grid, translate
from .synthetic import gradient_image
from .weights import WeightStore

THREADS_ENV = "KINTILE_THREADS"


class ConfigError(Exception):
    """Unusable configuration; maps to exit code 2."""


@dataclass
class RunConfig:
    command: str
    input: Optional[str] = None
    output: Optional[str] = None
    out_dir: Optional[str] = None
    mode: Optional[str] = None
    kernel: str = "constant"
    kernel_size: int = 3
    kernel_sigma: Optional[float] = None
    patch: int = 512
    width: int = 64
    resblocks: int = 9
    policy: str = "pad-reflect"
    seed: Optional[int] = None
    weights: Optional[str] = None
    threads: int = 1
    order: str = "row-major"
    save_tables: Optional[str] = None
    load_tables: Optional[str] = None
    report: Optional[str] = None
    full_in_budget: int = DEFAULT_FULL_IN_PIXEL_BUDGET
    layers: Optional[str] = None
    max_distance: float = 5000.0
    max_pairs: int = 5000
    grids: str = "2,10"
    full_in_sizes: str = "256,512"
    modes: str = "patch-in,tin,kin"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of flag defaults")
    p.add_argument("--seed", type=int, help="seed for deterministic random weights")
    p.add_argument("--weights", help="weight container (.urw)")
    p.add_argument("--patch", type=int, default=512, help="patch size (default 512)")
    p.add_argument("--width", type=int, default=64, help="generator base width")
    p.add_argument("--resblocks", type=int, default=9, help="residual block count")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker threads (default ${THREADS_ENV} or 1)")


def _add_kernel(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", default="constant", choices=["constant", "gaussian", "global"])
    p.add_argument("--kernel-size", type=int, default=3, dest="kernel_size")
    p.add_argument("--kernel-sigma", type=float, default=None, dest="kernel_sigma",
                   help="gaussian sigma (default size/3)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kintile",
                                 description="Constant-memory tiled image translation")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("translate", help="translate one image under a normalization mode")
    _add_common(t)
    _add_kernel(t)
    t.add_argument("--input", required=True)
    t.add_argument("--output", required=True)
    t.add_argument("--mode", required=True, choices=["full-in", "patch-in", "tin", "kin"])
    t.add_argument("--policy", default="pad-reflect", choices=["pad-reflect", "strict-crop"])
    t.add_argument("--order", default="row-major",
                   choices=["row-major", "column-major", "random"])
    t.add_argument("--save-tables", dest="save_tables")
    t.add_argument("--load-tables", dest="load_tables")
    t.add_argument("--report", help="report JSON path (default <output>.report.json)")
    t.add_argument("--full-in-budget", type=int, default=DEFAULT_FULL_IN_PIXEL_BUDGET,
                   dest="full_in_budget", help="max pixels for full-in mode")

    c = sub.add_parser("compare", help="run patch-in, tin and kin on one input; emit metrics")
    _add_common(c)
    _add_kernel(c)
    c.add_argument("--input", required=True)
    c.add_argument("--out-dir", required=True, dest="out_dir")
    c.add_argument("--policy", default="pad-reflect", choices=["pad-reflect", "strict-crop"])

    a = sub.add_parser("analyze-stats", help="per-layer statistics similarity vs distance")
    _add_common(a)
    a.add_argument("--input", required=True)
    a.add_argument("--output", required=True, help="CSV path")
    a.add_argument("--layers", help="comma-separated layer ids (default all)")
    a.add_argument("--max-distance", type=float, default=5000.0, dest="max_distance")
    a.add_argument("--max-pairs", type=int, default=5000, dest="max_pairs")

    b = sub.add_parser("bench-mem", help="peak-memory benchmark over growing images")
    _add_common(b)
    _add_kernel(b)
    b.add_argument("--output", required=True, help="JSON path")
    b.add_argument("--grids", default="2,10", help="patch-grid sides for tiled modes")
    b.add_argument("--modes", default="patch-in,tin,kin")
    b.add_argument("--full-in-sizes", default="256,512", dest="full_in_sizes",
                   help="square image sizes for the full-in growth check")
    b.add_argument("--full-in-budget", type=int, default=DEFAULT_FULL_IN_PIXEL_BUDGET,
                   dest="full_in_budget")
    return ap


def _parse(argv) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        with open(args.config) as f:
            overrides = json.load(f)
        bad = [k for k in overrides if not hasattr(args, k)]
        if bad:
            raise ConfigError(f"--config has unknown keys: {bad}")
        # reparse with config values as defaults so explicit flags win
        ap2 = build_parser()
        for sp in ap2._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
            sp.set_defaults(**overrides)
        args = ap2.parse_args(argv)
    return args


def _run_config(args: argparse.Namespace) -> RunConfig:
    fields = {k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__}
    return RunConfig(**fields)


def _build_generator(cfg: RunConfig) -> Generator:
    gencfg = GeneratorConfig(base_width=cfg.width, n_resblocks=cfg.resblocks,
                             patch_size=cfg.patch)
    if cfg.weights is not None:
        return Generator.build(gencfg, WeightStore.load(cfg.weights))
    if cfg.seed is not None:
        return Generator.build(gencfg, cfg.seed)
    raise ConfigError("either --weights or --seed is required")


def _mode_from(cfg: RunConfig, mode_name: str) -> NormMode:
    if mode_name == "kin":
        size = None if cfg.kernel == "global" else cfg.kernel_size
        return NormMode.kin(build_kernel(cfg.kernel, size, cfg.kernel_sigma))
    return NormMode(mode_name)


def _write_sidecar(path: Path, cfg: RunConfig) -> None:
    Path(str(path) + ".run.json").write_text(cfg.to_json())


def cmd_translate(cfg: RunConfig) -> int:
    img = read_image(cfg.input)
    gen = _build_generator(cfg)
    mode = _mode_from(cfg, cfg.mode)
    out, report = translate(
        img, gen, mode, policy=cfg.policy, threads=cfg.threads, order=cfg.order,
        full_in_pixel_budget=cfg.full_in_budget,
        load_tables=cfg.load_tables, save_tables=cfg.save_tables,
    )
    write_image(cfg.output, out)
    report.output_path = str(cfg.output)
    report_path = Path(cfg.report) if cfg.report else Path(str(cfg.output) + ".report.json")
    report_path.write_text(report.to_json(config=asdict(cfg)))
    print(f"wrote {cfg.output} ({report.rows}x{report.cols} patches, "
          f"peak {report.peak_bytes / 1e6:.1f} MB, {report.total_seconds:.2f}s)")
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    img = read_image(cfg.input)
    gen = _build_generator(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    src_u8 = signed_to_u8(img).astype(np.float64)
    grid = make_grid(img.shape[1], img.shape[2], cfg.patch, cfg.policy)
    rows = []
    for mode_name in ("patch-in", "tin", "kin"):
        mode = _mode_from(cfg, mode_name)
        out, report = translate(img, gen, mode, policy=cfg.policy, threads=cfg.threads)
        out_path = out_dir / f"{mode_name}.png"
        write_image(out_path, out)
        out_u8 = signed_to_u8(out).astype(np.float64)
        rows.append({
            "mode": mode_name,
            "kernel": report.kernel or "",
            "hist_corr_vs_source": f"{histogram_correlation(out_u8, src_u8):.6f}",
            "sobel_grad": f"{sobel_gradient_ycbcr(out_u8):.6f}",
            "ssim_vs_source": f"{ssim(out_u8, src_u8):.6f}",
            "seam": f"{seam_discrepancy(out_u8, grid):.6f}",
            "cache_seconds": f"{report.cache_seconds:.4f}",
            "infer_seconds": f"{report.infer_seconds:.4f}",
            "peak_bytes": str(report.peak_bytes),
        })
    csv_path = out_dir / "compare.csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    _write_sidecar(csv_path, cfg)
    print(f"wrote {csv_path}")
    return 0


def cmd_analyze_stats(cfg: RunConfig) -> int:
    img = read_image(cfg.input)
    gen = _build_generator(cfg)
    grid = make_grid(img.shape[1], img.shape[2], cfg.patch)
    layers = None
    if cfg.layers:
        layers = [int(x) for x in cfg.layers.split(",") if x.strip() != ""]
    records = stats_similarity(gen, img, grid, layers=layers,
                               max_distance_px=cfg.max_distance, max_pairs=cfg.max_pairs)
    out_path = Path(cfg.output)
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["layer", "i_a", "j_a", "i_b", "j_b", "distance_px",
                    "mu_cos", "sigma_cos", "mu_l2", "sigma_l2"])
        for r in records:
            w.writerow([r.layer_id, r.coord_a[0], r.coord_a[1], r.coord_b[0], r.coord_b[1],
                        f"{r.distance_px:.3f}", f"{r.mu_cos:.8f}", f"{r.sigma_cos:.8f}",
                        f"{r.mu_l2:.8f}", f"{r.sigma_l2:.8f}"])
    _write_sidecar(out_path, cfg)
    print(f"wrote {out_path} ({len(records)} records)")
    return 0


def cmd_bench_mem(cfg: RunConfig) -> int:
    gen = _build_generator(cfg)
    grids = [int(g) for g in cfg.grids.split(",")]
    mode_names = [m.strip() for m in cfg.modes.split(",") if m.strip()]
    runs = []
    for mode_name in mode_names:
        if mode_name == "full-in":
            continue
        mode = _mode_from(cfg, mode_name)
        for g in grids:
            side = g * cfg.patch
            img = gradient_image(side, side)
            t0 = time.perf_counter()
            _, report = translate(img, gen, mode, threads=cfg.threads)
            runs.append({"mode": mode.describe(), "image_side": side, "grid": g,
                         "peak_bytes": report.peak_bytes, "table_bytes": report.table_bytes,
                         "seconds": round(time.perf_counter() - t0, 4)})
    full_sizes = [int(s) for s in cfg.full_in_sizes.split(",")]
    if "full-in" in mode_names:
        for side in full_sizes:
            img = gradient_image(side, side)
            t0 = time.perf_counter()
            _, report = translate(img, gen, NormMode.full_in(), threads=cfg.threads,
                                  full_in_pixel_budget=cfg.full_in_budget)
            runs.append({"mode": "full-in", "image_side": side, "grid": None,
                         "peak_bytes": report.peak_bytes, "table_bytes": 0,
                         "seconds": round(time.perf_counter() - t0, 4)})

    checks = {}
    ok = True
    for mode_name in mode_names:
        if mode_name == "full-in":
            continue
        peaks = [r["peak_bytes"] for r in runs if r["mode"].startswith(mode_name)]
        if len(peaks) >= 2:
            spread = (max(peaks) - min(peaks)) / max(min(peaks), 1)
            flat = bool(spread < 0.05)
            checks[f"{mode_name}_flat_within_5pct"] = flat
            checks[f"{mode_name}_spread"] = round(spread, 6)
            ok = ok and flat
    fulls = [r["peak_bytes"] for r in runs if r["mode"] == "full-in"]
    if len(fulls) >= 2:
        area_ratio = (full_sizes[-1] / full_sizes[0]) ** 2
        growth = fulls[-1] / max(fulls[0], 1)
        checks["full_in_growth"] = round(growth, 4)
        checks["full_in_grows_with_area"] = bool(growth >= area_ratio)

    payload = {"config": json.loads(cfg.to_json()), "runs": runs, "checks": checks}
    Path(cfg.output).write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"wrote {cfg.output}; checks: {checks}")
    return 0 if ok else 1


def main(argv=None) -> int:
    try:
        args = _parse(argv)
        cfg = _run_config(args)
        if args.command == "translate":
            return cmd_translate(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        if args.command == "analyze-stats":
            return cmd_analyze_stats(cfg)
        if args.command == "bench-mem":
            return cmd_bench_mem(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
