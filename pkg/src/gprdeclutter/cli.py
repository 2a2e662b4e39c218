"""gprd: simulate, hybridize, train, declutter, and evaluate B-scan sets.

Every command writes a manifest.json capturing its arguments; re-running a
command with --manifest reproduces the outputs bit-exactly. GPRD_THREADS
caps per-scan parallelism (default 1, fully deterministic).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .classical import mean_subtraction, rpca_removal, svd_removal
from .metrics import (
    MsSsimConfig,
    TargetMask,
    improvement_factor,
    mae,
    mask_from_ground_truth,
    ms_ssim,
    mse,
    psnr,
    scr,
)
from .network import (
    CRNetConfig,
    CRNetModel,
    TrainConfig,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from .radargram import Radargram, normalize_unit, read_container, write_container
from .report import aggregate_rows, render_report_figures, write_heatmap_pgm, write_metric_rows
from .simulator import (
    SOIL_PRESETS,
    SURFACE_KINDS,
    SceneGridConfig,
    generate_dataset,
    hybridize,
)


class CliError(Exception):
    pass


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        size = (int(h), int(w))
    except ValueError as exc:
        raise CliError(f"--size must look like 256x64, got {text!r}") from exc
    if size[0] < 1 or size[1] < 1:
        raise CliError(f"--size must be positive, got {text!r}")
    return size


def _parse_names(text: str, allowed: tuple[str, ...], flag: str) -> tuple[str, ...]:
    if text == "all":
        return tuple(allowed)
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    for name in names:
        if name not in allowed:
            raise CliError(f"{flag} got unknown value {name!r}; allowed: {', '.join(allowed)}")
    if not names:
        raise CliError(f"{flag} is empty")
    return names


def _parse_counts(text: str) -> tuple[int, ...]:
    try:
        counts = tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise CliError(f"--targets must be an integer list like 1,2,3, got {text!r}") from exc
    if any(c < 0 or c > 3 for c in counts):
        raise CliError("target counts must be within 0..3")
    return counts


def _scan_files(path: Path, role: str) -> list[Path]:
    if not path.exists():
        raise CliError(f"{role} path does not exist: {path}")
    if path.is_file():
        return [path]
    files = sorted(p for p in path.glob("*.gprb") if not p.stem.endswith("_gt"))
    if not files:
        raise CliError(f"no .gprb scans found under {role} path {path}")
    return files


def _gt_files(path: Path) -> list[Path]:
    if not path.exists():
        raise CliError(f"ground-truth path does not exist: {path}")
    if path.is_file():
        return [path]
    files = sorted(path.glob("*_gt.gprb"))
    if not files:
        files = sorted(path.glob("*.gprb"))
    if not files:
        raise CliError(f"no ground-truth scans found under {path}")
    return files


def _thread_map(fn, items):
    threads = int(os.environ.get("GPRD_THREADS", "1") or "1")
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _write_manifest(out_dir: Path, command: str, args: dict, extra: dict | None = None) -> None:
    payload = {"tool": "gprd", "version": __version__, "command": command, "args": args}
    if extra:
        payload.update(extra)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _load_manifest_args(parser_args: argparse.Namespace) -> argparse.Namespace:
    path = Path(parser_args.manifest)
    if not path.exists():
        raise CliError(f"manifest does not exist: {path}")
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("command") != parser_args.command:
        raise CliError(
            f"manifest is for command {payload.get('command')!r}, not {parser_args.command!r}"
        )
    for key, value in payload["args"].items():
        if key == "out" and parser_args.out is not None:
            continue  # allow redirecting reruns to a fresh directory
        setattr(parser_args, key, value)
    return parser_args


def _mask_for(gt: Radargram, frac: float) -> TargetMask | None:
    """Target mask from a stored (possibly normalized) ground truth: the
    background level is its median, targets are large deviations from it."""
    centered = gt.data - np.median(gt.data)
    if np.max(np.abs(centered)) == 0:
        return None
    return mask_from_ground_truth(centered, frac)


def _metric_row(scan_name, method, processed: Radargram, gt: Radargram, raw: Radargram, frac: float):
    gt_n = normalize_unit(gt)
    proc_n = normalize_unit(processed)
    mask = _mask_for(gt, frac)
    if mask is None:
        scr_raw = scr_proc = im_db = math.nan
    else:
        scr_raw = scr(raw, mask)
        scr_proc = scr(processed, mask)
        im_db = improvement_factor(raw, processed, mask)
    return {
        "scan": scan_name,
        "method": method,
        "mae": mae(proc_n, gt_n),
        "mse": mse(proc_n, gt_n),
        "psnr": psnr(proc_n, gt_n),
        "ms_ssim": ms_ssim(proc_n, gt_n),
        "scr_raw": scr_raw,
        "scr_proc": scr_proc,
        "im_db": im_db,
    }


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    height, width = _parse_size(args.size)
    cfg = SceneGridConfig(
        count=args.count,
        seed=args.seed,
        height=height,
        width=width,
        surfaces=_parse_names(args.surface, SURFACE_KINDS, "--surface"),
        soils=_parse_names(args.soil, tuple(SOIL_PRESETS), "--soil"),
        target_counts=_parse_counts(args.targets),
        normalize=True,
    )
    dataset, scenes = generate_dataset(cfg)
    for i, pair in enumerate(dataset):
        write_container(out_dir / f"pair_{i:04d}_raw.gprb", pair.raw)
        write_container(out_dir / f"pair_{i:04d}_gt.gprb", pair.clutter_free)
    scene_dicts = [
        {
            "surface": scene.surface.kind,
            "roughness_amp": scene.surface.roughness_amp,
            "permittivity": scene.soil.relative_permittivity,
            "heterogeneity": scene.soil.heterogeneity_level,
            "seed": scene.seed,
            "targets": [
                {"x0": t.x0, "depth": t.depth, "radius": t.radius, "reflectivity": t.reflectivity}
                for t in scene.targets
            ],
        }
        for scene in scenes
    ]
    _write_manifest(out_dir, "simulate", _args_dict(args), {"scenes": scene_dicts})
    print(f"wrote {len(dataset)} pairs to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# hybridize
# ---------------------------------------------------------------------------


def cmd_hybridize(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    size = _parse_size(args.size)
    clutter_files = _scan_files(Path(args.clutter), "clutter")
    target_files = _gt_files(Path(args.targets))
    rng = np.random.default_rng(args.seed)
    pairings = []
    index = 0
    for cpath in clutter_files:
        clutter = read_container(cpath)
        picks = rng.choice(len(target_files), size=min(args.per_clutter, len(target_files)), replace=False)
        for pick in picks:
            tpath = target_files[int(pick)]
            pair = hybridize(clutter, read_container(tpath), mix=args.mix, size=size)
            write_container(out_dir / f"hybrid_{index:04d}_raw.gprb", pair.raw)
            write_container(out_dir / f"hybrid_{index:04d}_gt.gprb", pair.clutter_free)
            pairings.append({"clutter": cpath.name, "target": tpath.name})
            index += 1
    _write_manifest(out_dir, "hybridize", _args_dict(args), {"pairings": pairings})
    print(f"wrote {index} hybrid pairs to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _load_pairs(data_dir: Path):
    from .radargram import Dataset, DatasetPair

    raw_files = sorted(data_dir.glob("*_raw.gprb"))
    if not raw_files:
        raise CliError(f"no *_raw.gprb pairs under {data_dir}")
    pairs = []
    for raw_path in raw_files:
        gt_path = raw_path.with_name(raw_path.name.replace("_raw.gprb", "_gt.gprb"))
        if not gt_path.exists():
            raise CliError(f"missing ground truth for {raw_path.name}: {gt_path}")
        pairs.append(DatasetPair(raw=read_container(raw_path), clutter_free=read_container(gt_path)))
    return Dataset(pairs=pairs)


def cmd_train(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = _load_pairs(Path(args.data))
    model = CRNetModel(CRNetConfig(base_width=args.base_width, init=args.init), seed=args.seed)
    cfg = TrainConfig(
        batch_size=args.batch,
        epochs=args.epochs,
        lr0=args.lr,
        seed=args.seed,
        loss=args.loss,
        max_steps=args.steps,
    )
    result = train(model, dataset, cfg)
    save_checkpoint(out_dir / "model.crn", model)
    with open(out_dir / "history.csv", "w") as fh:
        fh.write("epoch,mean_loss\n")
        for epoch, value in enumerate(result.epoch_losses):
            fh.write(f"{epoch},{value:.8f}\n")
    _write_manifest(
        out_dir, "train", _args_dict(args),
        {"steps": result.steps, "final_loss": result.epoch_losses[-1]},
    )
    print(
        f"trained {result.steps} steps ({result.seconds:.1f}s); "
        f"loss {result.epoch_losses[0]:.4f} -> {result.epoch_losses[-1]:.4f}; "
        f"checkpoint at {out_dir / 'model.crn'}"
    )
    return 0


# ---------------------------------------------------------------------------
# declutter
# ---------------------------------------------------------------------------


def _window_bounds(window: str | None, width: int) -> tuple[int, int]:
    if not window:
        return 1, width
    try:
        start, end = (int(p) for p in window.split(":"))
    except ValueError as exc:
        raise CliError(f"--window must look like START:END (1-based), got {window!r}") from exc
    return start, end


def _method_label(args) -> str:
    if args.method == "meansub":
        return f"meansub[window={args.window or 'all'}]"
    if args.method == "svd":
        return f"svd[k={args.k}]"
    if args.method == "rpca":
        return f"rpca[lambda={args.lam} tol={args.tol}]"
    return f"crnet[checkpoint={Path(args.checkpoint).name}]"


def cmd_declutter(args) -> int:
    if args.method == "crnet" and not args.checkpoint:
        raise CliError("--method crnet requires --checkpoint")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scan_files = _scan_files(Path(args.input), "input")
    gt_files = _gt_files(Path(args.gt)) if args.gt else None
    if gt_files is not None and len(gt_files) != len(scan_files):
        raise CliError(
            f"mismatched counts: {len(scan_files)} scans vs {len(gt_files)} ground truths"
        )
    model = load_checkpoint(args.checkpoint) if args.method == "crnet" else None

    def process(path: Path) -> Radargram:
        scan = normalize_unit(read_container(path))
        if args.method == "meansub":
            start, end = _window_bounds(args.window, scan.width)
            return mean_subtraction(scan, start, end)
        if args.method == "svd":
            return svd_removal(scan, k=args.k)
        if args.method == "rpca":
            return rpca_removal(scan, lam=args.lam, tol=args.tol, max_iter=args.max_iter)
        return predict(model, scan)

    processed = _thread_map(process, scan_files)
    for path, result in zip(scan_files, processed):
        write_container(out_dir / path.name, result)

    label = _method_label(args)
    rows = []
    if gt_files is not None:
        for path, result, gt_path in zip(scan_files, processed, gt_files):
            gt = read_container(gt_path)
            raw = normalize_unit(read_container(path))
            rows.append(_metric_row(path.name, label, result, gt, raw, args.mask_frac))
        write_metric_rows(out_dir / "report.csv", rows)
    _write_manifest(out_dir, "declutter", _args_dict(args), {"method_label": label})
    print(f"decluttered {len(scan_files)} scans with {label} into {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def cmd_evaluate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw_files = _scan_files(Path(args.raw), "raw")
    gt_files = _gt_files(Path(args.gt))
    if len(raw_files) != len(gt_files):
        raise CliError(f"mismatched counts: {len(raw_files)} raw vs {len(gt_files)} ground truths")
    preds: dict[str, list[Path]] = {}
    for spec_item in args.pred:
        if "=" not in spec_item:
            raise CliError(f"--pred expects NAME=DIR, got {spec_item!r}")
        name, _, folder = spec_item.partition("=")
        files = _scan_files(Path(folder), f"prediction {name!r}")
        if len(files) != len(raw_files):
            raise CliError(
                f"prediction {name!r} has {len(files)} scans, expected {len(raw_files)}"
            )
        preds[name] = files

    msssim_cfg = MsSsimConfig(windowed=not args.global_msssim)
    heat_dir = out_dir / "heatmaps"
    heat_dir.mkdir(exist_ok=True)
    rows = []
    example: dict[str, Radargram] = {}
    for i, (raw_path, gt_path) in enumerate(zip(raw_files, gt_files)):
        raw = normalize_unit(read_container(raw_path))
        gt = read_container(gt_path)
        stem = raw_path.stem
        write_heatmap_pgm(heat_dir / f"{stem}_raw.pgm", raw)
        write_heatmap_pgm(heat_dir / f"{stem}_gt.pgm", normalize_unit(gt))
        if i == 0:
            example["raw"] = raw
            example["ground truth"] = normalize_unit(gt)
        for name in sorted(preds):
            processed = read_container(preds[name][i])
            row = _metric_row(raw_path.name, name, processed, gt, raw, args.mask_frac)
            if args.global_msssim:
                row["ms_ssim"] = ms_ssim(normalize_unit(processed), normalize_unit(gt), msssim_cfg)
            rows.append(row)
            write_heatmap_pgm(heat_dir / f"{stem}_{name}.pgm", normalize_unit(processed))
            if i == 0:
                example[name] = normalize_unit(processed)

    aggregates = aggregate_rows(rows)
    write_metric_rows(out_dir / "report.csv", rows)
    write_metric_rows(out_dir / "aggregate.csv", aggregates)
    figures = render_report_figures(out_dir / "figures", rows, aggregates, example)
    _write_manifest(out_dir, "evaluate", _args_dict(args), {"methods": sorted(preds)})
    print(
        f"scored {len(raw_files)} scans x {len(preds)} methods; report at "
        f"{out_dir / 'report.csv'}, {len(figures)} figures"
    )
    return 0


# ---------------------------------------------------------------------------
# parser plumbing
# ---------------------------------------------------------------------------


_MANIFEST_SKIP = {"func", "command", "manifest"}


def _args_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in _MANIFEST_SKIP}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gprd",
        description="Simulate, declutter, and score ground-penetrating-radar B-scans.",
    )
    parser.add_argument("--version", action="version", version=f"gprd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate paired raw/clutter-free scans")
    sim.add_argument("--out", required=False, help="output directory")
    sim.add_argument("--count", type=int, default=10)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--size", default="256x64", help="HxW, default 256x64")
    sim.add_argument("--surface", default="all", help=f"comma list of {','.join(SURFACE_KINDS)} or 'all'")
    sim.add_argument("--soil", default="all", help=f"comma list of {','.join(SOIL_PRESETS)} or 'all'")
    sim.add_argument("--targets", default="1,2,3", help="comma list of per-scene target counts")
    sim.set_defaults(func=cmd_simulate)

    hyb = sub.add_parser("hybridize", help="combine clutter-only scans with clutter-free scans")
    hyb.add_argument("--clutter", required=False, help="dir or file of clutter-only scans")
    hyb.add_argument("--targets", required=False, help="dir or file of clutter-free scans")
    hyb.add_argument("--out", required=False)
    hyb.add_argument("--mix", type=float, default=1.0)
    hyb.add_argument("--per-clutter", dest="per_clutter", type=int, default=5,
                     help="clutter-free partners per clutter scan")
    hyb.add_argument("--seed", type=int, default=0)
    hyb.add_argument("--size", default="256x64")
    hyb.set_defaults(func=cmd_hybridize)

    tr = sub.add_parser("train", help="train the clutter-removal network")
    tr.add_argument("--data", required=False, help="directory of *_raw/*_gt pairs")
    tr.add_argument("--out", required=False)
    tr.add_argument("--epochs", type=int, default=100)
    tr.add_argument("--batch", type=int, default=40)
    tr.add_argument("--lr", type=float, default=1e-4)
    tr.add_argument("--loss", choices=["combined", "mae", "mse", "msssim"], default="combined")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--base-width", dest="base_width", type=int, default=64)
    tr.add_argument("--steps", type=int, default=None, help="cap on optimizer steps")
    tr.add_argument("--init", choices=["scaled", "paper-gaussian"], default="scaled")
    tr.set_defaults(func=cmd_train)

    dec = sub.add_parser("declutter", help="remove clutter from scans")
    dec.add_argument("--method", choices=["meansub", "svd", "rpca", "crnet"], required=True)
    dec.add_argument("--in", dest="input", required=False, help="dir or file of raw scans")
    dec.add_argument("--out", required=False)
    dec.add_argument("--gt", default=None, help="optional ground-truth dir for per-scan metrics")
    dec.add_argument("--k", type=int, default=1, help="components removed by svd")
    dec.add_argument("--lambda", dest="lam", type=float, default=3e-2, help="rpca sparsity weight")
    dec.add_argument("--tol", type=float, default=1e-7)
    dec.add_argument("--max-iter", dest="max_iter", type=int, default=1000)
    dec.add_argument("--window", default=None, help="meansub column window START:END, 1-based")
    dec.add_argument("--checkpoint", default=None, help="crnet checkpoint path")
    dec.add_argument("--mask-frac", dest="mask_frac", type=float, default=0.1)
    dec.set_defaults(func=cmd_declutter)

    ev = sub.add_parser("evaluate", help="score processed scans against ground truth")
    ev.add_argument("--raw", required=False, help="dir of raw scans")
    ev.add_argument("--gt", required=False, help="dir of ground-truth scans")
    ev.add_argument("--pred", action="append", default=[], help="NAME=DIR, repeatable")
    ev.add_argument("--out", required=False)
    ev.add_argument("--mask-frac", dest="mask_frac", type=float, default=0.1)
    ev.add_argument("--global-msssim", dest="global_msssim", action="store_true",
                    help="whole-image-moment MS-SSIM variant")
    ev.set_defaults(func=cmd_evaluate)

    for p in (sim, hyb, tr, dec, ev):
        p.add_argument("--manifest", default=None, help="re-run from a saved manifest.json")
    return parser


_REQUIRED = {
    "simulate": ["out"],
    "hybridize": ["clutter", "targets", "out"],
    "train": ["data", "out"],
    "declutter": ["input", "out"],
    "evaluate": ["raw", "gt", "out"],
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.manifest:
            args = _load_manifest_args(args)
        missing = [name for name in _REQUIRED[args.command] if getattr(args, name) in (None, [])]
        if missing:
            raise CliError(f"missing required arguments for {args.command}: {', '.join(missing)}")
        if args.command == "evaluate" and not args.pred:
            raise CliError("evaluate needs at least one --pred NAME=DIR")
        return args.func(args)
    except CliError as exc:
        print(f"gprd: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"gprd: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
