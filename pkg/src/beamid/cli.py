"""Command-line surface: dataset generation, training, evaluation, sweeps.

Commands
--------
gen-data      simulate a scenario and write a JSON Lines dataset
train         fit the power-to-center predictor on a dataset's training split
eval          run the identification pipeline and write metric reports
sweep         run a grid of scenario pairs / sequence lengths / fractions
lint-dataset  validate a dataset file and its label firewall

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
failure.  The BEAMID_OUT_DIR environment variable, when set, anchors every
relative output path.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import datafile
from .channel import ArrayConfig, NoiseConfig
from .detect import DetectorConfig
from .errors import ConfigError, DataError, NumericError
from .evaluate import (
    SplitSpec,
    build_report,
    nested_subset,
    paired_test_windows,
    split_into_episodes,
    train_predictor,
)
from .identify import GATE_RADIUS_DEFAULT
from .predictor import CenterPredictor, GridSpec, TrainConfig
from .scene import ScenarioConfig, default_scenario, six_lane_scenario, two_lane_scenario
from .seeds import STREAMS
from .simulate import SimConfig, default_sim_config, generate_frames

PRESETS = {
    "default": default_scenario,
    "two-lane": two_lane_scenario,
    "six-lane": six_lane_scenario,
}


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2
    def error(self, message):
        raise ConfigError(message)


def resolve_out(path: str) -> Path:
    base = os.environ.get("BEAMID_OUT_DIR")
    p = Path(path)
    if base and not p.is_absolute():
        return Path(base) / p
    return p


def load_scenario_config(path: str) -> ScenarioConfig:
    """Flat JSON document whose keys are exactly the scenario field names."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: scenario config must be a JSON object")
    valid = set(ScenarioConfig.__dataclass_fields__)
    unknown = set(doc) - valid
    if unknown:
        raise ConfigError(f"{path}: unknown scenario keys {sorted(unknown)}")
    doc = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
    return ScenarioConfig(**doc)


def _scenario_from_args(args) -> ScenarioConfig:
    if args.config:
        scenario = load_scenario_config(args.config)
    else:
        scenario = PRESETS[args.preset]()
    if args.seed is not None:  # flag beats config file beats default
        scenario = replace(scenario, seed=args.seed)
    return scenario


def _sim_from_args(args, scenario: ScenarioConfig, tag: str) -> SimConfig:
    detector = DetectorConfig(
        p_miss=args.p_miss,
        sigma_det=args.sigma_det,
        fp_rate=args.fp_rate,
        occlusion_iou=args.occlusion_iou,
    )
    noise = NoiseConfig(
        symbol_power=args.symbol_power,
        noise_variance=args.noise_variance,
        subcarriers=args.subcarriers,
        sidelobe_floor=args.sidelobe_floor,
        range_ref_m=args.range_ref,
    )
    array = ArrayConfig(m=args.antennas, fov_deg=scenario.camera_fov_deg)
    return default_sim_config(
        scenario, tag=tag, detector=detector, noise=noise, array=array, beams=args.beams
    )


def _write_manifest_for(out_path: Path, args_dict: dict, seed: int, inputs, outputs) -> None:
    manifest = datafile.build_manifest(
        command=sys.argv[1:] if sys.argv[1:] else ["(library call)"],
        resolved_config=args_dict,
        seeds={"master": seed, "streams": STREAMS},
        inputs=inputs,
        outputs=outputs,
    )
    datafile.atomic_write_text(
        out_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


# ------------------------------------------------------------------ gen-data


def cmd_gen_data(args) -> int:
    scenario = _scenario_from_args(args)
    sim = _sim_from_args(args, scenario, tag=args.tag)
    seed = scenario.seed
    records = generate_frames(sim, args.frames, seed)
    out = resolve_out(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    datafile.write_dataset(out, sim, records, seed)
    _write_manifest_for(
        out.with_name(out.name + ".manifest.json"),
        datafile.header_doc(sim, args.frames, seed),
        seed,
        inputs=[args.config] if args.config else [],
        outputs=[out],
    )
    n_objects = sum(len(r.gt.objects) for r in records)
    n_dets = sum(1 for r in records for d in r.detections if d.gt_id is not None)
    print(f"wrote {out}: {len(records)} frames")
    print(f"  mean objects/frame: {n_objects / max(len(records), 1):.2f}")
    print(f"  detection rate: {n_dets / max(n_objects, 1):.3f}")
    return 0


# --------------------------------------------------------------------- train


def load_train_config(path: str | None, seed: int | None) -> TrainConfig:
    if path is None:
        cfg = TrainConfig()
    else:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        valid = set(TrainConfig.__dataclass_fields__)
        unknown = set(doc) - valid
        if unknown:
            raise ConfigError(f"{path}: unknown training keys {sorted(unknown)}")
        doc = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        cfg = TrainConfig(**doc)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg


def cmd_train(args) -> int:
    header, records = datafile.read_dataset(args.dataset)
    episodes = split_into_episodes(records, header["scenario"], header["fingerprint"])
    cfg = load_train_config(args.train_config, args.seed)
    grid = GridSpec(gx=args.grid[0], gy=args.grid[1])
    train_all, test_by_r = paired_test_windows(episodes, (1,), SplitSpec(seed=args.split_seed))
    subset = nested_subset(train_all, args.train_fraction, args.split_seed)
    predictor = train_predictor(subset, cfg, grid, header["q"], header["scenario"])

    powers = np.array([s.frame_powers[-1] for s in subset])
    centers = np.array([s.label_center for s in subset])
    test = test_by_r[1]
    held_out = (
        predictor.cell_accuracy(
            np.array([s.frame_powers[-1] for s in test]),
            np.array([s.label_center for s in test]),
        )
        if test
        else float("nan")
    )

    out = resolve_out(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    predictor.save(str(out))
    _write_manifest_for(
        out.with_name(out.name + ".manifest.json"),
        {"train_config": asdict(cfg), "train_fraction": args.train_fraction,
         "grid": list(args.grid), "split_seed": args.split_seed},
        cfg.seed,
        inputs=[args.dataset],
        outputs=[out],
    )
    print(f"trained on {len(subset)} samples (fraction {args.train_fraction})")
    print(f"  config: {asdict(cfg)}")
    print(f"  train cell accuracy: {predictor.cell_accuracy(powers, centers):.4f}")
    print(f"  held-out cell accuracy: {held_out:.4f}")
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------- eval


CSV_COLUMNS = [
    "scenario_train",
    "scenario_test",
    "train_fraction",
    "r",
    "stratum",
    "value",
    "count",
]


def write_report_files(out_dir: Path, report, dumps: list[dict]) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    report_json = out_dir / "report.json"
    datafile.atomic_write_text(
        report_json, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    report_csv = out_dir / "report.csv"
    rows = report.csv_rows()
    tmp = report_csv.with_suffix(".csv.tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    os.replace(tmp, report_csv)
    dump_path = out_dir / "predictions.jsonl"
    datafile.atomic_write_text(
        dump_path, "".join(json.dumps(d, sort_keys=True) + "\n" for d in dumps)
    )
    return [report_json, report_csv, dump_path]


def cmd_eval(args) -> int:
    predictor = CenterPredictor.load(args.checkpoint)
    r_values = tuple(sorted({int(r) for r in args.r.split(",")}))
    strata = {s.strip() for s in args.strata.split(",") if s.strip()}
    out_root = resolve_out(args.out)
    for dataset in args.dataset:
        header, records = datafile.read_dataset(dataset)
        if predictor.q != header["q"]:
            raise DataError(
                f"checkpoint was trained for {predictor.q} beams but the dataset "
                f"header declares {header['q']}"
            )
        episodes = split_into_episodes(records, header["scenario"], header["fingerprint"])
        _, test_by_r = paired_test_windows(
            episodes, r_values, SplitSpec(seed=args.split_seed)
        )
        report, dumps = build_report(
            test_by_r,
            predictor,
            scenario_train=args.train_scenario or predictor.scenario or header["scenario"],
            scenario_test=args.test_scenario or header["scenario"],
            train_fraction=args.train_fraction,
            seed=args.split_seed,
            train_samples=0,
            gate_radius=args.gate_radius,
        )
        if "objects" not in strata:
            report.by_object_count = {}
            report.object_counts = {}
        if "speed" not in strata:
            report.speed = None
        out_dir = out_root if len(args.dataset) == 1 else out_root / report.scenario_test
        outputs = write_report_files(out_dir, report, dumps)
        _write_manifest_for(
            out_dir / datafile.MANIFEST_NAME,
            {"r": list(r_values), "gate_radius": args.gate_radius,
             "split_seed": args.split_seed, "strata": sorted(strata)},
            args.split_seed,
            inputs=[dataset, args.checkpoint],
            outputs=outputs,
        )
        for r in r_values:
            print(
                f"{report.scenario_train}->{report.scenario_test} r={r}: "
                f"top-1 accuracy {report.top1.get(r, float('nan')):.4f}"
            )
        print(f"wrote {out_dir}")
    return 0


# --------------------------------------------------------------------- sweep


def _sweep_cells(grid_doc: dict) -> list[dict]:
    pairs = grid_doc.get("pairs") or [[t, t] for t in grid_doc["scenarios"]]
    fractions = grid_doc.get("train_fractions", [1.0])
    return [
        {"train": a, "test": b, "fraction": f}
        for a, b in pairs
        for f in fractions
    ]


def _cell_dir(out_dir: Path, cell: dict) -> Path:
    return out_dir / f"cell_{cell['train']}_{cell['test']}_f{cell['fraction']:g}"


def run_sweep_cell(grid_doc: dict, cell: dict, out_dir_str: str) -> dict:
    """One grid cell: generate both scenarios, train, evaluate, write reports."""
    out_dir = Path(out_dir_str)
    scenarios = {}
    for tag, doc in grid_doc["scenarios"].items():
        doc = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        scenarios[tag] = ScenarioConfig(**doc)
    detector = DetectorConfig(**{
        k: tuple(v) if isinstance(v, list) else v
        for k, v in grid_doc.get("detector", {}).items()
    })
    noise = NoiseConfig(**grid_doc.get("noise", {}))
    beams = grid_doc.get("beams", 64)
    train_doc = grid_doc.get("train", {})
    train_cfg = TrainConfig(**{
        k: tuple(v) if isinstance(v, list) else v for k, v in train_doc.items()
    })
    grid_spec = GridSpec(**grid_doc.get("grid", {}))
    r_values = tuple(grid_doc.get("r", [1, 3, 5]))
    seed = grid_doc.get("seed", 0)

    windows = {}
    for tag in {cell["train"], cell["test"]}:
        sim = default_sim_config(
            scenarios[tag], tag=tag, detector=detector, noise=noise, beams=beams
        )
        records = generate_frames(sim, grid_doc.get("frames", 5000), scenarios[tag].seed)
        episodes = split_into_episodes(records, tag, sim.fingerprint())
        windows[tag] = paired_test_windows(episodes, r_values, SplitSpec(seed=seed))

    train_all, _ = windows[cell["train"]]
    subset = nested_subset(train_all, cell["fraction"], seed)
    predictor = train_predictor(subset, train_cfg, grid_spec, beams, cell["train"])
    _, test_by_r = windows[cell["test"]]
    report, dumps = build_report(
        test_by_r,
        predictor,
        scenario_train=cell["train"],
        scenario_test=cell["test"],
        train_fraction=cell["fraction"],
        seed=seed,
        train_samples=len(subset),
    )
    cell_dir = _cell_dir(out_dir, cell)
    outputs = write_report_files(cell_dir, report, dumps)
    _write_manifest_for(
        cell_dir / datafile.MANIFEST_NAME,
        {"cell": cell, "seed": seed},
        seed,
        inputs=[],
        outputs=outputs,
    )
    return {"cell": cell, "rows": report.csv_rows()}


def cmd_sweep(args) -> int:
    with open(args.grid, encoding="utf-8") as fh:
        grid_doc = json.load(fh)
    if "scenarios" not in grid_doc or not grid_doc["scenarios"]:
        raise ConfigError(f"{args.grid}: grid needs a nonempty 'scenarios' map")
    for a, b in grid_doc.get("pairs", []):
        for tag in (a, b):
            if tag not in grid_doc["scenarios"]:
                raise ConfigError(f"{args.grid}: unknown scenario tag {tag!r}")
    out_dir = resolve_out(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = _sweep_cells(grid_doc)

    todo = []
    all_rows: list[dict] = []
    for cell in cells:
        cell_dir = _cell_dir(out_dir, cell)
        report_path = cell_dir / "report.json"
        manifest_path = cell_dir / datafile.MANIFEST_NAME
        if (
            args.resume
            and report_path.exists()
            and manifest_path.exists()
            and not datafile.verify_manifest(manifest_path)
        ):
            print(f"skip {cell_dir.name} (already complete)")
            continue
        todo.append(cell)

    failures: list[tuple[dict, str]] = []
    done = 0
    if args.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {
                pool.submit(run_sweep_cell, grid_doc, cell, str(out_dir)): cell
                for cell in todo
            }
            for future, cell in futures.items():
                try:
                    future.result()
                    done += 1
                except Exception as exc:  # recorded, not fatal per cell
                    failures.append((cell, str(exc)))
    else:
        for cell in todo:
            try:
                run_sweep_cell(grid_doc, cell, str(out_dir))
                done += 1
            except Exception as exc:
                failures.append((cell, str(exc)))

    # Combined CSV re-reads every completed cell so resumed runs stay whole.
    for cell in cells:
        report_csv = _cell_dir(out_dir, cell) / "report.csv"
        if report_csv.exists():
            with open(report_csv, encoding="utf-8") as fh:
                all_rows.extend(csv.DictReader(fh))
    combined = out_dir / "combined.csv"
    tmp = combined.with_suffix(".csv.tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(all_rows)
    os.replace(tmp, combined)

    for cell, message in failures:
        print(f"cell {cell} failed: {message}", file=sys.stderr)
    print(f"sweep complete: {done} ran, {len(failures)} failed, combined -> {combined}")
    if failures and done == 0 and not any(
        (_cell_dir(out_dir, c) / "report.json").exists() for c in cells
    ):
        return 2
    return 0


# -------------------------------------------------------------- lint-dataset


def cmd_lint_dataset(args) -> int:
    problems: list[str] = []
    for path in args.datasets:
        try:
            header, frames = datafile._parse_lines(path)
            datafile.validate_records(header, frames, path)
        except DataError as exc:
            problems.append(str(exc))
            continue
        _, view = datafile.load_model_view(path)
        for row in view:
            extra = set(row) - {"t", "power", "detections"}
            if extra:
                problems.append(f"{path}: model view leaks keys {sorted(extra)}")
                break
        print(f"{path}: ok ({len(frames)} frames)")
    for problem in problems:
        print(problem, file=sys.stderr)
    return 2 if problems else 0


# -------------------------------------------------------------------- parser


def build_parser() -> _Parser:
    parser = _Parser(prog="beamid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen-data", help="simulate a scenario into a dataset file")
    gen.add_argument("--config", help="flat JSON scenario config (field-name keys)")
    gen.add_argument("--preset", choices=sorted(PRESETS), default="default")
    gen.add_argument("--out", required=True)
    gen.add_argument("--frames", type=int, default=5000)
    gen.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    gen.add_argument("--tag", default="default")
    gen.add_argument("--p-miss", type=float, default=DetectorConfig().p_miss)
    gen.add_argument("--sigma-det", type=float, default=DetectorConfig().sigma_det)
    gen.add_argument("--fp-rate", type=float, default=DetectorConfig().fp_rate)
    gen.add_argument("--occlusion-iou", type=float, default=DetectorConfig().occlusion_iou)
    gen.add_argument("--antennas", type=int, default=ArrayConfig().m)
    gen.add_argument("--beams", type=int, default=64)
    gen.add_argument("--noise-variance", type=float, default=NoiseConfig().noise_variance)
    gen.add_argument("--symbol-power", type=float, default=NoiseConfig().symbol_power)
    gen.add_argument("--subcarriers", type=int, default=NoiseConfig().subcarriers)
    gen.add_argument("--sidelobe-floor", type=float, default=NoiseConfig().sidelobe_floor)
    gen.add_argument("--range-ref", type=float, default=NoiseConfig().range_ref_m)
    gen.set_defaults(func=cmd_gen_data)

    tr = sub.add_parser("train", help="fit the center predictor on a dataset")
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--train-config", help="JSON overriding the default hyperparameters")
    tr.add_argument("--train-fraction", type=float, default=1.0)
    tr.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    tr.add_argument("--split-seed", type=int, default=0)
    tr.add_argument(
        "--grid",
        type=lambda s: tuple(int(x) for x in s.split("x")),
        default=(32, 16),
        help="center quantization, e.g. 32x16",
    )
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate identification on datasets")
    ev.add_argument("--dataset", required=True, nargs="+")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--r", default="1,3,5", help="comma-separated sequence lengths")
    ev.add_argument("--out", required=True)
    ev.add_argument("--gate-radius", type=float, default=GATE_RADIUS_DEFAULT)
    ev.add_argument("--split-seed", type=int, default=0)
    ev.add_argument("--train-fraction", type=float, default=1.0)
    ev.add_argument("--strata", default="objects,speed")
    ev.add_argument("--train-scenario", default=None, help="label override for reports")
    ev.add_argument("--test-scenario", default=None, help="label override for reports")
    ev.set_defaults(func=cmd_eval)

    sw = sub.add_parser("sweep", help="run a grid of experiment cells")
    sw.add_argument("--grid", required=True, help="JSON grid description")
    sw.add_argument("--out", required=True)
    sw.add_argument("--resume", action="store_true")
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)

    lint = sub.add_parser("lint-dataset", help="validate dataset files")
    lint.add_argument("datasets", nargs="+")
    lint.set_defaults(func=cmd_lint_dataset)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:  # unreadable inputs, unwritable outputs
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
