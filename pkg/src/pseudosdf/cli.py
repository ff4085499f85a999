"""Command-line pipeline: gen-data, train, mesh, eval, bench.

Options resolve in three layers: built-in defaults, then a TOML config file
(one table per subcommand, unknown keys rejected), then explicit flags.
Exit codes: 0 success, 1 input error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import dataset as ds
from . import fields, geometry, metrics, nnet, triangulate


class InputError(Exception):
    """User-facing problem with arguments, config or input files."""


_CORPUS = dict(fields.builtin_corpus())


# ---------------------------------------------------------------------------
# option plumbing

_OPTIONS = {
    "gen-data": {
        "shapes": (str, "analytic", "OBJ directory or 'analytic' for the built-in corpus"),
        "res": (int, 128, "grid resolution (cells per axis)"),
        "out": (str, None, "output dataset file (.udfd)"),
        "seed": (int, 0, "reserved for corpus randomization; sampling itself is deterministic"),
        "threads": (int, 1, "shape-level worker cap"),
    },
    "train": {
        "data": (str, None, "input dataset file"),
        "out": (str, None, "output model file (.udfm)"),
        "report": (str, None, "optional JSON training report path"),
        "lr": (float, 5e-3, "Adam learning rate"),
        "epochs": (int, 10, "training epochs"),
        "batch": (int, 4096, "minibatch size"),
        "noise": (str, "scale", f"augmentation kind, one of {ds.NOISE_KINDS}"),
        "sigma": (float, 1.0, "augmentation sigma"),
        "balanced": (bool, False, "use inverse-frequency class weights"),
        "head": (str, "softmax-128", "classifier head: softmax-128 or sigmoid-7"),
        "val-fraction": (float, 0.1, "held-out fraction (hash split)"),
        "seed": (int, 0, "training seed"),
    },
    "mesh": {
        "model": (str, None, "trained model file (mc and dc)"),
        "algo": (str, "mc", "mc | dc | mc-sdf"),
        "out": (str, None, "output OBJ path"),
        "shape": (str, None, "analytic corpus shape name"),
        "obj": (str, None, "input mesh to sample a UDF from"),
        "field": (str, None, "precomputed UDFG field file"),
        "res": (int, 64, "grid resolution when sampling shape/obj"),
        "perturb-amplitude": (float, 0.0, "neural-noise value amplitude"),
        "perturb-angle": (float, 0.0, "neural-noise gradient angle std (radians)"),
        "perturb-seed": (int, 0, "neural-noise seed"),
        "lam": (float, None, "QEF regularization (dc); default 0.05*spacing^2"),
        "edge-rule": (str, "unanimity", "dc edge activation: unanimity | majority | any"),
    },
    "eval": {
        "pred": (str, None, "directory of predicted OBJ meshes"),
        "ref": (str, None, "directory of reference OBJ meshes (paired by stem)"),
        "out-csv": (str, None, "per-shape CSV output"),
        "out-json": (str, None, "summary JSON output"),
        "samples": (int, 200000, "surface samples per mesh for CD"),
        "size": (int, 512, "render resolution for IC"),
        "seed": (int, 0, "sampling seed"),
        "threads": (int, 1, "pair-level worker cap"),
    },
    "bench": {
        "model": (str, None, "trained model file"),
        "shape": (str, "sphere_a", "analytic corpus shape name"),
        "res": (int, 64, "grid resolution"),
        "reps": (int, 3, "repetitions; medians are reported"),
        "out": (str, None, "optional JSON output path"),
    },
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pseudosdf", description=__doc__)
    parser.add_argument("--config", help="TOML config file with one table per subcommand")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in _OPTIONS.items():
        p = sub.add_parser(name)
        for key, (typ, _default, help_text) in opts.items():
            flag = f"--{key}"
            if typ is bool:
                p.add_argument(flag, action="store_const", const=True, default=None, help=help_text)
            else:
                p.add_argument(flag, type=typ, default=None, help=help_text)
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    opts = _OPTIONS[args.command]
    resolved = {k: default for k, (_t, default, _h) in opts.items()}
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise InputError(f"config file not found: {cfg_path}")
        with open(cfg_path, "rb") as fh:
            cfg = tomllib.load(fh)
        unknown_tables = set(cfg) - set(_OPTIONS)
        if unknown_tables:
            raise InputError(f"unknown config tables: {sorted(unknown_tables)}")
        section = cfg.get(args.command, {})
        for key, value in section.items():
            if key not in opts:
                raise InputError(f"unknown config key '{key}' in [{args.command}]")
            typ = opts[key][0]
            resolved[key] = typ(value) if typ is not bool else bool(value)
    for key in opts:
        cli_value = getattr(args, key.replace("-", "_"))
        if cli_value is not None:
            resolved[key] = cli_value
    return resolved


def _require(cfg: dict, *keys: str) -> None:
    for key in keys:
        if cfg.get(key) in (None, ""):
            raise InputError(f"missing required option --{key}")


def _check_parent(path: str) -> Path:
    p = Path(path)
    if not p.parent.exists():
        raise InputError(f"output directory does not exist: {p.parent}")
    return p


# ---------------------------------------------------------------------------
# gen-data


def _grid_for_analytic(name: str, field, res: int, want_signs: bool) -> fields.FieldGrid:
    spec = fields.GridSpec(res)
    return fields.sample_analytic(field, spec, with_signs=want_signs and field.closed)


def _dataset_from_obj(path: Path, res: int):
    mesh = geometry.normalize_to_unit_volume(geometry.load_obj(path))
    bvh = geometry.build_bvh(mesh)
    grid = fields.sample_mesh_udf(bvh, fields.GridSpec(res), with_signs=True)
    return ds.extract_cells(grid)


def cmd_gen_data(cfg: dict) -> int:
    _require(cfg, "out")
    out = _check_parent(cfg["out"])
    res = cfg["res"]
    jobs: list[tuple[str, object]] = []
    if cfg["shapes"] == "analytic":
        for name, field in fields.builtin_corpus():
            jobs.append((name, field))
    else:
        shape_dir = Path(cfg["shapes"])
        if not shape_dir.is_dir():
            raise InputError(f"shape directory not found: {shape_dir}")
        obj_files = sorted(shape_dir.glob("*.obj"))
        if not obj_files:
            raise InputError(f"no .obj files in {shape_dir}")
        jobs = [(p.stem, p) for p in obj_files]

    def run(job):
        name, src = job
        try:
            if isinstance(src, Path):
                return name, _dataset_from_obj(src, res), None
            if not src.closed:
                return name, None, "open surface, no ground-truth signs"
            grid = _grid_for_analytic(name, src, res, want_signs=True)
            return name, ds.extract_cells(grid), None
        except fields.OpenMeshError as exc:
            return name, None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, cfg["threads"])) as pool:
        results = list(pool.map(run, jobs))

    order = {name: i for i, (name, _) in enumerate(jobs)}
    results.sort(key=lambda r: order[r[0]])
    parts = []
    for name, part, warning in results:
        if part is None:
            print(f"warning: skipping {name}: {warning}", file=sys.stderr)
        else:
            print(f"{name}: {len(part)} cells")
            parts.append(part)
    if not parts:
        raise InputError("no usable shapes; nothing to write")
    merged = ds.CellDataset.concatenate(parts)
    ds.save_dataset(merged, out)
    frac0 = float((merged.labels == 0).mean()) if len(merged) else 0.0
    print(f"dataset: {len(merged)} examples, class-0 fraction {frac0:.3f} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(cfg: dict) -> int:
    _require(cfg, "data", "out")
    data_path = Path(cfg["data"])
    if not data_path.is_file():
        raise InputError(f"dataset not found: {data_path}")
    out = _check_parent(cfg["out"])
    report_path = _check_parent(cfg["report"]) if cfg["report"] else None

    try:
        data = ds.load_dataset(data_path)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    config = nnet.TrainConfig(
        learning_rate=cfg["lr"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch"],
        noise=ds.NoiseSpec(kind=cfg["noise"], sigma=cfg["sigma"], seed=cfg["seed"]),
        weight_mode="inverse-frequency" if cfg["balanced"] else "uniform",
        seed=cfg["seed"],
        val_fraction=cfg["val-fraction"],
        head=cfg["head"],
    )
    model, report = nnet.train(data, config)
    nnet.save_model(model, out)
    if report_path:
        report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(
        f"trained on {report.train_examples} examples; "
        f"held-out accuracy {report.epoch_val_accuracy[-1]:.4f} -> {out}"
    )
    return 0


# ---------------------------------------------------------------------------
# mesh


def _grid_from_source(cfg: dict) -> fields.FieldGrid:
    sources = [k for k in ("shape", "obj", "field") if cfg.get(k)]
    if len(sources) != 1:
        raise InputError("exactly one of --shape, --obj, --field is required")
    kind = sources[0]
    if kind == "shape":
        name = cfg["shape"]
        if name not in _CORPUS:
            raise InputError(f"unknown analytic shape {name!r}; options: {sorted(_CORPUS)}")
        field = _CORPUS[name]
        return _grid_for_analytic(name, field, cfg["res"], want_signs=field.closed)
    if kind == "obj":
        path = Path(cfg["obj"])
        if not path.is_file():
            raise InputError(f"mesh not found: {path}")
        mesh = geometry.normalize_to_unit_volume(geometry.load_obj(path))
        bvh = geometry.build_bvh(mesh)
        try:
            return fields.sample_mesh_udf(bvh, fields.GridSpec(cfg["res"]), with_signs=True)
        except fields.OpenMeshError:
            return fields.sample_mesh_udf(bvh, fields.GridSpec(cfg["res"]), with_signs=False)
    path = Path(cfg["field"])
    if not path.is_file():
        raise InputError(f"field file not found: {path}")
    return fields.load_field(path)


def cmd_mesh(cfg: dict) -> int:
    _require(cfg, "out")
    if cfg["algo"] not in ("mc", "dc", "mc-sdf"):
        raise InputError(f"unknown algorithm {cfg['algo']!r}")
    out = _check_parent(cfg["out"])
    model = None
    if cfg["algo"] in ("mc", "dc"):
        _require(cfg, "model")
        model_path = Path(cfg["model"])
        if not model_path.is_file():
            raise InputError(f"model not found: {model_path}")
        model = nnet.load_model(model_path)

    grid = _grid_from_source(cfg)
    if cfg["perturb-amplitude"] > 0 or cfg["perturb-angle"] > 0:
        noise = fields.NeuralNoiseSpec(
            amplitude=cfg["perturb-amplitude"],
            angle_std=cfg["perturb-angle"],
            seed=cfg["perturb-seed"],
        )
        grid = fields.perturb_field(grid, noise)

    if cfg["algo"] == "mc":
        mesh = triangulate.mc_extract(grid, model)
    elif cfg["algo"] == "dc":
        mesh = triangulate.dc_extract(grid, model, lam=cfg["lam"], edge_rule=cfg["edge-rule"])
    else:
        if not grid.has_signs:
            raise InputError("mc-sdf needs ground-truth signs (closed shape or signed field)")
        mesh = triangulate.mc_extract_sdf(grid)
    geometry.save_obj(mesh, out)
    print(f"{cfg['algo']}: {len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles -> {out}")
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(cfg: dict) -> int:
    _require(cfg, "pred", "ref", "out-csv", "out-json")
    pred_dir = Path(cfg["pred"])
    ref_dir = Path(cfg["ref"])
    for d in (pred_dir, ref_dir):
        if not d.is_dir():
            raise InputError(f"directory not found: {d}")
    out_csv = _check_parent(cfg["out-csv"])
    out_json = _check_parent(cfg["out-json"])

    pred_files = sorted(pred_dir.glob("*.obj"))
    if not pred_files:
        raise InputError(f"no .obj files in {pred_dir}")
    pairs = []
    for pred in pred_files:
        ref = ref_dir / pred.name
        if not ref.is_file():
            raise InputError(f"missing reference mesh for {pred.name}: {ref}")
        pairs.append((pred.stem, pred, ref))

    def run(pair):
        stem, pred, ref = pair
        mesh_a = geometry.load_obj(pred)
        mesh_b = geometry.load_obj(ref)
        sample_a = metrics.sample_surface(mesh_a, cfg["samples"], seed=cfg["seed"])
        sample_b = metrics.sample_surface(mesh_b, cfg["samples"], seed=cfg["seed"] + 1)
        cd = metrics.chamfer(sample_a, sample_b)
        ic = metrics.image_consistency(mesh_a, mesh_b, size=cfg["size"])
        return stem, cd, ic

    with ThreadPoolExecutor(max_workers=max(1, cfg["threads"])) as pool:
        results = list(pool.map(run, pairs))

    report = metrics.MetricReport()
    for stem, cd, ic in sorted(results, key=lambda r: r[0]):
        report.add(stem, cd, ic)
        print(f"{stem}: cd={cd:.6g} ic={ic:.2f}")
    report.write_csv(out_csv)
    report.write_json(out_json)
    summary = report.summary()
    print(f"median cd={summary['cd_median']:.6g} median ic={summary['ic_median']:.2f}")
    return 0


# ---------------------------------------------------------------------------
# bench


def cmd_bench(cfg: dict) -> int:
    _require(cfg, "model")
    model_path = Path(cfg["model"])
    if not model_path.is_file():
        raise InputError(f"model not found: {model_path}")
    if cfg["shape"] not in _CORPUS:
        raise InputError(f"unknown analytic shape {cfg['shape']!r}")
    model = nnet.load_model(model_path)
    field = _CORPUS[cfg["shape"]]
    spec = fields.GridSpec(cfg["res"])

    timings = {"sampling": [], "inference": [], "triangulation": []}
    for _ in range(max(1, cfg["reps"])):
        t0 = time.perf_counter()
        grid = fields.sample_analytic(field, spec, with_signs=False)
        t1 = time.perf_counter()
        near = fields.near_surface_cell_mask(grid)
        inputs = triangulate.cell_inputs(grid, near)
        codes = nnet.predict_config_batch(model, inputs)
        t2 = time.perf_counter()
        triangulate.mc_extract(grid, lambda _x, codes=codes: codes)
        t3 = time.perf_counter()
        timings["sampling"].append(t1 - t0)
        timings["inference"].append(t2 - t1)
        timings["triangulation"].append(t3 - t2)

    result = {stage: statistics.median(vals) for stage, vals in timings.items()}
    result["reps"] = max(1, cfg["reps"])
    print(json.dumps(result, indent=2))
    if cfg["out"]:
        _check_parent(cfg["out"]).write_text(json.dumps(result, indent=2) + "\n")
    return 0


# ---------------------------------------------------------------------------


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "mesh": cmd_mesh,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        return _COMMANDS[args.command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
