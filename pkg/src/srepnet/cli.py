"""``srepnet`` command line: generate, train, finetune, infer, eval, export-vtk.

Exit codes: 0 success, 1 usage or invalid input, 2 I/O failure, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .autodiff import CheckpointError
from .config import ConfigError, RunConfig, read_config_file
from .fileio import SrepFormatError, export_vtk, load_srep, save_srep
from .mask import NrrdError, read_nrrd
from .srep import SrepError, boundary_mesh, build_graph

log = logging.getLogger("srepnet")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dims(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.replace("x", ",").split(",")]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected N or X,Y,Z, got {text!r}")
    return tuple(parts)


def _grid(text: str) -> tuple[int, int]:
    try:
        r, t = (int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected R,T, got {text!r}") from None
    return r, t


def _manifest_path(data: str) -> Path:
    p = Path(data)
    return p / "manifest.json" if p.is_dir() else p


def _load_manifest(data: str):
    from .synth import DatasetManifest

    path = _manifest_path(data)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    return DatasetManifest.load(path)


def _resolve(args, command: str, flags: dict) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    return RunConfig.resolve(command, file_values, flags)


# ------------------------------------------------------------------ commands

def cmd_generate(args) -> int:
    from .synth import generate_dataset

    flags = {"n": args.n, "data_seed": args.seed, "jobs": args.jobs}
    if args.dims:
        flags["image_dims"] = args.dims
    if args.grid:
        flags["rings"], flags["angular_samples"] = args.grid
    cfg = _resolve(args, "generate", flags)
    if cfg["n"] < 1:
        raise UsageError(f"--n must be >= 1, got {cfg['n']}")
    manifest = generate_dataset(cfg["n"], cfg["data_seed"], args.out, cfg["rings"], cfg["angular_samples"],
                                cfg["image_dims"], jobs=cfg["jobs"])
    cfg.snapshot(args.out)
    counts = {k: len(manifest.split(k)) for k in ("train", "val", "test")}
    print(f"manifest: {Path(args.out) / 'manifest.json'}")
    print(f"samples: {len(manifest.samples)} (train {counts['train']}, val {counts['val']}, test {counts['test']})")
    return EXIT_OK


def _training_flags(args, manifest) -> dict:
    flags = {"epochs": args.epochs, "iterations_per_epoch": args.iterations, "learning_rate": args.lr,
             "batch_size": args.batch_size, "latent_dim": args.latent_dim, "seed": args.seed,
             "subset": args.subset}
    if args.no_augment:
        flags["augment"] = False
    flags.setdefault("image_dims", tuple(manifest.dims))
    flags.setdefault("rings", manifest.rings)
    flags.setdefault("angular_samples", manifest.angular_samples)
    return flags


def cmd_train(args) -> int:
    from .model import train

    manifest = _load_manifest(args.data)
    cfg = _resolve(args, "train", _training_flags(args, manifest))
    cfg.snapshot(args.out)
    res = train(manifest, cfg.model_config(), args.out, subset=cfg["subset"])
    print(f"best checkpoint: {res.best_checkpoint} (epoch {res.best_epoch}, val L_r {res.best_val:.6g})")
    print(f"log: {res.log_path}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    from .model import finetune, load_model

    manifest = _load_manifest(args.data)
    base = load_model(args.checkpoint).config
    flags = {"learning_rate": args.lr, "batch_size": args.batch_size, "seed": args.seed,
             "iterations_per_epoch": args.iterations, "subset": args.subset,
             "finetune_epochs": args.epochs}
    if args.no_augment:
        flags["augment"] = False
    file_values = read_config_file(args.config) if args.config else {}
    model_defaults = {k: getattr(base, k) for k in base.__dataclass_fields__}
    cfg = RunConfig.resolve("finetune", {**model_defaults, **file_values}, flags)
    cfg.snapshot(args.out)
    changed = {k: cfg[k] for k in model_defaults if cfg[k] != model_defaults[k]}
    res = finetune(manifest, args.checkpoint, args.out, subset=cfg["subset"], overrides=changed)
    print(f"best checkpoint: {res.best_checkpoint} (epoch {res.best_epoch}, val L_r {res.best_val:.6g})")
    print(f"log: {res.log_path}")
    return EXIT_OK


def cmd_infer(args) -> int:
    from .model import load_model

    model = load_model(args.checkpoint)
    mask = read_nrrd(args.mask)
    srep = model.infer(mask)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_srep(srep, out)
    RunConfig.resolve("infer", {k: getattr(model.config, k) for k in model.config.__dataclass_fields__}
                      ).snapshot(out.parent)
    if args.vtk:
        graph = build_graph(srep)
        export_vtk(graph, out.with_suffix(".graph.vtk"))
        export_vtk(boundary_mesh(srep), out.with_suffix(".mesh.vtk"))
    print(f"srep: {out}")
    print(f"latency: {model.last_latency:.3f} s")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .metrics import evaluate_dataset, write_report_csv

    manifest = _load_manifest(args.data)
    cfg = _resolve(args, "eval", {"split": args.split})
    if cfg["split"] not in ("train", "val", "test"):
        raise UsageError(f"unknown split {cfg['split']!r}")
    rows, mean, std = evaluate_dataset(manifest, cfg["split"], checkpoint=args.checkpoint)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(out, rows, mean, std)
    cfg.snapshot(out.parent)
    print(f"report: {out} ({len(rows)} samples, split {cfg['split']})")
    print("mean: " + ", ".join(f"{k}={v:.4g}" for k, v in zip(("MSE", "MAE", "RMSE", "Medialness",
                                                                  "Angle", "Orthogonality"), mean.row())))
    return EXIT_OK


def cmd_export_vtk(args) -> int:
    srep = load_srep(args.srep)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    targets = {
        "spokes": (srep, None),
        "graph": (build_graph(srep), "edges"),
        "tetra": (build_graph(srep), "tetra"),
        "mesh": (boundary_mesh(srep), None),
    }
    modes = list(targets) if args.mode == "all" else [args.mode]
    for mode in modes:
        obj, sub = targets[mode]
        path = Path(f"{prefix}.{mode}.vtk")
        export_vtk(obj, path, sub)
        print(f"wrote {path}")
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="srepnet", description="S-rep prediction from binary masks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="key = value config file (overridden by flags)")

    p = sub.add_parser("generate", help="write a synthetic ellipsoid dataset")
    common(p)
    p.add_argument("--n", type=int, help="number of samples (default 200)")
    p.add_argument("--seed", type=int, help="dataset seed")
    p.add_argument("--dims", type=_dims, help="image dims, N or X,Y,Z (default 64)")
    p.add_argument("--grid", type=_grid, help="s-rep grid R,T (default 3,8)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.set_defaults(func=cmd_generate)

    for name, func in (("train", cmd_train), ("finetune", cmd_finetune)):
        p = sub.add_parser(name, help=f"{name} a model on a dataset")
        common(p)
        p.add_argument("--data", required=True, help="dataset directory or manifest.json")
        if name == "finetune":
            p.add_argument("--checkpoint", required=True, help="model to start from")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--epochs", type=int, help="epochs (finetune: upper bound, default 10)")
        p.add_argument("--iterations", type=int, help="iterations per epoch")
        p.add_argument("--lr", type=float, help="initial learning rate")
        p.add_argument("--batch-size", type=int)
        if name == "train":
            p.add_argument("--latent-dim", type=int)
        p.add_argument("--seed", type=int, help="run seed (init, augmentation, sampling, noise)")
        p.add_argument("--subset", type=float, help="fraction of the training partition to use")
        p.add_argument("--no-augment", action="store_true", help="disable rotation/scale augmentation")
        p.set_defaults(func=func)

    p = sub.add_parser("infer", help="predict an s-rep for one mask")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mask", required=True, help="NRRD mask")
    p.add_argument("--out", required=True, help="output .srep file")
    p.add_argument("--vtk", action="store_true", help="also write graph and boundary mesh VTK files")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predictions on a dataset split")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", help="model to evaluate (omit to score ground truth against itself)")
    p.add_argument("--split", help="train, val or test (default test)")
    p.add_argument("--out", required=True, help="CSV report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-vtk", help="export an s-rep file to VTK")
    p.add_argument("--srep", required=True)
    p.add_argument("--out", required=True, help="output prefix; files are <prefix>.<mode>.vtk")
    p.add_argument("--mode", choices=("spokes", "graph", "tetra", "mesh", "all"), default="all")
    p.set_defaults(func=cmd_export_vtk)
    return parser


def main(argv=None) -> int:
    from .model import NumericalError

    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"srepnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"srepnet {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, NrrdError, SrepFormatError, CheckpointError) as exc:
        print(f"srepnet {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, SrepError) as exc:
        print(f"srepnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
