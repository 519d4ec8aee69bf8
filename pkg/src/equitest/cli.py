"""Command-line interface: ``equitest {avt,pvt,simulate,mnist,demo-fig2}``.

Every subcommand writes its report(s) and a ``manifest.json`` under
``--out-dir`` and prints the p-value next to the configuration it came from.
No significance level is applied; thresholding is left to the caller.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .avt import AvtConfig, run_avt
from .core import (
    Dataset,
    GeneratorDistribution,
    NoiseModel,
    VariationBound,
    d4_image_action,
    load_action_spec,
    rotation_action,
    rotation_star_action,
)
from .io import CsvFormatError, RunManifest, read_csv_dataset
from .pvt import PvtConfig, run_pvt

_PAIRING = {"nn": "nearest_neighbour", "uniform": "uniform"}


class _UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be positive and finite, got {v}")
    return v


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _name_list(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="base random seed (default 0)")
    p.add_argument("--out-dir", type=Path, default=Path("results"),
                   help="directory for reports and the manifest (default ./results)")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")


def _data_args(p: argparse.ArgumentParser):
    p.add_argument("data", nargs="?", type=Path,
                   help="CSV with columns x0.. and y0..")
    p.add_argument("--idx", nargs=2, type=Path, metavar=("IMAGES", "LABELS"),
                   help="IDX image/label pair instead of a CSV (labels become responses)")
    p.add_argument("--action", choices=("rotation", "rotation-star", "d4"), default="rotation",
                   help="built-in action (ignored with --action-spec)")
    p.add_argument("--action-spec", type=Path, help="JSON action declaration")
    p.add_argument("--generators", type=_name_list,
                   help="comma-separated elements drawn uniformly (default: "
                        "non-identity powers of each generator)")
    p.add_argument("--m", type=_positive_int, required=True, help="number of sampled pairs")
    p.add_argument("--alpha-holder", type=_positive_float, default=1.0,
                   help="Hölder exponent of the variation bound")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="equitest",
        description="Test whether a regression function is equivariant under a group action.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("avt", help="asymmetric variation test (known variation bound)")
    _data_args(p)
    p.add_argument("--L", type=_positive_float, default=1.0, help="Hölder constant")
    p.add_argument("--sigma", type=_positive_float,
                   help="Gaussian noise sd; omit for noiseless data")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--thresholds", type=_float_list, help="comma-separated thresholds t")
    g.add_argument("--grid-k", type=_positive_int, help="number of automatic thresholds")
    _common(p)

    p = sub.add_parser("pvt", help="permutation variant (order of the bound only)")
    _data_args(p)
    p.add_argument("--q", type=float, default=0.95, help="quantile level in (0, 1]")
    p.add_argument("--B", type=_positive_int, default=100, help="number of batches")
    p.add_argument("--baseline", choices=tuple(_PAIRING), default="nn",
                   help="pairing used for the identity baseline")
    p.add_argument("--pairing", choices=tuple(_PAIRING), default="nn",
                   help="pairing used for the transformed batches")
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo rejection-proportion sweep")
    p.add_argument("spec", nargs="?", type=Path, help="JSON sweep spec")
    p.add_argument("--preset", help="named sweep; fields in SPEC override it")
    p.add_argument("--replicates", type=_positive_int, help="override the replicate count")
    _common(p)

    p = sub.add_parser("mnist", help="digit-orientation experiment")
    p.add_argument("--mnist-dir", type=Path,
                   help="directory holding train-images/labels IDX files "
                        "(default: $MNIST_DIR)")
    p.add_argument("--images", type=Path)
    p.add_argument("--labels", type=Path)
    p.add_argument("--digit", type=int, required=True, choices=range(10), metavar="0-9")
    p.add_argument("--group", choices=("D4", "a", "b"), default="D4")
    p.add_argument("--m", type=_positive_int, default=1000)
    p.add_argument("--subsample", type=_positive_int,
                   help="cap per class for the Lipschitz estimate")
    _common(p)

    p = sub.add_parser("demo-fig2", help="kernel symmetrisation MSE demo")
    p.add_argument("--replicates", type=_positive_int, default=500)
    p.add_argument("--n-grid", type=_float_list, default=(50, 100, 200, 400, 800))
    p.add_argument("--bandwidth-const", type=_positive_float,
                   help="fix c in h = c n^(-1/6) instead of calibrating it")
    _common(p)
    return parser


def _load_data(args) -> tuple[Dataset, list[Path]]:
    if args.idx:
        from .mnist import read_idx
        images, labels = (read_idx(p) for p in args.idx)
        if images.shape[0] != labels.shape[0]:
            raise CsvFormatError(f"{labels.shape[0]} labels for {images.shape[0]} images")
        return Dataset(images.reshape(images.shape[0], -1), labels.astype(float)), list(args.idx)
    if args.data is None:
        raise _UsageError("a CSV path or --idx IMAGES LABELS is required")
    return read_csv_dataset(args.data), [args.data]


def _action(args, dataset: Dataset):
    if args.action_spec:
        action = load_action_spec(args.action_spec)
    elif args.action == "d4":
        side = math.isqrt(dataset.dim_x)
        if side * side != dataset.dim_x:
            raise _UsageError("d4 needs square images flattened row by row")
        action = d4_image_action(side)
    else:
        build = rotation_action if args.action == "rotation" else rotation_star_action
        action = build(dataset.dim_x, dim_y=dataset.dim_y)
    return action


def _write(out_dir: Path, name: str, text: str, manifest: RunManifest) -> Path:
    path = out_dir / name
    path.write_text(text + "\n", encoding="utf-8")
    manifest.add_output(path)
    return path


def _echo(config: dict):
    print("config: " + json.dumps(config, sort_keys=True, default=str))


def _cmd_avt(args) -> int:
    dataset, inputs = _load_data(args)
    action = _action(args, dataset)
    noise = NoiseModel.noiseless() if args.sigma is None else NoiseModel.gaussian(args.sigma)
    config = AvtConfig(
        m=args.m, noise=noise, bound=VariationBound.known(args.L, args.alpha_holder),
        thresholds=args.thresholds or (), grid_k=args.grid_k,
        generator_dist=GeneratorDistribution.uniform(args.generators) if args.generators else None,
        seed=args.seed)
    report = run_avt(dataset, action, config)
    manifest = RunManifest("avt", report.config, args.seed)
    for p in inputs:
        manifest.add_input(p)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    _write(args.out_dir, "avt_report.json", report.to_json(), manifest)
    manifest.write(args.out_dir)
    _echo(report.config)
    for row in report.per_threshold:
        print(f"t={row.t:g} p_t={row.p_t:.6g} N_t={row.N_t}/{config.m} p={row.p_value:.6g}")
    print(f"p_value={report.p_value:.6g}")
    return 0


def _cmd_pvt(args) -> int:
    dataset, inputs = _load_data(args)
    action = _action(args, dataset)
    config = PvtConfig(
        m=args.m, B=args.B, q=args.q, bound=VariationBound.order(args.alpha_holder),
        generator_dist=GeneratorDistribution.uniform(args.generators) if args.generators else None,
        batch_pairing=_PAIRING[args.pairing], baseline_pairing=_PAIRING[args.baseline],
        seed=args.seed)
    report = run_pvt(dataset, action, config)
    manifest = RunManifest("pvt", report.config, args.seed)
    for p in inputs:
        manifest.add_input(p)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    _write(args.out_dir, "pvt_report.json", report.to_json(), manifest)
    qpath = args.out_dir / "pvt_quantiles.csv"
    report.write_quantiles_csv(qpath)
    manifest.add_output(qpath)
    manifest.write(args.out_dir)
    _echo(report.config)
    print(f"A0={report.A0:.6g} p_value={report.p_value:.6g} "
          f"(1+count)/(1+B)={report.p_value_plus_one:.6g}")
    return 0


def _cmd_simulate(args) -> int:
    from .experiments import PRESETS, SweepSpec, run_sweep
    if args.spec is None and args.preset is None:
        raise _UsageError("give a spec file or --preset "
                          f"({', '.join(sorted(PRESETS))})")
    if args.preset is not None and args.preset not in PRESETS:
        raise _UsageError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
    data = {}
    if args.spec is not None:
        data = json.loads(args.spec.read_text(encoding="utf-8"))
    if args.preset:
        data.setdefault("preset", args.preset)
    data.setdefault("seed", args.seed)
    if args.replicates:
        data["replicates"] = args.replicates
    spec = SweepSpec.from_dict(data)
    table = run_sweep(spec, jobs=args.jobs)
    manifest = RunManifest("simulate", spec.to_dict(), spec.seed)
    if args.spec is not None:
        manifest.add_input(args.spec)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, writer in (("table.csv", table.to_csv), ("plot.csv", table.write_plot_csv)):
        writer(args.out_dir / name)
        manifest.add_output(args.out_dir / name)
    _write(args.out_dir, "table.json", table.to_json(), manifest)
    manifest.write(args.out_dir)
    _echo(spec.to_dict())
    for r in table.rows:
        extra = f"L={r['L']:g} t={r['t']:g}" if r["L"] is not None else f"q={r['q']:g}"
        print(f"{r['hypothesis']} n={r['n']} m={r['m']} sigma={r['sigma']:g} {extra} "
              f"rejected={r['proportion']:.3f} se={r['se']:.3f}")
    return 0


def _cmd_mnist(args) -> int:
    from .mnist import find_mnist_files, load_mnist, run_mnist_experiment
    if args.images or args.labels:
        if not (args.images and args.labels):
            raise _UsageError("--images and --labels go together")
        paths = (args.images, args.labels)
    else:
        directory = args.mnist_dir or os.environ.get("MNIST_DIR")
        if not directory:
            raise _UsageError("give --mnist-dir, --images/--labels or set MNIST_DIR")
        paths = find_mnist_files(directory)
    images = load_mnist(*paths)
    report = run_mnist_experiment(images, args.digit, args.group, m=args.m, seed=args.seed,
                                  subsample=args.subsample)
    config = {"digit": args.digit, "group": args.group, "m": args.m,
              "subsample": args.subsample, "seed": args.seed}
    manifest = RunManifest("mnist", config, args.seed)
    for p in paths:
        manifest.add_input(p)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    _write(args.out_dir, f"mnist_{args.digit}_{args.group}.json", report.to_json(), manifest)
    manifest.write(args.out_dir)
    _echo(config)
    if report.vacuous:
        print("vacuous: only one response class, no rejection possible")
    else:
        print(f"L_hat={report.L_hat:.6g} N0={report.N0}/{report.m}")
    print(f"p_value={report.p_value:.6g}")
    return 0


def _cmd_fig2(args) -> int:
    from .synth import Fig2Config, run_fig2_experiment
    config = Fig2Config(n_grid=tuple(int(n) for n in args.n_grid), replicates=args.replicates,
                        bandwidth_const=args.bandwidth_const, seed=args.seed)
    result = run_fig2_experiment(config)
    cfg = {"n_grid": list(config.n_grid), "replicates": config.replicates,
           "bandwidth_const": result.bandwidth_const, "seed": config.seed}
    manifest = RunManifest("demo-fig2", cfg, args.seed)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    result.write_csv(args.out_dir / "fig2_mse.csv")
    manifest.add_output(args.out_dir / "fig2_mse.csv")
    summary = result.summary()
    _write(args.out_dir, "fig2_summary.json",
           json.dumps({"config": cfg, "summary": summary}, indent=2, sort_keys=True), manifest)
    manifest.write(args.out_dir)
    _echo(cfg)
    for row in summary:
        print(f"{row['target']} n={row['n']} plain={row['mse_plain']:.5f} "
              f"symmetrised={row['mse_symmetrised']:.5f} "
              f"diff={row['mean_difference']:+.5f}±{row['se_difference']:.5f}")
    return 0


_COMMANDS = {
    "avt": _cmd_avt,
    "pvt": _cmd_pvt,
    "simulate": _cmd_simulate,
    "mnist": _cmd_mnist,
    "demo-fig2": _cmd_fig2,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        parser.error(str(exc))
    except (CsvFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return 1  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
