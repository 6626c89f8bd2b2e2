"""Command-line entry points.

Report-producing subcommands write delimited data (CSV/JSON) into the
output directory and render a matching matplotlib figure next to it unless
--no-figures is given. Exit codes: 0 on success, 1 on validation errors,
2 on I/O failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as datamod
from . import harness, netcore, plots, regions
from .activations import parse_activation_spec, sample_curve, curve_to_csv
from .jsonfmt import dumps as json_dumps


def _parse_seeds(text: str):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ValueError(f"seeds must be comma-separated integers, got {text!r}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = harness.config_from_dict(json.load(fh))
    elif args.preset:
        config = harness.preset(args.preset)
    else:
        raise ValueError("train needs --config or --preset")
    if args.activation:
        config = config.with_activation(parse_activation_spec(args.activation))
    if args.seeds:
        config = config.with_seeds(_parse_seeds(args.seeds))
    if args.reduced:
        config = config.reduced()
    out = _out_dir(args)
    runs = harness.run(config, data_dir=args.data_dir, out_dir=out, verbose=True)
    paths = harness.emit(config, runs, out)
    if not args.no_figures:
        paths.append(plots.plot_training_curves(
            runs, out / "training.png",
            title=f"{config.name} / {config.activation.label()}"))
    summary = harness.aggregate(runs) if any(r.epochs for r in runs) else None
    if summary:
        print(f"final test error: {summary.mean:.3f} (+-{summary.std:.3f})% "
              f"over {summary.count} seed(s)")
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.activation:
        act = parse_activation_spec(args.activation)
    else:
        act = harness.preset(args.preset).activation if args.preset else None
    if act is None:
        raise ValueError("gradcheck needs --preset or --activation")
    spec = netcore.tiny_network(act)
    report = netcore.grad_check(spec, seed=args.seed, tolerance=args.tolerance)
    print(json_dumps(report.to_dict(), digits=9))
    return 0 if report.passed else 1


def cmd_regions_bound(args) -> int:
    widths = [int(w) for w in args.widths.split(",") if w.strip()]
    result = {
        "n0": args.n0,
        "widths": widths,
        "single_layer_bound": regions.single_layer_region_bound(args.n0, widths[-1]),
        "deep_bound": regions.deep_region_bound(args.n0, widths),
    }
    text = json_dumps(result)
    print(text)
    if args.out:
        out = _out_dir(args)
        (out / "bound.json").write_text(text + "\n", encoding="utf-8")
        print(f"wrote {out / 'bound.json'}")
    return 0


def cmd_regions_construct(args) -> int:
    ts = regions.build_equal_minima_sum(args.n, args.k)
    band_lo, band_hi = ts.default_band()
    identified = regions.count_identified_intervals(ts, band_lo, band_hi)
    scan = regions.count_monotonic_regions(ts.value, -1.0, 1.0, args.resolution)
    payload = ts.to_dict()
    payload["band"] = [band_lo, band_hi]
    payload["identified_intervals"] = identified
    payload["monotonic_regions"] = scan.to_dict()
    out = _out_dir(args)
    path = out / f"construction_n{args.n:g}_k{args.k}.json"
    path.write_text(json_dumps(payload) + "\n", encoding="utf-8")
    print(f"identified intervals: {identified} (expected {4 * args.k})")
    print(f"wrote {path}")
    if not args.no_figures:
        fig = plots.plot_trough_sum(ts, out / f"construction_n{args.n:g}_k{args.k}.png")
        print(f"wrote {fig}")
    return 0


def cmd_regions_count(args) -> int:
    params = netcore.load_params(args.weights)
    spec_path = Path(args.spec) if args.spec else Path(str(args.weights) + ".json")
    if not spec_path.exists():
        raise ValueError(
            f"no network description at {spec_path}; pass --spec with the JSON sidecar"
        )
    with open(spec_path, "r", encoding="utf-8") as fh:
        spec = netcore.spec_from_dict(json.load(fh))
    rng = np.random.default_rng(args.seed)
    shape = tuple(spec.input_shape)
    reports = []
    first_samples = None
    for line in range(args.lines):
        anchor = rng.standard_normal(shape)
        direction = rng.standard_normal(shape)
        rep = regions.network_line_regions(
            spec, params, anchor, direction, -args.t_range, args.t_range,
            resolution=args.resolution,
        )
        reports.append(rep.to_dict())
        if first_samples is None:
            ts = np.linspace(-args.t_range, args.t_range, 2000)
            params64 = {k: v.astype(np.float64) for k, v in params.items()}
            batch = anchor[None] + ts.reshape((-1,) + (1,) * len(shape)) * direction[None]
            ys, _ = netcore.forward(spec, params64, batch, mode="logits")
            first_samples = (ts, ys[:, 0], rep.breakpoints)
    payload = {
        "weights": str(args.weights),
        "seed": args.seed,
        "lines": args.lines,
        "counts": [r["count"] for r in reports],
        "max_count": max(r["count"] for r in reports),
        "reports": reports,
    }
    out = _out_dir(args)
    path = out / "line_regions.json"
    path.write_text(json_dumps(payload) + "\n", encoding="utf-8")
    print(f"region counts over {args.lines} line(s): {payload['counts']}")
    print(f"wrote {path}")
    if not args.no_figures and first_samples is not None:
        fig = plots.plot_line_response(*first_samples, out / "line_response.png")
        print(f"wrote {fig}")
    return 0


def cmd_curve(args) -> int:
    spec = parse_activation_spec(args.activation)
    rows = sample_curve(spec, args.lo, args.hi, args.samples)
    out = _out_dir(args)
    stem = spec.label().replace(":", "_").replace("=", "")
    csv_path = out / f"curve_{stem}.csv"
    csv_path.write_text(curve_to_csv(rows), encoding="utf-8")
    print(f"wrote {csv_path}")
    if not args.no_figures:
        fig = plots.plot_activation_curve(rows, spec.label(), out / f"curve_{stem}.png")
        print(f"wrote {fig}")
    return 0


def cmd_fetch(args) -> int:
    dest = datamod.fetch_dataset(
        args.dataset, data_dir=args.data_dir,
        manifest=args.manifest, verify=not args.no_verify,
    )
    print(f"dataset {args.dataset} ready under {dest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polunet",
        description="Power-linear-unit activations, region analysis, and training runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a configured network")
    p_train.add_argument("--config", help="JSON experiment config")
    p_train.add_argument("--preset", choices=harness.PRESETS)
    p_train.add_argument("--activation", help="e.g. polu:n=2, elu:a=1, relu, lrelu:l=0.01")
    p_train.add_argument("--seeds", help="comma-separated seed list")
    p_train.add_argument("--reduced", action="store_true",
                         help="trend mode: 30 epochs max on a 10k train subset")
    p_train.add_argument("--data-dir", default=None)
    p_train.add_argument("--out", default="out/train")
    p_train.add_argument("--no-figures", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_grad = sub.add_parser("gradcheck", help="finite-difference check on a tiny network")
    p_grad.add_argument("--preset", choices=harness.PRESETS)
    p_grad.add_argument("--activation")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--tolerance", type=float, default=1e-4)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_regions = sub.add_parser("regions", help="response-region analysis")
    rsub = p_regions.add_subparsers(dest="regions_command", required=True)

    p_bound = rsub.add_parser("bound", help="exact lower bounds")
    p_bound.add_argument("--n0", type=int, required=True)
    p_bound.add_argument("--widths", required=True, help="comma-separated layer widths")
    p_bound.add_argument("--out", default=None)
    p_bound.set_defaults(func=cmd_regions_bound)

    p_cons = rsub.add_parser("construct", help="equal-minima trough sum")
    p_cons.add_argument("--n", type=float, default=2.0)
    p_cons.add_argument("--k", type=int, default=2)
    p_cons.add_argument("--resolution", type=int, default=100_000)
    p_cons.add_argument("--out", default="out/regions")
    p_cons.add_argument("--no-figures", action="store_true")
    p_cons.set_defaults(func=cmd_regions_construct)

    p_count = rsub.add_parser("count", help="count regions along random input lines")
    p_count.add_argument("--weights", required=True, help="PLNET1 parameter container")
    p_count.add_argument("--seed", type=int, required=True)
    p_count.add_argument("--spec", default=None, help="network JSON (defaults to <weights>.json)")
    p_count.add_argument("--lines", type=int, default=20)
    p_count.add_argument("--t-range", type=float, default=5.0)
    p_count.add_argument("--resolution", type=int, default=100_000)
    p_count.add_argument("--out", default="out/regions")
    p_count.add_argument("--no-figures", action="store_true")
    p_count.set_defaults(func=cmd_regions_count)

    p_curve = sub.add_parser("curve", help="sample an activation and its slope")
    p_curve.add_argument("--activation", required=True)
    p_curve.add_argument("--lo", type=float, default=-5.0)
    p_curve.add_argument("--hi", type=float, default=5.0)
    p_curve.add_argument("--samples", type=int, default=1001)
    p_curve.add_argument("--out", default="out/curves")
    p_curve.add_argument("--no-figures", action="store_true")
    p_curve.set_defaults(func=cmd_curve)

    p_fetch = sub.add_parser("fetch", help="download a dataset per the manifest")
    p_fetch.add_argument("--dataset", required=True, choices=("mnist", "cifar10", "cifar100"))
    p_fetch.add_argument("--data-dir", default=None)
    p_fetch.add_argument("--manifest", default=None)
    p_fetch.add_argument("--no-verify", action="store_true")
    p_fetch.set_defaults(func=cmd_fetch)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
