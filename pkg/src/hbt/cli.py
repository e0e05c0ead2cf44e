"""Command-line surface: approx-bench, quantize, dequantize, train, cost, version.

Exit codes: 0 success, 1 environment/I-O or runtime failure, 2 usage or
validation error. Every command resolves its configuration up front and logs
it as `# key = value` lines so runs are reproducible from their own output.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .bench import approx_bench
from .binarize import hetero_binarize, reconstruct
from .bitalloc import average_bitwidth, generate_mask
from .config import REQUIRED, RunConfig
from .errors import DataIOError, NumericError, ValidationError
from .hwcost import ParetoPoint, estimate, load_baselines, pareto_report
from .io import read_hbt, read_raw_tensor, write_hbt, write_raw_tensor
from .nn import (
    QuantSpec,
    SweepPoint,
    TrainConfig,
    build_network,
    convnet4_spec,
    dsconv3_spec,
    load_dataset,
    packed_divergence,
    run_sweep,
)
from .tensor import normalized_distance


def _open_out(path: str | None):
    # Never close the shared stdout stream.
    return open(path, "w") if path else nullcontext(sys.stdout)


def _emit_config(fh, cfg: RunConfig) -> None:
    for line in cfg.resolved_lines():
        print(f"# {line}", file=fh)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    cfg.apply_overrides(args.set or [])
    return cfg


def cmd_approx_bench(args) -> int:
    cfg = _load_config(args)
    n = cfg.int_("n", 1000000)
    seeds = cfg.list_("seeds", [1, 2, 3, 4, 5], convert=int)
    avg_bits = cfg.list_("avg_bits", [1.2, 1.4, 1.6, 1.8], convert=float)
    heuristics = cfg.list_("heuristics", ["middle-out", "top-down", "bottom-up", "random"])
    policy = cfg.str_("policy", "grid")
    grid_step = cfg.float_("grid_step", 0.05)
    grid_widths = cfg.list_("grid_bitwidths", [1, 2, 3, 4], convert=int)
    include_hom = cfg.bool_("include_homogeneous", True)
    cfg.reject_unknown()

    rows = approx_bench(
        n, seeds, avg_bits, heuristics, policy,
        grid_step=grid_step, grid_bitwidths=tuple(grid_widths),
        include_homogeneous=include_hom,
    )
    with _open_out(args.out) as fh:
        _emit_config(fh, cfg)
        print("heuristic,avg_bits,distribution,seed,normalized_distance", file=fh)
        for row in rows:
            print(
                f"{row.heuristic},{row.avg_bits:g},{row.distribution},{row.seed},"
                f"{row.normalized_distance:.9f}",
                file=fh,
            )
    return 0


def cmd_quantize(args) -> int:
    values = read_raw_tensor(args.input)
    mask = generate_mask(values, args.bits, args.heuristic, args.policy, seed=args.seed)
    h = hetero_binarize(values, mask)
    write_hbt(args.output, h)
    achieved = average_bitwidth(h.mask)
    distance = normalized_distance(values, reconstruct(h))
    print(f"wrote {args.output}: average bitwidth {achieved:.6f}, normalized distance {distance:.6f}")
    return 0


def cmd_dequantize(args) -> int:
    h = read_hbt(args.input)
    write_raw_tensor(args.output, reconstruct(h))
    print(f"wrote {args.output}: shape {'x'.join(map(str, h.shape))}, {h.max_bits} planes")
    return 0


def _sweep_points(cfg: RunConfig) -> list[SweepPoint]:
    tokens = cfg.list_("points", ["1", "1.4", "2", "full"])
    heuristic = cfg.str_("heuristic", "middle-out")
    policy = cfg.str_("policy", "adjacent")
    input_bits_token = cfg.str_("input_bits", "full")
    input_bits = None if input_bits_token == "full" else float(input_bits_token)
    points = []
    for token in tokens:
        weight_bits = None if token == "full" else float(token)
        points.append(
            SweepPoint(
                point_id=f"w{token}",
                weight_bits=weight_bits,
                input_bits=input_bits,
                heuristic=heuristic,
                policy=policy,
            )
        )
    return points


def cmd_train(args) -> int:
    cfg = _load_config(args)
    dataset_src = cfg.str_("dataset", "synthetic")
    n_train = cfg.int_("n_train", 8000)
    n_test = cfg.int_("n_test", 2000)
    data_seed = cfg.int_("data_seed", 0)
    signal = cfg.float_("signal", 0.3)
    noise = cfg.float_("noise", 1.0)
    model = cfg.str_("model", "convnet4")
    seeds = cfg.list_("seeds", [1], convert=int)
    train_cfg = TrainConfig(
        learning_rate=cfg.float_("learning_rate", 0.01),
        momentum=cfg.float_("momentum", 0.9),
        weight_decay=cfg.float_("weight_decay", 1e-4),
        epochs=cfg.int_("epochs", 4),
        batch_size=cfg.int_("batch_size", 64),
        mask_refresh=cfg.str_("mask_refresh", "every-forward"),
        augment_flip=cfg.bool_("augment_flip", True),
    )
    points = _sweep_points(cfg)
    cfg.reject_unknown()

    data = load_dataset(dataset_src, n_train=n_train, n_test=n_test, seed=data_seed,
                        noise=noise, signal=signal)

    if model == "convnet4":
        def builder(point: SweepPoint, seed: int):
            return build_network(
                convnet4_spec(weight_quant=point.weight_quant(seed),
                              input_quant=point.input_quant(seed)),
                seed=seed,
            )
    elif model == "dsconv3":
        def builder(point: SweepPoint, seed: int):
            return build_network(
                dsconv3_spec(pointwise_quant=point.weight_quant(seed),
                             input_quant=point.input_quant(seed)),
                seed=seed,
            )
    else:
        raise ValidationError(f"unknown model {model!r}; expected convnet4 or dsconv3")

    checkpoint_dir = Path(args.checkpoint_dir) if args.checkpoint_dir else None
    nets_for_verify = []

    def sink(point, seed, net):
        nets_for_verify.append((point, seed, net))
        if checkpoint_dir is not None:
            checkpoint_dir.mkdir(parents=True, exist_ok=True)
            np.savez(checkpoint_dir / f"{point.point_id}_seed{seed}.npz", **net.state_arrays())

    rows = run_sweep(data, builder, points, train_cfg, seeds, checkpoint_sink=sink)
    with _open_out(args.out) as fh:
        _emit_config(fh, cfg)
        print("point_id,m_bits,n_bits,heuristic,distribution,seed,top1,wall_seconds", file=fh)
        for row in rows:
            print(
                f"{row.point_id},{row.m_bits},{row.n_bits},{row.heuristic},{row.distribution},"
                f"{row.seed},{row.top1:.4f},{row.wall_seconds:.3f}",
                file=fh,
            )

    if args.verify_packed:
        eligible = [
            (point, seed, net) for point, seed, net in nets_for_verify
            if point.weight_bits is not None and point.input_bits is not None
        ]
        if not eligible:
            print("packed-verify: no points binarize both inputs and weights; nothing to check")
        for point, seed, net in eligible:
            gap = packed_divergence(net, data.test_images[:128])
            print(f"packed-verify {point.point_id} seed {seed}: max |packed - dense| logit gap = {gap:.3e}")
    return 0


def cmd_cost(args) -> int:
    baselines = load_baselines(args.baselines)
    if args.base not in baselines:
        raise ValidationError(f"unknown baseline id {args.base!r}; have {sorted(baselines)}")
    base = baselines[args.base]
    if args.platform and base.platform != args.platform:
        raise ValidationError(f"baseline {args.base} is {base.platform}, not {args.platform}")
    bits = [float(b) for b in args.bits.split(",") if b]
    accuracies = (
        [float(a) for a in args.accuracy.split(",")] if args.accuracy else [None] * len(bits)
    )
    if len(accuracies) != len(bits):
        raise ValidationError("--accuracy must list one value per --bits entry")

    estimates = [estimate(base, b, unfolding=args.unfolding) for b in bits]
    records = []
    for est, acc in zip(estimates, accuracies):
        records.append(
            {
                "base": args.base,
                "platform": est.platform,
                "model": est.model,
                "unfolding": est.unfolding,
                "bits_in": est.bits_in,
                "bits_w": est.bits_w,
                "occupancy_pct": est.occupancy_pct,
                "area_mm2": est.area_mm2,
                "kfps": est.kfps,
                "power_w": est.power_w,
                "saturated": est.saturated,
                "rule": est.rule,
                "top1_pct": acc,
            }
        )

    pareto = None
    if all(acc is not None for acc in accuracies) and base.top1_pct is not None:
        points = [ParetoPoint(args.base, base.top1_pct, base.power_w, base.footprint, base.kfps)]
        for est, acc in zip(estimates, accuracies):
            points.append(ParetoPoint(f"{args.base}@{est.bits_in:g}", acc, est.power_w,
                                      est.footprint, est.kfps))
        pareto = [
            {"label": row.point.label, "top1_pct": row.point.accuracy_pct,
             "power_w": row.point.power_w, "footprint": row.point.footprint,
             "optimal": row.optimal}
            for row in pareto_report(points)
        ]

    if args.json:
        print(json.dumps({"estimates": records, "pareto": pareto}, indent=2))
        return 0

    header = "base,platform,model,unfolding,bits_in,bits_w,footprint,kfps,power_w,saturated"
    print(header)
    for rec in records:
        footprint = rec["occupancy_pct"] if rec["platform"] == "fpga" else rec["area_mm2"]
        print(
            f"{rec['base']},{rec['platform']},{rec['model']},{rec['unfolding'] or '-'},"
            f"{rec['bits_in']:g},{rec['bits_w']:g},{footprint:.4g},{rec['kfps']:.4g},"
            f"{rec['power_w']:.4g},{'yes' if rec['saturated'] else 'no'}"
        )
    if pareto is not None:
        print("label,top1_pct,power_w,footprint,pareto_optimal")
        for row in pareto:
            print(
                f"{row['label']},{row['top1_pct']:g},{row['power_w']:.4g},"
                f"{row['footprint']:.4g},{'yes' if row['optimal'] else 'no'}"
            )
    return 0


def cmd_version(_args) -> int:
    print(f"hbt {__version__}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hbt",
        description="Heterogeneous-bitwidth binarization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("approx-bench", help="Gaussian tensor approximation benchmark (CSV)")
    bench.add_argument("--config", help="flat key=value config file")
    bench.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    bench.add_argument("--out", help="CSV output path (default: stdout)")
    bench.set_defaults(func=cmd_approx_bench)

    quant = sub.add_parser("quantize", help="RAWTENS1 tensor -> HBT1 packed file")
    quant.add_argument("input")
    quant.add_argument("output")
    quant.add_argument("--bits", type=float, required=True, help="target average bitwidth")
    quant.add_argument("--heuristic", default="middle-out")
    quant.add_argument("--policy", default="adjacent")
    quant.add_argument("--seed", type=int, default=0, help="seed for the random heuristic")
    quant.set_defaults(func=cmd_quantize)

    dequant = sub.add_parser("dequantize", help="HBT1 file -> reconstructed RAWTENS1 tensor")
    dequant.add_argument("input")
    dequant.add_argument("output")
    dequant.set_defaults(func=cmd_dequantize)

    train = sub.add_parser("train", help="desk-scale bitwidth sweep training")
    train.add_argument("--config", help="flat key=value config file")
    train.add_argument("--set", action="append", metavar="KEY=VALUE")
    train.add_argument("--out", help="results CSV path (default: stdout)")
    train.add_argument("--checkpoint-dir", help="write final shadow weights per (point, seed)")
    train.add_argument("--verify-packed", action="store_true",
                       help="report max |packed - dense| logit divergence per trained model")
    train.set_defaults(func=cmd_train)

    cost = sub.add_parser("cost", help="hardware cost extrapolation from a baseline row")
    cost.add_argument("--baselines", help="baseline table CSV (default: packaged)")
    cost.add_argument("--platform", choices=["fpga", "asic"])
    cost.add_argument("--base", required=True, help="baseline row id, e.g. row1")
    cost.add_argument("--bits", required=True, help="bitwidth or comma list, e.g. 1.4 or 1.2,1.4")
    cost.add_argument("--unfolding", type=int, help="FPGA unfolding factor (default: baseline's)")
    cost.add_argument("--accuracy", help="top-1 annotation per bits entry (enables Pareto report)")
    cost.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    cost.set_defaults(func=cmd_cost)

    ver = sub.add_parser("version", help="print version")
    ver.set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataIOError, NumericError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
