"""Command line entry point: data generation, training, reconstruction and experiments.

Exit codes: 0 success, 1 usage or invalid graph, 2 data/format/config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

import pandas as pd

from mmssdu.api.schemas import (
    CompareConfig,
    DatasetConfig,
    MaskDistribution,
    Method,
    NetworkConfig,
    SweepAxis,
    SweepConfig,
    TrainConfig,
    TrainMode,
    UnrollConfig,
    build_config,
)
from mmssdu.data.phantom import make_desk_dataset
from mmssdu.errors import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    GraphError,
    MetricError,
    NormalizationError,
    NumericalError,
    PartitionError,
)
from mmssdu.eval.metrics import metric_report, nmse, ssim
from mmssdu.stores.container import read_dataset, write_dataset
from mmssdu.stores.records import (
    checkpoint_to_container,
    container_to_checkpoint,
    container_to_dataset,
    container_to_recon,
    dataset_to_container,
    partition_to_container,
    recon_to_container,
)
from mmssdu.workers.experiments import compare_methods, run_sweep
from mmssdu.workers.training import (
    CSV_FLOAT_FORMAT,
    make_partition,
    normalize_dataset,
    reconstruct_samples,
    train,
    write_training_log,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
DATA_ERRORS = (FormatError, ConfigError, DimensionError, MetricError, NormalizationError, PartitionError, OSError)
INTERNAL_ERRORS = (GraphError, ContractError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _add_train_options(parser: argparse.ArgumentParser, with_mode: bool = True) -> None:
    if with_mode:
        parser.add_argument("--mode", choices=[m.value for m in TrainMode], default=TrainMode.multimask.value)
    parser.add_argument("--k", type=int, default=5, help="Partitions per scan (K)")
    parser.add_argument("--rho", type=float, default=0.4, help="Fraction of selectable points in the loss set")
    parser.add_argument("--dist", choices=["uniform", "gaussian"], default="uniform")
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--lr", type=float, default=5e-4)
    parser.add_argument("--t-unroll", type=int, default=5)
    parser.add_argument("--cg-iters", type=int, default=10)
    parser.add_argument("--channels", type=int, default=16)
    parser.add_argument("--blocks", type=int, default=3)
    parser.add_argument("--resample-masks", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmssdu", description="Multi-mask self-supervised MRI reconstruction at desk scale")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen-data", help="Generate the seeded phantom dataset")
    gen.add_argument("--n", type=int, default=64)
    gen.add_argument("--coils", type=int, default=4)
    gen.add_argument("--train", type=int, default=20)
    gen.add_argument("--test", type=int, default=8)
    gen.add_argument("--r", type=int, default=4, help="Acceleration rate R")
    gen.add_argument("--acs", type=int, default=8)
    gen.add_argument("--sigma", type=float, default=0.01)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="Train an unrolled network")
    _add_train_options(tr)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--log", help="Optional training-log CSV")

    rec = sub.add_parser("recon", help="Reconstruct the test split with a checkpoint")
    rec.add_argument("--ckpt", required=True)
    rec.add_argument("--data", required=True)
    rec.add_argument("--out", required=True)

    ev = sub.add_parser("eval", help="Per-slice NMSE / SSIM of a reconstruction")
    ev.add_argument("--ref", required=True, help="Dataset holding the reference images")
    ev.add_argument("--rec", required=True)
    ev.add_argument("--csv", required=True)

    sw = sub.add_parser("sweep", help="K or rho sweep")
    sw.add_argument("--axis", choices=[a.value for a in SweepAxis], required=True)
    sw.add_argument("--values", nargs="+", type=float, required=True)
    sw.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    sw.add_argument("--data", help="Dataset file; the default phantom set is generated when omitted")
    sw.add_argument("--csv", required=True)
    _add_train_options(sw)

    msk = sub.add_parser("masks", help="Write the Theta/Lambda partitions of one training scan")
    self_supervised = [m.value for m in TrainMode if m is not TrainMode.supervised]
    msk.add_argument("--mode", choices=self_supervised, default=TrainMode.multimask.value)
    msk.add_argument("--k", type=int, default=5, help="Partitions per scan (K)")
    msk.add_argument("--rho", type=float, default=0.4)
    msk.add_argument("--dist", choices=["uniform", "gaussian"], default="uniform")
    msk.add_argument("--index", type=int, default=0, help="Training sample whose partitions are written")
    msk.add_argument("--seed", type=int, default=0)
    msk.add_argument("--data", required=True)
    msk.add_argument("--out", required=True)

    cmp_ = sub.add_parser("compare", help="Compare reconstruction methods")
    cmp_.add_argument("--methods", nargs="+", choices=[m.value for m in Method], required=True)
    cmp_.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    cmp_.add_argument("--l2-weight", type=float, default=1e-3)
    cmp_.add_argument("--data", help="Dataset file; the default phantom set is generated when omitted")
    cmp_.add_argument("--csv", required=True)
    _add_train_options(cmp_, with_mode=False)
    return parser


def _train_config(args: argparse.Namespace, mode: Optional[str] = None, seed: int = 0) -> TrainConfig:
    unroll = build_config(UnrollConfig, t_unroll=args.t_unroll, cg_iters=args.cg_iters)
    network = build_config(NetworkConfig, channels=args.channels, blocks=args.blocks)
    return build_config(
        TrainConfig,
        mode=mode or args.mode,
        k=args.k,
        rho=args.rho,
        dist=MaskDistribution(kind=args.dist),
        epochs=args.epochs,
        lr=args.lr,
        unroll=unroll,
        network=network,
        seed=seed,
        resample_masks=args.resample_masks,
    )


def _load_or_generate(path: Optional[str]):
    if path:
        return container_to_dataset(read_dataset(path))
    return make_desk_dataset(DatasetConfig())


def cmd_gen_data(args: argparse.Namespace) -> None:
    config = build_config(
        DatasetConfig,
        n=args.n, ncoils=args.coils, n_train=args.train, n_test=args.test,
        r_total=args.r, acs=args.acs, sigma=args.sigma, seed=args.seed,
    )
    write_dataset(args.out, dataset_to_container(make_desk_dataset(config)))


def cmd_train(args: argparse.Namespace) -> None:
    config = _train_config(args, seed=args.seed)
    dataset = container_to_dataset(read_dataset(args.data))
    result = train(normalize_dataset(dataset.train), config)
    write_dataset(args.out, checkpoint_to_container(result.params, config, result.epoch_losses, result.steps))
    if args.log:
        write_training_log(result.log_rows, args.log)
    print(f"Trained {config.mode.value} for {result.steps} steps; final epoch loss {result.epoch_losses[-1]:.6g}")


def cmd_recon(args: argparse.Namespace) -> None:
    params, config, _ = container_to_checkpoint(read_dataset(args.ckpt))
    dataset = container_to_dataset(read_dataset(args.data))
    images = reconstruct_samples(normalize_dataset(dataset.test), params, config.unroll)
    write_dataset(args.out, recon_to_container(images, config.mode.value))


def cmd_eval(args: argparse.Namespace) -> None:
    dataset = container_to_dataset(read_dataset(args.ref))
    recs, _ = container_to_recon(read_dataset(args.rec))
    refs = [s.image for s in dataset.test]
    if any(r is None for r in refs):
        raise FormatError(f"{args.ref} carries no reference images")
    if len(refs) != len(recs):
        raise DimensionError(f"{len(refs)} reference images for {len(recs)} reconstructions")
    frame = pd.DataFrame({
        "slice": range(len(refs)),
        "nmse": [nmse(r, x) for r, x in zip(refs, recs)],
        "ssim": [ssim(r.magnitude(), x.magnitude()) for r, x in zip(refs, recs)],
    })
    frame.to_csv(args.csv, index=False, float_format=CSV_FLOAT_FORMAT)
    report = metric_report(frame["nmse"].tolist(), frame["ssim"].tolist())
    print(
        f"NMSE median {report.nmse_median:.6g} [{report.nmse_q25:.6g}, {report.nmse_q75:.6g}]  "
        f"SSIM median {report.ssim_median:.6g} [{report.ssim_q25:.6g}, {report.ssim_q75:.6g}]"
    )


def cmd_masks(args: argparse.Namespace) -> None:
    config = build_config(
        TrainConfig, mode=args.mode, k=args.k, rho=args.rho, dist=MaskDistribution(kind=args.dist), seed=args.seed
    )
    dataset = container_to_dataset(read_dataset(args.data))
    if not 0 <= args.index < len(dataset.train):
        raise ConfigError(f"--index must lie in [0, {len(dataset.train)}), got {args.index}")
    sample = dataset.train[args.index]
    partition = make_partition(sample, args.index, config)
    write_dataset(args.out, partition_to_container(partition, sample.pattern))
    print(f"Wrote {partition.k} {partition.scheme} partitions of training scan {args.index} to {args.out}")


def cmd_sweep(args: argparse.Namespace) -> None:
    cfg = build_config(
        SweepConfig, axis=args.axis, values=sorted(args.values), base=_train_config(args), seeds=args.seeds
    )
    run_sweep(cfg, _load_or_generate(args.data)).write_csv(args.csv)


def cmd_compare(args: argparse.Namespace) -> None:
    cfg = build_config(
        CompareConfig,
        methods=args.methods,
        base=_train_config(args, mode=TrainMode.multimask.value),
        seeds=args.seeds,
        l2_weight=args.l2_weight,
    )
    compare_methods(cfg, _load_or_generate(args.data)).write_csv(args.csv)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "recon": cmd_recon,
    "eval": cmd_eval,
    "masks": cmd_masks,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=os.getenv("LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except NumericalError as exc:
        logger.error("Numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except DATA_ERRORS as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DATA
    except INTERNAL_ERRORS as exc:
        logger.error("Invalid computation graph: %s: %s", type(exc).__name__, exc)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
