import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Type

from dsboot.bench.harness import run_benchmark, sweep_beta_corr
from dsboot.bench.report import write_report, write_run_log
from dsboot.config import RunConfig
from dsboot.data.synthdata import make_imbalanced
from dsboot.data.tabular import fit_encode, write_dataset
from dsboot.errors import BenchmarkFailed, ConfigError, DsbError
from dsboot.generation.latentgen import generate, selection_weights, write_synthetic
from dsboot.model import irvae
from dsboot.model.persistence import load_model, save_model
from dsboot.runtime.default_logger import attach_default_logger
from dsboot.runtime.event_bus import EventBus
from dsboot.telemetry import init_telemetry

logger = logging.getLogger("dsboot.cli")


class _Parser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="JSON run configuration file")
    common.add_argument("--seed", type=int, help="Global random seed (overrides the config)")
    common.add_argument("--out", type=str, help="Output directory (overrides the config)")
    common.add_argument(
        "--variant",
        type=str,
        help="Generation variant; for benchmark a comma-separated list of variants to run",
    )
    common.add_argument("--threads", type=int, help="Maximum number of folds run in parallel")
    common.add_argument(
        "--log-level",
        type=str,
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: INFO)",
    )
    common.add_argument("--trace", action="store_true", help="Print OpenTelemetry spans to the console")

    parser = _Parser(
        prog="dsboot",
        description="Disentangled deep smoothed bootstrap for imbalanced regression",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("synth", parents=[common], help="Write a synthetic imbalanced dataset")
    sub.add_parser("fit", parents=[common], help="Train a model and write it with its loss trace")

    gen = sub.add_parser("generate", parents=[common], help="Generate synthetic rows")
    gen.add_argument("--model", type=str, help="Model file (not needed for variant OS)")
    gen.add_argument("--m", type=int, help="Number of synthetic rows (default: training size)")

    sub.add_parser("benchmark", parents=[common], help="Run the k-fold ablation benchmark")

    sweep = sub.add_parser("sweep", parents=[common], help="Sweep the decorrelation weight beta_corr")
    sweep.add_argument(
        "--values",
        type=str,
        default="0,0.1,1,10",
        help="Comma-separated beta_corr values (default: 0,0.1,1,10)",
    )
    return parser


def _commit(staging: Path, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    for item in sorted(staging.iterdir()):
        os.replace(item, out_dir / item.name)


@contextmanager
def staged_outputs(out_dir: Path, commit_on: Tuple[Type[BaseException], ...] = ()) -> Iterator[Path]:
    """
    Collect a command's files in a staging directory and move them into
    ``out_dir`` when the command succeeds or raises one of ``commit_on``.
    """
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    try:
        try:
            yield staging
        except commit_on:
            _commit(staging, out_dir)
            raise
        _commit(staging, out_dir)
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def _write_json(path: Path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg = cfg.with_overrides(seed=args.seed, out=args.out, variant=args.variant, threads=args.threads)
    cfg.dataset.check_paths()
    return cfg


def _bus() -> EventBus:
    return attach_default_logger(EventBus())


def cmd_synth(cfg: RunConfig, args, staging: Path) -> List[str]:
    if cfg.dataset.synth is None:
        raise ConfigError("synth needs a 'dataset.synth' section")
    spec = cfg.dataset.synth
    if args.seed is not None:
        spec = spec.model_copy(update={"rng_seed": args.seed})
    ds = make_imbalanced(spec)
    write_dataset(ds, staging / "dataset.csv", staging / "schema.json")
    _write_json(staging / "run_config.json", cfg.to_dict())
    return ["dataset.csv", "schema.json", "run_config.json"]


def cmd_fit(cfg: RunConfig, args, staging: Path) -> List[str]:
    loss_variant = None
    if args.variant:
        variant = cfg.generation.variant
        loss_variant = variant.required_loss_variant
        if loss_variant is None:
            raise ConfigError(f"Variant {variant.value} does not use a trained model")
    train_cfg = cfg.train_config(loss_variant)

    em = fit_encode(cfg.dataset.load())
    result = irvae.train(em, train_cfg, cfg.architecture.spec_for(em.d), _bus())
    save_model(result.model, staging / "model.json", run_config=cfg.to_dict())
    _write_json(staging / "trace.json", {
        "loss_variant": train_cfg.loss_variant.value,
        "epochs": [e.to_dict() for e in result.trace],
        "run_config": cfg.to_dict(),
    })
    return ["model.json", "trace.json"]


def cmd_generate(cfg: RunConfig, args, staging: Path) -> List[str]:
    gen_cfg = cfg.gen_config()
    if args.m is not None:
        if args.m < 1:
            raise ConfigError(f"--m must be >= 1, got {args.m}")
        gen_cfg = gen_cfg.model_copy(update={"m": args.m})
    model = None
    if gen_cfg.variant.required_loss_variant is not None:
        if not args.model:
            raise ConfigError(f"Variant {gen_cfg.variant.value} needs --model")
        model = load_model(args.model)

    ds = cfg.dataset.load()
    alpha = model.train_config.alpha if model is not None else cfg.train.alpha
    kde = model.train_config.kde() if model is not None else cfg.train.kde()
    weights = selection_weights(ds.target_values(), alpha, kde)
    batch = generate(ds, weights, gen_cfg, model, _bus())
    write_synthetic(batch, staging / "synthetic.csv", staging / "synthetic.provenance.json", cfg.to_dict())
    _write_json(staging / "run_config.json", cfg.to_dict())
    return ["synthetic.csv", "synthetic.provenance.json", "run_config.json"]


def cmd_benchmark(cfg: RunConfig, args, staging: Path) -> List[str]:
    report = run_benchmark(cfg.dataset.load(), cfg.bench_config(), _bus(), cfg.to_dict())
    write_report(report, staging / "report.json", staging / "report.csv")
    write_run_log(report.run_log, staging / "run_log.json")
    _write_json(staging / "run_config.json", cfg.to_dict())
    if report.failed_cells:
        logger.warning(f"{len(report.failed_cells)} of {len(report.cells)} cells failed")
    if report.all_failed:
        raise BenchmarkFailed(f"Every benchmark cell failed; see {Path(cfg.output_dir) / 'report.json'}")
    return ["report.json", "report.csv", "run_log.json", "run_config.json"]


def cmd_sweep(cfg: RunConfig, args, staging: Path) -> List[str]:
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"--values must be comma-separated numbers: {e}") from e
    report = sweep_beta_corr(cfg.dataset.load(), values, cfg.bench_config(), _bus(), cfg.to_dict())
    write_report(report, staging / "sweep.json", staging / "sweep.csv")
    _write_json(staging / "run_config.json", cfg.to_dict())
    return ["sweep.json", "sweep.csv", "run_config.json"]


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "generate": cmd_generate,
    "benchmark": cmd_benchmark,
    "sweep": cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        print(f"dsboot: error: {e}", file=sys.stderr)
        return e.exit_code

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    init_telemetry("dsboot", console=args.trace)

    try:
        cfg = _load_config(args)
        out_dir = Path(cfg.output_dir)
        with staged_outputs(out_dir, commit_on=(BenchmarkFailed,)) as staging:
            written = COMMANDS[args.command](cfg, args, staging)
    except DsbError as e:
        logger.error(str(e))
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return 2

    print(json.dumps({"command": args.command, "out": str(out_dir), "files": written}, indent=2))
    return 0


def run_command():
    sys.exit(main())


if __name__ == "__main__":
    run_command()
