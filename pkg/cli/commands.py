"""
Обработчики подкоманд lazygnn
"""
import argparse
import csv
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from engine.memory import LazyState
from engine.mlp import MlpParams
from shared.config import (
    FLOAT_DTYPE,
    METRICS_FILE,
    PARAMS_FILE,
    RESOLVED_CONFIG_FILE,
    RUNS_DIR,
    STATE_FILE,
    read_config_file,
    write_config_file,
)
from shared.dataset import Dataset, load_dataset_dir, save_dataset
from shared.models import SbmSpec, TrainConfig
from shared.sbm import generate_sbm
from shared.validation import ConfigError, ValidationError
from trainer.ablation import run_ablation
from trainer.bench import bench, bench_diffusion
from trainer.metrics import MetricsWriter
from trainer.oracles import run_oracle_suite
from trainer.service import LazyGnnTrainer, evaluate, evaluate_converged

logger = logging.getLogger(__name__)

# Флаги, перекрывающие поля TrainConfig
TRAIN_FLAGS = (
    "epochs", "batch_size", "lr", "weight_decay", "dropout", "alpha", "beta", "gamma",
    "layers", "inference_layers", "hidden", "mlp_layers", "eval_every", "variant",
    "target_pool", "seed",
)
SBM_FLAGS = ("blocks", "nodes_per_block", "p_in", "p_out", "feature_dim", "feature_noise_sigma", "seed")


def _flag_overrides(args: argparse.Namespace, names) -> Dict[str, object]:
    return {name: getattr(args, name) for name in names if getattr(args, name, None) is not None}


def resolve_config(args: argparse.Namespace) -> TrainConfig:
    """
    Конфиг прогона: значения по умолчанию ← файл --config ← флаги CLI

    Raises:
        ConfigError: Файл не найден, неизвестный ключ, значение вне диапазона
    """
    values: Dict[str, object] = read_config_file(Path(args.config)) if args.config else {}
    values.update(_flag_overrides(args, TRAIN_FLAGS))
    return TrainConfig.from_flat(values)


def resolve_sbm_spec(args: argparse.Namespace) -> SbmSpec:
    values: Dict[str, object] = read_config_file(Path(args.config)) if args.config else {}
    values.update(_flag_overrides(args, SBM_FLAGS))
    try:
        return SbmSpec(**values)
    except (PydanticValidationError, TypeError) as e:
        raise ConfigError(f"Invalid SBM spec: {e}") from e


def load_data(args: argparse.Namespace, cfg: TrainConfig) -> Dataset:
    """Каталог --data или SBM по умолчанию с seed прогона"""
    if args.data:
        return load_dataset_dir(Path(args.data), seed=cfg.seed, add_self_loops=cfg.add_self_loops, dtype=cfg.dtype)
    logger.info("No --data given, generating default SBM dataset")
    return generate_sbm(SbmSpec(seed=cfg.seed), add_self_loops=cfg.add_self_loops, dtype=cfg.dtype)


def _run_dir(args: argparse.Namespace) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        out = RUNS_DIR / datetime.now().strftime("run-%Y%m%d-%H%M%S")
    out.mkdir(parents=True, exist_ok=True)
    return out


def train_command(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if args.mode == "full":
        if cfg.batch_size:
            logger.warning(f"Full-batch mode ignores batch_size={cfg.batch_size}")
        cfg = cfg.with_overrides(batch_size=0)
    elif cfg.full_batch:
        raise ConfigError("train mini requires batch_size >= 1 (--batch-size or config)")

    dataset = load_data(args, cfg)
    out = _run_dir(args)
    write_config_file(out / RESOLVED_CONFIG_FILE, cfg.to_flat())

    logger.info(f"🚀 Training ({args.mode}) into {out}")
    with MetricsWriter(out / METRICS_FILE) as metrics:
        trainer = LazyGnnTrainer(dataset, cfg, metrics)
        records = trainer.train()

    trainer.params.save(out / PARAMS_FILE)
    if trainer.state is not None:
        trainer.state.dump(out / STATE_FILE)

    last = records[-1]
    print(f"epochs={last.epoch} iter={last.iter} train_loss={last.train_loss:.4f} val_acc={last.val_accuracy:.4f}")
    if dataset.test_mask.any():
        lazy = trainer.evaluate(dataset.test_mask)
        converged = trainer.evaluate_converged(dataset.test_mask)
        print(f"test_acc={lazy:.4f} test_acc_converged={converged:.4f}")
    print(f"run_dir={out}")
    logger.info("✅ Training finished")
    return 0


def eval_command(args: argparse.Namespace) -> int:
    run = Path(args.run)
    config_path = run / RESOLVED_CONFIG_FILE
    if not config_path.is_file():
        raise ConfigError(f"Run directory has no {RESOLVED_CONFIG_FILE}: {run}")

    values: Dict[str, object] = read_config_file(config_path)
    if args.config:
        values.update(read_config_file(Path(args.config)))
    values.update(_flag_overrides(args, ("seed", "inference_layers")))
    cfg = TrainConfig.from_flat(values)

    dataset = load_data(args, cfg)
    params = MlpParams.load(run / PARAMS_FILE)
    state = None
    if cfg.variant == "lazy" and (run / STATE_FILE).is_file():
        state = LazyState.load(run / STATE_FILE, dtype=cfg.dtype)
        if state.num_nodes != dataset.num_nodes or state.num_classes != params.out_dim:
            raise ValidationError(
                f"State is {state.num_nodes}x{state.num_classes}, "
                f"dataset/model need {dataset.num_nodes}x{params.out_dim}"
            )

    mask = dict(zip(("train", "val", "test"), dataset.masks))[args.split]
    features = dataset.features.astype(cfg.dtype, copy=False)
    lazy = evaluate(params, state, dataset.graph, features, dataset.labels, mask, cfg)
    converged = evaluate_converged(params, dataset.graph, features, dataset.labels, mask, cfg)
    print(f"{args.split}_acc={lazy:.4f} {args.split}_acc_converged={converged:.4f}")
    return 0


def bench_command(args: argparse.Namespace) -> int:
    base = resolve_config(args)
    dataset = load_data(args, base)
    cfgs = [base.with_overrides(variant="lazy", layers=layers) for layers in args.lazy_layers]
    cfgs += [base.with_overrides(variant="appnp", layers=layers) for layers in args.appnp_layers]

    print("variant\tL\tsec_per_epoch\tstore_bytes")
    for row in bench(dataset, cfgs):
        print(f"{row.variant}\t{row.layers}\t{row.sec_per_epoch:.6f}\t{row.store_bytes}")

    if args.widths:
        print("width\tsec_per_diffusion")
        for width, seconds in bench_diffusion(dataset.graph, args.widths, layers=base.hp.layers, seed=base.seed):
            print(f"{width}\t{seconds:.6f}")
    return 0


def oracle_command(args: argparse.Namespace) -> int:
    if args.config:
        read_config_file(Path(args.config))
        logger.info("oracle-check takes no config keys; file checked only")
    report = run_oracle_suite(n=args.n, trials=args.trials, seed=args.seed or 0)
    for line in report.lines():
        print(line)
    passed = report.passed()
    print("PASS" if passed else "FAIL")
    return 0 if passed else 1


def gen_sbm_command(args: argparse.Namespace) -> int:
    spec = resolve_sbm_spec(args)
    dataset = generate_sbm(spec, dtype=FLOAT_DTYPE)
    out = save_dataset(dataset, Path(args.out), binary_features=not args.csv_features)
    print(f"nodes={dataset.num_nodes} edges={len(dataset.edges)} out={out}")
    return 0


def redundancy_command(args: argparse.Namespace) -> int:
    """
    Два прогона, с dropout из конфига и без него; ряды избыточности в CSV
    """
    cfg = resolve_config(args)
    dataset = load_data(args, cfg)
    series = {}
    for name, run_cfg in (("dropout", cfg), ("no_dropout", cfg.with_overrides(dropout=0.0))):
        trainer = LazyGnnTrainer(dataset, run_cfg)
        trainer.train()
        series[name] = trainer.redundancy_series
        values = [v for v in trainer.redundancy_series if v is not None]
        print(f"{name}: dropout={run_cfg.dropout} mean_redundancy={np.mean(values) if values else float('nan'):.4e}")

    out = _run_dir(args)
    with open(out / "redundancy.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "dropout", "no_dropout"])
        for step, pair in enumerate(zip(series["dropout"], series["no_dropout"]), 1):
            writer.writerow([step] + ["" if v is None else repr(v) for v in pair])
    print(f"run_dir={out}")
    return 0


def ablation_command(args: argparse.Namespace) -> int:
    base = resolve_config(args)
    dataset = load_data(args, base)
    seeds = [base.seed + i for i in range(args.seeds)]
    print("variant\tmean_acc\tstd_acc")
    for row in run_ablation(dataset, base, seeds=seeds):
        print(f"{row.name}\t{row.mean_accuracy:.4f}\t{row.std_accuracy:.4f}")
    return 0
