"""
Точка входа lazygnn: разбор аргументов, логирование, коды выхода
"""
import argparse
import logging
import sys
from typing import List, Optional

from shared.config import LOG_FORMAT, LOG_LEVEL, LOGS_DIR
from shared.validation import ConfigError, LazyGnnError
from cli import commands

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def setup_logging(level: str = LOG_LEVEL):
    """Файл LOGS_DIR/lazygnn.log + консоль"""
    LOGS_DIR.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(LOGS_DIR / "lazygnn.log"),
            logging.StreamHandler()
        ]
    )


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=None, help="Seed (перекрывает конфиг)")
    parser.add_argument("--config", default=None, help="Файл конфига key = value")


def _add_data(parser: argparse.ArgumentParser):
    parser.add_argument("--data", default=None, help="Каталог датасета (edges.tsv, features, labels.csv[, splits.csv]); без него - SBM по умолчанию")


def _add_training(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("training")
    group.add_argument("--epochs", type=int)
    group.add_argument("--batch-size", type=int, dest="batch_size")
    group.add_argument("--lr", type=float)
    group.add_argument("--weight-decay", type=float, dest="weight_decay")
    group.add_argument("--dropout", type=float)
    group.add_argument("--alpha", type=float)
    group.add_argument("--beta", type=float)
    group.add_argument("--gamma", type=float)
    group.add_argument("--layers", type=int)
    group.add_argument("--inference-layers", type=int, dest="inference_layers")
    group.add_argument("--hidden", type=int)
    group.add_argument("--mlp-layers", type=int, dest="mlp_layers")
    group.add_argument("--eval-every", type=int, dest="eval_every")
    group.add_argument("--variant", choices=["lazy", "appnp"])
    group.add_argument("--target-pool", choices=["all", "train"], dest="target_pool")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lazygnn", description="LazyGNN: ленивое распространение для классификации узлов")
    parser.add_argument("--log-level", default=LOG_LEVEL)
    subparsers = parser.add_subparsers(dest="command")

    train = subparsers.add_parser("train", help="Обучение (full | mini)")
    train.add_argument("mode", choices=["full", "mini"])
    _add_common(train)
    _add_data(train)
    _add_training(train)
    train.add_argument("--out", default=None, help="Каталог прогона")
    train.set_defaults(handler=commands.train_command)

    evaluate = subparsers.add_parser("eval", help="Оценка сохранённого прогона")
    _add_common(evaluate)
    _add_data(evaluate)
    evaluate.add_argument("--run", required=True, help="Каталог прогона train")
    evaluate.add_argument("--split", choices=["train", "val", "test"], default="test")
    evaluate.add_argument("--inference-layers", type=int, dest="inference_layers")
    evaluate.set_defaults(handler=commands.eval_command)

    bench = subparsers.add_parser("bench", help="Время эпохи и объём хранилищ")
    _add_common(bench)
    _add_data(bench)
    _add_training(bench)
    bench.add_argument("--lazy-layers", type=int, nargs="+", default=[1, 2, 4, 8])
    bench.add_argument("--appnp-layers", type=int, nargs="*", default=[10])
    bench.add_argument("--widths", type=int, nargs="*", default=[], help="Ширины H для замера диффузии")
    bench.set_defaults(handler=commands.bench_command)

    oracle = subparsers.add_parser("oracle-check", help="Оракулы распространения и градиента")
    _add_common(oracle)
    oracle.add_argument("--n", type=int, default=64)
    oracle.add_argument("--trials", type=int, default=20)
    oracle.set_defaults(handler=commands.oracle_command)

    gen = subparsers.add_parser("gen-sbm", help="Сгенерировать датасет SBM")
    _add_common(gen)
    gen.add_argument("--out", required=True)
    gen.add_argument("--blocks", type=int)
    gen.add_argument("--nodes-per-block", type=int, dest="nodes_per_block")
    gen.add_argument("--p-in", type=float, dest="p_in")
    gen.add_argument("--p-out", type=float, dest="p_out")
    gen.add_argument("--feature-dim", type=int, dest="feature_dim")
    gen.add_argument("--sigma", type=float, dest="feature_noise_sigma")
    gen.add_argument("--csv-features", action="store_true", help="Признаки в CSV вместо LZFT")
    gen.set_defaults(handler=commands.gen_sbm_command)

    redundancy = subparsers.add_parser("redundancy", help="Избыточность вычислений с dropout и без")
    _add_common(redundancy)
    _add_data(redundancy)
    _add_training(redundancy)
    redundancy.add_argument("--out", default=None)
    redundancy.set_defaults(handler=commands.redundancy_command)

    ablation = subparsers.add_parser("ablation", help="Абляции L, β/γ, APPNP, MLP")
    _add_common(ablation)
    _add_data(ablation)
    _add_training(ablation)
    ablation.add_argument("--seeds", type=int, default=5)
    ablation.set_defaults(handler=commands.ablation_command)

    return parser


def run_cli(argv: Optional[List[str]] = None) -> int:
    """
    Выполнить команду

    Returns:
        0 - успех, 1 - ошибка выполнения, 2 - ошибка использования или конфига
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    setup_logging(args.log_level)

    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"lazygnn: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LazyGnnError as e:
        logger.error(f"❌ {args.command} failed: {e}", exc_info=True)
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"❌ Unexpected error in {args.command}: {e}", exc_info=True)
        return EXIT_FAILURE


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
