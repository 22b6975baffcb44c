import argparse
import datetime
import logging
import sys
from pathlib import Path
from typing import List, Optional

from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from onebitcov import __version__, io
from onebitcov.config import BACKENDS, PRESETS, ExperimentConfig, default_output_root, get_db_url
from onebitcov.core import ExperimentEngine, MetricsRecord
from onebitcov.errors import OneBitError
from onebitcov.storage import Storage

log = logging.getLogger(__name__)

COMMANDS = ("simulate", "recover", "bussgang", "threshold-mle", "bench")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="obc", description="Восстановление ковариации по однобитовым данным.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML-файл с параметрами эксперимента")
    common.add_argument("--preset", choices=sorted(PRESETS), help="встроенный набор параметров")
    common.add_argument("--out", type=Path, help="каталог для CSV-результатов")
    common.add_argument("--seed", type=int)
    common.add_argument("--backend", choices=BACKENDS)
    common.add_argument("--nx", type=int, help="одно значение N_x вместо списка из конфигурации")
    common.add_argument("--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    common.add_argument("--no-user-config", action="store_true", help="не читать user_config.yml")
    common.add_argument("--save-data", action="store_true", help="сохранить выборки и знаки первого эксперимента в data/")

    sub.add_parser("simulate", parents=[common], help="восстановление дисперсий (Wiener или GARCH)")
    recover = sub.add_parser("recover", parents=[common], help="восстановление полной матрицы R_x")
    recover.add_argument("--data", type=Path, help="каталог с сохранёнными знаками и порогами вместо моделирования")
    sub.add_parser("bussgang", parents=[common], help="взаимная корреляция R_yx")
    threshold = sub.add_parser("threshold-mle", parents=[common], help="оценка параметров порога")
    threshold.add_argument("--data", type=Path, help="каталог с сохранёнными знаками и порогами вместо моделирования")
    bench = sub.add_parser("bench", parents=[common], help="сравнение бэкендов в одной точке")
    bench.add_argument("--landscape", action="store_true", help="только ландшафт критерия")
    bench.add_argument("--fitness", action="store_true", help="только точность аппроксимации Паде")

    history = sub.add_parser("history", help="журнал запусков")
    history.add_argument("--limit", type=int, default=20)
    history.add_argument("--filter", dest="filter_command", choices=COMMANDS)
    history.add_argument("--config", type=Path)
    history.add_argument("--no-user-config", action="store_true")
    return parser


def setup_logging(level: str) -> None:
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        "seed": getattr(args, "seed", None),
        "recover.backend": getattr(args, "backend", None),
        "nx": [args.nx] if getattr(args, "nx", None) is not None else None,
        "save_data": True if getattr(args, "save_data", False) else None,
    }
    if getattr(args, "backend", None) is not None:
        overrides["recover.backends"] = [args.backend]
    return ExperimentConfig.load(
        getattr(args, "config", None),
        preset=getattr(args, "preset", None),
        overrides=overrides,
        use_user_config=not args.no_user_config,
    )


def resolve_out_dir(args: argparse.Namespace, config: ExperimentConfig) -> Path:
    if getattr(args, "out", None) is not None:
        return args.out
    if config.get("output"):
        return Path(config.get("output")).expanduser()
    stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
    return default_output_root() / f"{args.command}-{stamp}"


def open_storage(config: ExperimentConfig) -> Optional[Storage]:
    if not config.get("storage.enabled"):
        return None
    storage = Storage(get_db_url(config))
    storage.init_db()
    return storage


def run_command(args: argparse.Namespace, engine: ExperimentEngine) -> MetricsRecord:
    config = engine.config
    if args.command == "simulate":
        if config.get("process.kind") == "garch":
            return engine.run_garch_experiment()
        return engine.run_variance_experiment()
    if args.command == "recover":
        if args.data is not None:
            truth_path = args.data / "truth.csv"
            truth = io.read_matrix(truth_path) if truth_path.is_file() else None
            return engine.recover_from_dataset(io.read_dataset(args.data), truth)
        return engine.run_covariance_experiment()
    if args.command == "bussgang":
        return engine.run_bussgang_experiment()
    if args.command == "threshold-mle":
        if args.data is not None:
            return engine.estimate_threshold_from_dataset(io.read_dataset(args.data))
        return engine.run_threshold_experiment()
    # neither flag means both
    both = not (args.landscape or args.fitness)
    return engine.run_bench(with_landscape=both or args.landscape, with_fitness=both or args.fitness)


def render_summary(console: Console, record: MetricsRecord) -> None:
    table = Table(box=box.SIMPLE_HEAD, header_style="bold dim", title=record.command)
    for column in record.summary.columns:
        table.add_column(str(column), justify="right")
    for row in record.summary.itertuples(index=False):
        table.add_row(*(f"{v:.4e}" if isinstance(v, float) else str(v) for v in row))
    console.print(table)


def render_history(console: Console, storage: Storage, limit: int, command: Optional[str]) -> None:
    table = Table(box=box.SIMPLE_HEAD, header_style="bold dim")
    for column in ("id", "command", "backend", "seed", "started", "wall, s", "status", "output"):
        table.add_column(column)
    for run in storage.get_runs(command=command, limit=limit):
        table.add_row(
            str(run.id),
            run.command,
            run.backend or "",
            str(run.seed),
            run.started_at.strftime("%Y-%m-%d %H:%M:%S"),
            f"{run.wall_time:.2f}" if run.wall_time is not None else "",
            run.status if run.status == "ok" else f"[red]{run.status}[/red]",
            run.output_dir or "",
        )
    console.print(table)


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point of the `obc` command; returns the process exit code."""
    args = build_parser().parse_args(argv)
    console = Console(stderr=True)
    setup_logging(getattr(args, "log_level", None) or "WARNING")
    out_dir: Optional[Path] = None
    config: Optional[ExperimentConfig] = None
    storage: Optional[Storage] = None
    try:
        config = load_config(args)
        if getattr(args, "log_level", None) is None:
            setup_logging(str(config.get("logging.level")).upper())
        if args.command == "history":
            storage = Storage(get_db_url(config))
            storage.init_db()
            render_history(Console(), storage, args.limit, args.filter_command)
            return 0
        out_dir = resolve_out_dir(args, config)
        storage = open_storage(config)
        engine = ExperimentEngine(config, storage=storage, out_dir=out_dir, show_progress=console.is_terminal)
        record = run_command(args, engine)
        render_summary(Console(), record)
        console.print(f"Результаты: {out_dir}")
        return 0
    except OneBitError as exc:
        record = exc.to_record()
        log.error(f"{record['kind']}: {record['message']}", exc_info=True)
        if out_dir is None:
            out_dir = getattr(args, "out", None)
        if out_dir is not None:
            io.write_error(out_dir, record)
        if storage is not None and config is not None:
            storage.add_run(
                command=args.command,
                seed=int(config.get("seed")),
                config_yaml=config.to_yaml(),
                output_dir=str(out_dir) if out_dir is not None else None,
                status=record["kind"],
                metrics={"error": {key: str(value) for key, value in record.items()}},
            )
        return 2
    except KeyboardInterrupt:
        return 130
    except Exception:
        # On crash, print the exception traceback
        console.print_exception(show_locals=False)
        return 1


if __name__ == "__main__":
    sys.exit(main())
