"""
Точка входа программы
"""
import argparse
import json
import sys

from loguru import logger

from commands import COMMANDS
from config import load_config, with_overrides
from errors import ConfigException, EngineException
from tools import prepare_output_folder


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"ожидалось целое >= 1, получено {value}")
    return number


def parse_args(argv: list[str]|None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="contagion-cdo",
        description="Оценка траншей синтетического CDO в модели динамического заражения",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON-файл настроек")
    parser.add_argument("--output", help="каталог результатов, важнее настроек и CONTAGION_CDO_OUTPUT")
    parser.add_argument("--jobs", type=_positive_int, default=1, help="число параллельных потоков")
    parser.add_argument("--seed", type=int, help="seed симуляции вместо simulation.seed")
    parser.add_argument("--mode", help="dynamic | poisson | ajd_no_self")
    parser.add_argument(
        "--flip-diffusion-sign",
        action="store_true",
        help="отладка validate: перевернуть знак sigma^2 в c'(t), проверки обязаны упасть",
    )
    return parser.parse_args(argv)


def setup_logging(level: str|int, path: str) -> None:
    logger.remove()
    logger.add(
        sys.stderr,
        level=level
    )
    logger.add(
        path,
        format="{time} {level} {message}",
        level=level,
        rotation="1 week",
        compression="zip",
    )


def report_error(ex: EngineException) -> int:
    """Машиночитаемая строка об ошибке в stderr; возвращает код выхода"""
    line = {"error": type(ex).__name__, "status": ex.status, "message": ex.message}
    print(json.dumps(line, ensure_ascii=False), file=sys.stderr)
    return ex.status


@logger.catch(onerror=lambda _: sys.exit(1))
def main(argv: list[str]|None = None) -> int:
    """Точка входа в программу"""
    args = parse_args(argv)
    try:
        if args.flip_diffusion_sign and args.command != "validate":
            raise ConfigException("--flip-diffusion-sign допустим только с командой validate")
        run = with_overrides(
            load_config(args.config, output_override=args.output),
            seed=args.seed,
            mode=args.mode,
        )
        prepare_output_folder(run.output)
        setup_logging(run.log_level, run.log_path)
        logger.info(f"Программа запущена: {args.command}, настройки {args.config}")
        options: dict[str, object] = {"jobs": args.jobs}
        if args.command == "validate":
            options["flip_diffusion_sign"] = args.flip_diffusion_sign
        written = COMMANDS[args.command](run, **options)
    except EngineException as ex:
        logger.error(str(ex))
        return report_error(ex)
    except KeyboardInterrupt:
        logger.info("Программа остановлена пользователем.")
        return 130
    for path in written:
        logger.info(f"Результат: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
