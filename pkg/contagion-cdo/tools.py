import csv
import io
import json
import os
import re
from typing import Any, Iterable, Sequence

from loguru import logger

ENGINE_VERSION = "1.0.0"
CSV_SIGNIFICANT_DIGITS = 10


def prepare_output_folder(output_path: str) -> str:
    """Создание каталога результатов; существующие файлы не трогаются"""
    if not os.path.exists(output_path):
        os.makedirs(output_path)
        logger.info(f"Создана папка результатов по пути {output_path}")
    return os.path.abspath(output_path)


def format_number(value: Any) -> str:
    """10 значащих цифр, точка как разделитель, без зависимости от локали"""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if value != value:
            return "nan"
        text = f"{value:.{CSV_SIGNIFICANT_DIGITS}g}"
        return "0" if text == "-0" else text
    return str(value)


def config_comment(resolved: dict[str, Any], version: str) -> str:
    """Строка-комментарий с итоговыми настройками и версией движка"""
    payload = json.dumps(resolved, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return f"# contagion-cdo {version} config={payload}"


def write_csv_atomic(
        path: str,
        header: Sequence[str],
        rows: Iterable[Sequence[Any]],
        comment: str
    ) -> str:
    """Запись CSV через временный файл и os.replace

    Первая строка: комментарий, вторая: заголовок
    """
    buffer = io.StringIO()
    buffer.write(comment.replace("\n", " ") + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    count = 0
    for row in rows:
        writer.writerow([format_number(item) for item in row])
        count += 1
    temp_path = f"{path}.tmp"
    with open(temp_path, "w", encoding="utf-8", newline="") as f:
        f.write(buffer.getvalue())
    os.replace(temp_path, path)
    logger.info(f"Записано строк: {count} в {path}")
    return path


def make_safe_filename(filename: str) -> str:
    """Имя файла из произвольной метки: только буквы, цифры, точка, дефис и подчёркивание"""
    return re.sub(r"[^\w.\-]+", "_", filename).strip("._") or "_"
