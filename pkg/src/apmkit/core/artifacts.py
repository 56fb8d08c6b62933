"""输出文件写入（原子替换）"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Union

import pandas as pd

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# 浮点数以 17 位有效数字写出，读回后逐位一致
FLOAT_FORMAT = "%.17g"


def write_bytes_atomic(path: PathLike, data: bytes) -> Path:
    """先写临时文件再 os.replace，避免留下半截文件"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"已写出 {target}")
    return target


def write_text_atomic(path: PathLike, text: str) -> Path:
    return write_bytes_atomic(path, text.encode("utf-8"))


def write_json(path: PathLike, payload: Any) -> Path:
    """写出排序键、缩进固定的 JSON"""
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
    return write_text_atomic(path, text + "\n")


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return write_text_atomic(path, text)
