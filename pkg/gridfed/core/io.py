"""
File output helpers - atomic writes for CSV, SVG and checkpoints
"""

import logging
import os
import tempfile
from pathlib import Path
from typing import Union

import pandas as pd

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_bytes_atomic(path: PathLike, data: bytes) -> Path:
    """Write to a temp file in the target directory, then rename over the target"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.debug(f"Wrote {len(data)} bytes to {path}")
    return path


def write_text_atomic(path: PathLike, text: str) -> Path:
    return write_bytes_atomic(path, text.encode("utf-8"))


def write_csv_atomic(path: PathLike, frame: pd.DataFrame) -> Path:
    """Serialize a frame with full float precision and a fixed line terminator"""
    text = frame.to_csv(index=False, lineterminator="\n", float_format="%.17g")
    return write_text_atomic(path, text)
