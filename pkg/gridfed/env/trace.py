"""
Env trace - Hour-by-hour CSV dump of StepRecords
"""

from pathlib import Path
from typing import Iterable, List, Tuple

import pandas as pd

from gridfed.core.io import PathLike, write_csv_atomic
from gridfed.env.microgrid import StepRecord

TRACE_COLUMNS = ["building", "hour", "load", "solar", "batt", "grid", "soc",
                 "reward", "penalty", "cost", "emission"]


def trace_frame(episodes: Iterable[Tuple[int, List[StepRecord]]]) -> pd.DataFrame:
    """Flatten (building, records) pairs into trace rows"""
    rows = [
        {
            "building": building,
            "hour": r.hour,
            "load": r.e_load,
            "solar": r.e_solar,
            "batt": r.e_batt,
            "grid": r.e_grid,
            "soc": r.soc,
            "reward": r.reward,
            "penalty": r.penalty,
            "cost": r.cost,
            "emission": r.emission,
        }
        for building, records in episodes
        for r in records
    ]
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def write_trace(path: PathLike, episodes: Iterable[Tuple[int, List[StepRecord]]]) -> Path:
    return write_csv_atomic(path, trace_frame(episodes))
