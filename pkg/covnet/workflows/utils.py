import os
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from covnet.validation import DataFormatError, check_file_exist, check_uniqueness

THREADS_ENV = "COVNET_THREADS"


def detect_delimiter(csvFile):
    """Guess the delimiter of a csv file from its header line."""
    with open(csvFile, "r") as myCsvfile:
        header = myCsvfile.readline()
        if header.find(";") != -1:
            return ";"
        if header.find(",") != -1:
            return ","
    # default delimiter
    return ","


def worker_count(threads: Optional[int] = None) -> int:
    """Number of worker threads: explicit value, else $COVNET_THREADS, else all cores."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent random stream for a key path below ``seed``.

    Streams are PCG64 generators seeded by ``SeedSequence(seed, spawn_key=keys)``,
    so the stream of one key never depends on how many other keys are drawn.
    """
    seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))


def read_numeric_csv(path, what: str = "data") -> pd.DataFrame:
    """Read a csv table with a header row and numeric cells only.

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    DataFormatError
        On ragged rows, empty or duplicate header names and non-numeric or
        missing cells.
    """
    check_file_exist(path, what)
    sep = detect_delimiter(path)
    try:
        header = pd.read_csv(path, sep=sep, header=None, nrows=1, dtype=str)
        df = pd.read_csv(path, sep=sep, header=0, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"The {what} file {path} is empty.") from None
    except pd.errors.ParserError as e:
        raise DataFormatError(f"The {what} file {path} has ragged rows: {e}") from None

    names = [str(name).strip() for name in header.iloc[0].tolist()]
    if any(name in ("", "nan") for name in names):
        raise DataFormatError(f"The {what} file {path} has an empty column name.")
    check_uniqueness(names, what=f"{what} column")
    df.columns = names
    if df.empty:
        raise DataFormatError(f"The {what} file {path} has no rows.")
    if df.isna().any().any():
        row = int(np.nonzero(df.isna().any(axis=1).to_numpy())[0][0]) + 2
        raise DataFormatError(f"The {what} file {path} has missing cells on line {row}.")
    try:
        # float is correctly rounded; pd.to_numeric is not
        return df.apply(lambda col: col.str.strip().map(float))
    except ValueError as e:
        raise DataFormatError(f"The {what} file {path} has a non-numeric cell: {e}") from None


def read_edge_list(path) -> List[Tuple[str, str]]:
    """Read a two column ``from,to`` edge list; entries are names or 1-indexed ids."""
    check_file_exist(path, "edge list")
    try:
        df = pd.read_csv(path, sep=detect_delimiter(path), dtype=str)
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"The edge list {path} is empty.") from None
    except pd.errors.ParserError as e:
        raise DataFormatError(f"The edge list {path} has ragged rows: {e}") from None
    df.columns = [str(c).strip() for c in df.columns]
    if list(df.columns) != ["from", "to"]:
        raise DataFormatError(
            f"The edge list {path} should have the columns 'from,to', got {list(df.columns)}."
        )
    if df.isna().any().any():
        raise DataFormatError(f"The edge list {path} has missing cells.")
    return [(a.strip(), b.strip()) for a, b in df.itertuples(index=False)]
