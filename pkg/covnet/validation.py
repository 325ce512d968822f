from pathlib import Path
from typing import Sequence

import numpy as np


class CovnetError(Exception):
    """Base class of all covnet errors."""


class DataFormatError(CovnetError, ValueError):
    """Input table is malformed (header mismatch, non-numeric cell, ragged rows)."""


class ConstraintError(CovnetError, ValueError):
    """Input violates a model constraint (rank, sample size, parent bound, cycle)."""


class NumericalError(CovnetError, ArithmeticError):
    """A factorization failed and could not be repaired."""


def check_file_exist(fn, name=None):
    """ """

    if not Path(fn).is_file():
        raise FileNotFoundError(
            f"The file indicated by the '{name}' parameter does not exist: {fn}"
        )


def check_uniqueness(names: Sequence[str], what: str = "variable"):
    def find_duplicates(lst):
        unique_elements = set()
        duplicates = []
        for element in lst:
            if element in unique_elements:
                duplicates.append(element)
            unique_elements.add(element)
        return duplicates

    duplicates = find_duplicates(names)

    if duplicates:
        raise DataFormatError(
            f"The {what} names should be unique, found duplicates: {duplicates}."
        )


def check_finite(values: np.ndarray, name: str):
    if not np.all(np.isfinite(values)):
        raise DataFormatError(f"The {name} contains non-finite values.")


def check_positive(name: str, value: float):
    if not np.isfinite(value) or value <= 0:
        raise ConstraintError(f"The parameter '{name}' should be positive, got {value}.")


def check_rows_match(n_data: int, n_covariates: int):
    if n_data != n_covariates:
        raise ConstraintError(
            f"The covariate matrix has {n_covariates} rows but the data set has "
            f"{n_data} samples; rows must align one to one."
        )


def check_node(v: int, p: int):
    if not 0 <= v < p:
        raise IndexError(f"Node index {v} out of range for a graph on {p} nodes.")
