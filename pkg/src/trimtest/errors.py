"""Exception types shared across the package.

The CLI maps these onto exit codes: DataError -> 2, NumericalError -> 3.
Plain ValueError is used for ordinary precondition violations.
"""

from __future__ import annotations


class TrimtestError(Exception):
    """Base class for package-specific failures."""


class DataError(TrimtestError):
    """Malformed input data or configuration (CSV cells, config schema)."""


class NumericalError(TrimtestError):
    """Numerical failure: singular systems, non-finite values, degenerate KDE."""


class RankDeficiencyError(NumericalError):
    """Weighted design matrix is rank deficient."""

    def __init__(self, rank: int, ncols: int, stage: str = "design"):
        self.rank = rank
        self.ncols = ncols
        self.stage = stage
        super().__init__(
            f"{stage} matrix is rank deficient: rank {rank} < {ncols} columns"
        )
