"""Covariances, regression residuals and least-squares fits."""

import logging
from typing import Dict, Iterable, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import CONDITION_CAP, DegenerateDataError, SingularMatrixError

_LOG = logging.getLogger(__name__)


class DataMatrix:
    """
    Observations of p variables over n samples.

    Rows are variables and columns are samples. Row order only matters through
    ``variable_ids``.
    """

    def __init__(self, values, variable_ids: Optional[Sequence[str]] = None):
        """
        Create a DataMatrix.

        :param values: p x n array-like of real observations
        :param variable_ids: p unique identifiers, default ``x1..xp``
        """
        array = np.array(values, dtype=float, copy=True)
        if array.ndim != 2:
            raise ValueError(f"expected a 2-d array, got {array.ndim} dimensions")
        if variable_ids is None:
            variable_ids = [f"x{i + 1}" for i in range(array.shape[0])]
        ids = tuple(str(variable_id) for variable_id in variable_ids)
        if len(ids) != array.shape[0]:
            raise ValueError(f"{len(ids)} variable ids given for {array.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise ValueError("variable ids must be unique")
        if not np.all(np.isfinite(array)):
            raise ValueError("observations must be finite")
        array.setflags(write=False)
        self.values = array
        self.variable_ids = ids

    @property
    def p(self) -> int:
        """Get the number of variables."""
        return self.values.shape[0]

    @property
    def n(self) -> int:
        """Get the number of samples."""
        return self.values.shape[1]

    def index(self, variable_id: str) -> int:
        """Get the row index of a variable."""
        try:
            return self.variable_ids.index(variable_id)
        except ValueError:
            raise KeyError(f"Unknown variable {variable_id!r}") from None

    def row(self, variable_id: str) -> np.ndarray:
        """Get the observations of one variable."""
        return self.values[self.index(variable_id)]

    def subset(self, variable_ids: Iterable[str]) -> "DataMatrix":
        """Get a DataMatrix restricted to the given variables, in that order."""
        ids = list(variable_ids)
        return DataMatrix(self.values[[self.index(i) for i in ids]], ids)

    def centered(self) -> "DataMatrix":
        """Subtract each variable's sample mean."""
        return DataMatrix(
            self.values - self.values.mean(axis=1, keepdims=True), self.variable_ids
        )

    def permute_samples(self, order: Sequence[int]) -> "DataMatrix":
        """Reorder the sample columns."""
        return DataMatrix(self.values[:, list(order)], self.variable_ids)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "DataMatrix":
        """Build a DataMatrix from a samples x variables frame."""
        return cls(frame.to_numpy(dtype=float).T, [str(c) for c in frame.columns])

    def to_frame(self) -> pd.DataFrame:
        """Convert to a samples x variables frame."""
        return pd.DataFrame(self.values.T, columns=list(self.variable_ids))

    def __repr__(self):
        """Get a string representation of the DataMatrix."""
        return f"DataMatrix(p={self.p}, n={self.n}, variable_ids={self.variable_ids!r})"

    def __eq__(self, other):
        """Check if this DataMatrix holds the same observations as another."""
        return (
            isinstance(other, DataMatrix)
            and self.variable_ids == other.variable_ids
            and np.array_equal(self.values, other.values)
        )


class CovarianceBlocks(NamedTuple):
    """A sample covariance matrix with 1/(n-1) normalization."""

    full: np.ndarray
    variable_ids: Tuple[str, ...]

    def block(self, rows: Sequence[str], columns: Sequence[str]) -> np.ndarray:
        """Get the sub-matrix for the given variables."""
        index = self.variable_ids.index
        return self.full[np.ix_([index(r) for r in rows], [index(c) for c in columns])]


def _check_variances(X: DataMatrix, variances: np.ndarray):
    for variable_id, variance in zip(X.variable_ids, variances):
        if not variance > 0.0:
            raise DegenerateDataError(variable_id)


def covariance(X: DataMatrix) -> CovarianceBlocks:
    """
    Compute the unbiased sample covariance of every pair of variables.

    :raises DegenerateDataError: if any variable has zero variance
    """
    if X.n < 2:
        raise ValueError(f"covariance needs at least 2 samples, got {X.n}")
    deviations = X.values - X.values.mean(axis=1, keepdims=True)
    full = deviations @ deviations.T / (X.n - 1)
    full = (full + full.T) / 2
    _check_variances(X, np.diag(full))
    return CovarianceBlocks(full, X.variable_ids)


def simple_residuals(X: DataMatrix, j: str) -> DataMatrix:
    """
    Regress every other variable on x_j.

    Row i of the result is ``x_i - cov(x_i, x_j) / var(x_j) * x_j``.

    :raises DegenerateDataError: if x_j has zero variance
    """
    regressor = X.row(j)
    deviations = X.values - X.values.mean(axis=1, keepdims=True)
    centered = deviations[X.index(j)]
    variance = centered @ centered
    if not variance > 0.0:
        raise DegenerateDataError(j)

    others = [i for i in X.variable_ids if i != j]
    rows = X.subset(others).values
    coefficients = deviations[[X.index(i) for i in others]] @ centered / variance
    return DataMatrix(rows - np.outer(coefficients, regressor), others)


def multiple_residual(
    X: DataMatrix, j: str, condition_cap: float = CONDITION_CAP
) -> np.ndarray:
    """
    Regress x_j on all the other variables of X.

    :raises SingularMatrixError: if the regressor covariance is badly conditioned
    """
    blocks = covariance(X)
    others = [i for i in X.variable_ids if i != j]
    sigma_others = blocks.block(others, others)
    condition = float(np.linalg.cond(sigma_others))
    if not condition <= condition_cap:
        raise SingularMatrixError(
            condition, f"regressing {j!r} on {len(others)} variables"
        )
    coefficients = np.linalg.solve(sigma_others, blocks.block(others, [j])[:, 0])
    return X.row(j) - coefficients @ X.subset(others).values


def ols_fit(
    X: DataMatrix,
    target: str,
    regressors: Sequence[str],
    condition_cap: float = CONDITION_CAP,
) -> Dict[str, float]:
    """
    Fit an intercept-free least-squares regression of target on regressors.

    The data are expected to be centered.

    :returns coefficient per regressor id
    :raises DegenerateDataError: if a regressor has zero variance
    :raises SingularMatrixError: if the Gram matrix is badly conditioned
    """
    if len(regressors) == 0:
        raise ValueError("at least one regressor is required")
    design = X.subset(regressors).values
    for variable_id, row in zip(regressors, design):
        if not np.var(row) > 0.0:
            raise DegenerateDataError(variable_id)
    gram = design @ design.T
    condition = float(np.linalg.cond(gram))
    if not condition <= condition_cap:
        raise SingularMatrixError(condition, f"fitting {target!r}")
    coefficients = np.linalg.solve(gram, design @ X.row(target))
    _LOG.debug("ols %s ~ %s: %s", target, regressors, coefficients)
    return {r: float(c) for r, c in zip(regressors, coefficients)}
