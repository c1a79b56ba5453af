"""Raw tables, standardized datasets and the transforms between them."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InvalidInputError


@dataclass(frozen=True)
class Table:
    """Numeric data in original units: inputs ``X`` (n, d) and response ``y``."""

    X: np.ndarray
    y: np.ndarray

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class Transform:
    x_min: np.ndarray
    x_max: np.ndarray
    y_mean: float
    y_sd: float

    def to_unit(self, X, clip=True):
        """Map raw inputs into the unit cube; out-of-range points are clipped."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.x_min):
            raise InvalidInputError(f"expected {len(self.x_min)} input columns, got {X.shape[1]}")
        U = (X - self.x_min) / (self.x_max - self.x_min)
        if clip and (np.any(U < 0.0) or np.any(U > 1.0)):
            warnings.warn(
                "locations outside the training range were clipped to the unit cube (extrapolation)",
                stacklevel=2,
            )
            U = np.clip(U, 0.0, 1.0)
        return U

    def from_unit(self, U):
        return np.asarray(U, dtype=float) * (self.x_max - self.x_min) + self.x_min

    def y_to_std(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_sd

    def y_from_std(self, z):
        return np.asarray(z, dtype=float) * self.y_sd + self.y_mean

    def var_from_std(self, v):
        return np.asarray(v, dtype=float) * self.y_sd**2


@dataclass(frozen=True)
class Dataset:
    """Inputs in [0, 1]^d and a response with mean 0 and sample variance 1."""

    X: np.ndarray
    y: np.ndarray
    transform: Transform

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def subset(self, idx):
        """Rows ``idx`` keeping the parent transform (no re-standardization)."""
        return Dataset(self.X[idx], self.y[idx], self.transform)


def standardize(table):
    """Min-max scale each input column to [0, 1]; center and scale y."""
    X = np.asarray(table.X, dtype=float)
    y = np.asarray(table.y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise InvalidInputError(f"inconsistent shapes X{X.shape} y{y.shape}")
    if X.shape[0] < 2:
        raise DegenerateDataError("need at least 2 rows to standardize")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidInputError("non-finite values in data")
    x_min = X.min(axis=0)
    x_max = X.max(axis=0)
    flat = np.flatnonzero(x_max <= x_min)
    if flat.size:
        raise DegenerateDataError(f"constant input column(s): {', '.join(f'x{i + 1}' for i in flat)}")
    y_mean = float(np.mean(y))
    y_sd = float(np.std(y, ddof=1))
    # spread at rounding level of the values counts as constant
    if not y_sd > 1e-12 * float(np.max(np.abs(y))):
        raise DegenerateDataError("response column y is constant")
    tf = Transform(x_min, x_max, y_mean, y_sd)
    U = np.clip((X - x_min) / (x_max - x_min), 0.0, 1.0)
    return Dataset(U, tf.y_to_std(y), tf)
