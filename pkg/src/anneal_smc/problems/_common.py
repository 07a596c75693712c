import numpy as np

from ..exceptions import InvalidInputError
from ..model import check_kappa

LOG_2PI = np.log(2 * np.pi)


def norm_logpdf(x, mean, var):
    return -0.5 * ((x - mean) ** 2 / var + np.log(var) + LOG_2PI)


def as_series(y, name="y", min_length=1):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size < min_length:
        raise InvalidInputError(f"{name} must be a 1-d series of length >= {min_length}")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return y


def positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise InvalidInputError(f"{name} must be positive, got {value!r}")
    return value


__all__ = ["LOG_2PI", "as_series", "check_kappa", "norm_logpdf", "positive"]
