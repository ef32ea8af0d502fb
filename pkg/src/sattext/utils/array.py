import numpy as np

from ..sat_errors import NumericError


def as_f64(a) -> np.ndarray:
    """Utility function to coerce to a float64 array (copying only when needed)"""

    return np.asarray(a, dtype=np.float64)


def check_finite(a: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"Operation \"{op}\" produced non-finite values.")
    return a


def row_slice(a: np.ndarray, begin: int, end: int) -> np.ndarray:
    """View of rows [begin, end) of a 2-D array"""

    assert a.ndim == 2
    assert 0 <= begin <= end <= a.shape[0], f"Slice \"[{begin}:{end}]\" is out of bound for array with shape[0]={a.shape[0]}."
    return a[begin:end]
