"""Configurable vector norms and the operator norms they induce.

The default everywhere is the max norm; "euclidean" and "one" are accepted
wherever a norm keyword appears.
"""

import numpy as np

VECTOR_NORMS = ("max", "euclidean", "one")

_VEC_ORD = {"max": np.inf, "euclidean": 2, "one": 1}


def check_norm(kind):
    if kind not in VECTOR_NORMS:
        raise ValueError(f"unknown norm {kind!r}, expected one of {VECTOR_NORMS}")
    return kind


def vector_norm(x, kind="max"):
    """Norm of a vector (or of each row of a 2-d stack of vectors)."""
    check_norm(kind)
    x = np.asarray(x)
    if x.ndim <= 1:
        return float(np.linalg.norm(x, _VEC_ORD[kind]))
    return np.linalg.norm(x, _VEC_ORD[kind], axis=-1)


def operator_norm(m, kind="max"):
    """Matrix norm induced by the chosen vector norm."""
    check_norm(kind)
    m = np.atleast_2d(np.asarray(m))
    return float(np.linalg.norm(m, _VEC_ORD[kind]))
