"""Deterministic tensor kernels and the finite-difference gradient oracle.

All kernels operate on float64 numpy arrays (2-D arrays play the generic
"rows x cols" tensor role throughout the package). Reductions rely on
numpy's fixed left-to-right evaluation order within one process, so equal
seeds reproduce bit-identical values.

Randomness policy: every random stream in the package is drawn from the
counter-based Philox4x64-10 generator (``numpy.random.Philox``), keyed by a
64-bit seed plus an optional stream index. The generator is specified by
name so other implementations can reproduce identical synthetic data.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import (
    EmptySequence,
    NonFiniteEvaluation,
    NonPositiveTemperature,
    ZeroNorm,
)

NORM_EPS = 1e-12


def rng_from_seed(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for ``seed``, optionally forked by a stream key.

    ``rng_from_seed(s)`` and ``rng_from_seed(s, k)`` are independent streams;
    the same (seed, stream) always yields the same sequence.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in stream))
    return np.random.Generator(np.random.Philox(seq))


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm, preserving direction.

    Raises ZeroNorm when the norm is at or below ``NORM_EPS``.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise EmptySequence("cannot normalize an empty vector")
    norm = float(np.linalg.norm(v))
    if not np.isfinite(norm) or norm <= NORM_EPS:
        raise ZeroNorm(f"vector norm {norm!r} is not normalizable")
    return v / norm


def softmax_temp(logits: np.ndarray, temp: float) -> np.ndarray:
    """Temperature-scaled softmax along the last axis.

    Computed as softmax(logits / temp) with max subtraction for stability.
    Rows sum to 1 to within 1e-9 for any finite input.
    """
    if not (np.isfinite(temp) and temp > 0):
        raise NonPositiveTemperature(f"temperature must be > 0, got {temp!r}")
    x = np.asarray(logits, dtype=np.float64) / float(temp)
    x = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(x)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax_temp(logits: np.ndarray, temp: float) -> np.ndarray:
    """log(softmax_temp(logits, temp)), evaluated without underflow."""
    if not (np.isfinite(temp) and temp > 0):
        raise NonPositiveTemperature(f"temperature must be > 0, got {temp!r}")
    x = np.asarray(logits, dtype=np.float64) / float(temp)
    x = x - np.max(x, axis=-1, keepdims=True)
    return x - np.log(np.sum(np.exp(x), axis=-1, keepdims=True))


def mean_pool(tokens: np.ndarray) -> np.ndarray:
    """Column-wise mean of an N x d token matrix (N >= 1)."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2:
        raise ValueError(f"expected a 2-D token matrix, got shape {tokens.shape}")
    if tokens.shape[0] == 0:
        raise EmptySequence("cannot pool an empty token sequence")
    return tokens.mean(axis=0)


def finite_diff_grad(
    f: Callable[[np.ndarray], float],
    x: np.ndarray | Sequence[float],
    eps: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient estimate of a scalar field at ``x``.

    Coordinate i gets (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps). Used as
    the independent oracle against every analytic gradient in the package.
    """
    if not (1e-6 <= eps <= 1e-3):
        raise ValueError(f"eps must lie in [1e-6, 1e-3], got {eps!r}")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteEvaluation(f"objective non-finite at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Max-norm relative difference used by the gradient verification suite."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(float(np.max(np.abs(b))) if b.size else 0.0, floor)
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    return diff / denom
