"""Exact operations on the probability simplex.

Euclidean projection, multiplicative (exponentiated-gradient) updates and the
KL divergence, shared by every training variant in the package.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolationError, InvalidInputError, SupportMismatchError

# Renormalize a distribution only when the drift exceeds this; below it the
# weights are kept bit-for-bit so that exact identities (idempotent projection,
# frozen distributions) survive long runs.
SUM_TOLERANCE = 1e-12


class SimplexDistribution:
    """A point of the probability simplex over ``size`` coordinates.

    The stored weights are non-negative and sum to one within
    ``SUM_TOLERANCE``; construction renormalizes only when the supplied
    weights drift further than that, so values that are already exact are
    preserved untouched.
    """

    __slots__ = ("weights",)

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise InvalidInputError("weights must be a non-empty 1-d vector")
        if not np.all(np.isfinite(w)):
            raise InvalidInputError("weights must be finite")
        if np.any(w < 0):
            raise InvalidInputError("weights must be non-negative")
        total = float(w.sum())
        if total <= 0:
            raise InvalidInputError("weights must have positive total mass")
        if abs(total - 1.0) > SUM_TOLERANCE:
            w = w / total
        else:
            w = w.copy()
        w.setflags(write=False)
        self.weights = w

    @classmethod
    def uniform(cls, size: int) -> "SimplexDistribution":
        if size < 1:
            raise InvalidInputError("size must be >= 1")
        return cls(np.full(size, 1.0 / size))

    @property
    def size(self) -> int:
        return self.weights.size

    def __len__(self) -> int:
        return self.weights.size

    def __repr__(self) -> str:
        return f"SimplexDistribution({self.weights.tolist()})"


def project_to_simplex(v) -> SimplexDistribution:
    """Euclidean projection of ``v`` onto the probability simplex.

    Uses the sort-based O(K log K) scheme: find the largest prefix of the
    coordinates sorted in decreasing order whose running mean keeps the
    shifted values positive, subtract that threshold and clip at zero.
    Sorting breaks ties by descending value then ascending index, so the
    result is deterministic. Inputs already on the simplex are returned
    unchanged, which makes the projection exactly idempotent.

    Parameters
    ----------
    v : array-like, shape (K,)
        Finite vector to project.

    Returns
    -------
    SimplexDistribution
        The unique nearest point of the simplex in the L2 sense.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise InvalidInputError("input must be a non-empty 1-d vector")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("input must be finite")
    if np.all(v >= 0) and abs(float(v.sum()) - 1.0) <= SUM_TOLERANCE:
        return SimplexDistribution(v)
    k = v.size
    # descending value, ties by ascending index
    order = np.lexsort((np.arange(k), -v))
    u = v[order]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, k + 1)
    rho = int(np.nonzero(u - css / idx > 0)[0][-1])
    theta = css[rho] / (rho + 1.0)
    return SimplexDistribution(np.maximum(v - theta, 0.0))


def multiplicative_update(
    p: SimplexDistribution, losses, eta_p: float
) -> SimplexDistribution:
    """Exponentiated ascent step ``p'_k ∝ p_k * exp(eta_p * loss_k)``.

    The exponent is shifted by its maximum over the support of ``p`` before
    exponentiating, so arbitrarily large losses cannot overflow. Zero
    coordinates of ``p`` stay exactly zero.
    """
    losses = np.asarray(losses, dtype=float)
    if losses.shape != (p.size,):
        raise InvalidInputError("losses must have one entry per coordinate of p")
    if not np.all(np.isfinite(losses)):
        raise InvalidInputError("losses must be finite")
    if np.any(losses < 0):
        raise ContractViolationError("multiplicative update requires non-negative losses")
    if eta_p <= 0:
        raise InvalidInputError("eta_p must be positive")
    support = p.weights > 0
    if not np.any(support):
        raise InvalidInputError("p must carry positive mass somewhere")
    z = eta_p * losses
    z = z - z[support].max()
    scaled = np.where(support, p.weights * np.exp(z), 0.0)
    return SimplexDistribution(scaled / scaled.sum())


def kl_divergence(p: SimplexDistribution, q: SimplexDistribution) -> float:
    """KL divergence ``sum_k p_k log(p_k / q_k)`` with ``0 log 0 = 0``."""
    if p.size != q.size:
        raise InvalidInputError("p and q must have the same size")
    mask = p.weights > 0
    if np.any(q.weights[mask] == 0):
        raise SupportMismatchError("q must be positive wherever p is positive")
    pw = p.weights[mask]
    total = float(np.sum(pw * np.log(pw / q.weights[mask])))
    # mathematically >= 0; clamp the last-ulp rounding noise
    return max(total, 0.0)
