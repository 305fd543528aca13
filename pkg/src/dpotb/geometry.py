"""Norms, balls, noise distributions and Renyi divergence closed forms."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class NormKind(enum.Enum):
    L2 = "l2"


@dataclass(frozen=True)
class NormSpec:
    """A norm together with the strong-convexity constant of its square.

    Only the Euclidean norm ships. For L2, ``||.||^2`` is 2-strongly convex
    and the dual norm is the norm itself.
    """

    kind: NormKind = NormKind.L2
    lam: float = 2.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    def norm(self, x) -> float:
        return float(np.linalg.norm(x))

    def dual_norm(self, g) -> float:
        return float(np.linalg.norm(g))


L2 = NormSpec()


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball; its diameter is the ``D`` of the analysis."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        offset = x - self.center
        dist = np.linalg.norm(offset)
        if dist <= self.radius:
            return x
        return self.center + offset * (self.radius / dist)

    def contains(self, x, slack: float = 1e-12) -> bool:
        return np.linalg.norm(np.asarray(x) - self.center) <= self.radius * (1 + slack)


def make_rng(seed) -> np.random.Generator:
    """Deterministic generator. ``seed`` may be an int, a tuple of ints
    (hashed through ``SeedSequence`` so that sibling keys are independent),
    a ``SeedSequence`` or an existing generator (returned as is)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    if isinstance(seed, (tuple, list)):
        seed = [int(s) for s in seed]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    return list(rng.spawn(n))


class NoiseKind(enum.Enum):
    GAUSSIAN_RDP = "gaussian"
    EXPONENTIAL_PURE_DP = "exponential"


@dataclass(frozen=True)
class NoiseDistribution:
    kind: NoiseKind
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    @property
    def rdp_variance(self) -> float:
        """The ``V`` constant: ``E||R||^2``.

        Gaussian: exactly ``d``. Exponential (density ~ exp(-||x||)): the radius is
        Gamma(d, 1), so ``E||R||^2 = d(d+1)``.
        """
        if self.kind is NoiseKind.GAUSSIAN_RDP:
            return float(self.dim)
        return float(self.dim * (self.dim + 1))

    @property
    def sub_gaussian_sigma(self) -> float:
        if self.kind is NoiseKind.GAUSSIAN_RDP:
            return 1.0
        raise ValueError("the exponential distribution is not sub-Gaussian")


def gaussian(dim: int) -> NoiseDistribution:
    return NoiseDistribution(NoiseKind.GAUSSIAN_RDP, dim)


def sample_noise(dist: NoiseDistribution, rng: np.random.Generator) -> np.ndarray:
    if dist.kind is NoiseKind.GAUSSIAN_RDP:
        return rng.standard_normal(dist.dim)
    # density ~ exp(-||x||_2): radius ~ Gamma(d, 1) times a uniform direction
    direction = rng.standard_normal(dist.dim)
    direction /= np.linalg.norm(direction)
    return rng.gamma(dist.dim, 1.0) * direction


def gaussian_renyi_divergence(mu, mu_prime, sigma: float, alpha: float) -> float:
    """``D_alpha(N(mu, sigma^2 I) || N(mu', sigma^2 I)) = alpha ||mu - mu'||^2 / (2 sigma^2)``."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if alpha <= 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    diff = np.atleast_1d(np.asarray(mu, dtype=float) - np.asarray(mu_prime, dtype=float))
    return float(alpha * np.dot(diff, diff) / (2.0 * sigma**2))


def pure_dp_density_ratio_bound(mu, mu_prime, sigma: float) -> float:
    """Log density-ratio bound of the scaled exponential distribution:
    ``||mu - mu'|| / sigma``."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    diff = np.atleast_1d(np.asarray(mu, dtype=float) - np.asarray(mu_prime, dtype=float))
    return float(np.linalg.norm(diff) / sigma)
