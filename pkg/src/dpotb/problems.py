"""Synthetic stochastic convex problems with exact (or cached) constants.

Each instance exposes the per-example gradient oracle used by the conversion
driver, the population objective, and the suboptimality gap against a known
optimum. Domains are always Euclidean balls; ``D`` is the ball diameter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Ball, make_rng


@dataclass(frozen=True)
class Dataset:
    """Immutable ordered sample ``z_1..z_T`` (row ``t-1`` holds ``z_t``)."""

    items: np.ndarray

    def __post_init__(self):
        items = np.array(self.items, dtype=float, copy=True)
        items.setflags(write=False)
        object.__setattr__(self, "items", items)

    @property
    def T(self) -> int:
        return self.items.shape[0]

    def __len__(self):
        return self.T

    def __getitem__(self, t):
        return self.items[t]

    def neighbor(self, q: int, z_new) -> "Dataset":
        """Copy with the datum at 0-based index ``q`` replaced."""
        items = np.array(self.items)
        items[q] = z_new
        return Dataset(items)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Base for problem families. Subclasses fill in the oracle methods."""

    dim: int
    D: float
    G: float
    H: float
    sigma_G: float
    sigma_H: float
    mu: float
    optimum: np.ndarray
    seed: int
    center: np.ndarray = field(default=None)

    family = "base"
    # population gradient and gap are cheap enough to evaluate every round
    cheap_oracle = False

    def __post_init__(self):
        center = np.zeros(self.dim) if self.center is None else np.asarray(self.center, float)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "optimum", np.asarray(self.optimum, dtype=float))

    @property
    def domain(self) -> Ball:
        return Ball(self.center, self.D / 2.0)

    @property
    def domain_radius(self) -> float:
        return self.D / 2.0

    def sample(self, rng, n: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x, z) -> np.ndarray:
        raise NotImplementedError

    def loss(self, x, z) -> float:
        raise NotImplementedError

    def population_loss(self, x) -> float:
        raise NotImplementedError

    def population_grad(self, x) -> np.ndarray | None:
        """Exact ``grad L(x)`` when the family has it in closed form, else None."""
        return None

    def gap(self, x) -> float:
        return self.population_loss(x) - self.population_loss(self.optimum)

    def dataset(self, T: int, rng) -> Dataset:
        return Dataset(self.sample(make_rng(rng), T))

    def descriptor(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True)


def _unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


@dataclass(frozen=True, eq=False)
class QuadraticProblem(ProblemInstance):
    """``l(x, z) = (H/2) ||x - x* - z||^2`` with ``z`` uniform on a sphere of
    radius ``sigma_G / H``.

    The noise is mean zero with ``E||z||^2 = (sigma_G/H)^2``, so the gradient
    noise level is exactly ``sigma_G``. Gradient differences are deterministic
    (``sigma_H = 0``) and ``L`` is ``H``-strongly convex.
    """

    noise_radius: float = 0.0
    optimum_distance: float = 0.0

    family = "quadratic"
    cheap_oracle = True

    def sample(self, rng, n=None):
        rng = make_rng(rng)
        size = 1 if n is None else n
        if self.noise_radius == 0.0:
            z = np.zeros((size, self.dim))
        else:
            z = rng.standard_normal((size, self.dim))
            z *= self.noise_radius / np.linalg.norm(z, axis=1, keepdims=True)
        return z[0] if n is None else z

    def grad(self, x, z):
        return self.H * (x - self.optimum - z)

    def loss(self, x, z):
        r = x - self.optimum - z
        return 0.5 * self.H * float(r @ r)

    def population_loss(self, x):
        r = np.asarray(x) - self.optimum
        return 0.5 * self.H * (float(r @ r) + self.noise_radius**2)

    def population_grad(self, x):
        return self.H * (np.asarray(x) - self.optimum)

    def gap(self, x):
        r = np.asarray(x) - self.optimum
        return 0.5 * self.H * float(r @ r)

    def descriptor(self):
        return {
            "family": self.family,
            "dim": self.dim,
            "D": self.D,
            "H": self.H,
            "sigma_G": self.sigma_G,
            "seed": self.seed,
            "optimum_distance": self.optimum_distance,
        }


def make_quadratic(
    dim: int,
    D: float,
    H: float,
    sigma_G: float,
    seed: int,
    optimum_distance: float | None = None,
) -> QuadraticProblem:
    """Quadratic family on the ball of diameter ``D`` centred at the origin.

    ``optimum_distance`` defaults to ``D/4``; it must lie in ``[0, D/2]``.
    """
    if dim < 1 or D <= 0 or H <= 0:
        raise ValueError(f"need dim >= 1, D > 0, H > 0; got dim={dim}, D={D}, H={H}")
    if sigma_G < 0:
        raise ValueError(f"sigma_G must be nonnegative, got {sigma_G}")
    if optimum_distance is None:
        optimum_distance = D / 4.0
    if not 0 <= optimum_distance <= D / 2.0:
        raise ValueError(f"optimum_distance must lie in [0, D/2], got {optimum_distance}")
    rng = make_rng([seed, 0])
    optimum = optimum_distance * _unit_vector(rng, dim)
    noise_radius = sigma_G / H
    return QuadraticProblem(
        dim=dim,
        D=float(D),
        G=H * D + H * noise_radius,
        H=float(H),
        sigma_G=float(sigma_G),
        sigma_H=0.0,
        mu=float(H),
        optimum=optimum,
        seed=int(seed),
        noise_radius=noise_radius,
        optimum_distance=float(optimum_distance),
    )


def _log1pexp(u):
    return np.logaddexp(0.0, u)


def _sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


@dataclass(frozen=True, eq=False)
class LogisticProblem(ProblemInstance):
    """``l(x, (a, y)) = log(1 + exp(-y <a, x>))`` with ``||a|| <= R``.

    A datum is stored as the row ``[a_1..a_d, y]``. The population objective is
    approximated by a fixed evaluation sample drawn from the instance seed; the
    stored optimum minimises that same sample over the ball.
    """

    R: float = 1.0
    teacher: np.ndarray = None
    eval_sample: np.ndarray = None

    family = "logistic"

    def sample(self, rng, n=None):
        rng = make_rng(rng)
        size = 1 if n is None else n
        a = rng.standard_normal((size, self.dim))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        a *= self.R * rng.random((size, 1)) ** (1.0 / self.dim)
        p = _sigmoid(a @ self.teacher)
        y = np.where(rng.random(size) < p, 1.0, -1.0)
        z = np.column_stack([a, y])
        return z[0] if n is None else z

    def grad(self, x, z):
        a, y = z[:-1], z[-1]
        return -y * _sigmoid(-y * float(a @ x)) * a

    def loss(self, x, z):
        a, y = z[:-1], z[-1]
        return float(_log1pexp(-y * float(a @ x)))

    def _losses(self, x):
        a, y = self.eval_sample[:, :-1], self.eval_sample[:, -1]
        return _log1pexp(-y * (a @ x))

    def population_loss(self, x):
        return float(np.mean(self._losses(np.asarray(x))))

    def population_grad(self, x):
        a, y = self.eval_sample[:, :-1], self.eval_sample[:, -1]
        s = _sigmoid(-y * (a @ x))
        return -(a * (y * s)[:, None]).mean(axis=0)

    def gap_with_stderr(self, x) -> tuple[float, float]:
        diff = self._losses(np.asarray(x)) - self._losses(self.optimum)
        return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(diff.size))

    def gap(self, x):
        return self.gap_with_stderr(x)[0]

    def descriptor(self):
        return {
            "family": self.family,
            "dim": self.dim,
            "D": self.D,
            "R": self.R,
            "seed": self.seed,
            "n_eval": int(self.eval_sample.shape[0]),
            "optimum": [float(v) for v in self.optimum],
        }


def _fit_logistic_optimum(problem: LogisticProblem, tol: float = 1e-10, max_iter: int = 20000):
    """Projected accelerated gradient (FISTA with restart) on the evaluation sample.

    Stops when the gradient mapping ``||y - Proj(y - g/H)|| * H`` drops below
    ``tol``, or when a plain projected step from the current point no longer
    decreases the loss (the optimum is reached to rounding).
    """
    ball = problem.domain
    step = 1.0 / problem.H
    x = problem.center.copy()
    y, theta = x.copy(), 1.0
    f_prev = problem.population_loss(x)
    restarted = False
    for _ in range(max_iter):
        x_new = ball.project(y - step * problem.population_grad(y))
        if np.linalg.norm(x_new - y) / step < tol:
            return x_new
        f_new = problem.population_loss(x_new)
        if f_new > f_prev:
            if restarted:
                return x
            y, theta, restarted = x.copy(), 1.0, True  # restart momentum
            continue
        restarted = False
        theta_new = 0.5 * (1 + math.sqrt(1 + 4 * theta**2))
        y = x_new + ((theta - 1) / theta_new) * (x_new - x)
        x, theta, f_prev = x_new, theta_new, f_new
    return x


def make_logistic(
    dim: int,
    D: float,
    seed: int,
    R: float = 1.0,
    n_eval: int = 100_000,
    optimum: np.ndarray | None = None,
) -> LogisticProblem:
    if dim < 1 or D <= 0 or R <= 0:
        raise ValueError(f"need dim >= 1, D > 0, R > 0; got dim={dim}, D={D}, R={R}")
    rng = make_rng([seed, 0])
    teacher = (2.0 / R) * _unit_vector(rng, dim)
    problem = LogisticProblem(
        dim=dim,
        D=float(D),
        G=float(R),
        H=R**2 / 4.0,
        sigma_G=2.0 * R,
        sigma_H=2.0 * R**2 / 4.0,
        mu=0.0,
        optimum=np.zeros(dim),
        seed=int(seed),
        R=float(R),
        teacher=teacher,
        eval_sample=np.zeros((0, dim + 1)),
    )
    object.__setattr__(problem, "eval_sample", problem.sample(make_rng([seed, 1]), n_eval))
    if optimum is None:
        optimum = _fit_logistic_optimum(problem)
    object.__setattr__(problem, "optimum", np.asarray(optimum, dtype=float))
    return problem


def project(x, instance: ProblemInstance) -> np.ndarray:
    return instance.domain.project(x)


def population_gap(instance: ProblemInstance, x) -> float:
    return instance.gap(x)


def instance_from_descriptor(desc: dict) -> ProblemInstance:
    family = desc.get("family")
    if family == "quadratic":
        return make_quadratic(
            desc["dim"], desc["D"], desc["H"], desc["sigma_G"], desc["seed"],
            optimum_distance=desc.get("optimum_distance"),
        )
    if family == "logistic":
        opt = desc.get("optimum")
        return make_logistic(
            desc["dim"], desc["D"], desc["seed"], R=desc.get("R", 1.0),
            n_eval=desc.get("n_eval", 100_000),
            optimum=None if opt is None else np.asarray(opt),
        )
    raise ValueError(f"unknown problem family {family!r}")


def instance_from_json(text: str) -> ProblemInstance:
    return instance_from_descriptor(json.loads(text))
