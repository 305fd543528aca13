"""Online convex optimization learners on Euclidean balls.

All learners share one protocol: ``predict()`` returns ``w_t`` inside the
domain, then ``receive(gradient, hint_next=None, strong_convexity=0.0)``
feeds back the (sub)gradient of the round-``t`` loss at ``w_t``. The optional
``hint_next`` is the guess for the next round's gradient and is used only by
optimistic learners.
"""

from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np

from .geometry import Ball

log = logging.getLogger(__name__)


class OnlineLearner:
    name = "base"
    uses_hints = False

    def __init__(self, domain: Ball, init=None):
        self.domain = domain
        start = domain.center if init is None else init
        self.w = domain.project(np.array(start, dtype=float))
        self.t = 1

    def predict(self) -> np.ndarray:
        return self.w

    def receive(self, gradient, hint_next=None, strong_convexity: float = 0.0) -> None:
        raise NotImplementedError


def default_step(D: float) -> Callable[[int, float], float]:
    """``eta_t = D / (G_hat sqrt(t))`` with ``G_hat`` the running max gradient norm."""

    def step(t: int, g_hat: float) -> float:
        return D / (g_hat * math.sqrt(t)) if g_hat > 0 else 0.0

    return step


class OSD(OnlineLearner):
    """Projected online subgradient descent."""

    name = "osd"

    def __init__(self, domain: Ball, step_schedule=None, init=None):
        super().__init__(domain, init)
        self.step_schedule = step_schedule or default_step(domain.diameter)
        self.g_hat = 0.0

    def receive(self, gradient, hint_next=None, strong_convexity=0.0):
        g = np.asarray(gradient, dtype=float)
        self.g_hat = max(self.g_hat, float(np.linalg.norm(g)))
        eta = self.step_schedule(self.t, self.g_hat)
        self.w = self.domain.project(self.w - eta * g)
        self.t += 1


class FTRL(OnlineLearner):
    """Follow the regularized leader with ``psi(w) = ||w - w_1||^2``.

    ``w_{t+1} = argmin_{w in W} <sum_{i<=t} g_i, w> + psi(w) / eta_t``; the
    unconstrained minimiser is ``w_1 - eta_t S_t / 2`` and, because the
    objective is an isotropic quadratic, the constrained one is its projection.
    """

    name = "ftrl"

    def __init__(self, domain: Ball, regularizer_weight=None, init=None):
        super().__init__(domain, init)
        self.w1 = self.w.copy()
        if regularizer_weight is None:
            regularizer_weight = default_step(domain.diameter)
        elif not callable(regularizer_weight):
            eta = float(regularizer_weight)
            regularizer_weight = lambda t, g_hat: eta  # noqa: E731
        self.eta = regularizer_weight
        self.grad_sum = np.zeros_like(self.w)
        self.g_hat = 0.0

    def receive(self, gradient, hint_next=None, strong_convexity=0.0):
        g = np.asarray(gradient, dtype=float)
        self.grad_sum = self.grad_sum + g
        self.g_hat = max(self.g_hat, float(np.linalg.norm(g)))
        eta = self.eta(self.t, self.g_hat)
        self.w = self.domain.project(self.w1 - 0.5 * eta * self.grad_sum)
        self.t += 1


class OptimisticOMD(OnlineLearner):
    """Optimistic online mirror descent with the Euclidean mirror map.

    Keeps a secondary iterate ``v``. The prediction steps from ``v`` along the
    hint, the secondary iterate steps from ``v`` along the true gradient:

        w_t     = Proj(v_t - eta_t * hint_t)
        v_{t+1} = Proj(v_t - eta_t * g_t)

    with ``eta_t = D / sqrt(sum_{i<t} ||g_i - hint_i||^2)``. When the sum is
    below ``floor**2`` the floor is used instead.
    """

    name = "optimistic"
    uses_hints = True

    def __init__(self, domain: Ball, step_schedule=None, init=None, floor: float = 1e-12):
        super().__init__(domain, init)
        self.v = self.w.copy()
        self.step_schedule = step_schedule
        self.floor = floor
        self.err_sq = 0.0
        self.hint = None
        self.missing_hints = 0
        self._eta = self._step()

    def _step(self) -> float:
        if self.step_schedule is not None:
            return self.step_schedule(self.t, self.err_sq)
        return self.domain.diameter / math.sqrt(max(self.err_sq, self.floor**2))

    def set_hint(self, hint) -> None:
        self.hint = None if hint is None else np.asarray(hint, dtype=float)

    def predict(self):
        hint = self.hint
        if hint is None:
            if self.t > 1:
                self.missing_hints += 1
                log.debug("round %d: no hint supplied, using 0", self.t)
            hint = np.zeros_like(self.v)
        self._hint_used = hint
        self.w = self.domain.project(self.v - self._eta * hint)
        return self.w

    def receive(self, gradient, hint_next=None, strong_convexity=0.0):
        g = np.asarray(gradient, dtype=float)
        hint = getattr(self, "_hint_used", np.zeros_like(g))
        self.v = self.domain.project(self.v - self._eta * g)
        diff = g - hint
        self.err_sq += float(diff @ diff)
        self.hint = None if hint_next is None else np.asarray(hint_next, dtype=float)
        self.t += 1
        self._eta = self._step()


class StronglyConvexOSD(OnlineLearner):
    """OSD with ``eta_t = 1 / sum_{i<=t} mu_i`` for ``mu_t``-strongly convex losses."""

    name = "sc_osd"

    def __init__(self, domain: Ball, init=None):
        super().__init__(domain, init)
        self.mu_sum = 0.0

    def receive(self, gradient, hint_next=None, strong_convexity=0.0):
        if strong_convexity <= 0:
            raise ValueError(
                f"sc_osd needs a positive per-round strong convexity, got {strong_convexity}"
            )
        self.mu_sum += strong_convexity
        self.w = self.domain.project(self.w - np.asarray(gradient) / self.mu_sum)
        self.t += 1


class ParameterFree(OnlineLearner):
    """Coin-betting learner with regret ``O(||u - c|| G_hat sqrt(T log(1 + T||u - c||)))``.

    An unconstrained learner is built from a Krichevsky-Trofimov bettor on the
    magnitude and projected gradient descent on the unit ball for the
    direction, both centred at ``c``. The unconstrained point is then projected
    onto the domain; the gradient handed back to the unconstrained learner is
    ``(g + ||g|| n) / 2`` with ``n`` the outward unit normal at the projection,
    which keeps the constrained regret within twice the unconstrained one.

    Incoming gradient norms must not exceed ``lipschitz_cap``; the conversion
    driver clips to enforce this.
    """

    name = "parameter_free"

    def __init__(self, domain: Ball, lipschitz_cap: float, initial_wealth: float | None = None):
        super().__init__(domain)
        if lipschitz_cap <= 0:
            raise ValueError(f"lipschitz_cap must be positive, got {lipschitz_cap}")
        self.center = domain.center
        self.cap = float(lipschitz_cap)
        # wealth is measured in units of distance (loss / cap)
        self.wealth = domain.radius if initial_wealth is None else float(initial_wealth)
        self.coin_sum = 0.0
        self.direction = np.zeros(domain.dim)
        self.dir_sq_sum = 0.0
        self._bet()

    def _bet(self):
        magnitude = self.coin_sum / self.t * self.wealth
        self.w_free = self.center + magnitude * self.direction
        self.magnitude = magnitude
        self.w = self.domain.project(self.w_free)

    def receive(self, gradient, hint_next=None, strong_convexity=0.0):
        g = np.asarray(gradient, dtype=float)
        g_norm = float(np.linalg.norm(g))
        if g_norm > self.cap * (1 + 1e-12):
            raise ValueError(f"gradient norm {g_norm} exceeds lipschitz cap {self.cap}")
        outside = self.w_free - self.w
        out_norm = float(np.linalg.norm(outside))
        if out_norm > 0:
            g = 0.5 * (g + g_norm * outside / out_norm)
        # magnitude bettor sees the scalar loss <g, direction>
        coin = -float(g @ self.direction) / self.cap
        self.wealth += coin * self.magnitude
        self.coin_sum += coin
        # direction: scale-free projected gradient descent on the unit ball
        self.dir_sq_sum += float(g @ g)
        if self.dir_sq_sum > 0:
            d = self.direction - g / math.sqrt(0.5 * self.dir_sq_sum)
            n = np.linalg.norm(d)
            self.direction = d / n if n > 1 else d
        self.t += 1
        self._bet()


class RegretLedger:
    """Incremental regret bookkeeping for linear (and regularized linear) losses.

    Linear part: ``Regret_T(u) = sum_t <g_t, w_t - u>``. Regularized variants
    also record their regularizer payments so the regret of the actual
    regularized losses can be evaluated at any competitor.
    """

    def __init__(self, dim: int, keep_trace: bool = True):
        self.gw = 0.0
        self.g_sum = np.zeros(dim)
        self.keep_trace = keep_trace
        self.trace: list[tuple[np.ndarray, np.ndarray]] = []
        # quadratic regularizer c_t ||w - a_t||^2
        self.q_c = 0.0
        self.q_ca = np.zeros(dim)
        self.q_const = 0.0
        # norm regularizer xi_t ||w - o|| + nu_t ||w - o||^2
        self.n_origin = None
        self.n_xi = 0.0
        self.n_nu = 0.0
        self.n_const = 0.0

    def add(self, g, w):
        g = np.asarray(g, dtype=float)
        w = np.asarray(w, dtype=float)
        self.gw += float(g @ w)
        self.g_sum = self.g_sum + g
        if self.keep_trace:
            self.trace.append((g.copy(), w.copy()))

    def add_quadratic(self, c: float, anchor, w):
        """Record the term ``c ||w - anchor||^2`` paid at ``w``."""
        anchor = np.asarray(anchor, dtype=float)
        r = np.asarray(w) - anchor
        self.q_c += c
        self.q_ca = self.q_ca + c * anchor
        self.q_const += c * (float(r @ r) - float(anchor @ anchor))

    def add_norm(self, xi: float, nu: float, w, origin):
        """Record ``xi ||w - origin|| + nu ||w - origin||^2`` paid at ``w``."""
        self.n_origin = np.asarray(origin, dtype=float)
        r = float(np.linalg.norm(np.asarray(w) - self.n_origin))
        self.n_xi += xi
        self.n_nu += nu
        self.n_const += xi * r + nu * r * r

    def regret(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return self.gw - float(self.g_sum @ u)

    def regularized_regret(self, u) -> float:
        u = np.asarray(u, dtype=float)
        total = self.regret(u)
        total += self.q_const - self.q_c * float(u @ u) + 2.0 * float(self.q_ca @ u)
        if self.n_origin is not None:
            r = float(np.linalg.norm(u - self.n_origin))
            total += self.n_const - self.n_xi * r - self.n_nu * r * r
        return total

    def regret_from_trace(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(sum(g @ (w - u) for g, w in self.trace))


LEARNERS = {
    "osd": OSD,
    "ftrl": FTRL,
    "optimistic": OptimisticOMD,
    "sc_osd": StronglyConvexOSD,
    "parameter_free": ParameterFree,
}


def osd(domain, step_schedule=None):
    return OSD(domain, step_schedule)


def ftrl(domain, regularizer_weight=None):
    return FTRL(domain, regularizer_weight)


def optimistic_omd(domain, step_schedule=None):
    return OptimisticOMD(domain, step_schedule)


def sc_osd(domain):
    return StronglyConvexOSD(domain)


def parameter_free(domain, lipschitz_cap, initial_wealth=None):
    return ParameterFree(domain, lipschitz_cap, initial_wealth)
