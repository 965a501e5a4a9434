"""Step-size schedules for the two players and the regret trade-off constant.

Each named mode resolves the closed-form step sizes of the corresponding
convergence result:

* ``convex``       eta_w = R / (sigma sqrt(T)),      eta_p = 2 sqrt(2 log K) / (gamma sqrt(T))
* ``nonconvex``    eta_w = sqrt(2 gamma sqrt(2 log K)) / (sigma sqrt(L)) * T^(-1/3),
                   eta_p = 2 sqrt(2 log K) / gamma * T^(-2/3)
* ``regularized``  eta_w = 2 mu sqrt(log T) / (sigma sqrt(lam L T)), eta_p(t) = 1 / (lam t)
* ``regularized_shrunk``  same eta_w, eta_p(t) = 1 / (lam (t + c)) with the
                   optimal shrink constant c unless one is supplied
* ``manual``       caller-supplied constants passed through unchanged

The constants sigma, gamma, mu, L and R only rescale the steps; the rates are
order-exact with the defaults of 1, so none of them has to be measured before
training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError

SCHEDULE_MODES = ("convex", "nonconvex", "regularized", "regularized_shrunk", "manual")


@dataclass(frozen=True)
class ProblemConstants:
    """Problem-scale bounds feeding the step-size formulas.

    sigma bounds per-domain gradient norms, gamma the loss-vector norm, mu the
    regularized ascent direction, ``smoothness`` is the gradient Lipschitz
    constant and ``radius`` the model-norm bound. ``lam`` mirrors the
    regularizer weight.
    """

    sigma: float = 1.0
    gamma: float = 1.0
    mu: float = 1.0
    smoothness: float = 1.0
    radius: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        for name in ("sigma", "gamma", "mu", "smoothness", "radius"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigurationError(f"{name} must be finite and positive")
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ConfigurationError("lam must be finite and >= 0")


@dataclass(frozen=True)
class ScheduleSpec:
    """Resolved step sizes over a horizon of ``horizon`` iterations."""

    mode: str
    horizon: int
    eta_w: float
    eta_p_value: float = 0.0  # constant distribution step (ignored by t-dependent modes)
    shrink_c: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if self.mode not in SCHEDULE_MODES:
            raise ConfigurationError(f"unknown schedule mode {self.mode!r}")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if not math.isfinite(self.eta_w) or self.eta_w <= 0:
            raise ConfigurationError("eta_w must be positive")
        if self.shrink_c < 0:
            raise ConfigurationError("shrink_c must be >= 0")
        if self.mode in ("regularized", "regularized_shrunk"):
            if self.lam <= 0:
                raise ConfigurationError("t-dependent modes require lam > 0")
        elif not math.isfinite(self.eta_p_value) or self.eta_p_value <= 0:
            raise ConfigurationError("eta_p_value must be positive")

    def eta_p(self, t: int) -> float:
        """Distribution step size at iteration ``t`` (1-based)."""
        if t < 1:
            raise ConfigurationError("iteration index starts at 1")
        if self.mode in ("regularized", "regularized_shrunk"):
            return 1.0 / (self.lam * (t + self.shrink_c))
        return self.eta_p_value


def optimal_shrink_c(mu: float, lam: float, horizon: int) -> float:
    """Shrink constant minimizing the regret bound of the shrunk schedule.

    Closed form ``mu^2 / (lam^2 (1 + sqrt(1 + 2 mu^2 / (lam^2 T))))``,
    algebraically identical to ``(sqrt(T^2 + 2 mu^2 T / lam^2) - T) / 2``.
    """
    if mu <= 0 or lam <= 0:
        raise ConfigurationError("mu and lam must be positive")
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    ratio = (mu / lam) ** 2
    return ratio / (1.0 + math.sqrt(1.0 + 2.0 * ratio / horizon))


def regret_bound(mu: float, lam: float, horizon: int, shrink_c: float) -> float:
    """Cumulative-regret bound of the 1/(lam (t+c)) ascent schedule.

    For ``shrink_c > 0`` this is ``lam c + (mu^2/2 lam) ln(T/c + 1) + mu^2/2 lam``;
    ``shrink_c = 0`` selects the unshrunk baseline ``(mu^2/2 lam)(ln T + 1)``.
    """
    if mu <= 0 or lam <= 0:
        raise ConfigurationError("mu and lam must be positive")
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    if shrink_c < 0:
        raise ConfigurationError("shrink_c must be >= 0")
    half_ratio = mu * mu / (2.0 * lam)
    if shrink_c == 0:
        return half_ratio * (math.log(horizon) + 1.0)
    return lam * shrink_c + half_ratio * math.log(horizon / shrink_c + 1.0) + half_ratio


def oracle_model_step(constants: ProblemConstants, horizon: int) -> float:
    """Model step size sqrt(2) / (sigma sqrt(L T)) used with oracle distribution updates."""
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    return math.sqrt(2.0) / (constants.sigma * math.sqrt(constants.smoothness * horizon))


def resolve_schedule(
    mode: str,
    horizon: int,
    constants: ProblemConstants,
    num_domains: int,
    eta_w: float | None = None,
    eta_p: float | None = None,
    shrink_c: float | None = None,
) -> ScheduleSpec:
    """Resolve the named schedule at the given horizon and domain count.

    ``eta_w``/``eta_p`` are required by (and only read in) ``manual`` mode;
    ``shrink_c`` optionally overrides the optimal constant in
    ``regularized_shrunk`` mode.
    """
    if mode not in SCHEDULE_MODES:
        raise ConfigurationError(f"unknown schedule mode {mode!r}")
    if mode == "manual":
        if eta_w is None or eta_p is None:
            raise ConfigurationError("manual mode requires eta_w and eta_p")
        return ScheduleSpec(
            mode="manual",
            horizon=horizon,
            eta_w=eta_w,
            eta_p_value=eta_p,
            shrink_c=shrink_c or 0.0,
            lam=constants.lam,
        )
    if horizon < 2:
        raise ConfigurationError("resolved schedules need a horizon of at least 2")
    sigma, gamma = constants.sigma, constants.gamma
    if mode == "convex":
        if num_domains < 2:
            raise ConfigurationError("convex mode needs at least 2 domains")
        log_k = math.log(num_domains)
        return ScheduleSpec(
            mode=mode,
            horizon=horizon,
            eta_w=constants.radius / (sigma * math.sqrt(horizon)),
            eta_p_value=2.0 * math.sqrt(2.0 * log_k) / (gamma * math.sqrt(horizon)),
        )
    if mode == "nonconvex":
        if num_domains < 2:
            raise ConfigurationError("nonconvex mode needs at least 2 domains")
        log_k = math.log(num_domains)
        eta_w_value = (
            math.sqrt(2.0 * gamma * math.sqrt(2.0 * log_k))
            / (sigma * math.sqrt(constants.smoothness))
            * horizon ** (-1.0 / 3.0)
        )
        eta_p_value = 2.0 * math.sqrt(2.0 * log_k) / gamma * horizon ** (-2.0 / 3.0)
        return ScheduleSpec(
            mode=mode, horizon=horizon, eta_w=eta_w_value, eta_p_value=eta_p_value
        )
    # regularized modes
    lam = constants.lam
    if lam <= 0:
        raise ConfigurationError(f"{mode} mode requires lam > 0")
    eta_w_value = (
        2.0
        * constants.mu
        * math.sqrt(math.log(horizon))
        / (sigma * math.sqrt(lam * constants.smoothness * horizon))
    )
    if mode == "regularized":
        c = 0.0
    else:
        c = optimal_shrink_c(constants.mu, lam, horizon) if shrink_c is None else shrink_c
        if c <= 0:
            raise ConfigurationError("regularized_shrunk requires shrink_c > 0")
    return ScheduleSpec(
        mode=mode, horizon=horizon, eta_w=eta_w_value, shrink_c=c, lam=lam
    )
