"""Minimax training loops: model descent plus adversarial distribution ascent.

Three variants share one iteration skeleton. At step t a joint minibatch is
sampled, per-domain losses and gradients are evaluated at the current model,
the model takes a descent step along the p-weighted gradient, and then the
distribution reacts to the same pre-update losses:

* ``alg1``      multiplicative update ``p_k ∝ p_k exp(eta_p f_k)``;
* ``alg2``      projected gradient ascent on the regularized objective
                ``p^T f - (lam/2) D(p||q)``, step ``1/(lam t)`` or its shrunk
                variant ``1/(lam (t+c))``;
* ``oracle_p``  every ``oracle_refresh`` steps the full-data loss vector is
                recomputed and p jumps straight to the exact maximizer
                (one-hot argmax, or the closed form ``P(q + f/lam)`` under
                the l2 penalty).

Both the averaged iterates (the quantities the convergence guarantees speak
about) and the final iterates are returned.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .domains import DomainSampler, MultiDomainDataset, empirical_loss_vector
from .errors import ConfigurationError, DivergenceError
from .models import ModelParameters, weighted_gradient
from .regularizers import RegularizerSpec, reg_gradient
from .schedules import ProblemConstants, ScheduleSpec
from .simplex import SimplexDistribution, multiplicative_update, project_to_simplex

TRAINER_VARIANTS = ("alg1", "alg2", "oracle_p")
LOSS_DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class TrainerConfig:
    schedule: ScheduleSpec
    horizon: int
    minibatch: int
    seed: int = 0
    variant: str = "alg1"
    regularizer: RegularizerSpec = field(default_factory=RegularizerSpec)
    log_every: int = 1
    oracle_refresh: int = 1
    freeze_p: bool = False          # no-op distribution update (the even-mixture baseline)
    record_iterates: bool = False   # keep a model snapshot per logged step
    replacement: bool = True

    def __post_init__(self):
        if self.variant not in TRAINER_VARIANTS:
            raise ConfigurationError(f"unknown trainer variant {self.variant!r}")
        if self.horizon < 1 or self.minibatch < 1:
            raise ConfigurationError("horizon and minibatch must be >= 1")
        if self.log_every < 1 or self.oracle_refresh < 1:
            raise ConfigurationError("log_every and oracle_refresh must be >= 1")
        if self.schedule.horizon != self.horizon:
            raise ConfigurationError("schedule horizon must match the trainer horizon")
        if self.variant == "alg2" and not self.freeze_p:
            if self.regularizer.kind == "none" or self.regularizer.lam <= 0:
                raise ConfigurationError("alg2 requires a regularizer with lam > 0")
        if self.variant == "oracle_p" and self.regularizer.kind not in ("none", "l2"):
            raise ConfigurationError("oracle updates support only 'none' or 'l2' regularizers")


@dataclass(frozen=True)
class TrainingTrace:
    """Per-step diagnostics plus final and averaged iterates of a run."""

    steps: np.ndarray            # logged iteration indices t
    domain_weights: np.ndarray   # p_t at each logged step, shape (L, K)
    batch_losses: np.ndarray     # per-domain minibatch losses at W_t, shape (L, K)
    grad_norms: np.ndarray       # ||weighted gradient||_2 at W_t
    eta_p: np.ndarray            # distribution step used at t (0 for oracle/frozen updates)
    elapsed: np.ndarray          # seconds since the start of the run
    final_params: ModelParameters
    final_distribution: SimplexDistribution
    averaged_params: ModelParameters
    averaged_distribution: SimplexDistribution
    iterates: np.ndarray | None = None  # model snapshot W_t per logged step

    @property
    def num_logged(self) -> int:
        return self.steps.size


def _oracle_distribution(losses: np.ndarray, regularizer: RegularizerSpec) -> SimplexDistribution:
    """Exact maximizer of p^T f - (lam/2) D(p||q) over the simplex."""
    if regularizer.kind == "l2" and regularizer.lam > 0:
        target = regularizer.prior.weights + losses / regularizer.lam
        return project_to_simplex(target)
    # unregularized: all mass on the worst domain, ties to the lowest index
    one_hot = np.zeros(losses.size)
    one_hot[int(np.argmax(losses))] = 1.0
    return SimplexDistribution(one_hot)


def train(
    data: MultiDomainDataset,
    model,
    config: TrainerConfig,
    init_params: ModelParameters | None = None,
) -> TrainingTrace:
    """Run the configured minimax loop over ``data`` and return its trace."""
    k = data.num_domains
    if config.variant == "alg2" and not config.freeze_p and config.regularizer.prior is not None:
        if config.regularizer.prior.size != k:
            raise ConfigurationError("regularizer prior size must match the domain count")
    sampler = DomainSampler(data, config.seed, replacement=config.replacement)
    if init_params is None:
        model_stream = np.random.SeedSequence(config.seed, spawn_key=(k,))
        params = model.init_params(np.random.default_rng(model_stream))
    else:
        params = init_params.copy()
    values = params.values.copy()
    p = SimplexDistribution.uniform(k)

    eta_w = config.schedule.eta_w
    lam = config.regularizer.lam
    value_sum = np.zeros_like(values)
    weight_sum = np.zeros(k)

    logged_steps = []
    logged_p = []
    logged_losses = []
    logged_grad_norms = []
    logged_eta_p = []
    logged_elapsed = []
    logged_iterates = [] if config.record_iterates else None

    start = time.perf_counter()
    for t in range(1, config.horizon + 1):
        batch = sampler.sample(config.minibatch)
        current = ModelParameters(params.layout, values)
        losses = np.empty(k)
        grads = []
        for i in range(k):
            loss_i, grad_i = model.loss_and_gradient(current, batch.features[i], batch.labels[i])
            losses[i] = loss_i
            grads.append(grad_i)
        if not np.all(np.isfinite(losses)) or np.any(losses > LOSS_DIVERGENCE_LIMIT):
            raise DivergenceError(f"loss diverged at iteration {t}", iteration=t)
        grad = weighted_gradient(p, grads)
        grad_norm = float(np.linalg.norm(grad))

        # averages run over the iterates the gradients were evaluated at
        value_sum += values
        weight_sum += p.weights

        oracle_step = (
            config.variant == "oracle_p"
            and not config.freeze_p
            and (t - 1) % config.oracle_refresh == 0
        )
        if oracle_step:
            full_losses = empirical_loss_vector(data, model, current)

        step_eta_p = 0.0
        if not config.freeze_p and config.variant != "oracle_p":
            step_eta_p = config.schedule.eta_p(t)

        if t % config.log_every == 0 or t == config.horizon:
            logged_steps.append(t)
            logged_p.append(p.weights.copy())
            logged_losses.append(losses.copy())
            logged_grad_norms.append(grad_norm)
            logged_eta_p.append(step_eta_p)
            logged_elapsed.append(time.perf_counter() - start)
            if logged_iterates is not None:
                logged_iterates.append(values.copy())

        values = values - eta_w * grad
        if not np.all(np.isfinite(values)):
            raise DivergenceError(f"parameters diverged at iteration {t}", iteration=t)

        if config.freeze_p:
            pass
        elif config.variant == "alg1":
            p = multiplicative_update(p, losses, step_eta_p)
        elif config.variant == "alg2":
            ascent = losses - 0.5 * lam * reg_gradient(config.regularizer, p)
            p = project_to_simplex(p.weights + step_eta_p * ascent)
        elif oracle_step:
            p = _oracle_distribution(full_losses, config.regularizer)

    final_params = ModelParameters(params.layout, values)
    averaged_params = ModelParameters(params.layout, value_sum / config.horizon)
    return TrainingTrace(
        steps=np.array(logged_steps, dtype=np.int64),
        domain_weights=np.array(logged_p),
        batch_losses=np.array(logged_losses),
        grad_norms=np.array(logged_grad_norms),
        eta_p=np.array(logged_eta_p),
        elapsed=np.array(logged_elapsed),
        final_params=final_params,
        final_distribution=p,
        averaged_params=averaged_params,
        averaged_distribution=SimplexDistribution(weight_sum / config.horizon),
        iterates=np.array(logged_iterates) if logged_iterates is not None else None,
    )


def _train_variant(variant, data, model, config, init_params):
    if config.variant != variant:
        raise ConfigurationError(f"config.variant must be {variant!r}, got {config.variant!r}")
    return train(data, model, config, init_params=init_params)


def train_alg1(data, model, config, init_params=None) -> TrainingTrace:
    """Multiplicative-weights variant; requires ``config.variant == 'alg1'``."""
    return _train_variant("alg1", data, model, config, init_params)


def train_alg2(data, model, config, init_params=None) -> TrainingTrace:
    """Regularized projected-ascent variant; requires ``config.variant == 'alg2'``."""
    return _train_variant("alg2", data, model, config, init_params)


def train_oracle_p(data, model, config, init_params=None) -> TrainingTrace:
    """Exact-maximizer variant; requires ``config.variant == 'oracle_p'``."""
    return _train_variant("oracle_p", data, model, config, init_params)


def estimate_constants(
    data: MultiDomainDataset,
    model,
    config: TrainerConfig,
    iterations: int = 50,
    init_params: ModelParameters | None = None,
) -> ProblemConstants:
    """Probe run estimating the scale constants from observed norms.

    Runs ``iterations`` steps of the configured loop and returns constants
    with gamma = max ||f_hat||_2, sigma = max ||weighted gradient||_2 and
    mu = max ||ascent direction||_2 observed; the remaining fields keep their
    configured values. Off by default everywhere: callers opt in explicitly.
    """
    horizon = min(iterations, config.horizon)
    probe_config = replace(
        config,
        horizon=horizon,
        schedule=replace(config.schedule, horizon=horizon),
        log_every=1,
        record_iterates=False,
    )
    trace = train(data, model, probe_config, init_params=init_params)
    gamma = float(np.linalg.norm(trace.batch_losses, axis=1).max())
    sigma = float(trace.grad_norms.max())
    lam = config.regularizer.lam
    if config.regularizer.kind != "none" and lam > 0:
        ascents = [
            trace.batch_losses[i]
            - 0.5 * lam * reg_gradient(config.regularizer, SimplexDistribution(trace.domain_weights[i]))
            for i in range(trace.num_logged)
        ]
        mu = float(max(np.linalg.norm(h) for h in ascents))
    else:
        mu = gamma
    floor = np.finfo(float).eps
    return ProblemConstants(
        sigma=max(sigma, floor),
        gamma=max(gamma, floor),
        mu=max(mu, floor),
        smoothness=1.0,
        radius=1.0,
        lam=lam,
    )
