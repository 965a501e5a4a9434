"""Worst-case metrics, realized regret, the duality-gap estimator and CSV output.

The worst-case numbers are always recomputed from the full data, never read
from a cache. Numbers written to CSV carry 17 significant digits so that the
files round-trip float64 exactly; the per-step wall-clock column lives in a
separate timing file to keep trace bodies byte-identical across reruns of
the same seed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domains import MultiDomainDataset, empirical_loss_vector, evaluation_threads
from .errors import ConfigurationError, InvalidInputError, UnsupportedModelError
from .models import ModelParameters, SoftmaxClassifier
from .regularizers import RegularizerSpec, reg_value
from .simplex import SimplexDistribution, project_to_simplex
from .trainer import TrainingTrace

DUALITY_GAP_STEPS = 10_000
DUALITY_GAP_STEP_SIZE = 0.1


def _fmt(value) -> str:
    return f"{float(value):.17g}"


def per_domain_metrics(data: MultiDomainDataset, model, params, max_threads=None):
    """Full-data per-domain (mean loss, accuracy) arrays."""
    workers = evaluation_threads() if max_threads is None else max(int(max_threads), 1)
    losses = empirical_loss_vector(data, model, params, max_threads=workers)

    def accuracy(k):
        predicted = model.predict(params, data.features[k])
        return float(np.mean(predicted == data.labels[k]))

    if workers == 1 or data.num_domains == 1:
        accuracies = [accuracy(k) for k in range(data.num_domains)]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, data.num_domains)) as pool:
            accuracies = list(pool.map(accuracy, range(data.num_domains)))
    return losses, np.array(accuracies)


def worst_case_metrics(data: MultiDomainDataset, model, params):
    """(max per-domain loss, min per-domain accuracy) over the full data."""
    losses, accuracies = per_domain_metrics(data, model, params)
    return float(losses.max()), float(accuracies.min())


def _objective(p_weights: np.ndarray, losses: np.ndarray, regularizer: RegularizerSpec | None):
    value = float(p_weights @ losses)
    if regularizer is not None and regularizer.kind != "none" and regularizer.lam > 0:
        value -= 0.5 * regularizer.lam * reg_value(regularizer, SimplexDistribution(p_weights))
    return value


def _best_fixed_distribution(summed_losses: np.ndarray, steps: int,
                             regularizer: RegularizerSpec | None) -> SimplexDistribution:
    """Exact maximizer of sum_t [p^T f_t - (lam/2) D(p||q)] over the simplex."""
    if regularizer is None or regularizer.kind == "none" or regularizer.lam == 0:
        one_hot = np.zeros(summed_losses.size)
        one_hot[int(np.argmax(summed_losses))] = 1.0
        return SimplexDistribution(one_hot)
    if regularizer.kind != "l2":
        raise ConfigurationError(
            "realized regret has a closed-form maximizer only for 'none' and 'l2'"
        )
    mean_losses = summed_losses / steps
    return project_to_simplex(regularizer.prior.weights + mean_losses / regularizer.lam)


def realized_regret(trace: TrainingTrace, data: MultiDomainDataset, model,
                    regularizer: RegularizerSpec | None = None) -> float:
    """Best-fixed-distribution regret of the played p sequence.

    Full-data loss vectors are recomputed at every logged model iterate, so
    the result is exact when the trace was logged every iteration (otherwise
    it is the same quantity restricted to the logged steps).
    """
    if trace.iterates is None:
        raise InvalidInputError(
            "trace has no recorded model iterates; rerun with record_iterates=True"
        )
    layout = trace.final_params.layout
    n = trace.num_logged
    loss_rows = np.empty((n, data.num_domains))
    played = 0.0
    for i in range(n):
        params_i = ModelParameters(layout, trace.iterates[i])
        loss_rows[i] = empirical_loss_vector(data, model, params_i)
        played += _objective(trace.domain_weights[i], loss_rows[i], regularizer)
    summed = loss_rows.sum(axis=0)
    best = _best_fixed_distribution(summed, n, regularizer)
    best_value = sum(_objective(best.weights, loss_rows[i], regularizer) for i in range(n))
    return float(best_value - played)


def duality_gap(
    data: MultiDomainDataset,
    model,
    averaged_params: ModelParameters,
    averaged_distribution: SimplexDistribution,
    regularizer: RegularizerSpec | None = None,
    descent_steps: int = DUALITY_GAP_STEPS,
    descent_step_size: float = DUALITY_GAP_STEP_SIZE,
) -> float:
    """Estimate max_p L(p, W_avg) - min_W L(p_avg, W) for the convex model.

    The maximization over p is exact (argmax selection, or the l2 closed
    form). The minimization over W is approximated by full-batch gradient
    descent at the fixed averaged distribution, warm-started from the
    averaged model, with a fixed budget; the best objective value seen along
    the descent is used.
    """
    if not isinstance(model, SoftmaxClassifier):
        raise UnsupportedModelError("duality gap is only computed for the convex softmax model")
    losses = empirical_loss_vector(data, model, averaged_params)
    best_p = _best_fixed_distribution(losses, 1, regularizer)
    max_value = _objective(best_p.weights, losses, regularizer)

    p_weights = averaged_distribution.weights
    reg_offset = 0.0
    if regularizer is not None and regularizer.kind != "none" and regularizer.lam > 0:
        reg_offset = -0.5 * regularizer.lam * reg_value(regularizer, averaged_distribution)
    values = averaged_params.values.copy()
    layout = averaged_params.layout
    min_value = np.inf
    for _ in range(descent_steps):
        params = ModelParameters(layout, values)
        total_loss = 0.0
        grad = np.zeros_like(values)
        for k in range(data.num_domains):
            if p_weights[k] == 0.0:
                continue
            loss_k, grad_k = model.loss_and_gradient(params, data.features[k], data.labels[k])
            total_loss += p_weights[k] * loss_k
            grad += p_weights[k] * grad_k
        min_value = min(min_value, total_loss + reg_offset)
        values -= descent_step_size * grad
    params = ModelParameters(layout, values)
    final_loss = float(averaged_distribution.weights @ empirical_loss_vector(data, model, params))
    min_value = min(min_value, final_loss + reg_offset)
    return float(max_value - min_value)


@dataclass(frozen=True)
class EvaluationReport:
    """Per-domain and worst-case metrics plus the trace-derived series."""

    domain_names: tuple[str, ...]
    train_losses: np.ndarray
    train_accuracies: np.ndarray
    worst_case_loss: float
    worst_case_accuracy: float
    test_losses: np.ndarray | None = None
    test_accuracies: np.ndarray | None = None
    worst_case_test_loss: float | None = None
    worst_case_test_accuracy: float | None = None
    discrepancy: dict | None = None   # (i, j) -> series f_i - f_j over logged steps
    drift: dict | None = None         # (i, j) -> series p_i - p_j over logged steps
    regret: float | None = None


def build_report(
    data: MultiDomainDataset,
    model,
    params: ModelParameters,
    trace: TrainingTrace | None = None,
    test_data: MultiDomainDataset | None = None,
    regularizer: RegularizerSpec | None = None,
    pairs=None,
    with_regret: bool = False,
) -> EvaluationReport:
    """Assemble the evaluation report; series need a trace, regret needs iterates."""
    train_losses, train_acc = per_domain_metrics(data, model, params)
    test_losses = test_acc = None
    worst_test_loss = worst_test_acc = None
    if test_data is not None:
        test_losses, test_acc = per_domain_metrics(test_data, model, params)
        worst_test_loss = float(test_losses.max())
        worst_test_acc = float(test_acc.min())
    discrepancy = drift = None
    if trace is not None and data.num_domains >= 2:
        if pairs is None:
            pairs = [(0, 1)]
        discrepancy = {}
        drift = {}
        for i, j in pairs:
            discrepancy[(i, j)] = trace.batch_losses[:, i] - trace.batch_losses[:, j]
            drift[(i, j)] = trace.domain_weights[:, i] - trace.domain_weights[:, j]
    regret = None
    if with_regret and trace is not None:
        regret = realized_regret(trace, data, model, regularizer)
    return EvaluationReport(
        domain_names=data.names,
        train_losses=train_losses,
        train_accuracies=train_acc,
        worst_case_loss=float(train_losses.max()),
        worst_case_accuracy=float(train_acc.min()),
        test_losses=test_losses,
        test_accuracies=test_acc,
        worst_case_test_loss=worst_test_loss,
        worst_case_test_accuracy=worst_test_acc,
        discrepancy=discrepancy,
        drift=drift,
        regret=regret,
    )


def write_trace_csv(trace: TrainingTrace, path) -> Path:
    """Deterministic trace body: t, per-domain losses, p, grad norm, eta_p."""
    path = Path(path)
    k = trace.domain_weights.shape[1]
    header = (
        ["t"]
        + [f"loss_d{i}" for i in range(k)]
        + [f"p_{i}" for i in range(k)]
        + ["grad_norm", "eta_p"]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in range(trace.num_logged):
            cells = [str(int(trace.steps[row]))]
            cells += [_fmt(v) for v in trace.batch_losses[row]]
            cells += [_fmt(v) for v in trace.domain_weights[row]]
            cells += [_fmt(trace.grad_norms[row]), _fmt(trace.eta_p[row])]
            fh.write(",".join(cells) + "\n")
    return path


def write_timing_csv(trace: TrainingTrace, path) -> Path:
    """Wall-clock column of the trace, kept out of the reproducible body."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,elapsed_s\n")
        for row in range(trace.num_logged):
            fh.write(f"{int(trace.steps[row])},{_fmt(trace.elapsed[row])}\n")
    return path


def write_summary_csv(report: EvaluationReport, path) -> Path:
    """Key/value summary of the scalar report fields."""
    path = Path(path)
    rows = []
    for k, name in enumerate(report.domain_names):
        rows.append((f"train_loss_{name}", _fmt(report.train_losses[k])))
        rows.append((f"train_accuracy_{name}", _fmt(report.train_accuracies[k])))
    rows.append(("worst_case_loss", _fmt(report.worst_case_loss)))
    rows.append(("worst_case_accuracy", _fmt(report.worst_case_accuracy)))
    if report.test_losses is not None:
        for k, name in enumerate(report.domain_names):
            rows.append((f"test_loss_{name}", _fmt(report.test_losses[k])))
            rows.append((f"test_accuracy_{name}", _fmt(report.test_accuracies[k])))
        rows.append(("worst_case_test_loss", _fmt(report.worst_case_test_loss)))
        rows.append(("worst_case_test_accuracy", _fmt(report.worst_case_test_accuracy)))
    if report.regret is not None:
        rows.append(("realized_regret", _fmt(report.regret)))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("key,value\n")
        for key, value in rows:
            fh.write(f"{key},{value}\n")
    return path


def write_series_csv(trace: TrainingTrace, report: EvaluationReport, path) -> Path:
    """Discrepancy and drift series per logged step, one column per pair."""
    path = Path(path)
    pairs = sorted(report.discrepancy.keys()) if report.discrepancy else []
    header = ["t"]
    for i, j in pairs:
        header += [f"discrepancy_{i}_{j}", f"drift_{i}_{j}"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in range(trace.num_logged):
            cells = [str(int(trace.steps[row]))]
            for i, j in pairs:
                cells.append(_fmt(report.discrepancy[(i, j)][row]))
                cells.append(_fmt(report.drift[(i, j)][row]))
            fh.write(",".join(cells) + "\n")
    return path
