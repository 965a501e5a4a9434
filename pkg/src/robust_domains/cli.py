"""Command-line front end.

Subcommands::

    generate   synthetic noisy-blob domains, written as CSV files + manifest
    train      run one training method and write trace/summary/checkpoint
    eval       evaluate a checkpoint against a manifest
    bound      print the shrink constant, its regret bound and the baseline
    report     render figures from a finished run directory

Training runs are configured through ``key=value`` pairs, either inline or
from a config file (``--config``); inline pairs override the file. A run
directory always contains the fully resolved config, so feeding it back via
``--config`` reproduces the run byte for byte. Exit codes: 0 success, 1
configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .domains import load_manifest, make_noisy_blob_domains, write_dataset
from .errors import (
    ConfigurationError,
    ContractViolationError,
    DivergenceError,
    InvalidInputError,
    SolverFailureError,
    SupportMismatchError,
    UnsupportedModelError,
)
from .evaluation import (
    build_report,
    write_series_csv,
    write_summary_csv,
    write_timing_csv,
    write_trace_csv,
)
from .models import build_model, load_checkpoint, save_checkpoint
from .regularizers import RegularizerSpec, uniform_cost_matrix
from .schedules import (
    ProblemConstants,
    optimal_shrink_c,
    oracle_model_step,
    regret_bound,
    resolve_schedule,
)
from .simplex import SimplexDistribution
from .trainer import TrainerConfig, estimate_constants, train
from .report import render_run_report

METHODS = ("individual", "mixture_even", "mixture_opt", "mixture_ot", "oracle_p")
SCHEDULE_NAMES = {
    "lemma1": "convex",
    "theorem2": "nonconvex",
    "theorem3": "regularized",
    "theorem4c": "regularized_shrunk",
    "theorem5": "oracle",
    "manual": "manual",
    "convex": "convex",
    "nonconvex": "nonconvex",
    "regularized": "regularized",
    "regularized_shrunk": "regularized_shrunk",
}

TRAIN_KEY_DEFAULTS = {
    "manifest": None,
    "test_manifest": "",
    "method": "mixture_opt",
    "model": "softmax",
    "horizon": "1000",
    "minibatch": "",          # empty -> 200 / K
    "seed": "0",
    "schedule": "",           # empty -> method default
    "eta_w": "",
    "eta_p": "",
    "shrink_c": "",
    "regularizer": "",        # empty -> method default
    "lambda": "1.0",
    "nu": "10.0",
    "prior": "uniform",
    "log_every": "1",
    "oracle_refresh": "1",
    "record_iterates": "false",
    "replacement": "true",
    "warmup": "false",
    "sigma": "1.0",
    "gamma": "1.0",
    "mu": "1.0",
    "smoothness": "1.0",
    "radius": "1.0",
    "pairs": "",
    "out": None,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; map those to the
    # configuration-error exit code instead
    def error(self, message):
        raise ConfigurationError(message)


def _parse_bool(key, raw):
    lowered = str(raw).strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigurationError(f"{key} must be a boolean, got {raw!r}")


def _parse_float(key, raw):
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{key} must be a number, got {raw!r}") from exc


def _parse_int(key, raw):
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{key} must be an integer, got {raw!r}") from exc


def read_config_file(path) -> dict:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _apply_overrides(config: dict, pairs) -> dict:
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"override must look like key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        key = key.strip()
        if key not in TRAIN_KEY_DEFAULTS:
            raise ConfigurationError(f"unknown config key {key!r}")
        config[key] = value.strip()
    return config


def _parse_prior(raw: str, k: int) -> SimplexDistribution:
    if raw in ("", "uniform"):
        return SimplexDistribution.uniform(k)
    try:
        weights = [float(tok) for tok in raw.split(",")]
    except ValueError as exc:
        raise ConfigurationError(f"prior must be 'uniform' or comma-separated, got {raw!r}") from exc
    if len(weights) != k:
        raise ConfigurationError(f"prior needs {k} entries, got {len(weights)}")
    return SimplexDistribution(weights)


def _parse_pairs(raw: str, k: int):
    if not raw:
        return [(0, 1)] if k >= 2 else []
    pairs = []
    for token in raw.split(","):
        if ":" not in token:
            raise ConfigurationError(f"pairs entries look like i:j, got {token!r}")
        i, _, j = token.partition(":")
        i, j = _parse_int("pairs", i), _parse_int("pairs", j)
        if not (0 <= i < k and 0 <= j < k):
            raise ConfigurationError(f"pair {i}:{j} out of range for {k} domains")
        pairs.append((i, j))
    return pairs


def _resolve_run(config: dict):
    """Turn the textual config into concrete objects ready to train."""
    if not config.get("manifest"):
        raise ConfigurationError("train requires manifest=<path>")
    data = load_manifest(config["manifest"])

    method = config["method"]
    individual_index = None
    if method.startswith("individual"):
        base, _, index = method.partition(":")
        if base != "individual" or index == "":
            raise ConfigurationError("individual method is written individual:<domain>")
        individual_index = _parse_int("method", index)
        if not 0 <= individual_index < data.num_domains:
            raise ConfigurationError(
                f"individual domain {individual_index} out of range "
                f"for {data.num_domains} domains"
            )
        data = data.subset(individual_index)
        method = "individual"
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {config['method']!r}")

    model_key = config["model"]
    hidden_units = None
    if model_key.startswith("mlp"):
        _, _, width = model_key.partition(":")
        if not width:
            raise ConfigurationError("mlp model is written mlp:<hidden_units>")
        hidden_units = _parse_int("model", width)
        model_kind = "mlp"
    elif model_key == "softmax":
        model_kind = "softmax"
    else:
        raise ConfigurationError(f"unknown model {model_key!r}")
    model = build_model(model_kind, data.num_features, data.num_classes, hidden_units)

    k = data.num_domains
    horizon = _parse_int("horizon", config["horizon"])
    minibatch = (
        _parse_int("minibatch", config["minibatch"])
        if config["minibatch"]
        else max(1, 200 // k)
    )
    lam = _parse_float("lambda", config["lambda"])

    # regularizer: per-method default, overridable
    reg_kind = config["regularizer"]
    if not reg_kind:
        reg_kind = {"mixture_opt": "l2", "mixture_ot": "ot"}.get(method, "none")
    if reg_kind == "none":
        regularizer = RegularizerSpec()
    else:
        prior = _parse_prior(config["prior"], k)
        cost = uniform_cost_matrix(k) if reg_kind == "ot" else None
        regularizer = RegularizerSpec(
            kind=reg_kind,
            lam=lam,
            prior=prior,
            cost_matrix=cost,
            entropic_weight=_parse_float("nu", config["nu"]),
        )

    freeze_p = method in ("mixture_even", "individual")
    if method == "oracle_p":
        variant = "oracle_p"
    elif regularizer.kind == "none" or freeze_p:
        variant = "alg1"
    else:
        variant = "alg2"

    # lam feeds the t-dependent step formulas even for frozen-p baselines,
    # so matched comparisons can share one schedule
    constants = ProblemConstants(
        sigma=_parse_float("sigma", config["sigma"]),
        gamma=_parse_float("gamma", config["gamma"]),
        mu=_parse_float("mu", config["mu"]),
        smoothness=_parse_float("smoothness", config["smoothness"]),
        radius=_parse_float("radius", config["radius"]),
        lam=lam,
    )

    schedule_name = config["schedule"]
    if not schedule_name:
        if variant == "alg2":
            # t-dependent steps assume the strongly concave (l2) penalty; the
            # other kinds default to the constant concave-case step
            schedule_name = "theorem4c" if regularizer.kind == "l2" else "theorem2"
        elif variant == "oracle_p":
            schedule_name = "theorem5"
        else:
            schedule_name = "lemma1" if model_kind == "softmax" else "theorem2"
    if schedule_name not in SCHEDULE_NAMES:
        raise ConfigurationError(f"unknown schedule {schedule_name!r}")

    def build_schedule(consts):
        mode = SCHEDULE_NAMES[schedule_name]
        eta_w = _parse_float("eta_w", config["eta_w"]) if config["eta_w"] else None
        eta_p = _parse_float("eta_p", config["eta_p"]) if config["eta_p"] else None
        shrink = _parse_float("shrink_c", config["shrink_c"]) if config["shrink_c"] else None
        if mode == "oracle":
            # oracle updates never read eta_p; keep the ScheduleSpec well-formed
            return resolve_schedule(
                "manual",
                horizon,
                consts,
                k,
                eta_w=eta_w if eta_w is not None else oracle_model_step(consts, horizon),
                eta_p=eta_p if eta_p is not None else 1.0 / np.sqrt(horizon),
            )
        # frozen-p runs never read eta_p; floor K so log(K) stays defined
        domains_for_formula = max(k, 2) if freeze_p else k
        return resolve_schedule(
            mode, horizon, consts, domains_for_formula,
            eta_w=eta_w, eta_p=eta_p, shrink_c=shrink,
        )

    def build_trainer_config(schedule):
        return TrainerConfig(
            schedule=schedule,
            horizon=horizon,
            minibatch=minibatch,
            seed=_parse_int("seed", config["seed"]),
            variant=variant,
            regularizer=regularizer,
            log_every=_parse_int("log_every", config["log_every"]),
            oracle_refresh=_parse_int("oracle_refresh", config["oracle_refresh"]),
            freeze_p=freeze_p,
            record_iterates=_parse_bool("record_iterates", config["record_iterates"]),
            replacement=_parse_bool("replacement", config["replacement"]),
        )

    trainer_config = build_trainer_config(build_schedule(constants))
    if _parse_bool("warmup", config["warmup"]):
        constants = estimate_constants(data, model, trainer_config)
        trainer_config = build_trainer_config(build_schedule(constants))

    test_data = load_manifest(config["test_manifest"]) if config["test_manifest"] else None
    pairs = _parse_pairs(config["pairs"], k)
    return data, test_data, model, trainer_config, regularizer, pairs


def cmd_generate(args) -> int:
    noise = [float(tok) for tok in args.noise.split(",") if tok.strip() != ""]
    out = Path(args.out)
    dataset = make_noisy_blob_domains(
        examples_per_domain=args.examples,
        num_features=args.features,
        num_classes=args.classes,
        noise_levels=noise,
        seed=args.seed,
        class_separation=args.class_sep,
    )
    manifest = write_dataset(dataset, out)
    print(f"wrote {dataset.num_domains} train domains -> {manifest}")
    if args.test_examples > 0:
        test_set = make_noisy_blob_domains(
            examples_per_domain=args.test_examples,
            num_features=args.features,
            num_classes=args.classes,
            noise_levels=noise,
            seed=args.seed + 1,
            class_separation=args.class_sep,
        )
        test_manifest = write_dataset(
            test_set, out, manifest_name="manifest_test.json", prefix="test_domain"
        )
        print(f"wrote {test_set.num_domains} test domains -> {test_manifest}")
    return 0


def cmd_train(args) -> int:
    config = dict(TRAIN_KEY_DEFAULTS)
    if args.config:
        file_values = read_config_file(args.config)
        unknown = set(file_values) - set(TRAIN_KEY_DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        config.update(file_values)
    _apply_overrides(config, args.overrides)
    if args.out:
        config["out"] = args.out
    if not config.get("out"):
        raise ConfigurationError("train requires an output directory (--out or out=)")

    started = datetime.datetime.now(datetime.timezone.utc)
    wall_start = time.perf_counter()
    data, test_data, model, trainer_config, regularizer, pairs = _resolve_run(config)
    trace = train(data, model, trainer_config)

    run_dir = Path(config["out"])
    run_dir.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, run_dir / "trace.csv")
    write_timing_csv(trace, run_dir / "timing.csv")
    report = build_report(
        data,
        model,
        trace.final_params,
        trace=trace,
        test_data=test_data,
        regularizer=regularizer,
        pairs=pairs or None,
        with_regret=trainer_config.record_iterates
        and regularizer.kind in ("none", "l2"),
    )
    write_summary_csv(report, run_dir / "summary.csv")
    if data.num_domains >= 2:
        write_series_csv(trace, report, run_dir / "series.csv")
    save_checkpoint(run_dir / "checkpoint.json", model, trace.final_params)

    resolved = dict(config)
    resolved["out"] = str(run_dir)
    with open(run_dir / "config.cfg", "w", encoding="utf-8") as fh:
        for key in sorted(resolved):
            value = resolved[key]
            if value is None:
                continue
            fh.write(f"{key}={value}\n")

    finished = datetime.datetime.now(datetime.timezone.utc)
    metadata = {
        "started": started.isoformat(),
        "finished": finished.isoformat(),
        "wall_seconds": time.perf_counter() - wall_start,
        "package_version": __version__,
        "argv": sys.argv[1:],
    }
    with open(run_dir / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(metadata, fh, indent=2)
        fh.write("\n")
    print(
        f"run complete: worst-case loss {report.worst_case_loss:.6g}, "
        f"worst-case accuracy {report.worst_case_accuracy:.4f} -> {run_dir}"
    )
    return 0


def cmd_eval(args) -> int:
    model, params = load_checkpoint(args.checkpoint)
    data = load_manifest(args.manifest)
    test_data = load_manifest(args.test_manifest) if args.test_manifest else None
    report = build_report(data, model, params, test_data=test_data)
    for k, name in enumerate(report.domain_names):
        print(
            f"{name}: loss {report.train_losses[k]:.6g} "
            f"accuracy {report.train_accuracies[k]:.4f}"
        )
    print(f"worst-case loss {report.worst_case_loss:.6g}")
    print(f"worst-case accuracy {report.worst_case_accuracy:.4f}")
    if test_data is not None:
        print(f"worst-case test loss {report.worst_case_test_loss:.6g}")
        print(f"worst-case test accuracy {report.worst_case_test_accuracy:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_summary_csv(report, out / "summary.csv")
    return 0


def cmd_bound(args) -> int:
    if args.lam <= 0:
        raise ConfigurationError("lam must be positive")
    if args.mu <= 0:
        raise ConfigurationError("mu must be positive")
    if args.horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    c_star = optimal_shrink_c(args.mu, args.lam, args.horizon)
    shrunk = regret_bound(args.mu, args.lam, args.horizon, c_star)
    baseline = regret_bound(args.mu, args.lam, args.horizon, 0.0)
    print(f"{'c*':>14} {'bound(c*)':>18} {'baseline':>18}")
    print(f"{c_star:>14.10g} {shrunk:>18.10g} {baseline:>18.10g}")
    return 0


def cmd_report(args) -> int:
    written = render_run_report(args.run, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robust-domains", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write synthetic noisy-blob domains")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--noise", default="0,4,8,12", help="per-domain noise levels")
    gen.add_argument("--examples", type=int, default=500, help="examples per domain")
    gen.add_argument("--features", type=int, default=10)
    gen.add_argument("--classes", type=int, default=3)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--class-sep", type=float, default=4.0)
    gen.add_argument("--test-examples", type=int, default=0,
                     help="also write a test split of this size per domain")
    gen.set_defaults(func=cmd_generate)

    tr = sub.add_parser("train", help="run one training method")
    tr.add_argument("--config", help="key=value config file")
    tr.add_argument("--out", help="run output directory")
    tr.add_argument("overrides", nargs="*", metavar="key=value",
                    help="inline config overrides")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--test-manifest", default="")
    ev.add_argument("--out", help="write summary.csv here")
    ev.set_defaults(func=cmd_eval)

    bd = sub.add_parser("bound", help="print shrink constant and regret bounds")
    bd.add_argument("--mu", type=float, required=True)
    bd.add_argument("--lam", type=float, required=True)
    bd.add_argument("--horizon", type=int, required=True)
    bd.set_defaults(func=cmd_bound)

    rp = sub.add_parser("report", help="render figures for a run directory")
    rp.add_argument("--run", required=True, help="run directory with trace.csv")
    rp.add_argument("--out", help="write figures here instead of the run directory")
    rp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (
        ConfigurationError,
        InvalidInputError,
        ContractViolationError,
        SupportMismatchError,
        UnsupportedModelError,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, SolverFailureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
