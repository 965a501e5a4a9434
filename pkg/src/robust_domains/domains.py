"""Multi-domain dataset container, minibatch sampling and per-domain losses.

A dataset is a list of K domains sharing one feature space and label set.
Minibatches draw the same number of examples from every domain, each domain
from its own seed-derived random stream, so that advancing one domain's
stream never perturbs another's and runs replay bit-for-bit.

On disk each domain is a delimiter-separated text file whose rows are
``label, feature_0, ..., feature_{d-1}`` (one optional header row), and a
JSON manifest lists the domain files, display names and the class count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

THREADS_ENV_VAR = "ROBUST_DOMAINS_THREADS"
MANIFEST_VERSION = 1


def evaluation_threads() -> int:
    """Worker cap for per-domain evaluation, from the environment (default 1)."""
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        value = int(raw)
    except ValueError as exc:
        raise InvalidInputError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from exc
    return max(value, 1)


@dataclass(frozen=True)
class MultiDomainDataset:
    """K domains of labelled feature vectors with a shared dimension and label range."""

    features: tuple[np.ndarray, ...]
    labels: tuple[np.ndarray, ...]
    names: tuple[str, ...]
    num_classes: int

    def __post_init__(self):
        if len(self.features) < 1:
            raise InvalidInputError("dataset needs at least one domain")
        if not (len(self.features) == len(self.labels) == len(self.names)):
            raise InvalidInputError("features, labels and names must align")
        if self.num_classes < 1:
            raise InvalidInputError("num_classes must be >= 1")
        dim = None
        for k, (x, y) in enumerate(zip(self.features, self.labels)):
            if x.ndim != 2 or x.shape[0] == 0:
                raise InvalidInputError(f"domain {k} must be a non-empty (n, d) array")
            if dim is None:
                dim = x.shape[1]
            elif x.shape[1] != dim:
                raise InvalidInputError("all domains must share the feature dimension")
            if y.shape != (x.shape[0],):
                raise InvalidInputError(f"domain {k} labels must match its example count")
            if not np.all(np.isfinite(x)):
                raise InvalidInputError(f"domain {k} has non-finite features")
            if np.any(y < 0) or np.any(y >= self.num_classes):
                raise InvalidInputError(f"domain {k} has labels outside [0, {self.num_classes})")

    @property
    def num_domains(self) -> int:
        return len(self.features)

    @property
    def num_features(self) -> int:
        return self.features[0].shape[1]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(x.shape[0] for x in self.features)

    def subset(self, domain_index: int) -> "MultiDomainDataset":
        """Single-domain view, used by the individual-domain baseline."""
        if not 0 <= domain_index < self.num_domains:
            raise InvalidInputError(f"domain index {domain_index} out of range")
        return MultiDomainDataset(
            features=(self.features[domain_index],),
            labels=(self.labels[domain_index],),
            names=(self.names[domain_index],),
            num_classes=self.num_classes,
        )


def dataset_from_arrays(features, labels, names=None, num_classes=None) -> MultiDomainDataset:
    """Build a dataset from per-domain arrays, inferring the class count if absent."""
    feats = tuple(np.ascontiguousarray(np.asarray(x, dtype=float)) for x in features)
    labs = tuple(np.ascontiguousarray(np.asarray(y, dtype=np.int64)) for y in labels)
    if names is None:
        names = tuple(f"domain_{k}" for k in range(len(feats)))
    if num_classes is None:
        num_classes = int(max(int(y.max()) for y in labs)) + 1
    return MultiDomainDataset(feats, labs, tuple(names), num_classes)


@dataclass(frozen=True)
class DomainBatch:
    """A joint minibatch holding exactly m examples from every domain."""

    features: tuple[np.ndarray, ...]
    labels: tuple[np.ndarray, ...]
    iteration: int

    @property
    def num_domains(self) -> int:
        return len(self.features)

    @property
    def per_domain_size(self) -> int:
        return self.features[0].shape[0]


class DomainSampler:
    """Per-domain random streams drawing equal-size minibatches.

    Domain k draws from the k-th child of ``SeedSequence(seed)``, so streams
    are independent and a fixed seed replays the exact same batches. With
    ``replacement=False`` each domain walks a reshuffled permutation per
    epoch (falling back to replacement when m exceeds the domain size).
    """

    def __init__(self, dataset: MultiDomainDataset, seed: int, replacement: bool = True):
        self.dataset = dataset
        self.seed = int(seed)
        self.replacement = bool(replacement)
        children = np.random.SeedSequence(self.seed).spawn(dataset.num_domains)
        self._rngs = [np.random.default_rng(c) for c in children]
        self._queues = [np.empty(0, dtype=np.int64) for _ in range(dataset.num_domains)]
        self._iteration = 0

    def _draw_indices(self, k: int, m: int) -> np.ndarray:
        n = self.dataset.sizes[k]
        rng = self._rngs[k]
        if self.replacement or m > n:
            return rng.integers(0, n, size=m)
        queue = self._queues[k]
        while queue.size < m:
            queue = np.concatenate([queue, rng.permutation(n)])
        self._queues[k] = queue[m:]
        return queue[:m]

    def sample(self, m: int) -> DomainBatch:
        if m < 1:
            raise InvalidInputError("minibatch size must be >= 1")
        self._iteration += 1
        feats = []
        labs = []
        for k in range(self.dataset.num_domains):
            idx = self._draw_indices(k, m)
            feats.append(self.dataset.features[k][idx])
            labs.append(self.dataset.labels[k][idx])
        return DomainBatch(tuple(feats), tuple(labs), self._iteration)


def sample_batch(dataset: MultiDomainDataset, m: int, sampler: DomainSampler) -> DomainBatch:
    """Draw the next joint minibatch of m examples per domain from ``sampler``."""
    if sampler.dataset is not dataset:
        raise InvalidInputError("sampler was built for a different dataset")
    return sampler.sample(m)


def batch_loss_vector(batch: DomainBatch, model, params) -> np.ndarray:
    """Per-domain mean losses of the model on a joint minibatch."""
    return np.array(
        [model.batch_loss(params, batch.features[k], batch.labels[k])
         for k in range(batch.num_domains)]
    )


def empirical_loss_vector(dataset: MultiDomainDataset, model, params, max_threads=None) -> np.ndarray:
    """Exact full-data per-domain mean losses.

    Domains may be evaluated concurrently (capped by ``max_threads`` or the
    ``ROBUST_DOMAINS_THREADS`` environment variable); each domain's sum runs
    in a fixed order, so results do not depend on the thread count.
    """
    workers = evaluation_threads() if max_threads is None else max(int(max_threads), 1)
    k = dataset.num_domains

    def one(i):
        return model.batch_loss(params, dataset.features[i], dataset.labels[i])

    if workers == 1 or k == 1:
        values = [one(i) for i in range(k)]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, k)) as pool:
            values = list(pool.map(one, range(k)))
    return np.array(values)


def make_noisy_blob_domains(
    examples_per_domain: int,
    num_features: int,
    num_classes: int,
    noise_levels,
    seed: int,
    class_separation: float = 4.0,
) -> MultiDomainDataset:
    """Shared Gaussian-blob classification data, one domain per noise level.

    A single base sample (class centers plus unit-variance blobs) is drawn
    from the seed; domain k adds independent N(0, noise_levels[k]^2) noise to
    every feature. A zero noise level reproduces the base data exactly.
    """
    noise_levels = [float(s) for s in noise_levels]
    if len(noise_levels) < 1:
        raise InvalidInputError("need at least one noise level")
    if any(s < 0 for s in noise_levels):
        raise InvalidInputError("noise levels must be >= 0")
    if examples_per_domain < 1 or num_features < 1 or num_classes < 1:
        raise InvalidInputError("sizes must be positive")
    root = np.random.SeedSequence(int(seed))
    children = root.spawn(len(noise_levels) + 1)
    base_rng = np.random.default_rng(children[0])
    centers = base_rng.normal(scale=class_separation, size=(num_classes, num_features))
    labels = base_rng.integers(0, num_classes, size=examples_per_domain)
    base = centers[labels] + base_rng.normal(size=(examples_per_domain, num_features))
    features = []
    names = []
    for k, sigma in enumerate(noise_levels):
        rng = np.random.default_rng(children[k + 1])
        noise = rng.normal(size=base.shape) * sigma
        features.append(base + noise)
        names.append(f"noise{sigma:g}")
    return dataset_from_arrays(features, [labels.copy() for _ in noise_levels],
                               names, num_classes)


def write_dataset(dataset: MultiDomainDataset, directory, manifest_name="manifest.json",
                  prefix="domain") -> Path:
    """Write one CSV per domain plus the JSON manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for k in range(dataset.num_domains):
        filename = f"{prefix}_{k}.csv"
        path = directory / filename
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("label," + ",".join(f"f{j}" for j in range(dataset.num_features)) + "\n")
            for y, x in zip(dataset.labels[k], dataset.features[k]):
                fh.write(str(int(y)) + "," + ",".join(f"{v:.17g}" for v in x) + "\n")
        entries.append({"name": dataset.names[k], "file": filename})
    manifest = {
        "format_version": MANIFEST_VERSION,
        "num_classes": dataset.num_classes,
        "domains": entries,
    }
    manifest_path = directory / manifest_name
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest_path


def _read_domain_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if first == "":
            raise InvalidInputError(f"{path} is empty")
        tokens = first.strip().split(",")
        try:
            rows.append([float(tok) for tok in tokens])
        except ValueError:
            pass  # single header row
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise InvalidInputError(f"{path}: non-numeric row {line!r}") from exc
    if not rows:
        raise InvalidInputError(f"{path} contains no data rows")
    data = np.array(rows, dtype=float)
    if data.shape[1] < 2:
        raise InvalidInputError(f"{path}: rows need a label and at least one feature")
    labels = data[:, 0]
    if np.any(labels != np.round(labels)):
        raise InvalidInputError(f"{path}: labels must be integers")
    return data[:, 1:], labels.astype(np.int64)


def load_manifest(path) -> MultiDomainDataset:
    """Load a dataset from its JSON manifest; domain files resolve relative to it."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise InvalidInputError(f"manifest not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"manifest is not valid JSON: {path}") from exc
    try:
        num_classes = int(manifest["num_classes"])
        entries = manifest["domains"]
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"manifest missing num_classes/domains: {path}") from exc
    if not entries:
        raise InvalidInputError("manifest lists no domains")
    features = []
    labels = []
    names = []
    for entry in entries:
        x, y = _read_domain_file(path.parent / entry["file"])
        features.append(x)
        labels.append(y)
        names.append(str(entry.get("name", entry["file"])))
    return dataset_from_arrays(features, labels, names, num_classes)
