"""Diagonal-covariance Gaussian mixtures scored over reliable dimensions only.

With diagonal covariance, marginalizing a component over masked-out
dimensions is just dropping their per-dimension factors, so a binary
reliability mask turns the full density into the marginal one directly.
Scores are unnormalized across different mask cardinalities and are only
ever compared between models under the same mask.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import AudioIOError

VARIANCE_FLOOR = 1e-4
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GmmModel:
    """Mixture weights, means and diagonal variances: (M,), (M, D), (M, D)."""

    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.priors = np.asarray(self.priors, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if abs(self.priors.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture priors sum to {self.priors.sum()}, expected 1")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")

    @property
    def num_components(self) -> int:
        return self.priors.shape[0]

    @property
    def num_dims(self) -> int:
        return self.means.shape[1]


@dataclass
class LabeledFeatureSet:
    """Feature rows with class labels and (optionally) aligned mask rows."""

    features: np.ndarray            # (n, D)
    labels: np.ndarray              # (n,) class tokens
    masks: np.ndarray | None = None  # (n, D) bool

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.labels.shape[0] != self.features.shape[0]:
            raise ValueError("labels and features disagree on frame count")
        if self.masks is not None:
            self.masks = np.asarray(self.masks, dtype=bool)
            if self.masks.shape != self.features.shape:
                raise ValueError(
                    f"mask shape {self.masks.shape} does not match features {self.features.shape}"
                )


def marginal_log_likelihoods(model: GmmModel, features: np.ndarray,
                             masks: np.ndarray | None = None) -> np.ndarray:
    """Log-density of each frame over its reliable dimensions, (n,).

    An all-zero mask row yields log 1 = 0 for every model (the
    marginalization limit), keeping fully unreliable frames neutral.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != model.num_dims:
        raise ValueError(f"features have {x.shape[1]} dims, model expects {model.num_dims}")
    if masks is None:
        masks = np.ones_like(x, dtype=bool)
    masks = np.atleast_2d(np.asarray(masks, dtype=bool))
    if masks.shape != x.shape:
        raise ValueError(f"mask shape {masks.shape} does not match features {x.shape}")

    # (n, M, D) per-dimension log factors, masked then reduced.
    diff = x[:, np.newaxis, :] - model.means[np.newaxis, :, :]
    log_dim = -0.5 * (_LOG_2PI + np.log(model.variances)[np.newaxis, :, :]
                      + diff * diff / model.variances[np.newaxis, :, :])
    component_ll = np.sum(log_dim * masks[:, np.newaxis, :], axis=2)
    return logsumexp(component_ll + np.log(model.priors)[np.newaxis, :], axis=1)


def marginal_log_likelihood(model: GmmModel, x: np.ndarray,
                            mask: np.ndarray | None = None) -> float:
    """Single-frame convenience wrapper around marginal_log_likelihoods."""
    masks = None if mask is None else np.atleast_2d(mask)
    return float(marginal_log_likelihoods(model, np.atleast_2d(x), masks)[0])


def _kmeans(x: np.ndarray, k: int, rng: np.random.Generator, iterations: int = 25) -> np.ndarray:
    centers = x[rng.choice(x.shape[0], size=k, replace=False)]
    for _ in range(iterations):
        distances = np.sum((x[:, np.newaxis, :] - centers[np.newaxis, :, :]) ** 2, axis=2)
        assignment = np.argmin(distances, axis=1)
        for j in range(k):
            members = x[assignment == j]
            if members.shape[0] == 0:  # re-seed an empty cluster
                centers[j] = x[rng.integers(x.shape[0])]
            else:
                centers[j] = members.mean(axis=0)
    return centers


def _fit_single_class(x: np.ndarray, num_components: int, rng: np.random.Generator,
                      variance_floor: float, tol: float, max_iter: int) -> GmmModel:
    n, dims = x.shape
    if np.all(x.var(axis=0) < 1e-12):  # constant features: one component is all there is
        num_components = 1
    if num_components == 1:
        variance = np.maximum(x.var(axis=0), variance_floor)
        return GmmModel(np.ones(1), x.mean(axis=0, keepdims=True), variance[np.newaxis, :])

    means = _kmeans(x, num_components, rng)
    variances = np.tile(np.maximum(x.var(axis=0), variance_floor), (num_components, 1))
    priors = np.full(num_components, 1.0 / num_components)

    previous = -np.inf
    for _ in range(max_iter):
        model = GmmModel(priors, means, variances)
        diff = x[:, np.newaxis, :] - means[np.newaxis, :, :]
        log_dim = -0.5 * (_LOG_2PI + np.log(variances)[np.newaxis, :, :]
                          + diff * diff / variances[np.newaxis, :, :])
        weighted = np.sum(log_dim, axis=2) + np.log(priors)[np.newaxis, :]
        frame_ll = logsumexp(weighted, axis=1)
        total = float(frame_ll.sum())

        responsibility = np.exp(weighted - frame_ll[:, np.newaxis])  # (n, M)
        counts = responsibility.sum(axis=0)
        counts = np.maximum(counts, 1e-12)
        priors = counts / counts.sum()
        means = (responsibility.T @ x) / counts[:, np.newaxis]
        second = (responsibility.T @ (x * x)) / counts[:, np.newaxis]
        variances = np.maximum(second - means * means, variance_floor)

        if total - previous < tol * n and np.isfinite(previous):
            break
        previous = total
    return GmmModel(priors, means, variances)


def train_gmm(dataset: LabeledFeatureSet, num_components: int, seed: int,
              variance_floor: float = VARIANCE_FLOOR, tol: float = 1e-5,
              max_iter: int = 200) -> dict[str, GmmModel]:
    """EM-fit one mixture per class; deterministic for a fixed seed.

    Training uses the clean feature rows only (masks are ignored here; they
    matter at scoring time).
    """
    classes = sorted({str(label) for label in dataset.labels})
    seeds = np.random.SeedSequence(seed).spawn(len(classes))
    models = {}
    for class_seed, name in zip(seeds, classes):
        rows = dataset.features[np.asarray([str(l) == name for l in dataset.labels])]
        if rows.shape[0] < 10 * num_components:
            raise ValueError(
                f"class {name!r} has {rows.shape[0]} frames, "
                f"needs at least {10 * num_components} for {num_components} components"
            )
        rng = np.random.default_rng(class_seed)
        models[name] = _fit_single_class(rows, num_components, rng, variance_floor, tol, max_iter)
    return models


def classify(models: dict[str, GmmModel], features: np.ndarray,
             masks: np.ndarray | None = None) -> tuple[str, dict[str, float]]:
    """Utterance label by summed per-frame marginal log-likelihoods."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[0] < 1:
        raise ValueError("classification needs at least one frame")
    scores = {
        name: float(marginal_log_likelihoods(model, features, masks).sum())
        for name, model in models.items()
    }
    best = max(sorted(scores), key=lambda name: scores[name])
    return best, scores


def classify_frames(models: dict[str, GmmModel], features: np.ndarray,
                    masks: np.ndarray | None = None) -> np.ndarray:
    """Per-frame argmax labels; ties resolve to the lexically first class."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    names = sorted(models)
    ll = np.stack([marginal_log_likelihoods(models[name], features, masks) for name in names])
    return np.asarray(names, dtype=object)[np.argmax(ll, axis=0)]


# --------------------------------------------------------------------------
# Model files: a short text header followed by little-endian float64 blocks.
#
#   gmmset 1
#   classes <name> <name> ...
#   components <M>
#   dims <D>
#   <blank line>
#   then per class, in header order: f64[M] priors, f64[M*D] means
#   (row-major), f64[M*D] variances.
# --------------------------------------------------------------------------


def save_models(path: str, models: dict[str, GmmModel]) -> None:
    names = sorted(models)
    components = {models[n].num_components for n in names}
    dims = {models[n].num_dims for n in names}
    if len(components) != 1 or len(dims) != 1:
        raise ValueError("all models in one file must share component count and dims")
    m, d = components.pop(), dims.pop()
    try:
        with open(path, "wb") as fh:
            header = (f"gmmset 1\nclasses {' '.join(names)}\n"
                      f"components {m}\ndims {d}\n\n")
            fh.write(header.encode("ascii"))
            for name in names:
                model = models[name]
                fh.write(model.priors.astype("<f8").tobytes())
                fh.write(model.means.astype("<f8").tobytes())
                fh.write(model.variances.astype("<f8").tobytes())
    except OSError as exc:
        raise AudioIOError(f"cannot write model file {path}: {exc}") from exc


def load_models(path: str) -> dict[str, GmmModel]:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise AudioIOError(f"cannot read model file {path}: {exc}") from exc
    split = data.find(b"\n\n")
    if split < 0 or not data.startswith(b"gmmset 1\n"):
        raise AudioIOError(f"{path}: not a model file")
    fields = {}
    for line in data[:split].decode("ascii").splitlines()[1:]:
        key, _, value = line.partition(" ")
        fields[key] = value
    names = fields["classes"].split()
    m = int(fields["components"])
    d = int(fields["dims"])
    block = np.frombuffer(data[split + 2 :], dtype="<f8")
    per_class = m + 2 * m * d
    if block.shape[0] != per_class * len(names):
        raise AudioIOError(f"{path}: parameter block size mismatch")
    models = {}
    for i, name in enumerate(names):
        chunk = block[i * per_class : (i + 1) * per_class]
        priors = chunk[:m]
        means = chunk[m : m + m * d].reshape(m, d)
        variances = chunk[m + m * d :].reshape(m, d)
        models[name] = GmmModel(priors.copy(), means.copy(), variances.copy())
    return models
