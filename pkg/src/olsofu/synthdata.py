"""Synthetic data generation and online shift-process simulation.

Class-conditional Gaussians with known means stand in for image data: the
source marginal is uniform, the test-time marginal follows a configured
shift process, and covariate corruptions emulate generalized label shift.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataExhaustedError, InvalidArgumentError
from .numkit import as_array, check_simplex

SHIFT_KINDS = ("sinusoidal", "bernoulli", "constant", "monotone")
CORRUPTION_KINDS = ("none", "rotate2d", "gaussian_noise", "affine")


def default_means(k: int, d: int, sep: float = 2.0, layout: str = "axis") -> np.ndarray:
    """Class mean matrix (K x d).

    ``axis`` puts class k at sep * e_k. ``ring2d`` spaces the classes on a
    circle of radius sep in the first two coordinates, which makes planar
    rotations act directly on the class structure.
    """
    if layout == "axis":
        if k > d:
            raise InvalidArgumentError(f"axis layout needs d >= K ({d} < {k})")
        means = np.zeros((k, d))
        means[np.arange(k), np.arange(k)] = sep
        return means
    if layout == "ring2d":
        if d < 2:
            raise InvalidArgumentError("ring2d layout needs d >= 2")
        angles = 2.0 * np.pi * np.arange(k) / k
        means = np.zeros((k, d))
        means[:, 0] = sep * np.cos(angles)
        means[:, 1] = sep * np.sin(angles)
        return means
    raise InvalidArgumentError(f"unknown mean layout {layout!r}")


@dataclass(frozen=True)
class DataSpec:
    """Synthetic source-data configuration."""

    k: int
    d: int
    class_means: np.ndarray
    class_cov_scale: float = 1.0
    n_train: int = 2000
    n_val: int | None = None  # None -> n_train // 4 (4:1 split)
    n_test_pool: int = 2000

    def __post_init__(self):
        if self.k < 2:
            raise InvalidArgumentError("need at least 2 classes")
        if self.d < 2:
            raise InvalidArgumentError("need d >= 2 (rotation acts on two coordinates)")
        means = as_array(self.class_means, "class_means")
        if means.shape != (self.k, self.d):
            raise InvalidArgumentError(
                f"class_means must be ({self.k}, {self.d}), got {means.shape}"
            )
        object.__setattr__(self, "class_means", means)
        if self.class_cov_scale < 0:
            raise InvalidArgumentError("class_cov_scale must be >= 0")
        if self.n_train <= 0 or self.n_test_pool <= 0:
            raise InvalidArgumentError("sample counts must be positive")
        if self.n_val is not None and self.n_val <= 0:
            raise InvalidArgumentError("n_val must be positive when set")

    @property
    def val_count(self) -> int:
        return self.n_val if self.n_val is not None else self.n_train // 4


@dataclass
class LabeledSet:
    """Inputs with integer labels in [0, K)."""

    inputs: np.ndarray
    labels: np.ndarray
    _class_idx: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.inputs = as_array(self.inputs, "inputs")
        self.labels = np.asarray(self.labels, dtype=int)
        if self.inputs.ndim != 2 or self.labels.ndim != 1:
            raise InvalidArgumentError("inputs must be n x d, labels length n")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise InvalidArgumentError("inputs and labels disagree on n")

    def __len__(self) -> int:
        return self.labels.shape[0]

    def class_indices(self, k: int) -> dict[int, np.ndarray]:
        if self._class_idx is None or len(self._class_idx) != k:
            self._class_idx = {
                c: np.flatnonzero(self.labels == c) for c in range(k)
            }
        return self._class_idx


@dataclass(frozen=True)
class ShiftPattern:
    """Label-marginal process q_t = alpha_t * q + (1 - alpha_t) * q_prime."""

    kind: str
    q: np.ndarray
    q_prime: np.ndarray
    horizon: int
    switch_prob: float | None = None  # bernoulli only; None -> 1 - 1/sqrt(T)
    alphas: np.ndarray | None = None  # realized sequence (bernoulli)

    def __post_init__(self):
        if self.kind not in SHIFT_KINDS:
            raise InvalidArgumentError(f"unknown shift kind {self.kind!r}")
        object.__setattr__(self, "q", check_simplex(self.q, "q"))
        object.__setattr__(self, "q_prime", check_simplex(self.q_prime, "q_prime"))
        if self.q.shape != self.q_prime.shape:
            raise InvalidArgumentError("q and q_prime must have equal length")
        if self.horizon < 1:
            raise InvalidArgumentError("horizon must be >= 1")
        if self.switch_prob is not None and not (0.0 <= self.switch_prob <= 1.0):
            raise InvalidArgumentError("switch_prob must lie in [0, 1]")


def uniform_simplex(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def one_hot(k: int, index: int = 0) -> np.ndarray:
    v = np.zeros(k)
    v[index] = 1.0
    return v


def default_pattern(kind: str, k: int, horizon: int, switch_prob=None) -> ShiftPattern:
    """Pattern between uniform q and a one-hot q' on class 0."""
    return ShiftPattern(kind, uniform_simplex(k), one_hot(k, 0), horizon, switch_prob)


def default_switch_prob(horizon: int) -> float:
    """Bernoulli flip probability when none is configured: 1 - 1/sqrt(T)."""
    return 1.0 - 1.0 / np.sqrt(horizon)


def realize_pattern(pattern: ShiftPattern, rng: np.random.Generator) -> ShiftPattern:
    """Draw the random bits a bernoulli pattern needs; no-op otherwise.

    The bit starts at 0 (the process starts at q_prime) and flips at each
    subsequent step with probability switch_prob, defaulting to
    1 - 1/sqrt(T).
    """
    if pattern.kind != "bernoulli":
        return pattern
    p = pattern.switch_prob
    if p is None:
        p = default_switch_prob(pattern.horizon)
    alphas = np.empty(pattern.horizon)
    bit = 0.0
    for t in range(pattern.horizon):
        if t > 0 and rng.random() < p:
            bit = 1.0 - bit
        alphas[t] = bit
    return replace(pattern, alphas=alphas)


def marginal_at(pattern: ShiftPattern, t: int) -> np.ndarray:
    """True label marginal q_t for step t in [1, T]."""
    if not 1 <= t <= pattern.horizon:
        raise InvalidArgumentError(
            f"t={t} outside [1, {pattern.horizon}]"
        )
    if pattern.kind == "constant":
        alpha = 1.0
    elif pattern.kind == "monotone":
        # Ramp from q' (t=1) to q (t=T); the full path length is then
        # exactly ||q - q'||_1.
        alpha = 1.0 if pattern.horizon == 1 else (t - 1) / (pattern.horizon - 1)
    elif pattern.kind == "sinusoidal":
        period = max(1, round(np.sqrt(pattern.horizon)))
        i = t % period
        alpha = np.sin(np.pi * i / period)
    else:  # bernoulli
        if pattern.alphas is None:
            raise InvalidArgumentError(
                "bernoulli pattern must be realized with an rng first"
            )
        alpha = pattern.alphas[t - 1]
    return alpha * pattern.q + (1.0 - alpha) * pattern.q_prime


def marginal_path(pattern: ShiftPattern) -> np.ndarray:
    """All marginals stacked as a (T x K) array."""
    return np.stack([marginal_at(pattern, t) for t in range(1, pattern.horizon + 1)])


def path_length(qs: np.ndarray) -> float:
    """Shift severity: sum over t >= 2 of ||q_t - q_{t-1}||_1."""
    if qs.shape[0] < 2:
        return 0.0
    return float(np.abs(np.diff(qs, axis=0)).sum())


@dataclass(frozen=True)
class CorruptionSpec:
    """Covariate transform applied to test inputs (generalized shift)."""

    kind: str = "none"
    severity: float = 0.0
    angle: float = 0.0  # degrees, rotate2d only

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise InvalidArgumentError(f"unknown corruption kind {self.kind!r}")
        if self.severity < 0:
            raise InvalidArgumentError("severity must be >= 0")


def corrupt(x: np.ndarray, spec: CorruptionSpec, rng: np.random.Generator) -> np.ndarray:
    """Apply the corruption to a vector or a batch of row vectors."""
    x = as_array(x, "x")
    if spec.kind == "none":
        return x.copy()
    if spec.kind == "rotate2d":
        theta = np.deg2rad(spec.angle)
        c, s = np.cos(theta), np.sin(theta)
        out = x.copy()
        x0 = x[..., 0].copy()
        x1 = x[..., 1].copy()
        out[..., 0] = c * x0 - s * x1
        out[..., 1] = s * x0 + c * x1
        return out
    if spec.kind == "gaussian_noise":
        return x + spec.severity * rng.standard_normal(x.shape)
    # affine
    return (1.0 + spec.severity) * x + spec.severity


def make_source_data(
    spec: DataSpec, seed: int
) -> tuple[LabeledSet, LabeledSet, LabeledSet, np.ndarray]:
    """Draw (train, val, test_pool, q0) from the spec's Gaussian classes.

    Train and validation labels are i.i.d. from the uniform source marginal
    q0; the test pool is class-stratified so any test-time marginal can be
    sampled from it with replacement.
    """
    from .numkit import make_rng

    means = spec.class_means
    if spec.class_cov_scale == 0.0:
        dists = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)
        np.fill_diagonal(dists, np.inf)
        if dists.min() == 0.0:
            raise InvalidArgumentError(
                "identical class means with zero covariance are degenerate"
            )
    rng = make_rng(seed)
    q0 = uniform_simplex(spec.k)
    std = np.sqrt(spec.class_cov_scale)

    def draw(n):
        labels = rng.choice(spec.k, size=n, p=q0)
        inputs = means[labels] + std * rng.standard_normal((n, spec.d))
        return LabeledSet(inputs, labels)

    train = draw(spec.n_train)
    if np.unique(train.labels).size != spec.k:
        raise InvalidArgumentError(
            "train split is missing a class; increase n_train"
        )
    val = draw(spec.val_count)

    per_class = max(1, spec.n_test_pool // spec.k)
    pool_labels = np.repeat(np.arange(spec.k), per_class)
    pool_inputs = means[pool_labels] + std * rng.standard_normal(
        (pool_labels.size, spec.d)
    )
    pool = LabeledSet(pool_inputs, pool_labels)
    return train, val, pool, q0


def sample_batch(
    q_t: np.ndarray,
    batch_size: int,
    pool: LabeledSet,
    corruption: CorruptionSpec,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw a test batch: labels ~ q_t, inputs resampled from the pool.

    The returned labels are for error accounting only and must never reach
    adaptation code.
    """
    q_t = check_simplex(q_t, "q_t")
    k = q_t.shape[0]
    idx = pool.class_indices(k)
    needed = np.flatnonzero(q_t > 0)
    for c in needed:
        if idx[int(c)].size == 0:
            raise DataExhaustedError(f"test pool has no entries for class {int(c)}")
    labels = rng.choice(k, size=batch_size, p=q_t)
    rows = np.empty(batch_size, dtype=int)
    for i, c in enumerate(labels):
        members = idx[int(c)]
        rows[i] = members[rng.integers(members.size)]
    inputs = corrupt(pool.inputs[rows], corruption, rng)
    return inputs, labels


def bayes_error_mc(
    means: np.ndarray,
    cov_scale: float,
    q: np.ndarray,
    n_samples: int,
    rng: np.random.Generator,
) -> float:
    """Monte-Carlo Bayes error of the Gaussian mixture under marginal q.

    The Bayes rule is known in closed form (argmax of log q_k minus squared
    distance over 2*cov), so only the expectation is sampled.
    """
    means = as_array(means, "means")
    q = check_simplex(q, "q")
    labels = rng.choice(q.shape[0], size=n_samples, p=q)
    x = means[labels] + np.sqrt(cov_scale) * rng.standard_normal(
        (n_samples, means.shape[1])
    )
    if cov_scale <= 0:
        d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        pred = np.argmin(d2, axis=1)
        return float(np.mean(pred != labels))
    with np.errstate(divide="ignore"):
        logq = np.where(q > 0, np.log(np.maximum(q, 1e-300)), -np.inf)
    scores = logq[None, :] - ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2) / (
        2.0 * cov_scale
    )
    pred = np.argmax(scores, axis=1)
    return float(np.mean(pred != labels))


def save_labeled_csv(dataset: LabeledSet, path) -> None:
    """Dump a dataset as CSV with header x1..xd,label."""
    d = dataset.inputs.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(d)] + ["label"])
        for row, lab in zip(dataset.inputs, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(lab)])


def load_labeled_csv(path) -> LabeledSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "label":
            raise InvalidArgumentError("expected header ending in 'label'")
        inputs, labels = [], []
        for row in reader:
            inputs.append([float(v) for v in row[:-1]])
            labels.append(int(row[-1]))
    return LabeledSet(np.asarray(inputs), np.asarray(labels))
