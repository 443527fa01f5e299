"""Online evaluation loop, oracle comparators, metrics and the estimator
bias experiment.

Three seed streams keep runs comparable: the data seed fixes the source
draw and pretraining, the shift seed fixes the marginal process and batch
sampling, and the run seed feeds only algorithm-side randomness (SSL draws,
head re-initialisations). Two scenarios differing only in algorithm or SSL
choice therefore see byte-identical batch streams.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, RunError, UndefinedCorrelationError
from .estimator import bbse_estimate, confusion_matrix, regularize_confusion
from .models import (
    ModelParams,
    TrainConfig,
    accuracy,
    calibrate_temperature,
    retrain_linear,
    train_supervised,
)
from .numkit import make_rng
from .ofu import (
    OfuRuntime,
    Predictor,
    SslSpec,
    build_context,
    compose_output,
    feature_update,
    init_ofu_state,
    ols_ofu_step,
)
from .ols import ALGORITHMS, AlgoParams, make_strategy
from .synthdata import (
    CorruptionSpec,
    DataSpec,
    LabeledSet,
    ShiftPattern,
    make_source_data,
    marginal_at,
    path_length,
    realize_pattern,
    sample_batch,
)

ORDERS = ("predict_first", "update_first")


@dataclass(frozen=True)
class Scenario:
    """Complete experiment configuration."""

    data: DataSpec
    shift: ShiftPattern
    corruption: CorruptionSpec = CorruptionSpec()
    algorithm: str = "flhftl"
    ssl: SslSpec = SslSpec()
    batch_size: int = 10
    order: str = "predict_first"
    data_seed: int = 1
    shift_seed: int = 2
    run_seed: int = 8610
    train_cfg: TrainConfig = TrainConfig()
    pretrain_ssl: str = "none"
    pretrain_ssl_weight: float = 1.0
    algo_params: AlgoParams = AlgoParams()
    reg_lambda: float = 0.01
    hidden: tuple = (32, 32)
    activation: str = "tanh"
    retrain_max_iter: int = 500
    retrain_grad_tol: float = 1e-6

    def __post_init__(self):
        if self.shift.horizon < 1 or self.batch_size < 1:
            raise InvalidArgumentError("horizon and batch size must be >= 1")
        if self.order not in ORDERS:
            raise InvalidArgumentError(f"unknown order {self.order!r}")
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgumentError(f"unknown algorithm {self.algorithm!r}")

    @property
    def horizon(self) -> int:
        return self.shift.horizon


@dataclass
class OnlineTrace:
    """Per-step record of one online run plus summary metrics."""

    q: np.ndarray  # (T, K) true marginals
    s: np.ndarray  # (T, K) raw estimates
    errors: np.ndarray  # (T,) per-step 0-1 error counts
    batch_size: int
    sigma_min: np.ndarray  # (T,) sigma of the confusion used per step
    snapshots: list = field(default_factory=list)
    estimator_model_uids: list = field(default_factory=list)
    end_model_uids: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return self.q.shape[0]

    @property
    def cum_errors(self) -> np.ndarray:
        return np.cumsum(self.errors)

    @property
    def avg_error(self) -> float:
        return float(self.errors.sum()) / (self.horizon * self.batch_size)

    @property
    def shift_severity(self) -> float:
        return path_length(self.q)

    def summary(self) -> dict:
        return {
            "avg_error": self.avg_error,
            "shift_severity": self.shift_severity,
            "horizon": self.horizon,
            "batch_size": self.batch_size,
        }

    def to_csv(self, path) -> None:
        k = self.q.shape[1]
        cum = self.cum_errors
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["t"]
                + [f"q{i}" for i in range(k)]
                + [f"s{i}" for i in range(k)]
                + ["errors", "cum_errors"]
            )
            for t in range(self.horizon):
                writer.writerow(
                    [t + 1]
                    + [repr(float(v)) for v in self.q[t]]
                    + [repr(float(v)) for v in self.s[t]]
                    + [int(self.errors[t]), int(cum[t])]
                )


@dataclass
class Pretrained:
    """Pretraining artifacts shared across runs of the same data config."""

    model: ModelParams  # calibrated f_0
    train: LabeledSet
    val: LabeledSet
    pool: LabeledSet
    q0: np.ndarray
    sigma_min: float  # of the regularized confusion of the calibrated f_0


def pretrain(sc: Scenario, model: ModelParams | None = None) -> Pretrained:
    """Draw the source data and produce the calibrated pretrained model.

    Pass ``model`` to reuse an existing uncalibrated checkpoint instead of
    training from scratch.
    """
    train, val, pool, q0 = make_source_data(sc.data, sc.data_seed)
    if model is None:
        model = train_supervised(
            train,
            sc.train_cfg,
            k=sc.data.k,
            ssl_kind=sc.pretrain_ssl,
            ssl_weight=sc.pretrain_ssl_weight,
            hidden=sc.hidden,
            activation=sc.activation,
            infonce_temperature=sc.ssl.infonce_temperature,
            augment_noise=sc.ssl.augment_noise,
        )
    calibrated = calibrate_temperature(model, val)
    conf = regularize_confusion(confusion_matrix(calibrated, val), sc.reg_lambda)
    return Pretrained(calibrated, train, val, pool, q0, conf.sigma_min)


def _count_errors(predictor: Predictor, inputs, labels) -> int:
    return int(np.sum(predictor.predict(inputs) != labels))


def _empty_trace(sc: Scenario) -> OnlineTrace:
    t, k = sc.horizon, sc.data.k
    return OnlineTrace(
        q=np.zeros((t, k)),
        s=np.zeros((t, k)),
        errors=np.zeros(t, dtype=int),
        batch_size=sc.batch_size,
        sigma_min=np.zeros(t),
    )


def run_online(sc: Scenario, pretrained: Pretrained | None = None) -> OnlineTrace:
    """Run the full online protocol and return its trace.

    Each step samples a batch from the true marginal, predicts with the
    deployed model, records 0-1 errors against the hidden labels, and then
    adapts (prediction and adaptation swap under order='update_first').
    """
    pre = pretrained if pretrained is not None else pretrain(sc)
    shift_rng = make_rng(sc.shift_seed)
    pattern = realize_pattern(sc.shift, shift_rng)
    runtime = OfuRuntime(
        train=pre.train,
        val=pre.val,
        q0=pre.q0,
        ssl=sc.ssl,
        reg_lambda=sc.reg_lambda,
        rng=make_rng(sc.run_seed),
        retrain_max_iter=sc.retrain_max_iter,
        retrain_grad_tol=sc.retrain_grad_tol,
    )
    strategy = make_strategy(
        sc.algorithm, pre.q0, sc.horizon, pre.model, pre.sigma_min, sc.algo_params
    )
    state = init_ofu_state(pre.model, strategy, runtime)
    predictor = compose_output(state.model, strategy, pre.q0)
    trace = _empty_trace(sc)
    for t in range(1, sc.horizon + 1):
        try:
            q_t = marginal_at(pattern, t)
            inputs, labels = sample_batch(
                q_t, sc.batch_size, pre.pool, sc.corruption, shift_rng
            )
            if sc.order == "predict_first":
                errs = _count_errors(predictor, inputs, labels)
                predictor, rec = ols_ofu_step(state, inputs, runtime)
            else:
                predictor, rec = ols_ofu_step(state, inputs, runtime)
                errs = _count_errors(predictor, inputs, labels)
        except Exception as exc:  # noqa: BLE001 - annotate with the step index
            raise RunError(f"step {t}: {exc}", t) from exc
        trace.q[t - 1] = q_t
        trace.s[t - 1] = rec.s_raw
        trace.errors[t - 1] = errs
        trace.sigma_min[t - 1] = rec.sigma_min
        trace.snapshots.append(rec.snapshot)
        trace.estimator_model_uids.append(rec.estimator_model_uid)
        trace.end_model_uids.append(rec.end_model_uid)
    return trace


def run_bare_ols(sc: Scenario, pretrained: Pretrained | None = None) -> OnlineTrace:
    """The adaptation loop without the feature-update wrapper.

    Used to check that the wrapper with ssl='none' degenerates to exactly
    this behavior.
    """
    pre = pretrained if pretrained is not None else pretrain(sc)
    shift_rng = make_rng(sc.shift_seed)
    pattern = realize_pattern(sc.shift, shift_rng)
    strategy = make_strategy(
        sc.algorithm, pre.q0, sc.horizon, pre.model, pre.sigma_min, sc.algo_params
    )
    conf = regularize_confusion(confusion_matrix(pre.model, pre.val), sc.reg_lambda)
    ctx = build_context(pre.model, pre.train, pre.q0)
    predictor = compose_output(pre.model, strategy, pre.q0)
    trace = _empty_trace(sc)
    for t in range(1, sc.horizon + 1):
        try:
            q_t = marginal_at(pattern, t)
            inputs, labels = sample_batch(
                q_t, sc.batch_size, pre.pool, sc.corruption, shift_rng
            )

            def adapt():
                est = bbse_estimate(pre.model, conf, inputs)
                strategy.step(ctx, est)
                return est, compose_output(pre.model, strategy, pre.q0)

            if sc.order == "predict_first":
                errs = _count_errors(predictor, inputs, labels)
                est, predictor = adapt()
            else:
                est, predictor = adapt()
                errs = _count_errors(predictor, inputs, labels)
        except Exception as exc:  # noqa: BLE001
            raise RunError(f"step {t}: {exc}", t) from exc
        trace.q[t - 1] = q_t
        trace.s[t - 1] = est.s
        trace.errors[t - 1] = errs
        trace.sigma_min[t - 1] = conf.sigma_min
        trace.snapshots.append(strategy.snapshot())
        trace.estimator_model_uids.append(pre.model.uid)
        trace.end_model_uids.append(pre.model.uid)
    return trace


def oracle_trace(
    sc: Scenario, frozen: bool, pretrained: Pretrained | None = None
) -> OnlineTrace:
    """Comparator run that reweights by the TRUE marginal q_t.

    frozen=True predicts with the pretrained calibrated model throughout;
    frozen=False lets the feature-update machinery (steps 2-3) run, so the
    base model evolves while the reweighting stays exact.
    """
    pre = pretrained if pretrained is not None else pretrain(sc)
    shift_rng = make_rng(sc.shift_seed)
    pattern = realize_pattern(sc.shift, shift_rng)
    runtime = OfuRuntime(
        train=pre.train,
        val=pre.val,
        q0=pre.q0,
        ssl=sc.ssl if not frozen else SslSpec(kind="none"),
        reg_lambda=sc.reg_lambda,
        rng=make_rng(sc.run_seed),
        retrain_max_iter=sc.retrain_max_iter,
        retrain_grad_tol=sc.retrain_grad_tol,
    )
    strategy = make_strategy("none", pre.q0, sc.horizon, pre.model, pre.sigma_min)
    state = init_ofu_state(pre.model, strategy, runtime)
    trace = _empty_trace(sc)
    for t in range(1, sc.horizon + 1):
        try:
            q_t = marginal_at(pattern, t)
            inputs, labels = sample_batch(
                q_t, sc.batch_size, pre.pool, sc.corruption, shift_rng
            )
            oracle_now = Predictor(state.model, q_t / pre.q0)
            if sc.order == "predict_first":
                errs = _count_errors(oracle_now, inputs, labels)
                _, rec = ols_ofu_step(state, inputs, runtime)
            else:
                _, rec = ols_ofu_step(state, inputs, runtime)
                errs = _count_errors(Predictor(state.model, q_t / pre.q0), inputs, labels)
        except Exception as exc:  # noqa: BLE001
            raise RunError(f"step {t}: {exc}", t) from exc
        trace.q[t - 1] = q_t
        trace.s[t - 1] = rec.s_raw
        trace.errors[t - 1] = errs
        trace.sigma_min[t - 1] = rec.sigma_min
        trace.snapshots.append(rec.snapshot)
        trace.estimator_model_uids.append(rec.estimator_model_uid)
        trace.end_model_uids.append(rec.end_model_uid)
    return trace


def improvement_check(
    sc: Scenario, pretrained: Pretrained | None = None
) -> tuple[float, float, bool]:
    """Compare the true-marginal oracle with updated features (lhs) against
    the frozen-feature oracle (rhs); feature updates help when lhs < rhs."""
    pre = pretrained if pretrained is not None else pretrain(sc)
    lhs = oracle_trace(sc, frozen=False, pretrained=pre).avg_error
    rhs = oracle_trace(sc, frozen=True, pretrained=pre).avg_error
    return lhs, rhs, lhs < rhs


def ordering_bias_test(
    f: ModelParams,
    q: np.ndarray,
    data: DataSpec,
    train: LabeledSet,
    n_trials: int,
    batch_size: int,
    violate_order: bool,
    rng: np.random.Generator,
    ssl_lr: float = 0.5,
    clean_val_per_class: int = 200_000,
    violate_val_per_class: int = 400,
    retrain_max_iter: int = 60,
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Monte-Carlo check of the estimator's bias under ordering violations.

    With violate_order=False the estimate is computed from the fixed model
    ``f`` and should be unbiased. With violate_order=True the model first
    takes one entropy feature-update step *using the same batch* and a head
    re-train before estimating, which breaks the independence the estimator
    needs. Returns (bias per class, standard error per class, flagged),
    flagged when any |bias| > 3 stderr.

    The clean ordering measures its confusion on a very large fresh sample
    (accumulated in chunks) so finite-validation noise stays far below the
    3-sigma bar; the violating pipeline rebuilds its confusion from the
    batch-dependent model each trial on a moderate fresh sample.
    """
    if n_trials < 1000:
        raise InvalidArgumentError("n_trials must be >= 1000")
    q = np.asarray(q, dtype=float)
    k = data.k
    std = np.sqrt(data.class_cov_scale)

    def fresh_stratified(per_class):
        labels = np.repeat(np.arange(k), per_class)
        inputs = data.class_means[labels] + std * rng.standard_normal(
            (labels.size, data.d)
        )
        return LabeledSet(inputs, labels)

    def draw_batch():
        labels = rng.choice(k, size=batch_size, p=q)
        return data.class_means[labels] + std * rng.standard_normal(
            (batch_size, data.d)
        )

    def chunked_confusion(model, per_class, chunk=20_000):
        from .estimator import ConfusionMatrix
        from .models import forward as model_forward
        from .numkit import min_singular_value

        cols = np.zeros((k, k))
        for c in range(k):
            done = 0
            while done < per_class:
                m_now = min(chunk, per_class - done)
                x = data.class_means[c] + std * rng.standard_normal((m_now, data.d))
                probs, _, _ = model_forward(model, x)
                cols[:, c] += probs.sum(axis=0)
                done += m_now
            cols[:, c] /= per_class
        return ConfusionMatrix(cols, min_singular_value(cols), model.uid)

    estimates = np.empty((n_trials, k))
    if not violate_order:
        conf = chunked_confusion(f, clean_val_per_class)
        for i in range(n_trials):
            estimates[i] = bbse_estimate(f, conf, draw_batch()).s
    else:
        val = fresh_stratified(violate_val_per_class)
        spec = SslSpec(kind="entropy", ssl_lr=ssl_lr)
        for i in range(n_trials):
            batch = draw_batch()
            bumped = feature_update(f, batch, spec, rng)
            retrained = retrain_linear(
                bumped, train, rng=rng, max_iter=retrain_max_iter
            )
            conf = confusion_matrix(retrained, val)
            estimates[i] = bbse_estimate(retrained, conf, batch).s
    bias = estimates.mean(axis=0) - q
    stderr = estimates.std(axis=0, ddof=1) / np.sqrt(n_trials)
    flagged = bool(np.any(np.abs(bias) > 3.0 * stderr))
    return bias, stderr, flagged


def pearson(xs, ys) -> float:
    """Sample Pearson correlation in [-1, 1]."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise InvalidArgumentError("pearson needs two equal-length sequences (>= 2)")
    xc = xs - xs.mean()
    yc = ys - ys.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        raise UndefinedCorrelationError("zero variance sequence")
    r = float((xc * yc).sum() / denom)
    return max(-1.0, min(1.0, r))


@dataclass
class RunResult:
    """One completed scenario run, keyed for grouping in summaries."""

    key: str
    trace: OnlineTrace
    oracle_pair: tuple[float, float, bool] | None = None


def summarize(results: list[RunResult]) -> list[dict]:
    """Aggregate runs by key: mean and std of the average error over
    replicates, mean shift severity, and oracle-pair values when present."""
    if not results:
        raise InvalidArgumentError("summarize needs at least one result")
    groups: dict[str, list[RunResult]] = {}
    for res in results:
        groups.setdefault(res.key, []).append(res)
    rows = []
    for key, members in groups.items():
        errs = np.array([m.trace.avg_error for m in members])
        vts = np.array([m.trace.shift_severity for m in members])
        row = {
            "key": key,
            "replicates": len(members),
            "avg_error_mean": float(errs.mean()),
            "avg_error_std": float(errs.std(ddof=1)) if errs.size > 1 else 0.0,
            "shift_severity_mean": float(vts.mean()),
        }
        pairs = [m.oracle_pair for m in members if m.oracle_pair is not None]
        if pairs:
            row["oracle_updated"] = float(np.mean([p[0] for p in pairs]))
            row["oracle_frozen"] = float(np.mean([p[1] for p in pairs]))
            row["updates_help"] = bool(row["oracle_updated"] < row["oracle_frozen"])
        rows.append(row)
    return rows


def base_error_reference(pre: Pretrained) -> float:
    """Held-out error of the calibrated pretrained model on the pool."""
    return 1.0 - accuracy(pre.model, pre.pool)
