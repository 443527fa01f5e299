"""The six online label-shift adaptation strategies.

Each strategy is a small stateful object stepped once per time step with
the latest marginal estimate. Reweighting strategies (FTH, FTFWH, ROGD,
FLHFTL) maintain a simplex vector used to reweight the current base model;
last-layer strategies (UOGD, ATLAS) maintain their own classification head
on top of the current feature extractor. Strategies consume no randomness,
so trajectories are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .estimator import MarginalEstimate
from .models import ModelParams, forward
from .numkit import project_simplex, softmax

ALGORITHMS = ("none", "fth", "ftfwh", "rogd", "flhftl", "uogd", "atlas")
REWEIGHT_ALGORITHMS = ("none", "fth", "ftfwh", "rogd", "flhftl")
HEAD_ALGORITHMS = ("uogd", "atlas")


def reweight_probs(probs: np.ndarray, ratio: np.ndarray) -> np.ndarray:
    """Multiply row-wise by the ratio vector and renormalize."""
    weighted = probs * ratio
    total = weighted.sum(axis=-1, keepdims=True)
    return weighted / np.maximum(total, 1e-300)


def reweight_predict(
    base: ModelParams, p: np.ndarray, q0: np.ndarray, x
) -> np.ndarray:
    """Posterior correction: output_k proportional to f(x)_k * p_k / q0_k."""
    q0 = np.asarray(q0, dtype=float)
    if np.any(q0 <= 0):
        raise InvalidArgumentError("q0 must be strictly positive")
    probs, _, _ = forward(base, x)
    return reweight_probs(probs, np.asarray(p, dtype=float) / q0)


@dataclass
class OlsContext:
    """Artifacts of the current f_t'' that strategies read.

    ``train_probs`` are f_t'' predictions on the train set (ROGD risk
    surface); ``train_feats`` are the train features under the current
    extractor (UOGD/ATLAS risk gradients). The harness refreshes them
    whenever the model changes.
    """

    model: ModelParams
    q0: np.ndarray
    train_labels: np.ndarray
    class_slices: dict
    train_probs: np.ndarray | None = None
    train_feats: np.ndarray | None = None


def weighted_class_risk_grad(
    feats: np.ndarray,
    labels: np.ndarray,
    class_counts: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    s: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Value and gradient of sum_k s_k * R_k(w), where R_k is the mean CE of
    the head (w, b) over the class-k train slice."""
    n = feats.shape[0]
    k = w.shape[0]
    logits = feats @ w.T + b
    probs = softmax(logits)
    picked = np.maximum(probs[np.arange(n), labels], 1e-300)
    per_sample = s[labels] / class_counts[labels]
    value = float((per_sample * -np.log(picked)).sum())
    d = probs.copy()
    d[np.arange(n), labels] -= 1.0
    d *= per_sample[:, None]
    return value, d.T @ feats, d.sum(axis=0)


def per_class_risk_jacobian(
    train_probs: np.ndarray,
    class_slices: dict,
    p: np.ndarray,
    q0: np.ndarray,
) -> np.ndarray:
    """Jacobian J[k, m] = d/dp_m of the class-k surrogate risk
    1 - mean_{x in class k} g(x; f, p/q0)[k] of the reweighted model."""
    k_classes = p.shape[0]
    ratio = p / q0
    jac = np.zeros((k_classes, k_classes))
    for k in range(k_classes):
        a = train_probs[class_slices[k]]
        if a.shape[0] == 0:
            raise InvalidArgumentError(f"train set has no examples of class {k}")
        denom = a @ ratio
        g_k = a[:, k] * ratio[k] / denom
        # d g_k / d ratio_m = (delta_km * a_k - g_k * a_m) / denom
        term = (g_k / denom)[:, None] * a
        jac[k] = term.mean(axis=0) / q0
        jac[k, k] -= float((a[:, k] / denom).mean()) / q0[k]
    return jac


class BaseStrategy:
    """No adaptation: keeps the identity reweighting forever."""

    kind = "reweight"
    name = "none"

    def __init__(self, q0: np.ndarray):
        self.q0 = np.asarray(q0, dtype=float)

    def step(self, ctx: OlsContext, est: MarginalEstimate) -> None:
        return None

    def reweight_vector(self) -> np.ndarray:
        return self.q0.copy()

    def snapshot(self) -> np.ndarray:
        return self.reweight_vector()


class FthStrategy(BaseStrategy):
    """Running mean of the clipped marginal estimates."""

    name = "fth"

    def __init__(self, q0: np.ndarray):
        super().__init__(q0)
        self.running_sum = np.zeros_like(self.q0)
        self.t = 0
        self.p = self.q0.copy()

    def step(self, ctx: OlsContext, est: MarginalEstimate) -> None:
        self.running_sum += est.clipped
        self.t += 1
        self.p = self.running_sum / self.t

    def reweight_vector(self) -> np.ndarray:
        return self.p.copy()


class FtfwhStrategy(BaseStrategy):
    """Mean of the clipped estimates over a fixed trailing window."""

    name = "ftfwh"

    def __init__(self, q0: np.ndarray, window: int = 100):
        super().__init__(q0)
        if window < 1:
            raise InvalidArgumentError("window must be >= 1")
        self.window = window
        self.history: list[np.ndarray] = []
        self.p = self.q0.copy()

    def step(self, ctx: OlsContext, est: MarginalEstimate) -> None:
        self.history.append(est.clipped.copy())
        if len(self.history) > self.window:
            self.history.pop(0)
        self.p = np.mean(self.history, axis=0)

    def reweight_vector(self) -> np.ndarray:
        return self.p.copy()


class RogdStrategy(BaseStrategy):
    """Projected gradient steps on the reweighting vector.

    The descent direction is J_p(p_t)^T s_t with the raw (unclipped)
    estimate. The default step size is sqrt(2/T) / L_hat, where L_hat is
    the largest gradient norm observed during the first ``warmup`` steps
    and is frozen afterwards.
    """

    name = "rogd"

    def __init__(self, q0: np.ndarray, horizon: int, eta: float | None = None,
                 warmup: int = 50):
        super().__init__(q0)
        if eta is not None and eta < 0:
            raise InvalidArgumentError("eta must be >= 0")
        self.horizon = horizon
        self.eta = eta
        self.warmup = warmup
        self.lhat = 0.0
        self.t = 0
        self.p = self.q0.copy()

    def step(self, ctx: OlsContext, est: MarginalEstimate) -> None:
        if ctx.train_probs is None:
            raise InvalidArgumentError("ROGD needs train predictions in the context")
        jac = per_class_risk_jacobian(
            ctx.train_probs, ctx.class_slices, self.p, ctx.q0
        )
        grad = jac.T @ est.s
        self.t += 1
        if self.t <= self.warmup:
            self.lhat = max(self.lhat, float(np.linalg.norm(grad)))
        if self.eta is not None:
            eta_t = self.eta
        elif self.lhat > 0:
            eta_t = math.sqrt(2.0 / self.horizon) / self.lhat
        else:
            eta_t = 0.0
        self.p = project_simplex(self.p - eta_t * grad)

    def reweight_vector(self) -> np.ndarray:
        return self.p.copy()


class FlhftlStrategy(BaseStrategy):
    """Follow-the-leading-history over follow-the-leader base learners.

    Expert j is born at step j and predicts the mean of the clipped
    estimates it has seen. Expert weights decay multiplicatively in the
    squared prediction error; each step injects a fresh expert with a
    1/(t+1) share of the mass. The prediction is the weight-averaged expert
    forecast projected to the simplex.
    """

    name = "flhftl"

    def __init__(self, q0: np.ndarray, eta: float | None = None,
                 max_experts: int = 200):
        super().__init__(q0)
        k = self.q0.shape[0]
        self.eta = eta if eta is not None else k / 2.0
        self.max_experts = max_experts
        self.sums = np.zeros((0, k))
        self.counts = np.zeros(0)
        self.weights = np.zeros(0)
        self.t = 0
        self.tracked_marginal = self.q0.copy()

    def step(self, ctx: OlsContext, est: MarginalEstimate) -> None:
        s = est.clipped
        self.t += 1
        if self.weights.size:
            preds = self.sums / self.counts[:, None]
            losses = ((preds - s) ** 2).sum(axis=1)
            # Subtract the min before exponentiating for stability.
            logw = np.log(np.maximum(self.weights, 1e-300)) - self.eta * losses
            logw -= logw.max()
            w = np.exp(logw)
            self.weights = w / w.sum()
        new_share = 1.0 / (self.t + 1.0)
        self.weights = np.concatenate([self.weights * (1.0 - new_share), [new_share]])
        self.weights = self.weights / self.weights.sum()
        self.sums = np.vstack([self.sums + s, s[None, :]])
        self.counts = np.concatenate([self.counts + 1.0, [1.0]])
        if self.weights.size > self.max_experts:
            keep = slice(-self.max_experts, None)
            self.weights = self.weights[keep]
            self.sums = self.sums[keep]
            self.counts = self.counts[keep]
            self.weights = self.weights / self.weights.sum()
        preds = self.sums / self.counts[:, None]
        self.tracked_marginal = project_simplex(self.weights @ preds)

    def reweight_vector(self) -> np.ndarray:
        return self.tracked_marginal.copy()


class UogdStrategy:
    """Unbiased gradient descent on the classification head weights.

    Per-class empirical risks use the *current* feature extractor; the
    gradient is the s_t-weighted combination of per-class risk gradients.
    The head lives in a Frobenius-norm ball and is only projected back when
    it leaves it.
    """

    kind = "head"
    name = "uogd"

    def __init__(self, f0: ModelParams, eta: float, radius: float = 100.0):
        if eta < 0:
            raise InvalidArgumentError("eta must be >= 0")
        self.eta = eta
        self.radius = radius
        self.w = f0.linear_w.copy()
        self.b = f0.linear_b.copy()

    def _project(self):
        norm = math.sqrt(float((self.w * self.w).sum() + (self.b * self.b).sum()))
        if norm > self.radius:
            scale = self.radius / norm
            self.w *= scale
            self.b *= scale

    def step(self, ctx: OlsContext, est: MarginalEstimate) -> None:
        if ctx.train_feats is None:
            raise InvalidArgumentError("UOGD needs train features in the context")
        counts = np.array(
            [ctx.class_slices[c].size for c in range(self.w.shape[0])], dtype=float
        )
        _, gw, gb = weighted_class_risk_grad(
            ctx.train_feats, ctx.train_labels, counts, self.w, self.b, est.s
        )
        self.w = self.w - self.eta * gw
        self.b = self.b - self.eta * gb
        self._project()

    def head(self) -> tuple[np.ndarray, np.ndarray]:
        return self.w.copy(), self.b.copy()

    def snapshot(self) -> np.ndarray:
        return np.concatenate([self.w.ravel(), self.b])


def atlas_pool_size(horizon: int) -> int:
    return 1 + math.ceil(0.5 * math.log2(1 + 2 * horizon))


def atlas_step_pool(horizon: int, k: int, sigma_min: float) -> np.ndarray:
    """Geometric step-size pool eta_i = base * 2^(i-1)."""
    base = sigma_min / math.sqrt(k * horizon)
    n = atlas_pool_size(horizon)
    return base * (2.0 ** np.arange(n))


class AtlasStrategy:
    """Meta-ensemble of UOGD experts over a geometric step-size pool.

    Expert risks are estimated with the same s_t-weighted per-class risks
    the gradients use; meta weights are exponential in the cumulative
    estimated risk and the played head is the meta-weighted average.
    """

    kind = "head"
    name = "atlas"

    def __init__(self, f0: ModelParams, etas, eps: float, radius: float = 100.0):
        etas = np.asarray(etas, dtype=float)
        if etas.size == 0:
            raise InvalidArgumentError("step-size pool must be nonempty")
        if eps <= 0:
            raise InvalidArgumentError("meta learning rate must be > 0")
        self.experts = [UogdStrategy(f0, float(e), radius) for e in etas]
        self.eps = eps
        self.cum_risk = np.zeros(etas.size)
        self.meta = np.full(etas.size, 1.0 / etas.size)
        self.w = f0.linear_w.copy()
        self.b = f0.linear_b.copy()

    def step(self, ctx: OlsContext, est: MarginalEstimate) -> None:
        if ctx.train_feats is None:
            raise InvalidArgumentError("ATLAS needs train features in the context")
        counts = np.array(
            [ctx.class_slices[c].size for c in range(self.w.shape[0])], dtype=float
        )
        for i, expert in enumerate(self.experts):
            risk, gw, gb = weighted_class_risk_grad(
                ctx.train_feats,
                ctx.train_labels,
                counts,
                expert.w,
                expert.b,
                est.s,
            )
            self.cum_risk[i] += risk
            expert.w = expert.w - expert.eta * gw
            expert.b = expert.b - expert.eta * gb
            expert._project()
        logits = -self.eps * self.cum_risk
        logits -= logits.max()
        w = np.exp(logits)
        self.meta = w / w.sum()
        self.w = sum(p * e.w for p, e in zip(self.meta, self.experts))
        self.b = sum(p * e.b for p, e in zip(self.meta, self.experts))

    def head(self) -> tuple[np.ndarray, np.ndarray]:
        return self.w.copy(), self.b.copy()

    def snapshot(self) -> np.ndarray:
        return np.concatenate([self.w.ravel(), self.b])


@dataclass(frozen=True)
class AlgoParams:
    """Optional per-algorithm overrides; None means the documented default."""

    eta: float | None = None  # rogd / uogd step size
    window: int = 100  # ftfwh
    flh_eta: float | None = None  # flhftl, default K/2
    flh_max_experts: int = 200
    meta_eps: float | None = None  # atlas, default sqrt(8/T)
    radius: float = 100.0  # uogd / atlas domain
    warmup: int = 50  # rogd L-hat estimation window


def make_strategy(
    algorithm: str,
    q0: np.ndarray,
    horizon: int,
    f0: ModelParams,
    sigma_min: float,
    params: AlgoParams | None = None,
):
    """Instantiate a strategy with the documented defaults.

    ``sigma_min`` is the minimum singular value of the pretrained model's
    confusion matrix; it sets the UOGD step size and the ATLAS pool base.
    """
    params = params or AlgoParams()
    q0 = np.asarray(q0, dtype=float)
    k = q0.shape[0]
    if algorithm == "none":
        return BaseStrategy(q0)
    if algorithm == "fth":
        return FthStrategy(q0)
    if algorithm == "ftfwh":
        return FtfwhStrategy(q0, params.window)
    if algorithm == "rogd":
        return RogdStrategy(q0, horizon, params.eta, params.warmup)
    if algorithm == "flhftl":
        return FlhftlStrategy(q0, params.flh_eta, params.flh_max_experts)
    if algorithm == "uogd":
        eta = params.eta if params.eta is not None else sigma_min / math.sqrt(k * horizon)
        return UogdStrategy(f0, eta, params.radius)
    if algorithm == "atlas":
        etas = atlas_step_pool(horizon, k, sigma_min)
        eps = params.meta_eps if params.meta_eps is not None else math.sqrt(8.0 / horizon)
        return AtlasStrategy(f0, etas, eps, params.radius)
    raise InvalidArgumentError(f"unknown algorithm {algorithm!r}")
