"""Iterative-click-loss training for the toy segmenter.

A training rollout simulates a user: random initial clicks, then one
corrective click per step, each step re-feeding the previous output mask.
Every step's output is scored with the normalized focal loss and the
weighted per-step losses are summed, so models that still look wrong after
more clicks pay more — the mechanism that trades segmentation quality
against interaction count.

Gradients flow through the model weights only: the sampled clicks are
discrete and the previous-mask inputs are treated as constants, so each
step's loss is differentiated as an independent forward pass.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from .core import BinaryMask, ProbabilityMap, binarize
from .encoding import DEFAULT_CLICK_RADIUS, ModelInput, assemble_model_input
from .augment import AnnotatedSample
from .segmenter import (
    ToyForwardCache,
    ToyModelParams,
    ToySegmenter,
    toy_backward,
    toy_forward,
)
from .simulator import (
    SimulatorConfig,
    make_rng,
    next_training_click,
    sample_initial_clicks,
)

log = logging.getLogger(__name__)

# Probabilities are clamped to this range before logs; the clamp also keeps
# the focal normalizer strictly positive.
CLAMP_EPS = 1e-7

# Reference fine-tuning rate for large pretrained backbones; far too small
# for the 8-weight toy model, whose default is 1e-2.
VIT_FINETUNE_LR = 5e-6


@dataclass(frozen=True)
class IclConfig:
    """Rollout length, per-step weights, loss and optimizer hyperparameters."""

    t: int = 3
    betas: tuple[float, ...] = (1.0, 2.0, 3.0)
    nfl_alpha: float = 0.5
    nfl_gamma: float = 2.0
    learning_rate: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 30
    seed: int = 0
    # The weighted sum starts at step 1; the step-0 term can be switched on.
    include_initial_loss: bool = False
    initial_beta: float = 1.0
    click_radius: int = DEFAULT_CLICK_RADIUS
    sim: SimulatorConfig = SimulatorConfig()
    eval_every: int = 5

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("t must be >= 0")
        if len(self.betas) != self.t:
            raise ValueError(f"need {self.t} betas, got {len(self.betas)}")
        if any(b <= 0 for b in self.betas):
            raise ValueError("betas must be positive")
        if self.nfl_gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not 0.0 < self.nfl_alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


def _nfl_terms(
    prob: ProbabilityMap, gt: BinaryMask, alpha: float, gamma: float
) -> tuple[float, float, np.ndarray]:
    """Numerator, normalizer, and the frozen-normalizer gradient w.r.t. p."""
    if prob.values.shape != gt.bits.shape:
        raise ValueError(
            f"probability map {prob.values.shape} != ground truth {gt.bits.shape}"
        )
    p_raw = prob.values
    p = np.clip(p_raw, CLAMP_EPS, 1.0 - CLAMP_EPS)
    fg = gt.bits
    pt = np.where(fg, p, 1.0 - p)
    at = np.where(fg, alpha, 1.0 - alpha)
    one_minus = 1.0 - pt
    focal = one_minus**gamma
    z = float(focal.sum())
    log_pt = np.log(pt)
    numerator = float(-(at * focal * log_pt).sum())

    if gamma == 0:
        curvature = np.zeros_like(pt)
    else:
        curvature = at * gamma * one_minus ** (gamma - 1.0) * log_pt
    d_pt = (curvature - at * focal / pt) / z
    grad = np.where(fg, d_pt, -d_pt)
    clamped = (p_raw < CLAMP_EPS) | (p_raw > 1.0 - CLAMP_EPS)
    return numerator, z, np.where(clamped, 0.0, grad)


def nfl_loss_and_grad(
    prob: ProbabilityMap, gt: BinaryMask, alpha: float, gamma: float
) -> tuple[float, np.ndarray]:
    """Normalized focal loss and its gradient with respect to each probability.

    With p_t the probability of the true class and a_t the class weight
    (alpha on foreground, 1 - alpha on background):

        loss = -(sum a_t (1 - p_t)^gamma log p_t) / (sum (1 - p_t)^gamma)

    The normalizer is treated as a constant under differentiation — the
    defining trait of the normalized focal loss, which makes the effective
    gradient a normalized focal-weighted cross-entropy. Pixels whose raw
    probability sits outside the clamp range get zero gradient.
    """
    numerator, z, grad = _nfl_terms(prob, gt, alpha, gamma)
    return numerator / z, grad


def icl_total_loss(step_losses, betas) -> float:
    """Weighted sum of the per-step losses for steps 1..t."""
    if len(step_losses) != len(betas):
        raise ValueError(
            f"{len(step_losses)} step losses but {len(betas)} weights"
        )
    return float(np.dot(np.asarray(step_losses, float), np.asarray(betas, float)))


# ---------------------------------------------------------------------------
# rollout


@dataclass(frozen=True, eq=False)
class RolloutStep:
    """State after step i: click set P^i, output Y^i, its loss and gradients."""

    clicks: object
    model_input: ModelInput
    prob: ProbabilityMap
    loss: float
    loss_grad: np.ndarray | None
    cache: ToyForwardCache | None
    nfl_normalizer: float = 1.0
    reused: bool = False


@dataclass(frozen=True, eq=False)
class RolloutResult:
    image: object
    gt: BinaryMask
    steps: tuple[RolloutStep, ...]
    forward_calls: int

    @property
    def step_losses(self) -> list[float]:
        return [s.loss for s in self.steps]


def rollout(
    segmenter,
    image,
    gt: BinaryMask,
    cfg: IclConfig,
    rng: np.random.Generator,
) -> RolloutResult:
    """Simulate cfg.t corrective clicks, scoring every intermediate output.

    Step 0 runs on the random initial click set and a zero previous mask;
    step i appends one click sampled from the misclassified pixels of step
    i-1's binarized output. If no misclassified pixel remains, the remaining
    steps reuse the converged step's record without further forwards.
    """
    if gt.area == 0:
        raise ValueError("rollout requires a nonempty ground truth")
    forward = getattr(segmenter, "forward_with_cache", None)

    def run(clicks, previous) -> RolloutStep:
        model_input = assemble_model_input(image, clicks, previous, cfg.click_radius)
        if forward is not None:
            prob, cache = forward(model_input)
        else:
            prob, cache = segmenter.predict(model_input), None
        numerator, z, grad = _nfl_terms(prob, gt, cfg.nfl_alpha, cfg.nfl_gamma)
        return RolloutStep(clicks, model_input, prob, numerator / z, grad, cache, z)

    clicks = sample_initial_clicks(gt, rng, cfg.sim)
    steps = [run(clicks, ProbabilityMap.zeros(gt.width, gt.height))]
    forwards = 1
    for _ in range(cfg.t):
        prev = steps[-1]
        click = next_training_click(gt, binarize(prev.prob), prev.clicks, rng)
        if click is None:
            steps.append(replace(prev, reused=True))
            continue
        steps.append(run(prev.clicks.appended(click), prev.prob))
        forwards += 1
    return RolloutResult(image=image, gt=gt, steps=tuple(steps), forward_calls=forwards)


def replay_losses(
    params: ToyModelParams,
    result: RolloutResult,
    cfg: IclConfig,
    frozen_normalizers: bool = True,
) -> list[float]:
    """Recompute every step loss for new weights with the stochastic parts frozen.

    Clicks and previous-mask inputs are held at their recorded values, and
    (by default) so is each step's focal normalizer — together these pin down
    exactly the objective whose gradient the trainer computes, making central
    differences of this function the reference for the analytic gradient.
    Pass ``frozen_normalizers=False`` to re-evaluate the plain loss values
    instead.
    """
    losses = []
    for step in result.steps:
        prob, _ = toy_forward(params, step.model_input)
        numerator, z, _ = _nfl_terms(prob, result.gt, cfg.nfl_alpha, cfg.nfl_gamma)
        losses.append(numerator / (step.nfl_normalizer if frozen_normalizers else z))
    return losses


def icl_loss_and_gradient(
    params: ToyModelParams, result: RolloutResult, cfg: IclConfig
) -> tuple[float, np.ndarray]:
    """Total weighted loss and its gradient over the toy weights."""
    weighted = list(zip(cfg.betas, result.steps[1:]))
    if cfg.include_initial_loss:
        weighted.append((cfg.initial_beta, result.steps[0]))
    total = icl_total_loss(
        [s.loss for _, s in weighted], [b for b, _ in weighted]
    )
    grad = np.zeros_like(params.weights)
    for beta, step in weighted:
        if step.cache is None:
            raise ValueError("gradient requires rollout steps with forward caches")
        grad += beta * toy_backward(params, step.cache, step.loss_grad)
    return total, grad


# ---------------------------------------------------------------------------
# optimizer


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators and the bias-correction step counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    skipped: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_update(
    params: ToyModelParams,
    grads: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[ToyModelParams, AdamState]:
    """One bias-corrected Adam step; non-finite gradients skip the update."""
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != params.weights.shape:
        raise ValueError(f"gradient shape {g.shape} != weights {params.weights.shape}")
    if not np.isfinite(g).all():
        log.warning("skipping update %d: non-finite gradient", state.step + 1)
        return params, replace(state, skipped=state.skipped + 1)
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    new_w = params.weights - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params.replace_weights(new_w), replace(state, m=m, v=v, step=step)


# ---------------------------------------------------------------------------
# training loop


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    mean_loss: float
    holdout_noc90: float | None = None
    holdout_iou_at_1: float | None = None
    holdout_iou_at_3: float | None = None


@dataclass(frozen=True, eq=False)
class TrainResult:
    params: ToyModelParams
    metrics: tuple[EpochMetrics, ...]
    skipped_samples: int
    wall_time: float


def _holdout_metrics(params, holdout, cfg) -> tuple[float, float, float]:
    # Imported lazily: the benchmark module builds on the trainer's outputs.
    from .bench import EvalConfig, evaluate_dataset

    eval_cfg = EvalConfig(
        thresholds=(0.90,), max_clicks=20, click_radius=cfg.click_radius
    )
    seg = ToySegmenter(params)
    report = evaluate_dataset(lambda sample: seg, holdout, eval_cfg, jobs=1)
    ious_1, ious_3 = [], []
    for res in report.instances:
        if res.failed or not res.iou_trace:
            continue
        ious_1.append(res.iou_trace[0])
        ious_3.append(res.iou_trace[min(3, len(res.iou_trace)) - 1])
    return (
        report.mean_noc[0.90],
        float(np.mean(ious_1)) if ious_1 else 0.0,
        float(np.mean(ious_3)) if ious_3 else 0.0,
    )


def train(
    params: ToyModelParams,
    dataset: list[AnnotatedSample],
    cfg: IclConfig,
    augmenter=None,
    holdout: list[AnnotatedSample] | None = None,
) -> TrainResult:
    """Per-sample Adam training over weighted rollout losses.

    Samples are visited in order with per-(epoch, sample) RNG streams, so a
    fixed seed reproduces the final weights bit for bit. ``augmenter``, when
    given, is a callable (sample, rng) -> sample applied before each rollout.
    Holdout metrics are computed every ``cfg.eval_every`` epochs and on the
    final epoch.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    started = time.perf_counter()
    state = AdamState.zeros(len(params.weights))
    metrics: list[EpochMetrics] = []
    skipped = 0

    for epoch in range(cfg.epochs):
        losses = []
        for idx, sample in enumerate(dataset):
            rng_aug = make_rng(cfg.seed, epoch, idx, 0)
            rng_roll = make_rng(cfg.seed, epoch, idx, 1)
            if augmenter is not None:
                sample = augmenter(sample, rng_aug)
            if sample.gt.area == 0:
                skipped += 1
                log.warning("skipping sample %d: empty ground truth", idx)
                continue
            seg = ToySegmenter(params)
            result = rollout(seg, sample.image, sample.gt, cfg, rng_roll)
            total, grad = icl_loss_and_gradient(params, result, cfg)
            losses.append(total)
            params, state = adam_update(
                params,
                grad,
                state,
                cfg.learning_rate,
                cfg.adam_beta1,
                cfg.adam_beta2,
                cfg.adam_eps,
            )
        if not losses:
            raise ValueError("every sample in the epoch was degenerate")
        row = EpochMetrics(epoch=epoch, mean_loss=float(np.mean(losses)))
        last = epoch == cfg.epochs - 1
        if holdout and (last or (cfg.eval_every > 0 and epoch % cfg.eval_every == 0)):
            noc90, iou1, iou3 = _holdout_metrics(params, holdout, cfg)
            row = replace(
                row,
                holdout_noc90=noc90,
                holdout_iou_at_1=iou1,
                holdout_iou_at_3=iou3,
            )
        metrics.append(row)

    return TrainResult(
        params=params,
        metrics=tuple(metrics),
        skipped_samples=skipped,
        wall_time=time.perf_counter() - started,
    )
