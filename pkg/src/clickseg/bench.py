"""NoC benchmark harness: simulated-click sessions and aggregation.

Each instance runs a deterministic session — benchmark click, coarse step,
configured refinement — until the highest IoU target is met or the click
budget runs out. NoC@k is the 1-based click index that first reaches IoU
k/100, or the budget when never reached. Evaluation clicks are deterministic,
so aggregates are bit-identical across runs and worker counts.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .augment import AnnotatedSample
from .cfr import CfrConfig, SegmentationSession, interact
from .core import BinaryMask, DimensionMismatchError, ProbabilityMap, binarize, iou
from .encoding import DEFAULT_CLICK_RADIUS, ModelInput
from .simulator import next_eval_click

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalConfig:
    """IoU targets, click budget, and the inference scheme under test."""

    thresholds: tuple[float, ...] = (0.90, 0.95)
    max_clicks: int = 20
    cfr: CfrConfig = CfrConfig()
    click_radius: int = DEFAULT_CLICK_RADIUS

    def __post_init__(self):
        if not self.thresholds:
            raise ValueError("need at least one IoU threshold")
        if any(not 0.0 < t < 1.0 for t in self.thresholds):
            raise ValueError("thresholds must lie in (0, 1)")
        if list(self.thresholds) != sorted(self.thresholds):
            raise ValueError("thresholds must be ascending")
        if self.max_clicks < 1:
            raise ValueError("max_clicks must be >= 1")


@dataclass(frozen=True, eq=False)
class InstanceResult:
    instance_id: str
    noc: dict
    reached: dict
    iou_trace: tuple[float, ...]
    wall_time: float
    failed: bool = False
    error: str = ""


@dataclass(frozen=True, eq=False)
class DatasetReport:
    instances: tuple[InstanceResult, ...]
    mean_noc: dict
    reached_fraction: dict
    failures: int
    thresholds: tuple[float, ...]
    max_clicks: int

    @property
    def evaluated(self) -> int:
        return len(self.instances) - self.failures


class OracleSegmenter:
    """Answers with the ground truth itself; the NoC = 1 sanity anchor."""

    def __init__(self, gt: BinaryMask):
        self._map = ProbabilityMap(gt.bits.astype(float))

    def predict(self, model_input: ModelInput) -> ProbabilityMap:
        if (model_input.height, model_input.width) != (
            self._map.height,
            self._map.width,
        ):
            raise DimensionMismatchError("oracle ground truth does not match input")
        return self._map


class EmptySegmenter:
    """Always predicts all-background; the never-succeeds anchor."""

    def predict(self, model_input: ModelInput) -> ProbabilityMap:
        return ProbabilityMap.zeros(model_input.width, model_input.height)


def evaluate_instance(
    segmenter,
    image,
    gt: BinaryMask,
    cfg: EvalConfig,
    instance_id: str = "0",
) -> InstanceResult:
    """Run one simulated session; a segmenter failure marks the instance failed."""
    if gt.area == 0:
        raise ValueError("evaluation requires a nonempty ground truth")
    started = time.perf_counter()
    trace: list[float] = []
    session = SegmentationSession.new(image)
    top = cfg.thresholds[-1]
    try:
        for _ in range(cfg.max_clicks):
            click = next_eval_click(gt, binarize(session.current_mask), session.clicks)
            if click is None:
                break
            session, _ = interact(session, segmenter, click, cfg.cfr, cfg.click_radius)
            trace.append(iou(binarize(session.current_mask), gt))
            if trace[-1] >= top:
                break
    except Exception as exc:  # noqa: BLE001 - a crashed segmenter must not kill the run
        log.warning("instance %s failed: %s", instance_id, exc)
        return InstanceResult(
            instance_id=instance_id,
            noc={},
            reached={},
            iou_trace=tuple(trace),
            wall_time=time.perf_counter() - started,
            failed=True,
            error=str(exc),
        )

    noc, reached = {}, {}
    for th in cfg.thresholds:
        hit = next((i + 1 for i, x in enumerate(trace) if x >= th), None)
        noc[th] = hit if hit is not None else cfg.max_clicks
        reached[th] = hit is not None
    return InstanceResult(
        instance_id=instance_id,
        noc=noc,
        reached=reached,
        iou_trace=tuple(trace),
        wall_time=time.perf_counter() - started,
    )


def evaluate_dataset(
    segmenter_factory,
    samples: list[AnnotatedSample],
    cfg: EvalConfig,
    jobs: int = 1,
    ids: list[str] | None = None,
) -> DatasetReport:
    """Evaluate every sample; aggregates are merged in instance order.

    ``segmenter_factory`` maps a sample to the segmenter evaluating it, which
    lets the oracle bind per-instance ground truth and lets external adapters
    hand out one child process per worker.
    """
    if not samples:
        raise ValueError("evaluation dataset is empty")
    if ids is None:
        ids = [str(i) for i in range(len(samples))]
    if len(ids) != len(samples):
        raise ValueError("ids and samples lengths differ")

    def run_one(i: int) -> InstanceResult:
        sample = samples[i]
        segmenter = segmenter_factory(sample)
        return evaluate_instance(segmenter, sample.image, sample.gt, cfg, ids[i])

    if jobs <= 1:
        results = [run_one(i) for i in range(len(samples))]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, range(len(samples))))

    ok = [r for r in results if not r.failed]
    failures = len(results) - len(ok)
    mean_noc, reached_fraction = {}, {}
    for th in cfg.thresholds:
        if ok:
            mean_noc[th] = sum(r.noc[th] for r in ok) / len(ok)
            reached_fraction[th] = sum(r.reached[th] for r in ok) / len(ok)
        else:
            mean_noc[th] = float("nan")
            reached_fraction[th] = 0.0
    return DatasetReport(
        instances=tuple(results),
        mean_noc=mean_noc,
        reached_fraction=reached_fraction,
        failures=failures,
        thresholds=cfg.thresholds,
        max_clicks=cfg.max_clicks,
    )
