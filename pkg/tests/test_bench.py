import numpy as np
import pytest

from clickseg.bench import (
    EmptySegmenter,
    EvalConfig,
    OracleSegmenter,
    evaluate_dataset,
    evaluate_instance,
)
from clickseg.cfr import CfrConfig
from clickseg.core import BinaryMask, ProbabilityMap, RasterImage
from clickseg.synthetic import make_synthetic_samples


def block_instance(w=12, h=12, x0=3, y0=3, bw=6, bh=6, seed=0):
    rng = np.random.default_rng(seed)
    img = RasterImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
    bits = np.zeros((h, w), dtype=bool)
    bits[y0 : y0 + bh, x0 : x0 + bw] = True
    return img, BinaryMask(bits)


def test_eval_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(thresholds=())
    with pytest.raises(ValueError):
        EvalConfig(thresholds=(0.95, 0.90))
    with pytest.raises(ValueError):
        EvalConfig(thresholds=(0.9, 1.0))
    with pytest.raises(ValueError):
        EvalConfig(max_clicks=0)


def test_oracle_segmenter_needs_one_click():
    img, gt = block_instance()
    result = evaluate_instance(OracleSegmenter(gt), img, gt, EvalConfig())
    assert result.noc == {0.90: 1, 0.95: 1}
    assert result.reached == {0.90: True, 0.95: True}
    assert result.iou_trace == (1.0,)
    assert not result.failed


def test_empty_segmenter_never_reaches():
    img, gt = block_instance()
    result = evaluate_instance(EmptySegmenter(), img, gt, EvalConfig())
    assert result.noc == {0.90: 20, 0.95: 20}
    assert result.reached == {0.90: False, 0.95: False}
    assert len(result.iou_trace) == 20


class StaircaseSegmenter:
    """IoU improves on a fixed schedule with the number of clicks."""

    def __init__(self, gt: BinaryMask, fractions):
        self.gt = gt
        self.fractions = fractions
        self.coords = np.argwhere(gt.bits)

    def predict(self, model_input):
        k = len(model_input.clicks)
        frac = self.fractions[min(k, len(self.fractions)) - 1]
        n = int(round(frac * len(self.coords)))
        vals = np.zeros((model_input.height, model_input.width))
        for v, u in self.coords[:n]:
            vals[v, u] = 1.0
        return ProbabilityMap(vals)


def test_noc_thresholds_read_off_the_trace():
    img, gt = block_instance(20, 20, 2, 2, 10, 10)  # area 100
    fractions = [0.50, 0.70, 0.90, 0.92, 0.93, 0.94, 0.95]
    seg = StaircaseSegmenter(gt, fractions)
    cfg = EvalConfig()
    result = evaluate_instance(seg, img, gt, cfg)
    assert result.noc[0.90] == 3
    assert result.noc[0.95] == 7
    assert result.iou_trace[:3] == (0.50, 0.70, 0.90)
    assert len(result.iou_trace) == 7  # early exit after the top threshold


def test_noc_monotone_in_threshold():
    img, gt = block_instance(16, 16, 2, 2, 9, 9)
    fractions = [0.3, 0.6, 0.91, 0.96]
    result = evaluate_instance(
        StaircaseSegmenter(gt, fractions), img, gt, EvalConfig()
    )
    assert result.noc[0.95] >= result.noc[0.90]


def test_empty_gt_rejected():
    img, _ = block_instance()
    with pytest.raises(ValueError):
        evaluate_instance(EmptySegmenter(), img, BinaryMask.zeros(12, 12), EvalConfig())


# ---------------------------------------------------------------------------
# dataset-level


def synthetic(n=6):
    return [e.sample for e in make_synthetic_samples(n, 24, 24, seed=11)]


def test_dataset_mean_and_order():
    samples = synthetic(4)
    report = evaluate_dataset(
        lambda s: OracleSegmenter(s.gt), samples, EvalConfig(), jobs=1
    )
    assert report.mean_noc[0.90] == 1.0
    assert report.failures == 0
    assert [r.instance_id for r in report.instances] == ["0", "1", "2", "3"]


def test_parallelism_invariance():
    samples = synthetic(8)
    cfg = EvalConfig(thresholds=(0.5, 0.9), max_clicks=10)
    seq = evaluate_dataset(lambda s: OracleSegmenter(s.gt), samples, cfg, jobs=1)
    par = evaluate_dataset(lambda s: OracleSegmenter(s.gt), samples, cfg, jobs=8)
    assert seq.mean_noc == par.mean_noc
    assert [r.noc for r in seq.instances] == [r.noc for r in par.instances]
    assert [r.iou_trace for r in seq.instances] == [r.iou_trace for r in par.instances]


class FlakySegmenter:
    """Raises for one designated instance to exercise failure accounting."""

    def __init__(self, gt, fail: bool):
        self.inner = OracleSegmenter(gt)
        self.fail = fail

    def predict(self, model_input):
        if self.fail:
            raise RuntimeError("synthetic crash")
        return self.inner.predict(model_input)


def test_failures_excluded_from_means_but_tallied():
    samples = synthetic(3)
    report = evaluate_dataset(
        lambda s: FlakySegmenter(s.gt, fail=s is samples[1]),
        samples,
        EvalConfig(),
        jobs=1,
    )
    assert report.failures == 1
    assert report.instances[1].failed
    assert "synthetic crash" in report.instances[1].error
    assert report.mean_noc[0.90] == 1.0  # mean over the two healthy instances
    assert report.evaluated == 2


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        evaluate_dataset(lambda s: EmptySegmenter(), [], EvalConfig())


def test_cfr_config_flows_through():
    img, gt = block_instance()

    class CountingOracle(OracleSegmenter):
        def __init__(self, gt):
            super().__init__(gt)
            self.calls = 0

        def predict(self, model_input):
            self.calls += 1
            return super().predict(model_input)

    seg = CountingOracle(gt)
    cfg = EvalConfig(cfr=CfrConfig(mode="fixed", n=2))
    result = evaluate_instance(seg, img, gt, cfg)
    assert result.noc[0.90] == 1
    assert seg.calls == 3  # 1 coarse + 2 inner for the single click
