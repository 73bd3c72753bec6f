"""Command-line entry point.

Subcommands: ``synth`` (generate a synthetic dataset), ``augment`` (SUEM
copy-paste over a dataset), ``train-toy`` (iterative-click-loss training of
the toy segmenter), ``eval`` (NoC benchmark with report and figures),
``segment`` (one-shot image + clicks -> mask PNG), and ``serve`` (the
session HTTP API). Every run that writes outputs also writes a manifest
JSON with the fully resolved configuration, so a run can be reproduced from
its manifest alone.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import threading
from pathlib import Path

import numpy as np

from . import __version__
from .augment import SuemConfig, augment_sample
from .bench import EmptySegmenter, EvalConfig, OracleSegmenter, evaluate_dataset
from .cfr import ADAPTIVE, FIXED, CfrConfig, SegmentationSession, interact
from .core import Click, load_image, save_mask_png, binarize
from .dataset import load_dataset, write_sample
from .encoding import DEFAULT_CLICK_RADIUS
from .external import ExternalSegmenter
from .report import RunRecord, load_reference_fixtures, render_markdown, render_figures, write_csv
from .segmenter import ToyModelParams, ToySegmenter, load_params, save_params
from .simulator import SimulatorConfig, make_rng
from .synthetic import write_synthetic_dataset
from .training import IclConfig, train

log = logging.getLogger("clickseg")


def _configure_logging(level_name: str | None) -> None:
    level_name = level_name or os.environ.get("CLICKSEG_LOG", "warning")
    logging.basicConfig(
        level=getattr(logging, level_name.upper(), logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _parse_size(text: str) -> tuple[int, int]:
    w, _, h = text.partition("x")
    return int(w), int(h)


def _parse_cfr(text: str) -> CfrConfig:
    parts = text.split(":")
    if parts[0] == "fixed" and len(parts) == 2:
        return CfrConfig(mode=FIXED, n=int(parts[1]))
    if parts[0] == "adaptive" and len(parts) in (2, 3):
        threshold = int(parts[2]) if len(parts) == 3 else 20
        return CfrConfig(mode=ADAPTIVE, n=int(parts[1]), pixel_threshold=threshold)
    raise argparse.ArgumentTypeError(
        f"bad CFR spec {text!r}; expected fixed:N or adaptive:N[:THRESHOLD]"
    )


def _parse_clicks(text: str) -> list[Click]:
    clicks = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        u, v, label = (int(x) for x in chunk.split(","))
        clicks.append(Click(u, v, label))
    return clicks


def _write_manifest(path: Path, subcommand: str, options: dict) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": options,
        "versions": {
            "clickseg": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _options(args: argparse.Namespace) -> dict:
    import dataclasses

    out = {}
    for key, value in vars(args).items():
        if key == "func":
            continue
        if dataclasses.is_dataclass(value):
            value = dataclasses.asdict(value)
        elif isinstance(value, Path):
            value = str(value)
        elif isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    out = Path(args.out)
    w, h = args.size
    write_synthetic_dataset(out, args.count, w, h, args.seed)
    _write_manifest(out / "manifest.json", "synth", _options(args))
    print(f"wrote {args.count} synthetic samples to {out}")
    return 0


def cmd_augment(args) -> int:
    entries = load_dataset(args.dataset)
    samples = [e.sample for e in entries]
    first = samples[0]
    size = args.size if args.size else (first.image.width, first.image.height)
    cfg = SuemConfig(apply_prob=args.apply_prob, seed=args.seed, train_size=size)
    out = Path(args.out)
    for i in range(args.count):
        src_idx = i % len(samples)
        source = samples[src_idx]
        rng = make_rng(args.seed, i)

        def pick_extra(r, _src=source):
            cand = samples[int(r.integers(len(samples)))]
            if cand is _src and len(samples) > 1:
                cand = samples[int(r.integers(len(samples)))]
            return cand

        augmented, prov = augment_sample(source, pick_extra, rng, cfg)
        prov.update({"seed": args.seed, "draw": i, "source": entries[src_idx].instance_id})
        write_sample(out, f"aug{i:05d}", augmented, prov)
    _write_manifest(out / "manifest.json", "augment", _options(args))
    print(f"wrote {args.count} augmented samples to {out}")
    return 0


def _make_augmenter(samples, cfg: SuemConfig):
    def augmenter(sample, rng):
        def pick_extra(r):
            cand = samples[int(r.integers(len(samples)))]
            if cand is sample and len(samples) > 1:
                cand = samples[int(r.integers(len(samples)))]
            return cand

        out, _ = augment_sample(sample, pick_extra, rng, cfg)
        return out

    return augmenter


def cmd_train_toy(args) -> int:
    entries = load_dataset(args.dataset)
    samples = [e.sample for e in entries]
    holdout = None
    if args.holdout:
        holdout = [e.sample for e in load_dataset(args.holdout)]

    cfg = IclConfig(
        t=args.t,
        betas=tuple(float(b) for b in args.betas.split(",")),
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        click_radius=args.radius,
        sim=SimulatorConfig(seed=args.seed),
        eval_every=args.eval_every,
    )
    augmenter = None
    if args.suem:
        first = samples[0]
        suem_cfg = SuemConfig(
            seed=args.seed, train_size=(first.image.width, first.image.height)
        )
        augmenter = _make_augmenter(samples, suem_cfg)

    params = ToyModelParams.zeros(sigma=args.sigma)
    result = train(params, samples, cfg, augmenter=augmenter, holdout=holdout)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_params(result.params, out / "toy_model.params")
    with open(out / "metrics.csv", "w") as fh:
        fh.write("epoch,mean_icl_loss,holdout_noc90,holdout_iou_at_1,holdout_iou_at_3\n")
        for row in result.metrics:
            fh.write(
                f"{row.epoch},{row.mean_loss:.8f},"
                f"{'' if row.holdout_noc90 is None else f'{row.holdout_noc90:.4f}'},"
                f"{'' if row.holdout_iou_at_1 is None else f'{row.holdout_iou_at_1:.4f}'},"
                f"{'' if row.holdout_iou_at_3 is None else f'{row.holdout_iou_at_3:.4f}'}\n"
            )
    _render_training_figure(result, out / "loss_curve.png")
    _write_manifest(out / "manifest.json", "train-toy", _options(args))
    print(
        f"trained {cfg.epochs} epochs on {len(samples)} samples "
        f"in {result.wall_time:.1f}s; final mean loss "
        f"{result.metrics[-1].mean_loss:.4f}; outputs in {out}"
    )
    return 0


def _render_training_figure(result, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [m.epoch for m in result.metrics]
    ax.plot(epochs, [m.mean_loss for m in result.metrics], label="mean weighted loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.grid(True, alpha=0.3)
    evaluated = [m for m in result.metrics if m.holdout_noc90 is not None]
    if evaluated:
        ax2 = ax.twinx()
        ax2.plot(
            [m.epoch for m in evaluated],
            [m.holdout_noc90 for m in evaluated],
            color="tab:red",
            marker="o",
            label="holdout NoC@90",
        )
        ax2.set_ylabel("holdout NoC@90")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _segmenter_factory(spec: str, timeout: float):
    """Build (factory, cleanup) for a segmenter selector string."""
    adapters: list[ExternalSegmenter] = []
    local = threading.local()

    if spec.startswith("toy:"):
        seg = ToySegmenter(load_params(spec[len("toy:"):]))
        return (lambda sample: seg), (lambda: None)
    if spec.startswith("external:"):
        command = spec[len("external:"):]

        def factory(sample):
            if not hasattr(local, "adapter"):
                local.adapter = ExternalSegmenter(command, timeout=timeout)
                adapters.append(local.adapter)
            return local.adapter

        def cleanup():
            for adapter in adapters:
                adapter.close()

        return factory, cleanup
    if spec == "oracle":
        return (lambda sample: OracleSegmenter(sample.gt)), (lambda: None)
    if spec == "empty":
        seg = EmptySegmenter()
        return (lambda sample: seg), (lambda: None)
    raise argparse.ArgumentTypeError(
        f"bad segmenter selector {spec!r}; expected toy:<params>, "
        "external:<command>, oracle, or empty"
    )


def cmd_eval(args) -> int:
    entries = load_dataset(args.dataset)
    cfg = EvalConfig(
        thresholds=tuple(float(t) for t in args.thresholds.split(",")),
        max_clicks=args.max_clicks,
        cfr=args.cfr,
        click_radius=args.radius,
    )
    factory, cleanup = _segmenter_factory(args.segmenter, args.timeout)
    try:
        report = evaluate_dataset(
            factory,
            [e.sample for e in entries],
            cfg,
            jobs=args.jobs,
            ids=[e.instance_id for e in entries],
        )
    finally:
        cleanup()

    model_label = args.model_label or args.segmenter.split(":")[0]
    dataset_label = args.dataset_label or Path(args.dataset).name
    runs = [RunRecord(model_label, cfg.cfr.label(), dataset_label, report)]
    fixtures = None
    if args.fixtures:
        fixtures = load_reference_fixtures(
            None if args.fixtures == "builtin" else args.fixtures
        )
    markdown = render_markdown(runs, fixtures)
    if args.report:
        report_path = Path(args.report)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(markdown)
        write_csv(runs, report_path.with_suffix(".csv"), fixtures)
        render_figures(runs, report_path.parent / f"{report_path.stem}_figures")
        _write_manifest(
            report_path.parent / f"{report_path.stem}_manifest.json",
            "eval",
            _options(args),
        )
        print(f"report written to {report_path}")
    else:
        print(markdown, end="")
    return 0


def cmd_segment(args) -> int:
    image = load_image(args.image)
    if args.model:
        segmenter = ToySegmenter(load_params(args.model))
    else:
        segmenter = ToySegmenter(ToyModelParams.zeros())
    session = SegmentationSession.new(image)
    for click in _parse_clicks(args.clicks):
        session, _ = interact(session, segmenter, click, args.cfr, args.radius)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mask_png(binarize(session.current_mask), out)
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "segment", _options(args))
    print(f"mask written to {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    if args.model:
        segmenter = ToySegmenter(load_params(args.model))
    else:
        segmenter = ToySegmenter(ToyModelParams.zeros())
        log.warning("serving an untrained (all-zero) toy model; pass --model")
    app = create_app(
        segmenter,
        default_cfr=args.cfr,
        max_dim=args.max_dim,
        click_radius=args.radius,
        static_dir=args.static,
    )
    level = (os.environ.get("CLICKSEG_LOG") or "info").lower()
    uvicorn.run(app, host=args.host, port=args.port, log_level=level)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clickseg",
        description="Interactive image segmentation toolkit: cascade-forward "
        "refinement, iterative click loss, SUEM augmentation, NoC benchmark.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="global RNG seed")
    common.add_argument("--jobs", type=int, default=1, help="worker count")
    common.add_argument("--log-level", default=None,
                        help="debug|info|warning|error (or env CLICKSEG_LOG)")

    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a seeded synthetic shape dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--size", type=_parse_size, default=(64, 64), metavar="WxH")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", parents=[common],
                       help="write SUEM-augmented samples from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--size", type=_parse_size, default=None, metavar="WxH")
    p.add_argument("--apply-prob", type=float, default=0.5)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train-toy", parents=[common],
                       help="train the toy segmenter with the iterative click loss")
    p.add_argument("--dataset", required=True)
    p.add_argument("--holdout", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--t", type=int, default=3, help="corrective clicks per rollout")
    p.add_argument("--betas", default="1,2,3")
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--radius", type=int, default=DEFAULT_CLICK_RADIUS)
    p.add_argument("--sigma", type=float, default=10.0)
    p.add_argument("--eval-every", type=int, default=5)
    p.add_argument("--suem", action="store_true", help="apply SUEM augmentation")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval", parents=[common], help="run the NoC benchmark")
    p.add_argument("--dataset", required=True)
    p.add_argument("--segmenter", required=True,
                   help="toy:<params> | external:<command> | oracle | empty")
    p.add_argument("--cfr", type=_parse_cfr, default=CfrConfig(),
                   help="fixed:N | adaptive:N[:THRESHOLD]")
    p.add_argument("--max-clicks", type=int, default=20)
    p.add_argument("--thresholds", default="0.90,0.95")
    p.add_argument("--report", default=None, help="markdown output path")
    p.add_argument("--radius", type=int, default=DEFAULT_CLICK_RADIUS)
    p.add_argument("--timeout", type=float, default=30.0,
                   help="per-call timeout for external segmenters")
    p.add_argument("--fixtures", default=None,
                   help="'builtin' or a reference-values JSON path")
    p.add_argument("--model-label", default=None)
    p.add_argument("--dataset-label", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("segment", parents=[common],
                       help="one-shot segmentation of an image from a click list")
    p.add_argument("--image", required=True)
    p.add_argument("--clicks", required=True, help='"u,v,l;u,v,l;..."')
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None, help="toy-model params file")
    p.add_argument("--cfr", type=_parse_cfr, default=CfrConfig())
    p.add_argument("--radius", type=int, default=DEFAULT_CLICK_RADIUS)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("serve", parents=[common], help="run the session HTTP API")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--model", default=None, help="toy-model params file")
    p.add_argument("--cfr", type=_parse_cfr, default=CfrConfig())
    p.add_argument("--static", default=None, help="directory of built UI assets")
    p.add_argument("--max-dim", type=int, default=2048)
    p.add_argument("--radius", type=int, default=DEFAULT_CLICK_RADIUS)
    p.set_defaults(func=cmd_serve)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    _configure_logging(args.log_level)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.error("%s", exc, exc_info=log.isEnabledFor(logging.DEBUG))
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
