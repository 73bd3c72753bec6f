"""Directory-layout dataset loading and writing.

Layout: ``images/<stem>.(png|jpg|jpeg)`` plus per-instance masks
``masks/<stem>.inst<N>.png`` (any nonzero sample is foreground). A dataset
with exactly one instance per image may use ``masks/<stem>.png``. Augmented
outputs add ``provenance/<stem>.json`` describing how each sample was built.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .augment import AnnotatedSample
from .core import image_to_png_bytes, load_image, load_mask_png, save_mask_png

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
_INST_RE = re.compile(r"^(?P<stem>.+)\.inst(?P<num>\d+)$")


@dataclass(frozen=True, eq=False)
class DatasetEntry:
    instance_id: str
    sample: AnnotatedSample


def load_dataset(root) -> list[DatasetEntry]:
    """One entry per (image, instance) pair, ordered by stem then instance index."""
    root = Path(root)
    image_dir, mask_dir = root / "images", root / "masks"
    if not image_dir.is_dir() or not mask_dir.is_dir():
        raise FileNotFoundError(f"{root} lacks images/ and masks/ subdirectories")

    entries: list[DatasetEntry] = []
    for image_path in sorted(image_dir.iterdir()):
        if image_path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        stem = image_path.stem
        inst_paths = sorted(
            (p for p in mask_dir.glob(f"{stem}.inst*.png")
             if _INST_RE.match(p.stem)),
            key=lambda p: int(_INST_RE.match(p.stem).group("num")),
        )
        single = mask_dir / f"{stem}.png"
        if not inst_paths and single.exists():
            inst_paths = [single]
        if not inst_paths:
            log.warning("no masks for image %s, skipping", image_path.name)
            continue
        image = load_image(image_path)
        masks = [load_mask_png(p) for p in inst_paths]
        keep = [i for i, m in enumerate(masks) if m.area > 0]
        if not keep:
            log.warning("all instances empty for %s, skipping", image_path.name)
            continue
        kept_masks = tuple(masks[i] for i in keep)
        for out_idx, orig_idx in enumerate(keep):
            path = inst_paths[orig_idx]
            iid = stem if path == single else f"{stem}.{path.stem.split('.')[-1]}"
            entries.append(
                DatasetEntry(
                    instance_id=iid,
                    sample=AnnotatedSample(image, kept_masks, selected=out_idx),
                )
            )
    if not entries:
        raise ValueError(f"dataset at {root} contains no usable instances")
    return entries


def write_sample(
    root: Path, stem: str, sample: AnnotatedSample, provenance: dict | None = None
) -> None:
    """Write one sample in the dataset layout (single mask per image)."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    (root / "images" / f"{stem}.png").write_bytes(image_to_png_bytes(sample.image))
    if len(sample.instances) == 1:
        save_mask_png(sample.gt, root / "masks" / f"{stem}.png")
    else:
        for i, mask in enumerate(sample.instances):
            save_mask_png(mask, root / "masks" / f"{stem}.inst{i}.png")
    if provenance is not None:
        prov_dir = root / "provenance"
        prov_dir.mkdir(parents=True, exist_ok=True)
        (prov_dir / f"{stem}.json").write_text(
            json.dumps(provenance, indent=2, sort_keys=True)
        )
