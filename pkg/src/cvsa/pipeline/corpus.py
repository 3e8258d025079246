"""Corpus ingestion: an image directory plus optional annotations and labels."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..augment.synth import SyntheticCorpus
from ..boxsearch import BoxConfig, saliency_bbox
from ..image import read_image
from ..saliency import load_saliency_map, read_annotations, spectral_residual
from ..types import BBox

IMAGE_SUFFIXES = (".png", ".ppm")
BOX_SOURCES = ("gt", "spectral", "file")


@dataclass
class Corpus:
    """Images in lexicographic path order with optional GT boxes and labels.

    ``sal_boxes`` holds the saliency box used by SaliencySwap for each image;
    it is filled by :func:`attach_saliency_boxes`.
    """

    root: Path | None
    names: list[str]
    images: list[np.ndarray]
    boxes: list[BBox | None]
    labels: list[int | None]
    sal_boxes: list[BBox | None] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.names)
        if not (len(self.images) == len(self.boxes) == len(self.labels) == n):
            raise ValueError("corpus fields have different lengths")
        if not self.sal_boxes:
            self.sal_boxes = [None] * n

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> tuple[np.ndarray, BBox | None]:
        return self.images[i], self.sal_boxes[i]

    @property
    def image_size(self) -> tuple[int, int]:
        h, w = self.images[0].shape[:2]
        return h, w

    def has_boxes(self) -> bool:
        return len(self) > 0 and all(b is not None for b in self.boxes)

    def has_labels(self) -> bool:
        return len(self) > 0 and all(lab is not None for lab in self.labels)

    @classmethod
    def from_synthetic(cls, syn: SyntheticCorpus, box_source: str = "gt") -> "Corpus":
        c = cls(None, list(syn.names), list(syn.images), list(syn.boxes), list(syn.labels))
        return attach_saliency_boxes(c, box_source)


def _read_labels(path: Path) -> dict[str, int]:
    out: dict[str, int] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out[str(rec["image"])] = int(rec["label"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad label record: {exc}") from None
    return out


def load_corpus(root, box_source: str | None = "gt", saliency_dir=None) -> Corpus:
    """Read every PNG/PPM under ``root`` (non-recursive), sorted by name.

    ``annotations.jsonl`` and ``labels.jsonl`` in ``root`` are picked up when
    present. Every annotation must name an existing image and lie in bounds.
    ``box_source=None`` skips the saliency boxes (stage 1 and evaluation).
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory {root} does not exist")
    names = sorted(p.name for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not names:
        raise ValueError(f"no PNG/PPM images in {root}")
    images = [read_image(root / n) for n in names]

    ann_path, lab_path = root / "annotations.jsonl", root / "labels.jsonl"
    anns = read_annotations(ann_path) if ann_path.exists() else {}
    labs = _read_labels(lab_path) if lab_path.exists() else {}
    for kind, table in (("annotation", anns), ("label", labs)):
        missing = sorted(set(table) - set(names))
        if missing:
            raise ValueError(f"{kind} refers to missing image {missing[0]!r}")
    boxes = []
    for n, img in zip(names, images):
        b = anns.get(n)
        if b is not None:
            b.check(img.shape[1], img.shape[0])
        boxes.append(b)
    corpus = Corpus(root, names, images, boxes, [labs.get(n) for n in names])
    if box_source is None:
        return corpus
    return attach_saliency_boxes(corpus, box_source, saliency_dir)


def attach_saliency_boxes(corpus: Corpus, source: str = "gt", saliency_dir=None, box_cfg: BoxConfig | None = None) -> Corpus:
    """Compute the per-image saliency box from ``source`` (gt, spectral or file)."""
    if source not in BOX_SOURCES:
        raise ValueError(f"box source must be one of {BOX_SOURCES}, got {source!r}")
    box_cfg = box_cfg or BoxConfig()
    out = []
    for name, img, gt in zip(corpus.names, corpus.images, corpus.boxes):
        H, W = img.shape[:2]
        if source == "gt":
            if gt is None:
                raise ValueError(f"box source 'gt' but {name!r} has no annotation")
            # the annotation is the box; no search, so full-image boxes survive
            out.append(gt)
            continue
        elif source == "spectral":
            s = spectral_residual(img)
        else:
            if saliency_dir is None:
                raise ValueError("box source 'file' needs a saliency map directory")
            s = load_saliency_map(Path(saliency_dir) / (Path(name).stem + ".png"), (W, H))
        out.append(saliency_bbox(s, box_cfg))
    corpus.sal_boxes = out
    return corpus
