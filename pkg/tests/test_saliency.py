import numpy as np
import pytest
from PIL import Image

from cvsa.augment.synth import generate_synthetic_corpus
from cvsa.boxsearch import saliency_bbox
from cvsa.image import write_gray8
from cvsa.rng import Rng
from cvsa.saliency import (
    BoxAnnotation,
    boxes_as_saliency,
    load_saliency_map,
    read_annotations,
    save_saliency_map,
    spectral_residual,
    write_annotations,
)
from cvsa.types import BBox, SaliencyMap


def white_square(size=64, side=16, at=(24, 20)):
    img = np.zeros((size, size, 3))
    t, l = at
    img[t : t + side, l : l + side] = 1.0
    return img, BBox(l, t, side, side)


def test_flat_image_is_constant():
    s = spectral_residual(np.full((20, 30, 3), 0.4))
    assert s.constant
    assert s.values.shape == (20, 30)
    assert np.abs(s.values).max() == 0.0


def test_white_square_peak_inside():
    img, box = white_square()
    v = spectral_residual(img).values
    i, j = np.unravel_index(np.argmax(v), v.shape)
    assert box.t <= i < box.bottom and box.l <= j < box.right


def test_nonconstant_range_is_exactly_unit():
    img = np.random.default_rng(0).random((24, 40, 3))
    s = spectral_residual(img)
    assert not s.constant
    assert s.values.min() == 0.0 and s.values.max() == 1.0
    assert s.values.shape == (24, 40)


def test_brightness_shift_invariance():
    img = 0.6 * np.random.default_rng(1).random((32, 32, 3))
    a = spectral_residual(img).values
    b = spectral_residual(img + 0.3).values
    assert np.abs(a - b).max() <= 1e-6


def test_rejects_tiny_image():
    with pytest.raises(ValueError):
        spectral_residual(np.zeros((7, 20, 3)))


def test_square_box_overlaps_truth():
    img, box = white_square()
    assert saliency_bbox(spectral_residual(img)).iou(box) >= 0.3


# -- map files ----------------------------------------------------------------


def test_checkerboard_roundtrip(tmp_path):
    v = ((np.indices((12, 10)).sum(0) % 2) * 255 / 255.0)
    path = tmp_path / "m.png"
    save_saliency_map(path, SaliencyMap(v))
    back = load_saliency_map(path, (10, 12))
    assert np.array_equal(back.values, v)


def test_all_white_and_all_black_files(tmp_path):
    write_gray8(tmp_path / "w.png", np.ones((5, 6)))
    write_gray8(tmp_path / "b.png", np.zeros((5, 6)))
    w = load_saliency_map(tmp_path / "w.png")
    assert (w.values == 1.0).all()
    assert load_saliency_map(tmp_path / "b.png").constant


def test_pgm_is_accepted(tmp_path):
    Image.fromarray(np.full((4, 9), 51, dtype=np.uint8), mode="L").save(tmp_path / "m.pgm")
    assert load_saliency_map(tmp_path / "m.pgm").values[0, 0] == pytest.approx(0.2)


def test_dimension_mismatch_and_colour_file(tmp_path):
    write_gray8(tmp_path / "m.png", np.ones((5, 6)))
    with pytest.raises(ValueError, match="6x5"):
        load_saliency_map(tmp_path / "m.png", (5, 6))
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(tmp_path / "rgb.png")
    with pytest.raises(ValueError):
        load_saliency_map(tmp_path / "rgb.png")


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(OSError):
        load_saliency_map(tmp_path / "nope.png")


# -- annotations --------------------------------------------------------------


def test_box_map_counts():
    assert boxes_as_saliency(BBox(2, 3, 4, 5), 10, 10).values.sum() == 20
    full = boxes_as_saliency(BoxAnnotation("a.png", BBox(0, 0, 10, 10)), 10, 10)
    assert (full.values == 1.0).all()
    with pytest.raises(ValueError):
        boxes_as_saliency(BBox(8, 0, 4, 4), 10, 10)


def test_generated_annotations_are_fixed_points():
    syn = generate_synthetic_corpus(60, 4, 48, Rng(2))
    for img, box in syn:
        assert saliency_bbox(boxes_as_saliency(box, img.shape[1], img.shape[0])) == box


def test_annotation_file_roundtrip(tmp_path):
    anns = [BoxAnnotation("a.png", BBox(1, 2, 3, 4)), BoxAnnotation("b.png", BBox(0, 0, 8, 8))]
    write_annotations(tmp_path / "ann.jsonl", anns)
    assert read_annotations(tmp_path / "ann.jsonl") == {a.image: a.box for a in anns}


def test_bad_annotation_line(tmp_path):
    p = tmp_path / "ann.jsonl"
    p.write_text('{"image": "a.png", "box": [1, 2, 3]}\n')
    with pytest.raises(ValueError, match=":1:"):
        read_annotations(p)
    p.write_text('{"image": "a.png", "box": [1.5, 2, 3, 4]}\n')
    with pytest.raises(ValueError):
        read_annotations(p)
