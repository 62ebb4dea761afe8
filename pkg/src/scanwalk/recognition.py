"""Instance classification behind a pluggable feature contract.

The built-in extractor is hand-crafted (color histograms, oriented
gradients on a spatial grid, a coarse grayscale thumbnail) so the package
trains everywhere without a deep-learning stack; anything producing a
fixed-length vector per crop plugs in behind the same contract. The
classifier never trains on environment scenes: training samples are
object crops composited onto unrelated backgrounds, which keeps it from
memorizing scene context.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import BoundingBox, mask_box

COLOR_BINS = 8
GRID_CELLS = 4
ORIENT_BINS = 8
GRAY_POOL = 8
FEATURE_DIM = 3 * COLOR_BINS + GRID_CELLS * GRID_CELLS * ORIENT_BINS + GRAY_POOL * GRAY_POOL
BUILTIN_EXTRACTOR_TAG = "hist-grad-gray-v1"

FeatureExtractor = Callable[[np.ndarray], np.ndarray]


class RecognitionError(ValueError):
    pass


class DivergenceError(RecognitionError):
    """Training produced a non-finite loss."""


def extract_features(crop: np.ndarray) -> np.ndarray:
    """Fixed-length descriptor of an RGB crop.

    Blocks: per-channel 8-bin color histograms, magnitude-weighted 8-bin
    gradient-orientation histograms on a 4x4 grid, and an 8x8 average-
    pooled grayscale thumbnail. Deterministic, scale-normalized, dimension
    FEATURE_DIM.
    """
    crop = np.asarray(crop)
    if crop.ndim != 3 or crop.shape[2] != 3 or crop.shape[0] == 0 or crop.shape[1] == 0:
        raise RecognitionError(f"degenerate crop with shape {crop.shape}")
    h, w = crop.shape[:2]
    n_pix = h * w

    color = np.concatenate(
        [
            np.bincount(crop[:, :, c].astype(np.uint8).ravel() >> 5, minlength=COLOR_BINS)
            / n_pix
            for c in range(3)
        ]
    )

    gray = crop.astype(np.float64).mean(axis=2)
    grad_hist = np.zeros(GRID_CELLS * GRID_CELLS * ORIENT_BINS)
    if h >= 2 and w >= 2:
        gy, gx = np.gradient(gray)
        mag = np.hypot(gx, gy)
        orient = np.arctan2(gy, gx)
        obin = np.clip(
            ((orient + np.pi) / (2 * np.pi) * ORIENT_BINS).astype(np.int64), 0, ORIENT_BINS - 1
        )
        cell_r = np.arange(h) * GRID_CELLS // h
        cell_c = np.arange(w) * GRID_CELLS // w
        cell = cell_r[:, None] * GRID_CELLS + cell_c[None, :]
        idx = cell * ORIENT_BINS + obin
        grad_hist = np.bincount(
            idx.ravel(), weights=mag.ravel(), minlength=GRID_CELLS * GRID_CELLS * ORIENT_BINS
        )
        total = grad_hist.sum()
        if total > 0:
            grad_hist = grad_hist / total

    pool_r = np.arange(h) * GRAY_POOL // h
    pool_c = np.arange(w) * GRAY_POOL // w
    pool_idx = (pool_r[:, None] * GRAY_POOL + pool_c[None, :]).ravel()
    sums = np.bincount(pool_idx, weights=gray.ravel(), minlength=GRAY_POOL * GRAY_POOL)
    counts = np.bincount(pool_idx, minlength=GRAY_POOL * GRAY_POOL)
    thumb = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0) / 255.0

    return np.concatenate([color, grad_hist, thumb])


# -- compositing augmentation -------------------------------------------------


@dataclass
class AugmentationSpec:
    """Randomization applied when pasting object crops onto backgrounds."""

    scale_range: Tuple[float, float] = (0.02, 1.0)
    crop_jitter: float = 0.0       # fraction of each side that may be shaved off
    color_jitter: float = 0.0      # relative amplitude of per-channel gain
    backgrounds: Optional[List[np.ndarray]] = None
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.scale_range
        if not (0 < lo <= hi <= 1):
            raise RecognitionError("scale range must lie within (0, 1]")
        if self.crop_jitter < 0 or self.color_jitter < 0:
            raise RecognitionError("jitter amplitudes must be non-negative")

    def to_dict(self) -> dict:
        """JSON-ready form; the background image set travels separately."""
        return {
            "scale_range": list(self.scale_range),
            "crop_jitter": self.crop_jitter,
            "color_jitter": self.color_jitter,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict, backgrounds=None) -> "AugmentationSpec":
        return cls(
            scale_range=tuple(data.get("scale_range", (0.02, 1.0))),
            crop_jitter=float(data.get("crop_jitter", 0.0)),
            color_jitter=float(data.get("color_jitter", 0.0)),
            backgrounds=backgrounds,
            seed=int(data.get("seed", 0)),
        )


def _nearest_resize(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    h, w = img.shape[:2]
    ri = np.minimum((np.arange(new_h) * h) // new_h, h - 1)
    ci = np.minimum((np.arange(new_w) * w) // new_w, w - 1)
    return img[np.ix_(ri, ci)]


def composite_training_sample(
    crop: np.ndarray,
    mask: np.ndarray,
    background: np.ndarray,
    spec: AugmentationSpec,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, BoundingBox]:
    """Scale, jitter, and paste a masked object crop onto a background.

    Returns the composited image and the tight box around the pasted
    pixels. Deterministic for a given rng state (or spec.seed).
    """
    if mask.shape != crop.shape[:2]:
        raise RecognitionError("mask and crop dimensions differ")
    if not mask.any():
        raise RecognitionError("mask selects no pixels")
    if rng is None:
        rng = np.random.default_rng(spec.seed)

    obj = crop
    obj_mask = mask
    if spec.crop_jitter > 0:
        h, w = obj.shape[:2]
        cuts = [int(rng.uniform(0, spec.crop_jitter) * d) for d in (h, h, w, w)]
        y0, y1 = cuts[0], h - cuts[1]
        x0, x1 = cuts[2], w - cuts[3]
        if y1 - y0 >= 1 and x1 - x0 >= 1 and obj_mask[y0:y1, x0:x1].any():
            obj = obj[y0:y1, x0:x1]
            obj_mask = obj_mask[y0:y1, x0:x1]

    scale = rng.uniform(*spec.scale_range)
    new_h = max(1, int(round(obj.shape[0] * scale)))
    new_w = max(1, int(round(obj.shape[1] * scale)))
    obj = _nearest_resize(obj, new_h, new_w)
    obj_mask = _nearest_resize(obj_mask, new_h, new_w)
    if not obj_mask.any():
        raise RecognitionError("object vanished at the sampled scale")

    obj = obj.astype(np.float64)
    if spec.color_jitter > 0:
        gains = 1.0 + rng.uniform(-spec.color_jitter, spec.color_jitter, size=3)
        obj = obj * gains

    bh, bw = background.shape[:2]
    if new_h > bh or new_w > bw:
        raise RecognitionError(
            f"scaled object {new_h}x{new_w} larger than background {bh}x{bw}"
        )
    y0 = int(rng.integers(0, bh - new_h + 1))
    x0 = int(rng.integers(0, bw - new_w + 1))

    out = background.copy()
    region = out[y0 : y0 + new_h, x0 : x0 + new_w]
    region[obj_mask] = np.clip(obj[obj_mask], 0, 255).astype(np.uint8)

    full_mask = np.zeros((bh, bw), dtype=bool)
    full_mask[y0 : y0 + new_h, x0 : x0 + new_w] = obj_mask
    box = mask_box(full_mask)
    assert box is not None
    return out, box


def make_training_set(
    views_by_instance: Dict[str, List[Tuple[np.ndarray, np.ndarray]]],
    spec: AugmentationSpec,
    samples_per_instance: int = 60,
    extractor: FeatureExtractor = extract_features,
) -> Tuple[np.ndarray, List[str]]:
    """Composite augmented samples for every instance and featurize the crops."""
    if not spec.backgrounds:
        raise RecognitionError("augmentation spec carries no backgrounds")
    rng = np.random.default_rng(spec.seed)
    features, labels = [], []
    for iid in sorted(views_by_instance):
        views = views_by_instance[iid]
        if not views:
            raise RecognitionError(f"instance {iid!r} has no object views")
        for _ in range(samples_per_instance):
            crop, mask = views[int(rng.integers(len(views)))]
            bg = spec.backgrounds[int(rng.integers(len(spec.backgrounds)))]
            image, box = composite_training_sample(crop, mask, bg, spec, rng)
            patch = image[box.ymin : box.ymax, box.xmin : box.xmax]
            features.append(extractor(patch))
            labels.append(iid)
    return np.stack(features), labels


# -- classifier ----------------------------------------------------------------


@dataclass
class ClassifierModel:
    """Softmax head over feature vectors; optional single tanh hidden layer."""

    classes: List[str]
    w_out: np.ndarray
    b_out: np.ndarray
    w_hidden: Optional[np.ndarray] = None
    b_hidden: Optional[np.ndarray] = None
    extractor_tag: str = BUILTIN_EXTRACTOR_TAG
    train_accuracy: float = float("nan")

    @property
    def feature_dim(self) -> int:
        return int(self.w_hidden.shape[0] if self.w_hidden is not None else self.w_out.shape[0])


@dataclass(frozen=True)
class TrainParams:
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 30
    hidden_units: int = 0
    seed: int = 0


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def linear_xent_loss_and_grad(
    w: np.ndarray, b: np.ndarray, x: np.ndarray, y: np.ndarray
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of a linear softmax plus analytic gradients."""
    n = x.shape[0]
    probs = softmax(x @ w + b)
    loss = float(-np.log(np.maximum(probs[np.arange(n), y], 1e-300)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    return loss, x.T @ dlogits, dlogits.sum(axis=0)


def predict_probs(model: ClassifierModel, features: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(features)
    if x.shape[1] != model.feature_dim:
        raise RecognitionError(
            f"feature dimension {x.shape[1]} does not match model ({model.feature_dim})"
        )
    if model.w_hidden is not None:
        x = np.tanh(x @ model.w_hidden + model.b_hidden)
    return softmax(x @ model.w_out + model.b_out)


def train_classifier(
    features: np.ndarray, labels: Sequence[str], params: TrainParams = TrainParams()
) -> ClassifierModel:
    """Mini-batch gradient descent on softmax cross-entropy.

    Deterministic for a given seed. Raises DivergenceError naming the
    step if the loss goes non-finite.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != len(labels):
        raise RecognitionError("features must be (n_samples, dim) matching labels")
    if not np.all(np.isfinite(x)):
        raise RecognitionError("non-finite feature values")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise RecognitionError("need at least two classes")
    class_index = {c: i for i, c in enumerate(classes)}
    y = np.array([class_index[l] for l in labels])
    n, dim = x.shape
    n_classes = len(classes)

    rng = np.random.default_rng(params.seed)
    if params.hidden_units > 0:
        w_h = rng.uniform(-0.05, 0.05, size=(dim, params.hidden_units))
        b_h = np.zeros(params.hidden_units)
        w_o = rng.uniform(-0.05, 0.05, size=(params.hidden_units, n_classes))
    else:
        w_h = b_h = None
        w_o = np.zeros((dim, n_classes))
    b_o = np.zeros(n_classes)

    step = 0
    for _epoch in range(params.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, params.batch_size):
            batch = order[lo : lo + params.batch_size]
            xb, yb = x[batch], y[batch]
            if w_h is None:
                loss, dw, db = linear_xent_loss_and_grad(w_o, b_o, xb, yb)
                w_o -= params.learning_rate * dw
                b_o -= params.learning_rate * db
            else:
                pre = xb @ w_h + b_h
                hid = np.tanh(pre)
                probs = softmax(hid @ w_o + b_o)
                m = len(batch)
                loss = float(-np.log(np.maximum(probs[np.arange(m), yb], 1e-300)).mean())
                dlogits = probs
                dlogits[np.arange(m), yb] -= 1.0
                dlogits /= m
                dw_o = hid.T @ dlogits
                db_o = dlogits.sum(axis=0)
                dhid = dlogits @ w_o.T * (1 - hid * hid)
                w_h -= params.learning_rate * (xb.T @ dhid)
                b_h -= params.learning_rate * dhid.sum(axis=0)
                w_o -= params.learning_rate * dw_o
                b_o -= params.learning_rate * db_o
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at step {step}")
            step += 1

    model = ClassifierModel(
        classes=classes, w_out=w_o, b_out=b_o, w_hidden=w_h, b_hidden=b_h
    )
    train_probs = predict_probs(model, x)
    model.train_accuracy = float((train_probs.argmax(axis=1) == y).mean())
    return model


def classify(
    model: ClassifierModel, crop: np.ndarray, extractor: FeatureExtractor = extract_features
) -> np.ndarray:
    """Probability over model.classes for one crop."""
    return predict_probs(model, extractor(crop))[0]


def top1(model: ClassifierModel, probs: np.ndarray) -> Tuple[str, float]:
    idx = int(np.asarray(probs).argmax())
    return model.classes[idx], float(probs[idx])


# -- checkpointing ---------------------------------------------------------------


def _encode_array(arr: Optional[np.ndarray]):
    if arr is None:
        return None
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _decode_array(obj) -> Optional[np.ndarray]:
    if obj is None:
        return None
    return np.frombuffer(base64.b64decode(obj["data"]), dtype=np.float64).reshape(obj["shape"]).copy()


def save_classifier(model: ClassifierModel, path: Path) -> None:
    payload = {
        "format": "scanwalk-classifier",
        "version": 1,
        "extractor": model.extractor_tag,
        "classes": model.classes,
        "train_accuracy": model.train_accuracy,
        "w_out": _encode_array(model.w_out),
        "b_out": _encode_array(model.b_out),
        "w_hidden": _encode_array(model.w_hidden),
        "b_hidden": _encode_array(model.b_hidden),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_classifier(path: Path) -> ClassifierModel:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != "scanwalk-classifier":
        raise RecognitionError(f"{path}: not a classifier checkpoint")
    return ClassifierModel(
        classes=list(payload["classes"]),
        w_out=_decode_array(payload["w_out"]),
        b_out=_decode_array(payload["b_out"]),
        w_hidden=_decode_array(payload["w_hidden"]),
        b_hidden=_decode_array(payload["b_hidden"]),
        extractor_tag=payload.get("extractor", BUILTIN_EXTRACTOR_TAG),
        train_accuracy=float(payload.get("train_accuracy", float("nan"))),
    )
