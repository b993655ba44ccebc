"""Adam, losses, and the three training phases for the two networks.

Phase 1 trains the segmentation net on full frames, phase 2 trains the ROI
net on ground-truth event/edge/ROI triples, phase 3 fine-tunes the
segmentation net on crops chosen by the frozen ROI net.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import Frame, Roi, SegmentationMap, foreground_bbox, rect_area, roi_is_feasible, roi_to_pixels
from .edge import seg_edge_map
from .event import downsample_by_2, event_map
from .nn.graph import LayerGraph
from .roinet import input_size, make_inputs
from .segnet import NUM_CLASSES, SIZE_MULTIPLE, frames_to_input

log = logging.getLogger(__name__)


# -- optimizer ----------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """One in-place Adam update with bias correction."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.step
    c2 = 1 - b2 ** state.step
    for k, g in grads.items():
        p = params[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# -- losses -------------------------------------------------------------------------

def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of ``labels`` (N, H, W) under ``probs`` (N, C, H, W)."""
    p = np.take_along_axis(probs, labels[:, None].astype(np.intp), axis=1)
    return float(-np.log(np.maximum(p, 1e-300)).mean())


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray | None = None):
    """Summed loss and d(sum)/d(logits) over the pixels where ``mask`` is set."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    lab = labels[:, None].astype(np.intp)
    nll = -np.take_along_axis(logp, lab, axis=1)[:, 0]
    grad = np.exp(logp)
    np.put_along_axis(grad, lab, np.take_along_axis(grad, lab, axis=1) - 1.0, axis=1)
    if mask is not None:
        nll = nll * mask
        grad *= mask[:, None]
    return float(nll.sum()), grad


def mse(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements and its gradient."""
    d = pred - target
    return float((d * d).mean()), 2 * d / d.size


# -- data -----------------------------------------------------------------------------

@dataclass
class LabeledSequence:
    frames: list[Frame]
    labels: list[SegmentationMap]
    rois: list[Roi | None] = None

    def __post_init__(self):
        if len(self.frames) != len(self.labels):
            raise ValueError("frames and labels differ in length")
        if self.rois is None:
            self.rois = [foreground_bbox(s) for s in self.labels]

    @classmethod
    def from_rendered(cls, rendered) -> "LabeledSequence":
        return cls([r[0] for r in rendered], [r[1] for r in rendered], [r[2] for r in rendered])

    def __len__(self):
        return len(self.frames)


def split_indices(n: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle, then the last ``val_fraction`` of it is the validation set."""
    perm = np.random.default_rng([seed, 7]).permutation(n)
    n_val = int(round(n * val_fraction))
    if n_val >= n:
        n_val = n - 1
    return np.sort(perm[:n - n_val]), np.sort(perm[n - n_val:])


@dataclass
class TrainResult:
    net: LayerGraph
    curve: list[tuple[int, float, float | None]]
    best_epoch: int


def write_loss_curve(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, tr, va in curve:
            w.writerow([epoch, repr(float(tr)), "" if va is None else repr(float(va))])


def _pad_to(a: np.ndarray, multiple: int, value=0):
    h, w = a.shape[-2:]
    ph, pw = -h % multiple, -w % multiple
    if ph == 0 and pw == 0:
        return a
    pad = [(0, 0)] * (a.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(a, pad, constant_values=value)


# A segmentation sample is (image uint8 (H, W), labels (H, W), loss mask (H, W));
# H and W are multiples of the network's size multiple.

def _seg_groups(samples, idx):
    """Stack samples that share a shape, preserving first-seen shape order."""
    groups: dict[tuple, list] = {}
    for i in idx:
        groups.setdefault(samples[i][0].shape, []).append(samples[i])
    return [(np.stack([s[0] for s in g]), np.stack([s[1] for s in g]), np.stack([s[2] for s in g]))
            for g in groups.values()]


def _seg_batch_grads(net: LayerGraph, samples, idx):
    total = 0.0
    count = 0.0
    grads = None
    for px, lab, mask in _seg_groups(samples, idx):
        net.forward(frames_to_input(px))
        loss, g = softmax_cross_entropy(net.value(net.logits), lab, mask)
        pg = net.backward(g, start=net.logits)
        total += loss
        count += float(mask.sum())
        if grads is None:
            grads = pg
        else:
            for k in grads:
                grads[k] += pg[k]
    for k in grads:
        grads[k] /= max(count, 1.0)
    return total / max(count, 1.0), grads


def _seg_eval(net: LayerGraph, samples, idx, chunk=8) -> float:
    total = count = 0.0
    idx = list(idx)
    for s in range(0, len(idx), chunk):
        for px, lab, mask in _seg_groups(samples, idx[s:s + chunk]):
            net.forward(frames_to_input(px))
            loss, _ = softmax_cross_entropy(net.value(net.logits), lab, mask)
            total += loss
            count += float(mask.sum())
    return total / max(count, 1.0)


def _fit(net, samples, epochs, batch, lr, seed, val_fraction, grads_fn, eval_fn, name) -> TrainResult:
    if not samples:
        raise ValueError(f"{name}: no training samples")
    if val_fraction > 0 and len(samples) > 1:
        train_idx, val_idx = split_indices(len(samples), val_fraction, seed)
    else:
        train_idx, val_idx = np.arange(len(samples)), np.array([], dtype=int)
    state = AdamState(lr=lr)
    rng = np.random.default_rng([seed, 11])
    curve = []
    best, best_state, best_epoch = np.inf, net.state(), 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(train_idx)
        losses, weights = [], []
        for s in range(0, len(order), batch):
            b = order[s:s + batch]
            loss, grads = grads_fn(net, samples, b)
            adam_step(net.params, grads, state)
            losses.append(loss)
            weights.append(len(b))
        tr = float(np.average(losses, weights=weights))
        va = eval_fn(net, samples, val_idx) if len(val_idx) else None
        score = va if va is not None else tr
        if score < best:
            best, best_state, best_epoch = score, net.state(), epoch
        curve.append((epoch, tr, va))
        log.info("%s epoch %d train %.5f val %s", name, epoch, tr, "-" if va is None else f"{va:.5f}")
    net.load_state(best_state)
    return TrainResult(net, curve, best_epoch)


def segmentation_samples(dataset, stride: int = 1):
    samples = []
    for seq in dataset:
        for t in range(0, len(seq), stride):
            px = seq.frames[t].pixels
            lab = seq.labels[t].classes
            mask = np.ones(px.shape, dtype=np.float64)
            samples.append((_pad_to(px, SIZE_MULTIPLE), _pad_to(lab, SIZE_MULTIPLE),
                            _pad_to(mask, SIZE_MULTIPLE)))
    return samples


def train_segnet(net: LayerGraph, dataset, epochs: int = 250, batch: int = 4, lr: float = 1e-3,
                 seed: int = 0, val_fraction: float = 0.2, stride: int = 1) -> TrainResult:
    """Cross-entropy on full frames; keeps the weights with the best validation loss."""
    samples = segmentation_samples(dataset, stride)
    return _fit(net, samples, epochs, batch, lr, seed, val_fraction, _seg_batch_grads, _seg_eval, "segnet")


# -- ROI network -------------------------------------------------------------------------

def roi_inputs(prev_frame: Frame, frame: Frame, prev_labels: SegmentationMap,
               sigma: float, epsilon_div: float):
    """Downsampled event and edge maps fed to the ROI net."""
    ev = downsample_by_2(event_map(prev_frame, frame, sigma, epsilon_div))
    ed = downsample_by_2(seg_edge_map(prev_labels))
    return ev, ed


def roi_samples(dataset, sigma: float = 0.30, epsilon_div: float = 1.0, stride: int = 1):
    """(events_ds, edges_ds, prev_roi, roi) per frame with ground-truth ROIs on both frames.

    At a sequence start the frame serves as its own predecessor, so the
    event map is empty and the previous ROI is the frame's own.
    """
    out = []
    for seq in dataset:
        for t in range(0, len(seq), stride):
            p = max(t - 1, 0)
            if seq.rois[t] is None or seq.rois[p] is None:
                continue
            ev, ed = roi_inputs(seq.frames[p], seq.frames[t], seq.labels[p], sigma, epsilon_div)
            out.append((ev.bits, ed.bits, np.array(seq.rois[p].as_tuple()), np.array(seq.rois[t].as_tuple())))
    return out


def _roi_feeds(samples, idx):
    s = [samples[i] for i in idx]
    feeds = make_inputs(np.stack([a[0] for a in s]), np.stack([a[1] for a in s]), np.stack([a[2] for a in s]))
    return feeds, np.stack([a[3] for a in s])


def _roi_batch_grads(net, samples, idx):
    feeds, target = _roi_feeds(samples, idx)
    loss, g = mse(net.forward(feeds), target)
    return loss, net.backward(g)


def _roi_eval(net, samples, idx):
    feeds, target = _roi_feeds(samples, idx)
    return mse(net.forward(feeds), target)[0]


def train_roinet(net: LayerGraph, dataset, epochs: int = 100, batch: int = 8, lr: float = 1e-3,
                 seed: int = 0, val_fraction: float = 0.2, sigma: float = 0.30,
                 epsilon_div: float = 1.0, stride: int = 1) -> TrainResult:
    """MSE on the four normalized ROI coordinates."""
    samples = roi_samples(dataset, sigma, epsilon_div, stride)
    if samples and samples[0][0].shape != input_size(net):
        raise ValueError(f"ROI net expects {input_size(net)} maps, data gives {samples[0][0].shape}")
    return _fit(net, samples, epochs, batch, lr, seed, val_fraction, _roi_batch_grads, _roi_eval, "roinet")


# -- fine-tuning on predicted crops ------------------------------------------------------

def crop_sample(frame: Frame, labels: SegmentationMap, roi: Roi | None, multiple: int = SIZE_MULTIPLE):
    """Crop (or the full frame when ``roi`` is unusable), zero-padded to ``multiple``."""
    h, w = frame.shape
    rect = (0, 0, w, h)
    if roi is not None and roi_is_feasible(roi):
        r = roi_to_pixels(roi.clamped(), w, h)
        if rect_area(r) > 0:
            rect = r
    x0, y0, x1, y1 = rect
    px = frame.pixels[y0:y1, x0:x1]
    lab = labels.classes[y0:y1, x0:x1]
    mask = np.ones(px.shape, dtype=np.float64)
    return _pad_to(px, multiple), _pad_to(lab, multiple), _pad_to(mask, multiple), rect


def finetune_samples(roinet: LayerGraph, dataset, sigma=0.30, epsilon_div=1.0, stride: int = 1):
    samples = []
    for seq in dataset:
        for t in range(0, len(seq), stride):
            roi = None
            p = max(t - 1, 0)
            if seq.rois[p] is not None:
                ev, ed = roi_inputs(seq.frames[p], seq.frames[t], seq.labels[p], sigma, epsilon_div)
                feeds = make_inputs(ev.bits[None], ed.bits[None], np.array(seq.rois[p].as_tuple()))
                roi = Roi.from_array(roinet.forward(feeds)[0])
            px, lab, mask, _ = crop_sample(seq.frames[t], seq.labels[t], roi)
            samples.append((px, lab, mask))
    return samples


def finetune_segnet_on_rois(segnet: LayerGraph, roinet: LayerGraph, dataset, epochs: int = 100,
                            lr: float = 1e-4, batch: int = 4, seed: int = 0, val_fraction: float = 0.2,
                            sigma: float = 0.30, epsilon_div: float = 1.0, stride: int = 1) -> TrainResult:
    """Train the segmentation net on crops chosen by the frozen ROI net.

    A frame whose predicted ROI is unusable trains at full resolution, as
    the pipeline would process it.
    """
    samples = finetune_samples(roinet, dataset, sigma, epsilon_div, stride)
    return _fit(segnet, samples, epochs, batch, lr, seed, val_fraction, _seg_batch_grads, _seg_eval, "finetune")


def labels_onehot(labels: np.ndarray) -> np.ndarray:
    return np.moveaxis(np.eye(NUM_CLASSES)[labels], -1, 1)
