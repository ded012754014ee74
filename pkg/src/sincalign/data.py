"""Feature and label ingestion plus dataset-level preprocessing.

File formats
------------
Feature files are CSV with a single header line::

    # fs=<Hz> dims=<D> speaker=<id>

followed by one comma-separated frame per line (D values each). Label
files carry the header ``# fs=<Hz>`` followed by one value per line.
Values are written with shortest round-trip decimal formatting, so a
read/write cycle reproduces the file byte for byte.

Preprocessing covers frame stacking (concatenating k consecutive frames to
divide the frame rate by k), per-speaker z-normalization, and the
two-party interleaving that widens frames to 2D with the active speaker in
the first half and the partner in the second.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dsp import SampledSignal

__all__ = [
    "FeatureSequence",
    "Recording",
    "Dataset",
    "load_features",
    "save_features",
    "load_labels",
    "save_labels",
    "stack_frames",
    "znorm_per_speaker",
    "interleave_target",
]

PARTITIONS = ("train", "dev", "test")


@dataclass
class FeatureSequence:
    """T x D frame matrix with its frame rate and speaker id."""

    frames: np.ndarray
    fs: float
    speaker_id: str

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1 or self.frames.shape[1] < 1:
            raise ValueError("frames must be a non-empty T x D matrix")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("frames must be finite")
        if not self.fs > 0:
            raise ValueError(f"frame rate must be positive, got {self.fs}")


@dataclass
class Recording:
    """One feature sequence paired with its label trace."""

    features: FeatureSequence
    labels: SampledSignal
    speaker_id: str
    partition: str

    def __post_init__(self) -> None:
        if self.partition not in PARTITIONS:
            raise ValueError(f"partition must be one of {PARTITIONS}")

    def check_aligned(self) -> None:
        if self.features.fs != self.labels.fs:
            raise ValueError(
                f"feature rate {self.features.fs} != label rate {self.labels.fs}"
            )
        if self.features.frames.shape[0] != len(self.labels):
            raise ValueError("feature and label lengths differ")


@dataclass
class Dataset:
    recordings: list[Recording]
    task: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.recordings:
            raise ValueError("dataset must contain at least one recording")
        if any(not r.speaker_id for r in self.recordings):
            raise ValueError("every recording needs a speaker id")

    def partition(self, tag: str) -> list[Recording]:
        return [r for r in self.recordings if r.partition == tag]

    def speakers(self, tag: str | None = None) -> list[str]:
        recs = self.recordings if tag is None else self.partition(tag)
        return sorted({r.speaker_id for r in recs})


_FEATURE_HEADER = re.compile(r"#\s*fs=([0-9.eE+-]+)\s+dims=(\d+)\s+speaker=(\S+)\s*$")
_LABEL_HEADER = re.compile(r"#\s*fs=([0-9.eE+-]+)\s*$")


def _fmt(v: float) -> str:
    return repr(float(v))


def load_features(path) -> FeatureSequence:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    m = _FEATURE_HEADER.match(lines[0])
    if not m:
        raise ValueError(f"{path}: missing '# fs=... dims=... speaker=...' header")
    fs, dims, speaker = float(m.group(1)), int(m.group(2)), m.group(3)
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != dims:
            raise ValueError(f"{path}: line {i}: expected {dims} values, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as e:
            raise ValueError(f"{path}: line {i}: {e}") from None
    if not rows:
        raise ValueError(f"{path}: no frames after header")
    return FeatureSequence(np.asarray(rows), fs, speaker)


def save_features(f: FeatureSequence, path) -> None:
    path = Path(path)
    fs = _fmt(f.fs) if f.fs != int(f.fs) else str(int(f.fs))
    lines = [f"# fs={fs} dims={f.frames.shape[1]} speaker={f.speaker_id}"]
    for row in f.frames:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def load_labels(path) -> SampledSignal:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    m = _LABEL_HEADER.match(lines[0])
    if not m:
        raise ValueError(f"{path}: missing '# fs=...' header")
    vals = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            vals.append(float(line))
        except ValueError as e:
            raise ValueError(f"{path}: line {i}: {e}") from None
    if not vals:
        raise ValueError(f"{path}: no values after header")
    return SampledSignal(np.asarray(vals), float(m.group(1)))


def save_labels(sig: SampledSignal, path) -> None:
    path = Path(path)
    fs = _fmt(sig.fs) if sig.fs != int(sig.fs) else str(int(sig.fs))
    lines = [f"# fs={fs}"] + [_fmt(v) for v in sig.values]
    path.write_text("\n".join(lines) + "\n")


def stack_frames(f: FeatureSequence, k: int) -> FeatureSequence:
    """Concatenate every k consecutive frames into one wider frame.

    Output is floor(T/k) x (k*D) at rate fs/k; up to k-1 trailing frames
    that do not fill a group are dropped rather than padded.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    t, d = f.frames.shape
    t_out = t // k
    if t_out < 1:
        raise ValueError(f"cannot stack {t} frames in groups of {k}")
    stacked = f.frames[: t_out * k].reshape(t_out, k * d)
    return FeatureSequence(stacked, f.fs / k, f.speaker_id)


def znorm_per_speaker(dataset: Dataset) -> Dataset:
    """Zero-mean, unit-variance features per speaker and dimension.

    Statistics pool all recordings of a speaker; population std with a
    1e-8 floor, so constant dimensions map to zero. Returns a new dataset.
    """
    by_speaker: dict[str, list[int]] = {}
    for i, r in enumerate(dataset.recordings):
        by_speaker.setdefault(r.features.speaker_id, []).append(i)

    new_recs = list(dataset.recordings)
    for speaker, idxs in sorted(by_speaker.items()):
        pooled = np.concatenate([dataset.recordings[i].features.frames for i in idxs])
        if pooled.shape[0] < 2:
            raise ValueError(f"speaker {speaker} has fewer than 2 frames")
        mu = pooled.mean(axis=0)
        sd = np.maximum(pooled.std(axis=0), 1e-8)
        for i in idxs:
            r = dataset.recordings[i]
            norm = (r.features.frames - mu) / sd
            new_recs[i] = replace(
                r, features=FeatureSequence(norm, r.features.fs, r.features.speaker_id)
            )
    return Dataset(new_recs, dataset.task, dict(dataset.metadata))


def interleave_target(
    f_target: FeatureSequence, f_partner: FeatureSequence, active_mask
) -> FeatureSequence:
    """Widen frames to 2D: target frames fill the first half where the mask
    is true, partner frames fill the second half elsewhere."""
    a, b = f_target.frames, f_partner.frames
    mask = np.asarray(active_mask, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if mask.shape != (a.shape[0],):
        raise ValueError("mask length must equal the frame count")
    t, d = a.shape
    out = np.zeros((t, 2 * d))
    out[mask, :d] = a[mask]
    out[~mask, d:] = b[~mask]
    return FeatureSequence(out, f_target.fs, f_target.speaker_id)
