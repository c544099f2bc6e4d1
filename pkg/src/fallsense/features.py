"""Model input features: segmented raw audio, frame differences, log mel.

Every feature matrix carries a per-frame validity mask derived from the
source clip's pre-padding length, so the classifier can ignore frames that
are pure zero padding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .audio_io import SAMPLE_RATE, AudioClip
from .errors import ClipMismatch, InvalidFftSize, SegmentTooLong, TooFewFrames

KIND_SEGMENTED_RAW = "segmented_raw"
KIND_DIFF = "diff"
KIND_LOG_MEL = "log_mel"
KIND_COMBINED = "combined"

LOG_FLOOR = 1e-10


@dataclass
class FeatureMatrix:
    data: np.ndarray   # (frames, dims) float32
    mask: np.ndarray   # (frames,) bool, True = valid
    kind: str
    meta: dict

    @property
    def n_frames(self):
        return self.data.shape[0]

    @property
    def n_dims(self):
        return self.data.shape[1]


def segment_raw(clip: AudioClip, t_seg_ms: int) -> FeatureMatrix:
    """Stack consecutive t_seg windows as rows; trailing remainder is dropped."""
    d = t_seg_ms * SAMPLE_RATE // 1000
    if d < 1:
        raise SegmentTooLong(f"segment of {t_seg_ms} ms is empty")
    n_samples = len(clip.samples)
    if d > n_samples:
        raise SegmentTooLong(f"segment {d} longer than clip {n_samples}")
    n = n_samples // d
    data = clip.samples[: n * d].reshape(n, d).astype(np.float32)
    frame_starts = d * np.arange(n)
    mask = frame_starts < clip.original_len
    return FeatureMatrix(data, mask, KIND_SEGMENTED_RAW, {"t_seg_ms": t_seg_ms})


def diff_features(seg: FeatureMatrix) -> FeatureMatrix:
    """Row-wise differences of consecutive segments: (N-1, D)."""
    if seg.kind != KIND_SEGMENTED_RAW:
        raise ClipMismatch(f"diff expects segmented raw input, got {seg.kind}")
    if seg.n_frames < 2:
        raise TooFewFrames("need at least 2 frames to difference")
    data = seg.data[1:] - seg.data[:-1]
    mask = seg.mask[1:] & seg.mask[:-1]
    return FeatureMatrix(data, mask, KIND_DIFF, dict(seg.meta))


def mel_filterbank(n_fft: int, n_mels: int, f_max: float = SAMPLE_RATE / 2) -> np.ndarray:
    """Triangular filters on the HTK mel scale over [0, f_max]; (n_bins, n_mels)."""
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    n_bins = n_fft // 2 + 1
    freqs = np.linspace(0, SAMPLE_RATE / 2, n_bins)
    mel_pts = from_mel(np.linspace(0.0, float(to_mel(f_max)), n_mels + 2))
    fb = np.zeros((n_bins, n_mels), dtype=np.float64)
    for m in range(n_mels):
        lo, mid, hi = mel_pts[m], mel_pts[m + 1], mel_pts[m + 2]
        up = (freqs - lo) / max(mid - lo, 1e-9)
        down = (hi - freqs) / max(hi - mid, 1e-9)
        fb[:, m] = np.maximum(0.0, np.minimum(up, down))
    return fb


_FB_CACHE = {}


def _cached_filterbank(n_fft, n_mels):
    key = (n_fft, n_mels)
    if key not in _FB_CACHE:
        _FB_CACHE[key] = mel_filterbank(n_fft, n_mels)
    return _FB_CACHE[key]


def _stft_power(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Centered (reflect-padded) Hann STFT power; T = 1 + len(x)//hop frames."""
    x = np.asarray(x, dtype=np.float64)
    half = n_fft // 2
    pad = np.pad(x, (half, half), mode="reflect")
    n_frames = 1 + len(x) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = pad[idx] * np.hanning(n_fft)
    return np.abs(np.fft.rfft(frames, axis=1)) ** 2


def log_mel(clip: AudioClip, n_fft: int = 2048, hop: int = 1600, n_mels: int = 64) -> FeatureMatrix:
    """Log mel spectrogram, (T, n_mels) with T = 1 + len//hop."""
    if n_fft < 2 or n_fft > 65536 or (n_fft & (n_fft - 1)) != 0:
        raise InvalidFftSize(f"n_fft {n_fft} must be a power of two <= 65536")
    if hop < 1 or n_mels < 1:
        raise InvalidFftSize("hop and n_mels must be positive")
    power = _stft_power(clip.samples, n_fft, hop)
    mel = power @ _cached_filterbank(n_fft, n_mels)
    data = np.log(np.maximum(mel, LOG_FLOOR)).astype(np.float32)
    # frame t's window spans [t*hop - n_fft/2, t*hop + n_fft/2)
    starts = hop * np.arange(len(data)) - n_fft // 2
    mask = (starts < clip.original_len) & (starts + n_fft > 0) & (clip.original_len > 0)
    return FeatureMatrix(data, mask, KIND_LOG_MEL, {"n_fft": n_fft, "hop": hop, "n_mels": n_mels})


def combine(logmel: FeatureMatrix, seg: FeatureMatrix) -> FeatureMatrix:
    """Concatenate log mel and segmented raw along the feature axis."""
    if logmel.kind != KIND_LOG_MEL or seg.kind != KIND_SEGMENTED_RAW:
        raise ClipMismatch(f"cannot combine {logmel.kind} with {seg.kind}")
    if abs(logmel.n_frames - seg.n_frames) > 1:
        raise ClipMismatch(
            f"frame counts differ by more than one: {logmel.n_frames} vs {seg.n_frames}"
        )
    n = min(logmel.n_frames, seg.n_frames)
    data = np.concatenate([logmel.data[:n], seg.data[:n]], axis=1)
    mask = logmel.mask[:n] & seg.mask[:n]
    meta = {**logmel.meta, **seg.meta}
    return FeatureMatrix(data, mask, KIND_COMBINED, meta)


def extract(clip: AudioClip, kind: str, t_seg_ms: int = 100, n_fft: int = 2048,
            hop: int = 1600, n_mels: int = 64) -> FeatureMatrix:
    """One-stop extraction used by training, evaluation, and the sentinel."""
    if kind == KIND_SEGMENTED_RAW:
        return segment_raw(clip, t_seg_ms)
    if kind == KIND_DIFF:
        return diff_features(segment_raw(clip, t_seg_ms))
    if kind == KIND_LOG_MEL:
        return log_mel(clip, n_fft, hop, n_mels)
    if kind == KIND_COMBINED:
        return combine(log_mel(clip, n_fft, hop, n_mels), segment_raw(clip, t_seg_ms))
    raise ValueError(f"unknown feature kind {kind}")


# ---------------------------------------------------------------------------
# flat binary cache: 32-byte header, row-major float32 payload, mask bytes

_CACHE_MAGIC = b"FSFC"
_KIND_CODES = {KIND_SEGMENTED_RAW: 1, KIND_DIFF: 2, KIND_LOG_MEL: 3, KIND_COMBINED: 4}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


def save_cache(fm: FeatureMatrix, path):
    n, d = fm.data.shape
    mask_offset = 32 + 4 * n * d
    header = struct.pack(
        "<4sBxxxIIIxxxxxxxxxxxx", _CACHE_MAGIC, _KIND_CODES[fm.kind], n, d, mask_offset
    )
    assert len(header) == 32
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(fm.data, dtype="<f4").tobytes())
        f.write(np.packbits(fm.mask).tobytes())


def load_cache(path) -> FeatureMatrix:
    with open(path, "rb") as f:
        header = f.read(32)
        if len(header) < 32 or header[:4] != _CACHE_MAGIC:
            raise ValueError(f"not a feature cache file: {path}")
        kind_code, n, d, mask_offset = struct.unpack("<4xBxxxIII12x", header)
        data = np.frombuffer(f.read(4 * n * d), dtype="<f4").reshape(n, d).copy()
        f.seek(mask_offset)
        mask = np.unpackbits(np.frombuffer(f.read(), dtype=np.uint8), count=n).astype(bool)
    return FeatureMatrix(data, mask, _CODE_KINDS[kind_code], {})
