"""WAV ingestion: RIFF PCM decoding, polyphase resampling to 16 kHz, zero padding.

Everything downstream assumes mono float waveforms in [-1, 1] at 16 kHz.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.signal import resample_poly

from .errors import ClipTooLong, MalformedWav, UnsupportedEncoding

SAMPLE_RATE = 16000

# Category -> class mapping. Falls: 1, 3, 6, 8, 9; no-falls: 2, 4, 5.
FALL_CATEGORIES = frozenset({1, 3, 6, 8, 9})
NOFALL_CATEGORIES = frozenset({2, 4, 5})
ALL_CATEGORIES = tuple(sorted(FALL_CATEGORIES | NOFALL_CATEGORIES))

LABEL_FALL = "fall"
LABEL_NOFALL = "nofall"


def label_for_category(category_id: int) -> str:
    if category_id in FALL_CATEGORIES:
        return LABEL_FALL
    if category_id in NOFALL_CATEGORIES:
        return LABEL_NOFALL
    raise ValueError(f"unknown category id {category_id}")


@dataclass
class AudioClip:
    samples: np.ndarray  # float32 mono, 16 kHz
    sample_rate_hz: int = SAMPLE_RATE
    original_len: int = -1  # sample count before padding; -1 -> len(samples)
    category_id: Optional[int] = None
    label: Optional[str] = None
    source_id: str = ""
    augment_tag: Optional[str] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.original_len < 0:
            self.original_len = len(self.samples)
        if self.category_id is not None and self.label is None:
            self.label = label_for_category(self.category_id)

    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def with_samples(self, samples, original_len=None) -> "AudioClip":
        clip = replace(self, samples=np.asarray(samples, dtype=np.float32))
        clip.original_len = len(clip.samples) if original_len is None else original_len
        return clip


# ---------------------------------------------------------------------------
# resampling

_KAISER_BETA = 8.6
_TAPS_PER_PHASE = 64


def _design_lowpass(up: int, down: int) -> np.ndarray:
    """Windowed-sinc anti-alias filter for a rate change of up/down.

    64 taps per polyphase branch, Kaiser window. Gain `up` compensates the
    zero insertion of the upsampler.
    """
    m = max(up, down)
    half = (_TAPS_PER_PHASE * m) // 2
    n = np.arange(-half, half + 1)
    h = np.sinc(n / m) / m
    h *= np.kaiser(len(h), _KAISER_BETA)
    # unity DC gain; resample_poly compensates for the zero insertion itself
    return h / h.sum()


def resample(x: np.ndarray, sr_in: int, sr_out: int) -> np.ndarray:
    if sr_in == sr_out:
        return np.asarray(x, dtype=np.float32)
    g = math.gcd(sr_in, sr_out)
    up, down = sr_out // g, sr_in // g
    h = _design_lowpass(up, down)
    y = resample_poly(np.asarray(x, dtype=np.float64), up, down, window=h)
    return y.astype(np.float32)


def resampled_length(n: int, sr_in: int, sr_out: int) -> int:
    """Output length of resample() without doing the work."""
    if sr_in == sr_out:
        return n
    g = math.gcd(sr_in, sr_out)
    up, down = sr_out // g, sr_in // g
    return -(-(n * up) // down)


# ---------------------------------------------------------------------------
# RIFF PCM

_PCM_SCALE = {8: 128.0, 16: 32768.0, 24: 8388608.0}


def _read_chunks(raw: bytes):
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise MalformedWav("not a RIFF/WAVE file")
    pos = 12
    chunks = {}
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if cid in (b"fmt ", b"data") and len(body) < size:
            raise MalformedWav(f"truncated {cid.decode('ascii', 'replace')} chunk")
        chunks.setdefault(cid, body)
        pos += 8 + size + (size & 1)
    return chunks


def _parse_fmt(chunks):
    fmt = chunks.get(b"fmt ")
    if fmt is None or len(fmt) < 16:
        raise MalformedWav("missing fmt chunk")
    audio_format, n_channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format == 0xFFFE and len(fmt) >= 40:
        # WAVE_FORMAT_EXTENSIBLE: first two bytes of the SubFormat GUID
        (audio_format,) = struct.unpack_from("<H", fmt, 24)
    if audio_format != 1:
        raise UnsupportedEncoding(f"non-PCM format tag {audio_format}")
    if bits not in _PCM_SCALE:
        raise UnsupportedEncoding(f"unsupported bit depth {bits}")
    if n_channels < 1 or rate < 1:
        raise MalformedWav("bad channel count or sample rate")
    return n_channels, rate, bits


def _pcm_to_float(data: bytes, bits: int, n_channels: int) -> np.ndarray:
    bytes_per = bits // 8
    usable = len(data) - len(data) % (bytes_per * n_channels)
    data = data[:usable]
    if bits == 8:
        x = np.frombuffer(data, dtype=np.uint8).astype(np.float32) - 128.0
    elif bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(np.float32)
    else:  # 24-bit: widen to int32 then shift back down
        b = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3)
        x = (
            b[:, 0].astype(np.int32)
            | (b[:, 1].astype(np.int32) << 8)
            | (b[:, 2].astype(np.int8).astype(np.int32) << 16)
        ).astype(np.float32)
    x /= _PCM_SCALE[bits]
    if n_channels > 1:
        x = x.reshape(-1, n_channels).mean(axis=1)
    return x.astype(np.float32)


def wav_info(path) -> tuple[int, int, int]:
    """(n_frames, sample_rate, n_channels) from headers, without decoding."""
    with open(path, "rb") as f:
        raw = f.read()
    chunks = _read_chunks(raw)
    n_channels, rate, bits = _parse_fmt(chunks)
    data = chunks.get(b"data")
    if data is None:
        raise MalformedWav("missing data chunk")
    return len(data) // (bits // 8 * n_channels), rate, n_channels


def decode_wav(path, category_id=None, source_id=None) -> AudioClip:
    """Decode a PCM WAV to a mono 16 kHz clip in [-1, 1]. No padding applied."""
    with open(path, "rb") as f:
        raw = f.read()
    chunks = _read_chunks(raw)
    n_channels, rate, bits = _parse_fmt(chunks)
    data = chunks.get(b"data")
    if data is None:
        raise MalformedWav("missing data chunk")
    x = _pcm_to_float(data, bits, n_channels)
    x = resample(x, rate, SAMPLE_RATE)
    np.clip(x, -1.0, 1.0, out=x)
    return AudioClip(
        samples=x,
        category_id=category_id,
        source_id=source_id if source_id is not None else str(path),
    )


def encode_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE, bits: int = 16):
    """Write mono float samples in [-1, 1] as PCM WAV."""
    if bits != 16:
        raise UnsupportedEncoding("only 16-bit output supported")
    x = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    hdr = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(data),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        sample_rate,
        sample_rate * 2,
        2,
        16,
        b"data",
        len(data),
    )
    with open(path, "wb") as f:
        f.write(hdr)
        f.write(data)


def pad_to_length(clip: AudioClip, target_len: int) -> AudioClip:
    """Post-pad with zeros to target_len; original_len is preserved."""
    n = len(clip.samples)
    if n > target_len:
        raise ClipTooLong(f"clip has {n} samples > target {target_len}")
    if n == target_len:
        return clip
    padded = np.zeros(target_len, dtype=np.float32)
    padded[:n] = clip.samples
    return clip.with_samples(padded, original_len=clip.original_len)
