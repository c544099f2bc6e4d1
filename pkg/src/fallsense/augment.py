"""Audio augmentation catalog and corpus expansion.

Transforms come in two scopes: fall-safe ones that may be applied to any
clip, and destructive ones (time shift, reversal, masking, heavy filtering,
...) restricted to no-fall clips because they can remove or mangle the fall
event itself. Every transform is deterministic given (plan seed, source clip
id, slot tag), so expansion order and parallelism cannot change the output.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, sosfilt, lfilter

from . import audio_io
from .audio_io import SAMPLE_RATE, AudioClip
from .errors import ParamOutOfRange, ScopeViolation

SCOPE_ANY = "any"
SCOPE_NOFALL_ONLY = "nofall_only"


@dataclass(frozen=True)
class AugmentationSpec:
    name: str                 # transform key, e.g. "pitch_shift"
    params: dict = field(default_factory=dict)
    scope: str = SCOPE_ANY
    seed: int = 0
    tag: str = ""             # unique slot id within a plan

    def slot(self) -> str:
        return self.tag or self.name


def _rng_for(spec: AugmentationSpec, clip: AudioClip):
    key = f"{spec.seed}|{clip.source_id}|{spec.slot()}".encode()
    digest = hashlib.sha256(key).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _require(cond, msg):
    if not cond:
        raise ParamOutOfRange(msg)


# ---------------------------------------------------------------------------
# small DSP helpers

def _stft(x, n_fft, hop):
    pad = np.concatenate([np.zeros(n_fft // 2), x, np.zeros(n_fft)])
    n_frames = 1 + (len(pad) - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return np.fft.rfft(pad[idx] * np.hanning(n_fft), axis=1)


def _istft(frames, n_fft, hop, length):
    win = np.hanning(n_fft)
    x = np.zeros(hop * (len(frames) - 1) + n_fft)
    norm = np.zeros_like(x)
    chunks = np.fft.irfft(frames, n=n_fft, axis=1)
    for i in range(len(frames)):
        x[i * hop : i * hop + n_fft] += chunks[i] * win
        norm[i * hop : i * hop + n_fft] += win**2
    x /= np.maximum(norm, 1e-8)
    x = x[n_fft // 2 :]
    out = np.zeros(length)
    m = min(length, len(x))
    out[:m] = x[:m]
    return out


def _phase_vocoder(x, rate, n_fft=2048, hop=512):
    """Time-stretch by `rate` (>1 = faster/shorter) with phase accumulation."""
    spec = _stft(np.asarray(x, dtype=np.float64), n_fft, hop)
    steps = np.arange(0, len(spec) - 1, rate)
    bin_freqs = np.linspace(0, np.pi * hop, spec.shape[1])
    out = np.zeros((len(steps), spec.shape[1]), dtype=complex)
    phase = np.angle(spec[0])
    for i, s in enumerate(steps):
        j = int(s)
        frac = s - j
        lo, hi = spec[j], spec[min(j + 1, len(spec) - 1)]
        mag = (1 - frac) * np.abs(lo) + frac * np.abs(hi)
        out[i] = mag * np.exp(1j * phase)
        dphi = np.angle(hi) - np.angle(lo) - bin_freqs
        dphi -= 2 * np.pi * np.round(dphi / (2 * np.pi))
        phase = phase + bin_freqs + dphi
    return _istft(out, n_fft, hop, int(round(len(x) / rate)))


def _rbj_biquad(kind, f0, gain_db=0.0, q=0.707):
    """RBJ cookbook peaking / shelf biquad coefficients."""
    a = 10 ** (gain_db / 40.0)
    w0 = 2 * np.pi * f0 / SAMPLE_RATE
    cw, sw = np.cos(w0), np.sin(w0)
    alpha = sw / (2 * q)
    if kind == "peaking":
        b = [1 + alpha * a, -2 * cw, 1 - alpha * a]
        den = [1 + alpha / a, -2 * cw, 1 - alpha / a]
    elif kind == "lowshelf":
        two_sqrt_a_alpha = 2 * np.sqrt(a) * alpha
        b = [
            a * ((a + 1) - (a - 1) * cw + two_sqrt_a_alpha),
            2 * a * ((a - 1) - (a + 1) * cw),
            a * ((a + 1) - (a - 1) * cw - two_sqrt_a_alpha),
        ]
        den = [
            (a + 1) + (a - 1) * cw + two_sqrt_a_alpha,
            -2 * ((a - 1) + (a + 1) * cw),
            (a + 1) + (a - 1) * cw - two_sqrt_a_alpha,
        ]
    elif kind == "highshelf":
        two_sqrt_a_alpha = 2 * np.sqrt(a) * alpha
        b = [
            a * ((a + 1) + (a - 1) * cw + two_sqrt_a_alpha),
            -2 * a * ((a - 1) + (a + 1) * cw),
            a * ((a + 1) + (a - 1) * cw - two_sqrt_a_alpha),
        ]
        den = [
            (a + 1) - (a - 1) * cw + two_sqrt_a_alpha,
            2 * ((a - 1) - (a + 1) * cw),
            (a + 1) - (a - 1) * cw - two_sqrt_a_alpha,
        ]
    else:
        raise ValueError(kind)
    b = np.array(b) / den[0]
    den = np.array(den) / den[0]
    return b, den


def _butter_sos(kind, cutoff, order=4):
    return butter(order, cutoff, btype=kind, fs=SAMPLE_RATE, output="sos")


# ---------------------------------------------------------------------------
# atomic transforms: (samples, params, rng) -> samples

def _t_gaussian_noise(x, p, rng):
    snr = p.get("snr_db", 20.0)
    _require(-10.0 <= snr <= 60.0, f"snr_db {snr}")
    sig_pow = np.mean(x**2) + 1e-12
    noise_std = np.sqrt(sig_pow / 10 ** (snr / 10.0))
    return x + noise_std * rng.standard_normal(len(x))


def _t_gain(x, p, rng):
    db = p.get("db", 0.0)
    _require(-30.0 <= db <= 30.0, f"gain db {db}")
    return x * 10 ** (db / 20.0)


def _t_gain_transition(x, p, rng):
    d0, d1 = p.get("start_db", -6.0), p.get("end_db", 6.0)
    _require(max(abs(d0), abs(d1)) <= 30.0, "gain transition out of range")
    return x * 10 ** (np.linspace(d0, d1, len(x)) / 20.0)


def _t_loudness_normalization(x, p, rng):
    target = p.get("target_dbfs", -20.0)
    _require(-60.0 <= target <= 0.0, f"target_dbfs {target}")
    rms = np.sqrt(np.mean(x**2)) + 1e-12
    return x * (10 ** (target / 20.0) / rms)


def _t_pitch_shift(x, p, rng):
    semis = p.get("semitones", 2.0)
    _require(-12.0 <= semis <= 12.0, f"semitones {semis}")
    if semis == 0:
        return x.copy()
    f = 2 ** (semis / 12.0)
    stretched = _phase_vocoder(x, 1.0 / f)  # longer for pitch-up
    y = audio_io.resample(stretched, int(round(SAMPLE_RATE * f)), SAMPLE_RATE)
    out = np.zeros(len(x))
    m = min(len(x), len(y))
    out[:m] = y[:m]
    return out


def _t_resample(x, p, rng):
    rate = int(p.get("rate", 8000))
    _require(2000 <= rate <= 48000, f"rate {rate}")
    return audio_io.resample(audio_io.resample(x, SAMPLE_RATE, rate), rate, SAMPLE_RATE).astype(np.float64)


def _t_time_stretch(x, p, rng):
    rate = p.get("rate", 1.1)
    _require(0.5 <= rate <= 2.0, f"stretch rate {rate}")
    return _phase_vocoder(x, rate)


def _t_time_shift(x, p, rng):
    frac = p.get("max_fraction", 0.25)
    _require(0.0 < frac <= 0.5, f"shift fraction {frac}")
    shift = int(rng.uniform(-frac, frac) * len(x))
    out = np.zeros_like(x)
    if shift >= 0:
        out[shift:] = x[: len(x) - shift]
    else:
        out[:shift] = x[-shift:]
    return out


def _t_high_pass(x, p, rng):
    return sosfilt(_butter_sos("high", p.get("cutoff_hz", 400.0)), x)


def _t_low_pass(x, p, rng):
    return sosfilt(_butter_sos("low", p.get("cutoff_hz", 4000.0)), x)


def _t_band_pass(x, p, rng):
    lo, hi = p.get("low_hz", 300.0), p.get("high_hz", 4000.0)
    _require(0 < lo < hi < SAMPLE_RATE / 2, "band edges")
    return sosfilt(butter(4, [lo, hi], btype="band", fs=SAMPLE_RATE, output="sos"), x)


def _t_band_stop(x, p, rng):
    lo, hi = p.get("low_hz", 800.0), p.get("high_hz", 2000.0)
    _require(0 < lo < hi < SAMPLE_RATE / 2, "band edges")
    return sosfilt(butter(4, [lo, hi], btype="bandstop", fs=SAMPLE_RATE, output="sos"), x)


def _t_peaking(x, p, rng):
    b, a = _rbj_biquad("peaking", p.get("center_hz", 1000.0), p.get("gain_db", 6.0), p.get("q", 1.0))
    return lfilter(b, a, x)


def _t_low_shelf(x, p, rng):
    b, a = _rbj_biquad("lowshelf", p.get("cutoff_hz", 300.0), p.get("gain_db", 6.0))
    return lfilter(b, a, x)


def _t_high_shelf(x, p, rng):
    b, a = _rbj_biquad("highshelf", p.get("cutoff_hz", 3000.0), p.get("gain_db", 6.0))
    return lfilter(b, a, x)


def _t_gaussian_snr(x, p, rng):
    lo, hi = p.get("min_snr_db", 10.0), p.get("max_snr_db", 30.0)
    _require(lo <= hi, "snr range")
    return _t_gaussian_noise(x, {"snr_db": float(rng.uniform(lo, hi))}, rng)


def _t_reverse(x, p, rng):
    return x[::-1].copy()


def _t_clipping_distortion(x, p, rng):
    pct = p.get("percentile", 10.0)
    _require(0.0 < pct < 50.0, f"percentile {pct}")
    thresh = np.percentile(np.abs(x), 100.0 - pct)
    return np.clip(x, -thresh, thresh)


def _t_polarity_inversion(x, p, rng):
    return -x


def _t_tanh_distortion(x, p, rng):
    drive = p.get("drive", 4.0)
    _require(0.1 <= drive <= 20.0, f"drive {drive}")
    return np.tanh(drive * x) / np.tanh(drive)


def _t_time_mask(x, p, rng):
    frac = p.get("max_fraction", 0.2)
    _require(0.0 < frac <= 0.5, f"mask fraction {frac}")
    span = int(rng.uniform(0.02, frac) * len(x))
    start = int(rng.uniform(0, len(x) - span))
    out = x.copy()
    out[start : start + span] = 0.0
    return out


def _t_peak_normalize(x, p, rng):
    peak = np.max(np.abs(x))
    return x / peak if peak > 0 else x.copy()


def _t_mp3_compression(x, p, rng):
    """Codec-free quality degradation: bit-crush plus a low-pass."""
    bits = int(p.get("bits", 8))
    _require(4 <= bits <= 14, f"bits {bits}")
    cutoff = p.get("cutoff_hz", 5000.0)
    levels = float(1 << (bits - 1))
    crushed = np.round(x * levels) / levels
    return sosfilt(_butter_sos("low", cutoff), crushed)


_EQ_BANDS = (80.0, 200.0, 500.0, 1000.0, 2000.0, 4000.0, 7000.0)


def _t_seven_band_eq(x, p, rng):
    max_gain = p.get("max_gain_db", 8.0)
    _require(0.0 < max_gain <= 15.0, f"max_gain_db {max_gain}")
    y = x
    for f0 in _EQ_BANDS:
        b, a = _rbj_biquad("peaking", f0, float(rng.uniform(-max_gain, max_gain)), q=1.0)
        y = lfilter(b, a, y)
    return y


_FALL_SAFE = {
    "gaussian_noise": _t_gaussian_noise,
    "gain": _t_gain,
    "gain_transition": _t_gain_transition,
    "loudness_normalization": _t_loudness_normalization,
    "pitch_shift": _t_pitch_shift,
    "resample": _t_resample,
    "time_stretch": _t_time_stretch,
}

_NOFALL_ONLY = {
    "time_shift": _t_time_shift,
    "high_pass": _t_high_pass,
    "low_pass": _t_low_pass,
    "band_pass": _t_band_pass,
    "band_stop": _t_band_stop,
    "peaking": _t_peaking,
    "low_shelf": _t_low_shelf,
    "high_shelf": _t_high_shelf,
    "gaussian_snr": _t_gaussian_snr,
    "reverse": _t_reverse,
    "clipping_distortion": _t_clipping_distortion,
    "polarity_inversion": _t_polarity_inversion,
    "tanh_distortion": _t_tanh_distortion,
    "time_mask": _t_time_mask,
    "peak_normalize": _t_peak_normalize,
    "mp3_compression": _t_mp3_compression,
    "seven_band_eq": _t_seven_band_eq,
}

TRANSFORMS = {**_FALL_SAFE, **_NOFALL_ONLY}

# parameter ranges composites draw from
_COMPOSITE_RANGES = {
    "gaussian_noise": lambda rng: {"snr_db": float(rng.uniform(10, 35))},
    "gain": lambda rng: {"db": float(rng.uniform(-8, 8))},
    "gain_transition": lambda rng: {
        "start_db": float(rng.uniform(-8, 0)),
        "end_db": float(rng.uniform(0, 8)),
    },
    "loudness_normalization": lambda rng: {"target_dbfs": float(rng.uniform(-26, -14))},
    "pitch_shift": lambda rng: {"semitones": float(rng.uniform(-2, 2))},
    "resample": lambda rng: {"rate": int(rng.choice([4000, 8000, 11025, 22050]))},
    "time_stretch": lambda rng: {"rate": float(rng.uniform(0.8, 1.25))},
    "time_shift": lambda rng: {"max_fraction": float(rng.uniform(0.1, 0.4))},
    "high_pass": lambda rng: {"cutoff_hz": float(rng.uniform(100, 800))},
    "low_pass": lambda rng: {"cutoff_hz": float(rng.uniform(2000, 7000))},
    "band_pass": lambda rng: {"low_hz": float(rng.uniform(100, 500)), "high_hz": float(rng.uniform(2000, 6000))},
    "band_stop": lambda rng: {"low_hz": float(rng.uniform(400, 1000)), "high_hz": float(rng.uniform(1500, 3000))},
    "peaking": lambda rng: {"center_hz": float(rng.uniform(200, 4000)), "gain_db": float(rng.uniform(-9, 9))},
    "low_shelf": lambda rng: {"cutoff_hz": float(rng.uniform(100, 500)), "gain_db": float(rng.uniform(-9, 9))},
    "high_shelf": lambda rng: {"cutoff_hz": float(rng.uniform(2000, 6000)), "gain_db": float(rng.uniform(-9, 9))},
    "gaussian_snr": lambda rng: {"min_snr_db": 10.0, "max_snr_db": 30.0},
    "reverse": lambda rng: {},
    "clipping_distortion": lambda rng: {"percentile": float(rng.uniform(2, 25))},
    "polarity_inversion": lambda rng: {},
    "tanh_distortion": lambda rng: {"drive": float(rng.uniform(1, 8))},
    "time_mask": lambda rng: {"max_fraction": float(rng.uniform(0.05, 0.3))},
    "peak_normalize": lambda rng: {},
    "mp3_compression": lambda rng: {"bits": int(rng.integers(6, 12)), "cutoff_hz": float(rng.uniform(3500, 6500))},
    "seven_band_eq": lambda rng: {"max_gain_db": float(rng.uniform(3, 10))},
}

_LENGTH_CHANGING = {"time_stretch", "resample"}


def apply(spec: AugmentationSpec, clip: AudioClip) -> AudioClip:
    """Apply one augmentation slot to a clip; label and category are preserved."""
    if spec.scope == SCOPE_NOFALL_ONLY and clip.label == audio_io.LABEL_FALL:
        raise ScopeViolation(f"{spec.slot()} is no-fall-only but clip is a fall")
    rng = _rng_for(spec, clip)
    x = clip.samples.astype(np.float64)
    if spec.name == "composite":
        x = _apply_composite(x, spec, rng)
    else:
        fn = TRANSFORMS.get(spec.name)
        if fn is None:
            raise ParamOutOfRange(f"unknown transform {spec.name}")
        x = fn(x, spec.params, rng)
    x = np.clip(x, -1.0, 1.0)
    out = clip.with_samples(x.astype(np.float32))
    out.augment_tag = f"{spec.slot()}-s{spec.seed}"
    return out


def _apply_composite(x, spec: AugmentationSpec, rng):
    steps = spec.params.get("steps")
    if steps:  # explicit ordered pipeline, e.g. the documented composite 1
        for name in steps:
            x = TRANSFORMS[name](x, _COMPOSITE_RANGES[name](rng), rng)
        return x
    pool = sorted(_FALL_SAFE if spec.scope == SCOPE_ANY else TRANSFORMS)
    n_steps = int(rng.integers(2, 5))
    for name in rng.choice(pool, size=n_steps, replace=False):
        x = TRANSFORMS[name](x, _COMPOSITE_RANGES[name](rng), rng)
    return x


# ---------------------------------------------------------------------------
# default plans

def default_fall_plan(seed: int = 0) -> list:
    """14 fall-safe slots: the unstarred catalog with parameter variants."""
    s = lambda name, tag, **params: AugmentationSpec(name, params, SCOPE_ANY, seed, tag)
    return [
        s("gaussian_noise", "noise_snr25", snr_db=25.0),
        s("gaussian_noise", "noise_snr15", snr_db=15.0),
        s("gain", "gain_up", db=4.0),
        s("gain", "gain_down", db=-4.0),
        s("gain_transition", "gain_ramp", start_db=-6.0, end_db=3.0),
        s("loudness_normalization", "loudnorm", target_dbfs=-20.0),
        s("pitch_shift", "pitch_up1", semitones=1.0),
        s("pitch_shift", "pitch_down1", semitones=-1.0),
        s("pitch_shift", "pitch_up2", semitones=2.0),
        s("resample", "resample8k", rate=8000),
        s("time_stretch", "stretch_fast", rate=1.1),
        s("time_stretch", "stretch_slow", rate=0.9),
        s("composite", "augment1", steps=["gain_transition", "gaussian_noise", "pitch_shift"]),
        s("composite", "augment2"),
    ]


def default_nofall_plan(seed: int = 0) -> list:
    """100 slots: the fall-safe plan plus the starred catalog and composites."""
    plan = [
        AugmentationSpec(sp.name, sp.params, SCOPE_NOFALL_ONLY, seed, sp.tag)
        for sp in default_fall_plan(seed)
    ]
    s = lambda name, tag, **params: AugmentationSpec(name, params, SCOPE_NOFALL_ONLY, seed, tag)
    plan += [
        s("time_shift", "shift_small", max_fraction=0.15),
        s("time_shift", "shift_large", max_fraction=0.4),
        s("high_pass", "hp400", cutoff_hz=400.0),
        s("low_pass", "lp4k", cutoff_hz=4000.0),
        s("band_pass", "bp", low_hz=300.0, high_hz=4000.0),
        s("band_stop", "bs", low_hz=800.0, high_hz=2000.0),
        s("peaking", "peak1k", center_hz=1000.0, gain_db=6.0),
        s("low_shelf", "lshelf", cutoff_hz=300.0, gain_db=6.0),
        s("high_shelf", "hshelf", cutoff_hz=3000.0, gain_db=-6.0),
        s("gaussian_snr", "gsnr_a", min_snr_db=10.0, max_snr_db=20.0),
        s("gaussian_snr", "gsnr_b", min_snr_db=20.0, max_snr_db=35.0),
        s("reverse", "reverse"),
        s("clipping_distortion", "clip_soft", percentile=5.0),
        s("clipping_distortion", "clip_hard", percentile=20.0),
        s("polarity_inversion", "polarity"),
        s("tanh_distortion", "tanh_soft", drive=2.0),
        s("tanh_distortion", "tanh_hard", drive=8.0),
        s("time_mask", "mask_short", max_fraction=0.1),
        s("time_mask", "mask_long", max_fraction=0.3),
        s("peak_normalize", "peaknorm"),
        s("mp3_compression", "mp3_lo", bits=6, cutoff_hz=4000.0),
        s("mp3_compression", "mp3_hi", bits=10, cutoff_hz=6000.0),
        s("seven_band_eq", "eq_a", max_gain_db=6.0),
        s("seven_band_eq", "eq_b", max_gain_db=10.0),
        s("gain", "gain_up8", db=8.0),
        s("gain", "gain_down8", db=-8.0),
    ]
    # remaining slots: seeded random pipelines (composites 3-12 and 16-60)
    for i in list(range(3, 13)) + list(range(16, 61)):
        plan.append(s("composite", f"augment{i}"))
    # top up with extra parameter variants to reach exactly 100
    extras = [
        s("gaussian_noise", "noise_snr30", snr_db=30.0),
        s("pitch_shift", "pitch_down2", semitones=-2.0),
        s("time_stretch", "stretch_fast125", rate=1.25),
        s("time_stretch", "stretch_slow08", rate=0.8),
        s("high_pass", "hp150", cutoff_hz=150.0),
        s("low_pass", "lp6k", cutoff_hz=6000.0),
    ]
    plan += extras[: 100 - len(plan)]
    assert len(plan) == 100
    return plan


# ---------------------------------------------------------------------------
# plan file io

def write_plan(specs, path):
    with open(path, "w") as f:
        f.write("#augplan\tv1\n")
        for sp in specs:
            params = ",".join(
                f"{k}={';'.join(v) if isinstance(v, list) else v}" for k, v in sorted(sp.params.items())
            )
            f.write(f"{sp.slot()}\t{sp.name}\t{sp.scope}\t{sp.seed}\t{params}\n")


def _parse_value(v: str):
    if ";" in v:
        return v.split(";")
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def read_plan(path) -> list:
    specs = []
    with open(path) as f:
        header = f.readline()
        if not header.startswith("#augplan\tv1"):
            raise ValueError(f"not a plan file: {path}")
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            tag, name, scope, seed, params = line.split("\t")
            pdict = {}
            if params:
                for kv in params.split(","):
                    k, v = kv.split("=", 1)
                    pdict[k] = _parse_value(v)
            specs.append(AugmentationSpec(name, pdict, scope, int(seed), tag))
    return specs


# ---------------------------------------------------------------------------
# corpus expansion

def expand_corpus(manifest, corpus_dir, fall_plan, nofall_plan, out_dir):
    """Apply every plan slot to every clip; originals are copied through.

    Augmented entries inherit the split of their source clip, so a manifest
    produced here is leakage-free. Returns the expanded manifest.
    """
    from . import manifest as mf

    if not fall_plan or not nofall_plan:
        raise ParamOutOfRange("augmentation plans must be non-empty")
    for sp in fall_plan:
        if sp.scope != SCOPE_ANY:
            raise ScopeViolation(f"fall plan slot {sp.slot()} is not fall-safe")

    corpus_dir, out_dir = os.fspath(corpus_dir), os.fspath(out_dir)
    entries = []
    max_len = 0
    for e in manifest.entries:
        clip = audio_io.decode_wav(os.path.join(corpus_dir, e.path), category_id=e.category_id, source_id=e.path)
        os.makedirs(os.path.join(out_dir, str(e.category_id)), exist_ok=True)
        audio_io.encode_wav(os.path.join(out_dir, e.path), clip.samples)
        entries.append(e)
        max_len = max(max_len, len(clip.samples))
        plan = fall_plan if e.label == audio_io.LABEL_FALL else nofall_plan
        stem = os.path.splitext(e.path)[0]
        for sp in plan:
            var = apply(sp, clip)
            rel = f"{stem}__aug-{var.augment_tag}.wav"
            audio_io.encode_wav(os.path.join(out_dir, rel), var.samples)
            entries.append(
                mf.ManifestEntry(
                    path=rel,
                    category_id=e.category_id,
                    label=e.label,
                    split=e.split,
                    augment_tag=var.augment_tag,
                )
            )
            max_len = max(max_len, len(var.samples))
    return mf.DatasetManifest(entries=entries, max_len_samples=max_len, seed=manifest.seed)
