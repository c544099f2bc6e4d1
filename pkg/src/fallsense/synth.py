"""Procedural desk-scale audio corpus.

Stand-ins for the eight recording scenarios: running water is low-passed
noise, speech is an amplitude-modulated harmonic stack, screams are loud
high-pitch chirp bursts, and body impacts are decaying broadband hits with a
low thump and a sustained high-band clatter tail. The impact clatter is the
only sustained energy above 2.5 kHz in the corpus, so impact-type falls are
cleanly separable from water and speech; fall-type speech (distress) uses a
higher fundamental and faster syllable modulation than ordinary speech, and a
minority of those clips are deliberately soft and ordinary-sounding so the
speech-vs-speech category pairs stay genuinely hard.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.signal import butter, sosfilt

from .audio_io import SAMPLE_RATE, encode_wav, label_for_category

MIN_DURATION_S = 2.0
MAX_DURATION_S = 8.74

# Table-style per-category recording counts for the default desk corpus.
DEFAULT_COUNTS = {1: 12, 2: 12, 3: 11, 4: 11, 5: 12, 6: 11, 8: 12, 9: 11}


def _t(dur_s):
    n = int(round(dur_s * SAMPLE_RATE))
    return np.arange(n) / SAMPLE_RATE


def _water(dur_s, rng, level=0.06):
    """Running water: white noise through a low-pass, centroid well under 2 kHz."""
    noise = rng.standard_normal(int(round(dur_s * SAMPLE_RATE)))
    sos = butter(4, 1200.0, btype="low", fs=SAMPLE_RATE, output="sos")
    x = sosfilt(sos, noise)
    return level * x / (np.sqrt(np.mean(x**2)) + 1e-12)


def _voice(dur_s, rng, f0, am_hz, level, n_harm=8):
    """Harmonic stack with syllable-rate amplitude modulation and vibrato."""
    t = _t(dur_s)
    vib = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(4, 6) * t)
    phase = 2 * np.pi * f0 * np.cumsum(vib) / SAMPLE_RATE
    x = np.zeros_like(t)
    for k in range(1, n_harm + 1):
        x += np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k
    env = 0.55 + 0.45 * np.sin(2 * np.pi * am_hz * t + rng.uniform(0, 2 * np.pi))
    # fade the utterance in and out so clips do not start mid-sound
    ramp = min(len(t) // 10, SAMPLE_RATE // 4)
    fade = np.ones_like(t)
    fade[:ramp] = np.linspace(0, 1, ramp)
    fade[-ramp:] = np.linspace(1, 0, ramp)
    x *= env * fade
    return level * x / (np.max(np.abs(x)) + 1e-12)


def _scream(dur_s, rng, level=0.85):
    """Loud rising chirp burst somewhere in the clip."""
    t = _t(dur_s)
    x = np.zeros_like(t)
    burst_s = rng.uniform(0.5, min(1.5, dur_s - 0.2))
    start = rng.uniform(0.0, dur_s - burst_s)
    i0, i1 = int(start * SAMPLE_RATE), int((start + burst_s) * SAMPLE_RATE)
    tb = np.arange(i1 - i0) / SAMPLE_RATE
    f = np.linspace(rng.uniform(550, 750), rng.uniform(1200, 1600), len(tb))
    phase = 2 * np.pi * np.cumsum(f) / SAMPLE_RATE
    burst = np.sin(phase) + 0.5 * np.sin(2 * phase) + 0.25 * np.sin(3 * phase)
    w = np.hanning(len(tb))
    x[i0:i1] = burst * w
    return level * x / (np.max(np.abs(x)) + 1e-12)


def _crash(dur_s, rng, n_hits, level, decay_s=0.2, thump_hz=80.0, tail_s=1.5):
    """Heavy body-impact bursts: a broadband hit with a low-frequency thump and
    a high-band clatter tail long enough to span several analysis frames (no
    other category puts energy above 2.5 kHz for a sustained stretch)."""
    n = int(round(dur_s * SAMPLE_RATE))
    x = np.zeros(n)
    sos = butter(4, [2500.0, 5500.0], btype="band", fs=SAMPLE_RATE, output="sos")
    for _ in range(n_hits):
        pos = int(rng.uniform(0.1, max(0.11, dur_s - 0.5)) * SAMPLE_RATE)
        tail = min(int((tail_s + 0.3) * SAMPLE_RATE), n - pos)
        tt = np.arange(tail) / SAMPLE_RATE
        hit = rng.standard_normal(tail) * np.exp(-tt / decay_s)
        hit += 1.2 * np.sin(2 * np.pi * thump_hz * tt) * np.exp(-tt / (3 * decay_s))
        rattle = sosfilt(sos, rng.standard_normal(tail)) * np.exp(-tt / (tail_s / 3.0))
        hit += 0.9 * rattle / (np.max(np.abs(rattle)) + 1e-12)
        x[pos : pos + tail] += hit
    return level * x / (np.max(np.abs(x)) + 1e-12)


def _debris(dur_s, rng, start_s, level=0.28):
    """Knocked-over objects rattling from the impact to the end of the clip."""
    n = int(round(dur_s * SAMPLE_RATE))
    x = np.zeros(n)
    i0 = int(start_s * SAMPLE_RATE)
    m = n - i0
    if m <= 0:
        return x
    sos = butter(4, [2500.0, 5500.0], btype="band", fs=SAMPLE_RATE, output="sos")
    g = sosfilt(sos, rng.standard_normal(m))
    t = np.arange(m) / SAMPLE_RATE
    flutter = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(2, 5) * t + rng.uniform(0, 2 * np.pi))
    x[i0:] = g / (np.sqrt(np.mean(g**2)) + 1e-12) * flutter
    return level * x


def _mix(*parts):
    n = max(len(p) for p in parts)
    out = np.zeros(n)
    for p in parts:
        out[: len(p)] += p
    peak = np.max(np.abs(out))
    if peak > 1.0:
        out /= peak * 1.01
    return out.astype(np.float32)


def _distress_voice(dur_s, rng, soft=False):
    # panic calls: high fundamental, fast syllables, loud unless "soft"
    f0 = rng.uniform(300, 480)
    am = rng.uniform(6, 10)
    level = rng.uniform(0.15, 0.3) if soft else rng.uniform(0.6, 0.9)
    if soft:
        # soft-tone distress is intentionally close to ordinary speech
        f0 = rng.uniform(150, 240)
        am = rng.uniform(2.5, 4.5)
    return _voice(dur_s, rng, f0, am, level)


def _ordinary_voice(dur_s, rng):
    f0 = rng.uniform(100, 220)
    am = rng.uniform(2, 4)
    return _voice(dur_s, rng, f0, am, rng.uniform(0.15, 0.35))


def render_clip(category_id: int, rng) -> np.ndarray:
    """One synthetic clip for a category; duration drawn in [2 s, 8.74 s]."""
    dur = rng.uniform(MIN_DURATION_S, MAX_DURATION_S)
    if category_id == 1:
        # water + distress keywords; a large minority use a soft ordinary tone
        soft = rng.random() < 0.4
        return _mix(_water(dur, rng), _distress_voice(dur, rng, soft=soft))
    if category_id == 2:
        return _mix(_water(dur, rng), _ordinary_voice(dur, rng))
    if category_id == 3:
        soft = rng.random() < 0.35
        level = 0.25 if soft else 0.85
        return _mix(_water(dur, rng), _scream(dur, rng, level=level))
    if category_id == 4:
        return _mix(_ordinary_voice(dur, rng))
    if category_id == 5:
        return _mix(_water(dur, rng))
    if category_id == 6:
        hit_s = rng.uniform(0.1, 0.4 * dur)
        return _mix(
            _water(dur, rng),
            _crash(dur, rng, int(rng.integers(2, 5)), 0.95, tail_s=2.0),
            _debris(dur, rng, hit_s),
        )
    if category_id == 8:
        quiet = 0.01 * rng.standard_normal(int(round(dur * SAMPLE_RATE)))
        return _mix(quiet, _crash(dur, rng, int(rng.integers(3, 7)), 0.9, decay_s=0.08, thump_hz=150.0, tail_s=1.0))
    if category_id == 9:
        quiet = 0.01 * rng.standard_normal(int(round(dur * SAMPLE_RATE)))
        return _mix(quiet, _distress_voice(dur, rng))
    raise ValueError(f"unknown category id {category_id}")


def synth_corpus(counts: dict, seed: int, out_dir) -> list:
    """Write a procedural corpus in per-category directories; returns rel paths."""
    out_dir = os.fspath(out_dir)
    written = []
    for cat in sorted(counts):
        label_for_category(cat)  # validates the id
        n = counts[cat]
        if n < 0:
            raise ValueError(f"negative count for category {cat}")
        if n == 0:
            continue
        cdir = os.path.join(out_dir, str(cat))
        os.makedirs(cdir, exist_ok=True)
        for i in range(n):
            rng = np.random.default_rng(np.random.SeedSequence([seed, cat, i]))
            x = render_clip(cat, rng)
            rel = os.path.join(str(cat), f"clip_{i:04d}.wav")
            encode_wav(os.path.join(out_dir, rel), x)
            written.append(rel)
    return written


def parse_counts_spec(path) -> dict:
    """Counts file: lines of '<category_id> <count>'; '#' comments allowed."""
    counts = {}
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            cat, n = line.split()
            counts[int(cat)] = int(n)
    return counts
