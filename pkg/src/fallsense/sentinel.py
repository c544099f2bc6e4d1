"""Streaming fall sentinel: slide a window over audio, classify each window
with a saved checkpoint, debounce, and dispatch alerts.

Three stages (capture, inference, dispatch) talk through bounded queues so a
slow webhook can never stall audio capture; when inference falls behind, the
oldest pending window is dropped and counted.
"""

from __future__ import annotations

import queue
import shlex
import subprocess
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass

import numpy as np

from . import audio_io, model as md
from .checkpoint import load_checkpoint
from .errors import CheckpointMismatch, DispatchFailed, StreamUnderrun
from .training import FeaturePipeline

PAYLOAD_VERSION = 1

STATUS_SENT = "Sent"
STATUS_FAILED = "Failed"
STATUS_SUPPRESSED = "Suppressed"


@dataclass
class AlertEvent:
    monotonic_ts: float
    wall_ts: float
    window_span: tuple          # (start_s, end_s)
    fall_probability: float
    dispatched_to: str = ""
    status: str = ""


def load_sentinel_checkpoint(path):
    """(params, cfg, FeaturePipeline) from a checkpoint file; the pipeline
    block is required here, unlike for plain evaluation."""
    params, cfg, pipeline = load_checkpoint(path)
    if not pipeline:
        raise CheckpointMismatch("checkpoint carries no feature pipeline block")
    pipe = FeaturePipeline(**pipeline)
    if pipe.input_dim() != cfg.input_dim:
        raise CheckpointMismatch(
            f"pipeline dim {pipe.input_dim()} vs model input_dim {cfg.input_dim}")
    return params, cfg, pipe


def iter_windows(samples, window_s, stride_s):
    """(start_s, end_s, window_samples) tuples over a fully buffered signal."""
    if not 0 < stride_s <= window_s:
        raise ValueError("need 0 < stride_s <= window_s")
    w = int(round(window_s * audio_io.SAMPLE_RATE))
    step = int(round(stride_s * audio_io.SAMPLE_RATE))
    pos = 0
    while pos + w <= len(samples):
        yield pos / audio_io.SAMPLE_RATE, (pos + w) / audio_io.SAMPLE_RATE, samples[pos : pos + w]
        pos += step


def classify_window(params, cfg, pipe, window, start_s=0.0):
    """Fall probability for one window, via the exact evaluation code path."""
    clip = audio_io.AudioClip(
        samples=np.asarray(window, dtype=np.float32),
        original_len=len(window), category_id=None, label=None,
        source_id=f"stream@{start_s:.3f}",
    )
    if len(window) > pipe.target_len:
        raise CheckpointMismatch(
            f"window of {len(window)} samples exceeds trained length {pipe.target_len}")
    fm = pipe.featurize(clip)
    probs = md.forward(params, cfg, fm)
    return float(probs[md.CLASS_FALL])


def stream_classify(source, checkpoint_path, window_s, stride_s):
    """Generator of (window_span, fall_probability) in time order.

    source: a WAV path, a sample array, or an iterable of sample chunks
    (a chunk of None marks a capture gap -> the affected window is skipped
    with a StreamUnderrun log entry, not an exception).
    """
    params, cfg, pipe = load_sentinel_checkpoint(checkpoint_path)
    for span_prob in _classify_source(source, params, cfg, pipe, window_s, stride_s):
        yield span_prob


def _classify_source(source, params, cfg, pipe, window_s, stride_s, on_underrun=None):
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        samples = audio_io.decode_wav(source).samples
        chunks = [samples]
    elif isinstance(source, np.ndarray):
        chunks = [source]
    else:
        chunks = source

    w = int(round(window_s * audio_io.SAMPLE_RATE))
    step = int(round(stride_s * audio_io.SAMPLE_RATE))
    buf = np.zeros(0, dtype=np.float32)
    offset = 0  # absolute sample index of buf[0]
    gap_until = -1  # absolute index below which data was lost to an underrun

    for chunk in chunks:
        if chunk is None:
            # capture gap: windows overlapping this point are unusable
            gap_until = offset + len(buf) + w
            if on_underrun:
                on_underrun(StreamUnderrun(f"capture gap near sample {offset + len(buf)}"))
            continue
        buf = np.concatenate([buf, np.asarray(chunk, dtype=np.float32)])
        while len(buf) >= w:
            start = offset
            if start >= gap_until:
                prob = classify_window(params, cfg, pipe, buf[:w], start / audio_io.SAMPLE_RATE)
                span = (start / audio_io.SAMPLE_RATE, (start + w) / audio_io.SAMPLE_RATE)
                yield span, prob
            buf = buf[step:]
            offset += step


class Debouncer:
    """Suppresses repeat alerts inside a refractory period."""

    def __init__(self, refractory_s=30.0, clock=time.monotonic):
        self.refractory_s = refractory_s
        self.clock = clock
        self.last_sent = None

    def should_send(self):
        now = self.clock()
        if self.last_sent is not None and now - self.last_sent < self.refractory_s:
            return False
        return True

    def mark_sent(self):
        self.last_sent = self.clock()


def format_payload(event: AlertEvent, device_id="fallsense-0") -> str:
    lines = [
        f"alert_version={PAYLOAD_VERSION}",
        f"device_id={device_id}",
        f"timestamp={event.wall_ts:.3f}",
        f"monotonic={event.monotonic_ts:.3f}",
        f"window_start_s={event.window_span[0]:.3f}",
        f"window_end_s={event.window_span[1]:.3f}",
        f"fall_probability={event.fall_probability:.6f}",
    ]
    return "\n".join(lines) + "\n"


def dispatch_alert(event: AlertEvent, endpoint, attempts=3, backoff_s=0.5,
                   device_id="fallsense-0", sleep=time.sleep) -> str:
    """POST the alert payload (or run a command template); retries with
    exponential backoff. Raises DispatchFailed when every attempt fails."""
    payload = format_payload(event, device_id)
    event.dispatched_to = endpoint
    last_err = None
    for attempt in range(attempts):
        if attempt:
            sleep(backoff_s * (2 ** (attempt - 1)))
        try:
            if endpoint.startswith(("http://", "https://")):
                req = urllib.request.Request(
                    endpoint, data=payload.encode(),
                    headers={"Content-Type": "text/plain"}, method="POST")
                with urllib.request.urlopen(req, timeout=10) as resp:
                    if 200 <= resp.status < 300:
                        event.status = STATUS_SENT
                        return event.status
                    last_err = f"http status {resp.status}"
            else:
                cmd = [a.replace("{payload}", payload) for a in shlex.split(endpoint)]
                res = subprocess.run(cmd, input=payload, capture_output=True,
                                     text=True, timeout=30)
                if res.returncode == 0:
                    event.status = STATUS_SENT
                    return event.status
                last_err = f"command exit {res.returncode}"
        except (urllib.error.URLError, OSError, subprocess.SubprocessError) as exc:
            last_err = str(exc)
    event.status = STATUS_FAILED
    raise DispatchFailed(f"all {attempts} attempts failed: {last_err}")


@dataclass
class SentinelStats:
    windows: int = 0
    alerts_sent: int = 0
    alerts_failed: int = 0
    alerts_suppressed: int = 0
    dropped_windows: int = 0
    underruns: int = 0


def run_daemon(source, checkpoint_path, window_s, stride_s, threshold=0.5,
               endpoint=None, refractory_s=30.0, queue_size=8, device_id="fallsense-0",
               log=print, backoff_s=0.5, clock=time.monotonic):
    """Capture -> inference -> dispatch with bounded queues.

    Capture never blocks: when the window queue is full the oldest pending
    window is discarded and counted. Returns (events, stats, probabilities).
    """
    params, cfg, pipe = load_sentinel_checkpoint(checkpoint_path)
    stats = SentinelStats()
    events = []
    probs = []
    win_q = queue.Queue(maxsize=queue_size)
    alert_q = queue.Queue()
    debouncer = Debouncer(refractory_s, clock=clock)
    done = object()

    def capture():
        w = int(round(window_s * audio_io.SAMPLE_RATE))
        step = int(round(stride_s * audio_io.SAMPLE_RATE))
        if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
            chunks = [audio_io.decode_wav(source).samples]
        elif isinstance(source, np.ndarray):
            chunks = [source]
        else:
            chunks = source
        buf = np.zeros(0, dtype=np.float32)
        offset = 0
        for chunk in chunks:
            if chunk is None:
                stats.underruns += 1
                log(f"event=underrun sample={offset + len(buf)}")
                offset += len(buf)
                buf = np.zeros(0, dtype=np.float32)
                continue
            buf = np.concatenate([buf, np.asarray(chunk, dtype=np.float32)])
            while len(buf) >= w:
                item = (offset / audio_io.SAMPLE_RATE, buf[:w].copy())
                while True:
                    try:
                        win_q.put_nowait(item)
                        break
                    except queue.Full:
                        try:
                            win_q.get_nowait()   # drop the oldest window
                            stats.dropped_windows += 1
                        except queue.Empty:
                            pass
                buf = buf[step:]
                offset += step
        win_q.put(done)

    def inference():
        while True:
            item = win_q.get()
            if item is done:
                alert_q.put(done)
                return
            start_s, window = item
            prob = classify_window(params, cfg, pipe, window, start_s)
            span = (start_s, start_s + window_s)
            stats.windows += 1
            probs.append((span, prob))
            log(f"event=window start={span[0]:.3f} end={span[1]:.3f} p_fall={prob:.4f}")
            if prob >= threshold:
                alert_q.put(AlertEvent(clock(), time.time(), span, prob))

    def dispatch():
        while True:
            ev = alert_q.get()
            if ev is done:
                return
            if not debouncer.should_send():
                ev.status = STATUS_SUPPRESSED
                stats.alerts_suppressed += 1
            elif endpoint is None:
                ev.status = STATUS_SENT
                debouncer.mark_sent()
                stats.alerts_sent += 1
            else:
                try:
                    dispatch_alert(ev, endpoint, backoff_s=backoff_s, device_id=device_id)
                    debouncer.mark_sent()
                    stats.alerts_sent += 1
                except DispatchFailed as exc:
                    stats.alerts_failed += 1
                    log(f"event=dispatch_failed reason={exc}")
            events.append(ev)
            log(f"event=alert status={ev.status} p_fall={ev.fall_probability:.4f}")

    threads = [threading.Thread(target=t, daemon=True) for t in (capture, inference, dispatch)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return events, stats, probs
