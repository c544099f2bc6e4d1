import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fallsense import augment as ag
from fallsense import manifest as mf
from fallsense import synth
from fallsense.audio_io import AudioClip
from fallsense.errors import ParamOutOfRange, ScopeViolation


def make_clip(label_cat=2, n=16000, seed=0):
    rng = np.random.default_rng(seed)
    x = (0.4 * np.sin(2 * np.pi * 220 * np.arange(n) / 16000)
         + 0.05 * rng.standard_normal(n)).astype(np.float32)
    return AudioClip(samples=x, category_id=label_cat, source_id=f"clip{seed}")


def test_zero_gain_is_identity():
    clip = make_clip()
    spec = ag.AugmentationSpec("gain", {"db": 0.0}, ag.SCOPE_ANY, 0, "g0")
    out = ag.apply(spec, clip)
    assert np.allclose(out.samples, clip.samples, atol=1e-7)


def test_polarity_inversion_is_involution():
    clip = make_clip()
    spec = ag.AugmentationSpec("polarity_inversion", {}, ag.SCOPE_NOFALL_ONLY, 0, "pol")
    once = ag.apply(spec, clip)
    assert np.array_equal(once.samples, -clip.samples)
    twice = ag.apply(spec, once)
    assert np.array_equal(twice.samples, clip.samples)


def test_gaussian_noise_hits_target_snr():
    clip = make_clip(n=80000)
    spec = ag.AugmentationSpec("gaussian_noise", {"snr_db": 20.0}, ag.SCOPE_ANY, 1, "n20")
    out = ag.apply(spec, clip)
    noise = out.samples.astype(np.float64) - clip.samples.astype(np.float64)
    snr = 10 * np.log10(np.mean(clip.samples.astype(np.float64) ** 2) / np.mean(noise**2))
    assert abs(snr - 20.0) <= 0.5


def test_scope_violation_for_every_starred_transform():
    fall_clip = make_clip(label_cat=1)
    for name in ag._NOFALL_ONLY:
        spec = ag.AugmentationSpec(name, {}, ag.SCOPE_NOFALL_ONLY, 0, name)
        with pytest.raises(ScopeViolation):
            ag.apply(spec, fall_clip)


def test_param_out_of_range():
    clip = make_clip()
    spec = ag.AugmentationSpec("pitch_shift", {"semitones": 40.0}, ag.SCOPE_ANY, 0, "bad")
    with pytest.raises(ParamOutOfRange):
        ag.apply(spec, clip)


def test_determinism_same_seed():
    clip = make_clip()
    spec = ag.AugmentationSpec("time_mask", {"max_fraction": 0.3}, ag.SCOPE_NOFALL_ONLY, 7, "tm")
    a = ag.apply(spec, clip)
    b = ag.apply(spec, clip)
    assert np.array_equal(a.samples, b.samples)
    other = ag.AugmentationSpec("time_mask", {"max_fraction": 0.3}, ag.SCOPE_NOFALL_ONLY, 8, "tm")
    c = ag.apply(other, clip)
    assert not np.array_equal(a.samples, c.samples)


def test_length_policy():
    clip = make_clip(n=32000)
    stretch = ag.AugmentationSpec("time_stretch", {"rate": 1.25}, ag.SCOPE_ANY, 0, "ts")
    assert len(ag.apply(stretch, clip).samples) == round(32000 / 1.25)
    for name in ["gaussian_noise", "gain", "pitch_shift", "time_mask", "reverse",
                 "high_pass", "seven_band_eq", "mp3_compression", "tanh_distortion"]:
        scope = ag.SCOPE_ANY if name in ag._FALL_SAFE else ag.SCOPE_NOFALL_ONLY
        spec = ag.AugmentationSpec(name, {}, scope, 0, name)
        assert len(ag.apply(spec, clip).samples) == 32000, name


def test_pitch_shift_moves_tone():
    n = 48000
    t = np.arange(n) / 16000
    clip = AudioClip(samples=(0.5 * np.sin(2 * np.pi * 440 * t)).astype(np.float32),
                     category_id=4, source_id="tone")
    spec = ag.AugmentationSpec("pitch_shift", {"semitones": 4.0}, ag.SCOPE_ANY, 0, "p4")
    out = ag.apply(spec, clip)
    w = np.hanning(n)
    peak = np.argmax(np.abs(np.fft.rfft(out.samples * w))) * 16000 / n
    expected = 440 * 2 ** (4 / 12)
    assert abs(peak - expected) < 15.0


@given(seed=st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_outputs_always_in_unit_range(seed):
    rng = np.random.default_rng(seed)
    clip = make_clip(seed=seed)
    name = rng.choice(sorted(ag.TRANSFORMS))
    scope = ag.SCOPE_ANY if name in ag._FALL_SAFE else ag.SCOPE_NOFALL_ONLY
    spec = ag.AugmentationSpec(str(name), {}, scope, seed, f"t{seed}")
    out = ag.apply(spec, clip)
    assert np.max(np.abs(out.samples)) <= 1.0
    assert out.label == clip.label
    assert out.category_id == clip.category_id


def test_default_plan_sizes_and_scopes():
    fall = ag.default_fall_plan()
    nofall = ag.default_nofall_plan()
    assert len(fall) == 14
    assert len(nofall) == 100
    assert all(sp.scope == ag.SCOPE_ANY for sp in fall)
    assert len({sp.slot() for sp in fall}) == 14
    assert len({sp.slot() for sp in nofall}) == 100


def test_plan_file_roundtrip(tmp_path):
    plan = ag.default_nofall_plan(seed=4)
    p = tmp_path / "plan.tsv"
    ag.write_plan(plan, p)
    back = ag.read_plan(p)
    assert back == plan


def test_expand_corpus_counts(tmp_path):
    src = tmp_path / "src"
    out = tmp_path / "out"
    synth.synth_corpus({1: 1, 2: 1}, seed=0, out_dir=src)
    m = mf.build_manifest(src, seed=0)
    big = ag.expand_corpus(m, src, ag.default_fall_plan(), ag.default_nofall_plan(), out)
    assert len(big.entries) == 15 + 101
    falls = [e for e in big.entries if e.label == "fall"]
    nofalls = [e for e in big.entries if e.label == "nofall"]
    assert len(falls) == 15
    assert len(nofalls) == 101
    # split inheritance: every variant matches its source's split
    src_split = {e.path: e.split for e in m.entries}
    for e in big.entries:
        base = e.path.split("__aug-")[0] + ".wav" if "__aug-" in e.path else e.path
        assert e.split == src_split[base]
    # originals retained byte-for-byte content
    assert (out / "1" / "clip_0000.wav").exists()


def test_expand_corpus_rejects_bad_plans(tmp_path):
    src = tmp_path / "src"
    synth.synth_corpus({1: 1}, seed=0, out_dir=src)
    m = mf.build_manifest(src, seed=0)
    with pytest.raises(ParamOutOfRange):
        ag.expand_corpus(m, src, [], ag.default_nofall_plan(), tmp_path / "o")
    bad = [ag.AugmentationSpec("reverse", {}, ag.SCOPE_NOFALL_ONLY, 0, "rev")]
    with pytest.raises(ScopeViolation):
        ag.expand_corpus(m, src, bad, ag.default_nofall_plan(), tmp_path / "o2")
