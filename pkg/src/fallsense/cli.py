"""Command-line entry point.

    fallsense dataset synth|build|augment ...
    fallsense features extract ...
    fallsense exp train|evaluate|ablate|pairwise ...
    fallsense sentinel run ...
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import audio_io, augment as ag, checkpoint as ckpt, experiments as ex
from . import features as ft, manifest as mf, model as md, synth
from . import sentinel as sn, training as tr

FEATURE_KINDS = {
    "raw": ft.KIND_SEGMENTED_RAW,
    "diff": ft.KIND_DIFF,
    "logmel": ft.KIND_LOG_MEL,
    "combined": ft.KIND_COMBINED,
}


def _add_feature_args(p):
    p.add_argument("--features", choices=sorted(FEATURE_KINDS), default="diff")
    p.add_argument("--t-seg-ms", type=int, default=100)
    p.add_argument("--n-fft", type=int, default=2048)
    p.add_argument("--hop", type=int, default=1600)
    p.add_argument("--n-mels", type=int, default=64)


def _pipe_from_args(args, target_len):
    return tr.FeaturePipeline(kind=FEATURE_KINDS[args.features], target_len=target_len,
                              t_seg_ms=args.t_seg_ms, n_fft=args.n_fft,
                              hop=args.hop, n_mels=args.n_mels)


def build_parser():
    root = argparse.ArgumentParser(prog="fallsense")
    top = root.add_subparsers(dest="group", required=True)

    ds = top.add_parser("dataset", help="corpus generation, manifests, augmentation")
    dsub = ds.add_subparsers(dest="cmd", required=True)

    p = dsub.add_parser("synth", help="write a procedural corpus")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--counts", help="path to a per-category counts file")
    p.set_defaults(func=cmd_dataset_synth)

    p = dsub.add_parser("build", help="scan a corpus and write a split manifest")
    p.add_argument("corpus_dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="manifest.tsv")
    p.set_defaults(func=cmd_dataset_build)

    p = dsub.add_parser("augment", help="expand a corpus with augmentation plans")
    p.add_argument("corpus_dir")
    p.add_argument("out_dir")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fall-plan", help="plan file; default is the built-in 14-slot plan")
    p.add_argument("--nofall-plan", help="plan file; default is the built-in 100-slot plan")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-manifest", default="manifest_expanded.tsv")
    p.set_defaults(func=cmd_dataset_augment)

    fe = top.add_parser("features", help="feature extraction")
    fsub = fe.add_subparsers(dest="cmd", required=True)
    p = fsub.add_parser("extract", help="featurize one clip to a cache file")
    p.add_argument("wav")
    p.add_argument("out")
    p.add_argument("--target-len", type=int, default=0, help="pad length in samples")
    _add_feature_args(p)
    p.set_defaults(func=cmd_features_extract)

    xp = top.add_parser("exp", help="training and evaluation experiments")
    xsub = xp.add_subparsers(dest="cmd", required=True)

    p = xsub.add_parser("train")
    p.add_argument("--manifest", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", choices=("A", "B", "C"), default="B")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="model.ckpt")
    p.add_argument("--history", help="write per-epoch accuracy table here")
    _add_feature_args(p)
    p.set_defaults(func=cmd_exp_train)

    p = xsub.add_parser("evaluate")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_exp_evaluate)

    p = xsub.add_parser("ablate")
    p.add_argument("--axis", required=True,
                   choices=(ex.AXIS_HEADS_LAYERS, ex.AXIS_MELS, ex.AXIS_HOP,
                            ex.AXIS_TSEG, ex.AXIS_COMBINED))
    p.add_argument("--manifest", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--out-dir", default="ablation")
    _add_feature_args(p)
    p.set_defaults(func=cmd_exp_ablate)

    p = xsub.add_parser("pairwise")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_exp_pairwise)

    se = top.add_parser("sentinel", help="streaming inference daemon")
    ssub = se.add_subparsers(dest="cmd", required=True)
    p = ssub.add_parser("run")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="mic | file:PATH")
    p.add_argument("--window", type=float, default=8.735)
    p.add_argument("--stride", type=float, default=4.0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--alert-url", default=os.environ.get("FALLSENSE_ALERT_URL"))
    p.add_argument("--refractory", type=float, default=30.0)
    p.add_argument("--device-id", default="fallsense-0")
    p.set_defaults(func=cmd_sentinel_run)

    return root


def cmd_dataset_synth(args):
    counts = synth.parse_counts_spec(args.counts) if args.counts else None
    written = synth.synth_corpus(counts or synth.DEFAULT_COUNTS, args.seed, args.out_dir)
    print(f"wrote {len(written)} clips under {args.out_dir}")


def cmd_dataset_build(args):
    man = mf.build_manifest(args.corpus_dir, args.seed)
    mf.write_manifest(man, args.out)
    c = man.counts()
    print(f"manifest {args.out}: {len(man.entries)} clips, "
          f"max_len {man.max_len_samples} samples, splits {c}")


def cmd_dataset_augment(args):
    man = mf.read_manifest(args.manifest)
    fall_plan = (ag.read_plan(args.fall_plan) if args.fall_plan
                 else ag.default_fall_plan(args.seed))
    nofall_plan = (ag.read_plan(args.nofall_plan) if args.nofall_plan
                   else ag.default_nofall_plan(args.seed))
    expanded = ag.expand_corpus(man, args.corpus_dir, fall_plan, nofall_plan, args.out_dir)
    mf.write_manifest(expanded, args.out_manifest)
    print(f"expanded to {len(expanded.entries)} clips; manifest -> {args.out_manifest}")


def cmd_features_extract(args):
    clip = audio_io.decode_wav(args.wav)
    if args.target_len:
        clip = audio_io.pad_to_length(clip, args.target_len)
    fm = ft.extract(clip, FEATURE_KINDS[args.features], args.t_seg_ms,
                    args.n_fft, args.hop, args.n_mels)
    ft.save_cache(fm, args.out)
    print(f"{args.features}: {fm.n_frames}x{fm.n_dims} "
          f"({int(np.count_nonzero(fm.mask))} valid frames) -> {args.out}")


def _config_for(args, pipe):
    dim = pipe.input_dim()
    frames = pipe.max_frames() + 1
    if args.config == "C":
        return md.config_c(input_dim=dim, max_frames=frames)
    factory = md.config_a if args.config == "A" else md.config_b
    return factory(input_dim=dim, max_frames=frames)


def cmd_exp_train(args):
    man = mf.read_manifest(args.manifest)
    pipe = _pipe_from_args(args, man.max_len_samples)
    cfg = _config_for(args, pipe)
    hyper = tr.Hyperparameters(batch_size=args.batch_size, epochs=args.epochs, lr=args.lr)
    params, history, pipe = tr.train(
        man, args.corpus, pipe.kind, cfg=cfg, hyper=hyper, seed=args.seed, pipe=pipe,
        log=lambda rec: print("  ".join(f"{k}={v}" for k, v in rec.items())))
    ckpt.save_checkpoint(params, cfg, args.out, pipeline=vars(pipe))
    if args.history:
        tr.write_history(history, args.history)
    print(f"checkpoint -> {args.out}")


def _print_report(r):
    print(f"tp={r.tp} tn={r.tn} fp={r.fp} fn={r.fn}")
    print(f"accuracy={r.accuracy:.4f} precision={r.precision:.4f} "
          f"recall={r.recall:.4f} f1={r.f1:.4f}")


def cmd_exp_evaluate(args):
    params, cfg, pipeline = ckpt.load_checkpoint(args.checkpoint)
    man = mf.read_manifest(args.manifest)
    pipe = tr.FeaturePipeline(**pipeline)
    report = ex.evaluate(params, cfg, man, args.split, args.corpus, pipe)
    _print_report(report)
    print("threshold\tprecision\trecall")
    for t, p, r in report.threshold_sweep:
        print(f"{t:.2f}\t{p:.4f}\t{r:.4f}")


def cmd_exp_ablate(args):
    man = mf.read_manifest(args.manifest)
    hyper = tr.Hyperparameters(batch_size=args.batch_size, epochs=args.epochs, lr=args.lr)
    cells = ex.run_ablation(
        args.axis, man, args.corpus, feature_kind=FEATURE_KINDS[args.features],
        seed=args.seed, hyper=hyper, out_dir=args.out_dir,
        log=lambda c: print(f"{c.setting} acc={c.accuracy:.4f} f1={c.f1:.4f} "
                            f"{c.error or ''}".rstrip()))
    print(f"{len(cells)} cells -> {args.out_dir}/ablation_{args.axis}.tsv")


def cmd_exp_pairwise(args):
    params, cfg, pipeline = ckpt.load_checkpoint(args.checkpoint)
    man = mf.read_manifest(args.manifest)
    pipe = tr.FeaturePipeline(**pipeline)
    pairs = ex.pairwise_analysis(params, cfg, man, args.corpus, pipe, split=args.split)
    print("fall_cat\tnofall_cat\trecall")
    for (f, n), r in sorted(pairs.items()):
        print(f"{f}\t{n}\t{r:.4f}")


def cmd_sentinel_run(args):
    if args.input == "mic":
        print("microphone capture is not available in this build; "
              "use --input file:PATH", file=sys.stderr)
        return 2
    if not args.input.startswith("file:"):
        print("--input must be 'mic' or 'file:PATH'", file=sys.stderr)
        return 2
    events, stats, _ = sn.run_daemon(
        args.input[len("file:"):], args.checkpoint, args.window, args.stride,
        threshold=args.threshold, endpoint=args.alert_url,
        refractory_s=args.refractory, device_id=args.device_id)
    print(f"event=done windows={stats.windows} sent={stats.alerts_sent} "
          f"suppressed={stats.alerts_suppressed} failed={stats.alerts_failed} "
          f"dropped={stats.dropped_windows} underruns={stats.underruns}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
