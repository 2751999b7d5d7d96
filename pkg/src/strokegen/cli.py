"""Command-line pipeline: gen-data, pretrain-style, train, sample, render,
eval.

Every command is deterministic under a fixed seed. Settings resolve in
three layers: profile defaults, then command-line flags, then the JSON
config file given by --config, which has the last word.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import config as config_mod
from .config import RunConfig, profile_config
from .dataset import (DEFAULT_VOCAB, Sample, WordLayout, generate_synthetic,
                      load_samples, save_samples)
from .diffusion import sample as run_sampler
from .errors import StrokegenError
from .metrics import batch_report, pooled_adherence
from .stroke_core import render
from .training import (init_train, load_generation_checkpoint,
                       load_style_checkpoint, pretrain_writer_id,
                       resume_train_state, save_generation_checkpoint,
                       save_style_checkpoint, train_diffusion)
from .util import JsonlLogger, load_image, save_image, say


def _resolve_config(args, train_section: str) -> RunConfig:
    run = profile_config(args.profile, seed=args.seed)
    section_over = {}
    for name in ("iters", "batch_size", "lr"):
        value = getattr(args, name, None)
        if value is not None:
            section_over[name] = value
    if section_over:
        run = config_mod.config_from_dict(
            config_mod._deep_merge(run.to_dict(), {train_section: section_over}))
    if getattr(args, "config", None):
        file_dict = json.loads(open(args.config, encoding="utf-8").read())
        run = config_mod.config_from_dict(
            config_mod._deep_merge(run.to_dict(), file_dict))
    return run


def cmd_gen_data(args) -> int:
    vocab = DEFAULT_VOCAB
    if args.vocab:
        with open(args.vocab, encoding="ascii") as fh:
            vocab = tuple(line.strip() for line in fh if line.strip())
    samples = generate_synthetic(args.writers, args.per_writer, args.seed,
                                 vocab=vocab)
    save_samples(args.out, samples)
    say(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_pretrain_style(args) -> int:
    run = _resolve_config(args, "style_train")
    samples = load_samples(args.data)
    num_writers = max(s.writer_id for s in samples) + 1
    state = None
    if args.resume:
        state, cfg, ckpt_writers = load_style_checkpoint(
            args.resume, lr=run.style_train.lr)
        if cfg != run.style:
            raise StrokegenError("resume checkpoint style config differs")
        num_writers = ckpt_writers
    with JsonlLogger(args.log) as log:
        state = pretrain_writer_id(
            samples, run.style, num_writers,
            iters=run.style_train.iters,
            batch_size=run.style_train.batch_size,
            lr=run.style_train.lr,
            val_fraction=run.style_train.val_fraction,
            eval_interval=run.style_train.eval_interval,
            seed=run.seed, log=log, state=state)
    save_style_checkpoint(args.out, state, run.style, num_writers)
    final = state.history[-1] if state.history else {}
    say(f"pretrained {state.step} steps, val accuracy "
        f"{final.get('val_accuracy', float('nan')):.4f}, saved {args.out}")
    return 0


def cmd_train(args) -> int:
    run = _resolve_config(args, "diffusion_train")
    samples = load_samples(args.data)
    if args.resume:
        state, bank, run, num_writers, style_encoder = resume_train_state(
            args.resume, samples)
    else:
        style_state, style_cfg, num_writers = load_style_checkpoint(args.style_ckpt)
        if style_cfg != run.style:
            raise StrokegenError(
                "style checkpoint geometry differs from the run config")
        style_encoder = style_state.encoder
        state, bank = init_train(samples, style_encoder, run,
                                 ablate_layout=args.ablate_layout)
    with JsonlLogger(args.log) as log:
        state = train_diffusion(samples, state, bank,
                                iters=run.diffusion_train.iters,
                                batch_size=run.diffusion_train.batch_size,
                                log=log)
    save_generation_checkpoint(args.out, state, style_encoder, run, num_writers)
    say(f"trained {state.step} iterations, saved {args.out}")
    return 0


def cmd_sample(args) -> int:
    model, run, _ = load_generation_checkpoint(args.ckpt)
    with open(args.layout, encoding="utf-8") as fh:
        layout = WordLayout.from_list(json.load(fh))
    style_img = load_image(args.style_image)
    seq = run_sampler(args.text, layout, style_img, model.sched, model,
                      args.seed, init=run.diffusion.sample_init)
    out_sample = Sample(args.text, 0, seq, layout)
    save_samples(args.out, [out_sample])
    say(f"wrote {args.out} ({len(seq)} points)")
    if args.render:
        h, w = run.style.full_size
        save_image(render(seq, h, w), args.render)
        say(f"rendered {args.render}")
    return 0


def cmd_render(args) -> int:
    samples = load_samples(args.data)
    if not (0 <= args.index < len(samples)):
        raise StrokegenError(
            f"index {args.index} outside 0..{len(samples) - 1}")
    save_image(render(samples[args.index].strokes, args.height, args.width),
               args.out)
    say(f"rendered sample {args.index} to {args.out}")
    return 0


def cmd_eval(args) -> int:
    gen = load_samples(args.generated)
    ref = load_samples(args.reference)
    if len(gen) != len(ref):
        raise StrokegenError(
            f"{len(gen)} generated vs {len(ref)} reference samples")
    gen_imgs = [render(s.strokes, args.height, args.width) for s in gen]
    ref_imgs = [render(s.strokes, args.height, args.width) for s in ref]
    report = batch_report(gen_imgs, ref_imgs)
    report.layout_adherence = pooled_adherence(
        [(s.strokes, s.layout) for s in gen])
    with open(args.out_prefix + ".json", "w", encoding="ascii") as fh:
        fh.write(report.to_json() + "\n")
    with open(args.out_prefix + ".txt", "w", encoding="ascii") as fh:
        fh.write(report.to_text())
    say(report.to_text().rstrip())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strokegen",
        description="Layout-guided handwriting stroke generation pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_train_flags=True):
        p.add_argument("--profile", choices=("toy", "full"), default="toy")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="JSON config; overrides flags")
        if with_train_flags:
            p.add_argument("--iters", type=int)
            p.add_argument("--batch-size", type=int, dest="batch_size")
            p.add_argument("--lr", type=float)
            p.add_argument("--log", help="JSONL training log path")
            p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--writers", type=int, required=True)
    p.add_argument("--per-writer", type=int, required=True, dest="per_writer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab", help="file with one word per line")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain-style", help="writer-ID pretraining")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_pretrain_style)

    p = sub.add_parser("train", help="diffusion training")
    p.add_argument("--data", required=True)
    p.add_argument("--style-ckpt", dest="style_ckpt")
    p.add_argument("--out", required=True)
    p.add_argument("--ablate-layout", action="store_true", dest="ablate_layout",
                   help="disconnect the word-layout conditioning path")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate strokes from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--style-image", required=True, dest="style_image")
    p.add_argument("--text", required=True)
    p.add_argument("--layout", required=True, help="JSON word-box list")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--render", help="also write a PNG here")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("render", help="rasterize one dataset sample")
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--width", type=int, default=1024)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="compare generated vs reference strokes")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--width", type=int, default=1024)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train" and not args.resume and not args.style_ckpt:
        parser.error("train needs --style-ckpt (or --resume)")
    try:
        return args.func(args)
    except StrokegenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
