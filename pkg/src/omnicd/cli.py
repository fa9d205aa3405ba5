"""Command line: convert, synth, train, eval, infer.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .exceptions import DataError, OmniCDError

log = logging.getLogger("omnicd")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", default=None,
                        help="ModelConfig JSON file, or 'desk' / 'full' (default: desk)")
    parent.add_argument("--seed", type=int, default=0)
    parent.add_argument("--out", required=True, help="output directory")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="omnicd", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()

    p = sub.add_parser("convert", parents=[common], help="standardise a change-detection dataset")
    p.add_argument("--kind", required=True, choices=["single_binary", "multi_single", "multi_bitemporal"])
    p.add_argument("--class-map", required=True, help="JSON file mapping pixel value -> class name")
    p.add_argument("--target", type=int, default=512)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--max-subset", type=int, default=2)
    p.add_argument("--name", default=None, help="source_dataset value (default: input dir name)")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--classes", nargs="+", default=None)
    p.add_argument("--per-class", action="store_true",
                   help="one record per changed class with a class-specific prompt")

    p = sub.add_parser("train", parents=[common], help="train on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lr-schedule", choices=["constant", "cosine"], default="constant")
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--lambdas", type=float, nargs=3, default=None)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--previews", type=int, default=0,
                   help="write this many reconstruction triptychs after training")

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("infer", parents=[common], help="predict a change mask for one pair")
    p.add_argument("--image1", required=True)
    p.add_argument("--image2", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--prompt-text")
    group.add_argument("--prompt-ref", nargs=2, metavar=("IMAGE", "MASK"))
    return parser


# -- subcommands -------------------------------------------------------------------

def cmd_convert(args):
    from .datakit.convert import convert_dataset

    with open(args.class_map, encoding="utf-8") as fh:
        class_map = {int(k): v for k, v in json.load(fh).items()}
    records = convert_dataset(args.in_dir, args.out, args.kind, class_map, args.target,
                              args.max_subset, args.name)
    print(f"wrote {len(records)} records to {os.path.join(args.out, 'manifest.jsonl')}")


def cmd_synth(args):
    from .datakit.synth import DEFAULT_CLASSES, synth_generate

    classes = tuple(args.classes) if args.classes else DEFAULT_CLASSES
    records = synth_generate(args.n, args.seed, args.size, args.out, classes, per_class=args.per_class)
    print(f"wrote {len(records)} records to {os.path.join(args.out, 'manifest.jsonl')}")


def cmd_train(args):
    from .config import coerce_config
    from .estimator import PromptedChangeDetector
    from .evaluation import write_reconstruction_previews

    config = coerce_config(args.config)  # usage errors before any data is touched
    os.makedirs(args.out, exist_ok=True)
    est = PromptedChangeDetector(
        config=config, steps=args.steps, lr=args.lr, batch_size=args.batch_size,
        seed=args.seed, lambdas=args.lambdas, lr_schedule=args.lr_schedule,
        checkpoint_path=os.path.join(args.out, "checkpoint.safetensors"),
        checkpoint_every=args.checkpoint_every, loss_log=os.path.join(args.out, "losses.csv"),
        verbose=args.verbose)
    est.fit_manifest(args.manifest)
    if args.previews:
        from .datakit.manifest import load_manifest

        imgs = [s.image1 for _, s in zip(range(args.previews), load_manifest(args.manifest))]
        write_reconstruction_previews(est.net_, np.stack(imgs), os.path.join(args.out, "previews"))
    print(json.dumps({"steps": args.steps, **est.loss_history_[-1]} if est.loss_history_ else {"steps": 0}))


def cmd_eval(args):
    from .estimator import PromptedChangeDetector
    from .evaluation import evaluate, write_evaluation

    est = PromptedChangeDetector.load(args.checkpoint, threshold=args.threshold)
    report, rows = evaluate(args.manifest, est, args.threshold)
    write_evaluation(report, rows, args.out)
    print(json.dumps(report.as_dict()))


def _load_for_model(path, size, is_label=False):
    from .datakit.manifest import read_mask, read_rgb
    from .datakit.tiling import _resample

    arr = read_mask(path) if is_label else read_rgb(path)
    if arr.shape[-2:] == (size, size):
        return arr
    if arr.shape[-1] != arr.shape[-2]:
        raise DataError(f"{path}: only square rasters can be resampled to {size}x{size}")
    if is_label:
        return _resample(arr, size, True)
    return _resample(arr.transpose(1, 2, 0), size, False).transpose(2, 0, 1).clip(0, 1)


def cmd_infer(args):
    from .datakit.manifest import write_gray, write_mask
    from .estimator import PromptedChangeDetector

    est = PromptedChangeDetector.load(args.checkpoint, threshold=args.threshold)
    size = est.config_.input_size
    img1 = _load_for_model(args.image1, size)
    img2 = _load_for_model(args.image2, size)
    pair = np.stack([img1, img2])[None]
    if args.prompt_text is not None:
        maps = est.predict_maps(pair, prompts=[args.prompt_text])
    else:
        ref = _load_for_model(args.prompt_ref[0], size)
        ref_mask = _load_for_model(args.prompt_ref[1], size, is_label=True)
        if not ref_mask.any():
            raise DataError("reference mask has no foreground pixel")
        # the concept may appear in either epoch
        conf = np.maximum(est.reference_confidence(ref, ref_mask, img1),
                          est.reference_confidence(ref, ref_mask, img2))
        maps = est.predict_maps(pair, confidence=conf[None])
    os.makedirs(args.out, exist_ok=True)
    write_mask(os.path.join(args.out, "mask.png"), maps["filtered_prob"][0] > args.threshold)
    write_gray(os.path.join(args.out, "roi.png"), maps["roi"][0])
    write_gray(os.path.join(args.out, "prob.png"), maps["raw_prob"][0])
    print(json.dumps({"changed_pixels": int((maps["filtered_prob"][0] > args.threshold).sum())}))


COMMANDS = {"convert": cmd_convert, "synth": cmd_synth, "train": cmd_train,
            "eval": cmd_eval, "infer": cmd_infer}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except OmniCDError as exc:
        print(f"omnicd {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"omnicd {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
