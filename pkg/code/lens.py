"""Lens: pre-training and prompted fine-tuning of an encoder-decoder transformer
over network traffic. Each stage of the pipeline is a subcommand; artifacts embed
the seed and the checksums of their inputs."""

import os
import sys
import logging
from dataclasses import replace
from argparse import ArgumentDefaultsHelpFormatter, ArgumentParser

from lib import commands
from lib.config import load_config
from lib.directories import DATASET_DIR
from lib.errors import LensError
from lib.logger import setup_logging
from lib.tokenizer import Scheme

def add_common_arguments(parser):
    parser.add_argument("--config",
                        type=str,
                        default=None,
                        help="Path to a YAML run configuration. Defaults are used without it.")
    parser.add_argument("--seed",
                        type=int,
                        default=None,
                        help="Seed of every stochastic step. Overrides the config and LENS_SEED.")
    parser.add_argument("--log-file",
                        type=str,
                        default=None,
                        help="Also write the log to this file.")
    parser.add_argument("--device",
                        type=str,
                        default="cpu",
                        help="Torch device.")

def add_path_arguments(parser, *names):
    """Flags overriding the artifact paths of the configuration."""

    helps = {"archive": "Flow archive (JSON-lines).",
             "vocab": "Vocabulary file.",
             "corpus": "Pre-training corpus file.",
             "checkpoint": "Model checkpoint."}
    for name in names:
        parser.add_argument(f"--{name}", type=str, default=None, help=helps[name])

def build_parser():
    parser = ArgumentParser(description=__doc__,
                            formatter_class=ArgumentDefaultsHelpFormatter)
    subparsers = parser.add_subparsers(dest="command", required=True)
    sub = lambda name, help: subparsers.add_parser(name, help=help, formatter_class=ArgumentDefaultsHelpFormatter)

    p = sub("ingest", "Extract and anonymize the flows of pcap files.")
    p.add_argument("inputs", type=str, nargs="*", help="Pcap files or directories of pcap files.")
    p.add_argument("-o", "--archive", type=str, default=None, help="Output flow archive.")
    p.add_argument("--report", type=str, default=None, help="Output ingest report (JSON).")
    p.add_argument("--n-jobs", type=int, default=1, help="Number of files parsed in parallel.")

    p = sub("make-dataset", "Build the train/test datasets of a downstream task.")
    p.add_argument("--task", type=str, required=True, help="Name of a configured task.")
    p.add_argument("-o", "--output-dir", type=str, default=None, help="Output directory.")
    add_path_arguments(p, "archive")

    p = sub("train-tokenizer", "Build a vocabulary.")
    p.add_argument("--scheme", type=str, default=None, choices=[s.value for s in Scheme],
                   help="Tokenization scheme.")
    p.add_argument("--target-size", type=int, default=None, help="Size of a WordPiece vocabulary.")
    p.add_argument("-o", "--vocab", type=str, default=None, help="Output vocabulary file.")
    add_path_arguments(p, "archive")

    p = sub("build-corpus", "Sample the pre-training tasks over the flows.")
    p.add_argument("-o", "--corpus", type=str, default=None, help="Output corpus file.")
    p.add_argument("--n-jobs", type=int, default=None, help="Number of parallel workers.")
    add_path_arguments(p, "archive", "vocab")

    for name, help in (("pretrain", "Pre-train a model on a corpus."),
                       ("sweep", "Pre-train one model per (alpha, beta) pair.")):
        p = sub(name, help)
        p.add_argument("--steps", type=int, default=None, help="Number of optimizer steps.")
        p.add_argument("--alpha", type=float, nargs="+", default=None, help="POP loss weight(s).")
        p.add_argument("--beta", type=float, nargs="+", default=None, help="HTP loss weight(s).")
        p.add_argument("--tasks", type=str, nargs="+", default=None, choices=["msp", "pop", "htp"],
                       help="Pre-training tasks kept in the objective.")
        p.add_argument("--dtype", type=str, default="float", choices=["float", "double"],
                       help="Parameter precision.")
        p.add_argument("--output", type=str, default=None, help="Output CSV of the sweep grid.")
        add_path_arguments(p, "corpus", "vocab")
        if name == "pretrain":
            p.add_argument("-o", "--checkpoint", type=str, default=None, help="Output checkpoint.")
            p.add_argument("--log", type=str, default=None, help="Output JSON-lines training log.")
            p.add_argument("--sweep", action="store_true", help="Run the (alpha, beta) sweep instead.")

    p = sub("finetune", "Fine-tune a checkpoint on a downstream task.")
    p.add_argument("--task", type=str, required=True, help="Name of a configured task.")
    p.add_argument("--dataset", type=str, required=True, help="Training split (JSON-lines).")
    p.add_argument("-o", "--output", type=str, default=None, help="Output checkpoint.")
    p.add_argument("--epochs", type=int, default=None, help="Number of epochs.")
    p.add_argument("--lr", type=float, default=None, help="Learning rate.")
    p.add_argument("--batch-size", type=int, default=None, help="Batch size.")
    p.add_argument("--train-fraction", type=float, default=1.0, help="Fraction of the training split used.")
    p.add_argument("--from-scratch", action="store_true", help="Start from a random initialization.")
    add_path_arguments(p, "checkpoint", "vocab")

    p = sub("evaluate", "Evaluate a fine-tuned checkpoint on a test split.")
    p.add_argument("--task", type=str, required=True, help="Name of a configured task.")
    p.add_argument("--dataset", type=str, required=True, help="Test split (JSON-lines).")
    p.add_argument("-o", "--output-dir", type=str, default=None, help="Report directory.")
    add_path_arguments(p, "checkpoint", "vocab")

    p = sub("verify", "Re-validate the input checksums embedded in artifacts.")
    p.add_argument("artifacts", type=str, nargs="+", help="Artifact files.")

    for p in subparsers.choices.values():
        add_common_arguments(p)
    return parser

def apply_overrides(args, config):
    """Flags win over the configuration file."""

    if args.seed is not None:
        config.seed = args.seed
    for name in ("archive", "vocab", "corpus", "checkpoint"):
        if getattr(args, name, None) is not None:
            setattr(config.paths, name, getattr(args, name))
    if getattr(args, "scheme", None) is not None:
        config.tokenizer.scheme = args.scheme
    if getattr(args, "target_size", None) is not None:
        config.tokenizer.target_size = args.target_size
    if getattr(args, "n_jobs", None) is not None and args.command == "build-corpus":
        config.corpus.n_jobs = args.n_jobs

    if args.command in ("pretrain", "sweep"):
        train = config.train
        if args.steps is not None:
            train = replace(train, total_steps=args.steps, warmup_steps=min(train.warmup_steps, args.steps))
        if args.tasks is not None:
            train = replace(train, tasks=args.tasks)
        config.train = train
        if args.alpha is not None:
            config.sweep.alpha = args.alpha
            config.model.alpha = args.alpha[0]
        if args.beta is not None:
            config.sweep.beta = args.beta
            config.model.beta = args.beta[0]
        args.sweep = args.command == "sweep" or args.sweep
    elif args.command == "finetune":
        overrides = {k: v for k, v in (("epochs", args.epochs), ("lr", args.lr), ("batch_size", args.batch_size))
                     if v is not None}
        config.finetune = replace(config.finetune, **overrides)
    elif args.command == "make-dataset" and args.output_dir is None:
        args.output_dir = os.path.join(DATASET_DIR, args.task)
    return config

def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_file)
    try:
        config = apply_overrides(args, load_config(args.config))
        handler = getattr(commands, "cmd_" + args.command.replace("-", "_"))
        handler(args, config)
    except LensError as e:
        logging.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except FileNotFoundError as e:
        logging.error(str(e))
        return 2
    return 0

if __name__=="__main__":
    sys.exit(main())
