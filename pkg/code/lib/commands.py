""" Bodies of the lens.py subcommands. Every function takes the parsed arguments and
the run configuration, with flag values already applied to the configuration."""

import os
import json
import time
import logging
from dataclasses import replace

import pandas as pd

from .corpus import build_corpus, manifest_path, read_corpus, write_corpus
from .errors import ArtifactFormatError, ChecksumMismatch, ShapeMismatch
from .finetune import evaluate, finetune, make_dataset, read_dataset, write_dataset
from .model import (LensModel, load_checkpoint, msp_token_accuracy, pop_accuracy, htp_accuracy,
                    pretrain, read_checkpoint_header, save_checkpoint)
from .tokenizer import Scheme, Vocabulary, build_vanilla_vocab, parse_vocab_header, train_wordpiece
from .traffic import Granularity, ingest_paths, read_flow_archive, to_hex_unit, write_flow_archive
from .utils import file_checksum, format_time, get_fname, input_checksums, random_seed

def make_parent_dir(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)

def require_file(path, what):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: '{path}'")

####################################################################################
# Data preparation

def cmd_ingest(args, config):
    inputs = args.inputs or [config.paths.pcap_dir]
    for path in inputs:
        if not os.path.exists(path):
            raise FileNotFoundError(f"No such file or directory: '{path}'")
    start_time = time.time()
    flows, report = ingest_paths(inputs, n_jobs=args.n_jobs)
    archive = config.paths.archive
    make_parent_dir(archive)
    write_flow_archive(flows, archive, config.seed, input_checksums(inputs))

    report_path = args.report or os.path.splitext(archive)[0] + ".report.json"
    with open(report_path, "w") as outfile:
        json.dump(report.to_dict(), outfile, indent=4, sort_keys=True)
    logging.info(f"{report.flows:,} flows from {report.files} files written to {archive} "
                 f"in {format_time(time.time() - start_time)}")
    print(json.dumps(report.to_dict(), indent=4, sort_keys=True))
    return report

def load_archive(config):
    require_file(config.paths.archive, "Flow archive")
    _, flows = read_flow_archive(config.paths.archive)
    return flows

def cmd_make_dataset(args, config):
    task = config.task(args.task)
    train, test = make_dataset(load_archive(config), task, seed=config.seed)
    output_dir = args.output_dir
    os.makedirs(output_dir, exist_ok=True)
    for name, examples in (("train", train), ("test", test)):
        write_dataset(examples, os.path.join(output_dir, f"{name}.jsonl"))
    logging.info(f"Datasets written to {output_dir}")
    return train, test

def cmd_train_tokenizer(args, config):
    scheme = Scheme(config.tokenizer.scheme)
    if scheme == Scheme.VANILLA:
        vocab = build_vanilla_vocab()
        vocab = Vocabulary(vocab.tokens, scheme, seed=config.seed)
    else:
        units = [to_hex_unit(flow, Granularity.FLOW)[0] for flow in load_archive(config)]
        predefined = build_vanilla_vocab() if scheme == Scheme.WORDPIECE_PD else None
        vocab = train_wordpiece(units, config.tokenizer.target_size, predefined=predefined, seed=config.seed)
        vocab.inputs = input_checksums([config.paths.archive])
    make_parent_dir(config.paths.vocab)
    vocab.save(config.paths.vocab)
    logging.info(f"{vocab} saved to {config.paths.vocab}")
    return vocab

def load_vocab(config):
    require_file(config.paths.vocab, "Vocabulary")
    return Vocabulary.load(config.paths.vocab)

def cmd_build_corpus(args, config):
    vocab = load_vocab(config)
    units = [to_hex_unit(flow, Granularity.FLOW)[0] for flow in load_archive(config)]
    corpus_config = replace(config.corpus, max_positions=config.model.max_positions)
    examples = build_corpus(units, vocab, corpus_config, seed=config.seed)
    make_parent_dir(config.paths.corpus)
    manifest = write_corpus(examples, config.paths.corpus, vocab, config.seed,
                            inputs=input_checksums([config.paths.archive, config.paths.vocab]),
                            config=corpus_config.to_dict())
    print(json.dumps({k: manifest[k] for k in ("count", "pop_rate", "htp_rate", "htp_homologous_rate",
                                               "masked_token_fraction")}, indent=4))
    return manifest

####################################################################################
# Training

def load_corpus(config, vocab):
    require_file(config.paths.corpus, "Corpus")
    _, examples = read_corpus(config.paths.corpus, vocab)
    return examples

def new_model(config, vocab, dtype=None):
    """Seeds every generator and initializes a model bound to the vocabulary."""

    random_seed(config.seed)
    config.model.vocab_size = len(vocab)
    config.model.seed = config.seed
    model = LensModel(config.model)
    return model.double() if dtype == "double" else model

def load_model(config, vocab):
    require_file(config.paths.checkpoint, "Checkpoint")
    model, _ = load_checkpoint(config.paths.checkpoint)
    if model.config.vocab_size != len(vocab):
        raise ShapeMismatch(f"{config.paths.checkpoint} was trained with {model.config.vocab_size} tokens, "
                            f"the vocabulary has {len(vocab)}.")
    return model

def pretraining_metrics(model, examples):
    return {"msp_accuracy": msp_token_accuracy(model, examples),
            **pop_accuracy(model, examples),
            "htp_accuracy": htp_accuracy(model, examples)}

def cmd_pretrain(args, config):
    if args.sweep:
        return cmd_sweep(args, config)
    vocab = load_vocab(config)
    examples = load_corpus(config, vocab)
    model = new_model(config, vocab, args.dtype)
    checkpoint = config.paths.checkpoint
    make_parent_dir(checkpoint)
    log_path = args.log or os.path.splitext(checkpoint)[0] + ".log.jsonl"
    history = pretrain(model, examples, config.train, seed=config.seed, log_path=log_path, device=args.device)
    metrics = pretraining_metrics(model, examples)
    logging.info(f"Pre-training metrics: {metrics}")
    save_checkpoint(model, checkpoint, seed=config.seed,
                    inputs=input_checksums([config.paths.corpus, config.paths.vocab]),
                    extra={"train": config.train.to_dict(),
                           "final_loss": history[-1]["total"] if history else None,
                           "metrics": metrics})
    return history, metrics

def sweep_grid(config, vocab, examples, alphas, betas, dtype=None, device="cpu"):
    """ MSP accuracy after pre-training with every (alpha, beta) pair. Each cell starts
    from a freshly seeded model. Rows are beta values, columns alpha values."""

    grid = pd.DataFrame(index=pd.Index(betas, name="beta"), columns=pd.Index(alphas, name="alpha"), dtype=float)
    for beta in betas:
        for alpha in alphas:
            config.model.alpha, config.model.beta = alpha, beta
            model = new_model(config, vocab, dtype)
            pretrain(model, examples, config.train, seed=config.seed, device=device)
            grid.loc[beta, alpha] = msp_token_accuracy(model, examples)
            logging.info(f"alpha={alpha} beta={beta}: MSP accuracy {grid.loc[beta, alpha]:.4f}")
    return grid

def cmd_sweep(args, config):
    vocab = load_vocab(config)
    examples = load_corpus(config, vocab)
    grid = sweep_grid(config, vocab, examples, config.sweep.alpha, config.sweep.beta, args.dtype, args.device)
    output = getattr(args, "output", None) or os.path.join(config.paths.report_dir, "sweep.csv")
    make_parent_dir(output)
    grid.to_csv(output)
    print(grid.to_markdown())
    logging.info(f"Sweep grid saved to {output}")
    return grid

def cmd_finetune(args, config):
    vocab = load_vocab(config)
    task = config.task(args.task)
    require_file(args.dataset, "Dataset")
    examples = read_dataset(args.dataset)
    if args.from_scratch:
        model = new_model(config, vocab)
        pretrained = {}
    else:
        model = load_model(config, vocab)
        pretrained = input_checksums([config.paths.checkpoint])
    output = args.output or os.path.splitext(config.paths.checkpoint)[0] + f".{task.name}.ckpt"
    make_parent_dir(output)
    history = finetune(model, examples, task, vocab, config.finetune, seed=config.seed,
                       train_fraction=args.train_fraction, device=args.device,
                       log_path=os.path.splitext(output)[0] + ".log.jsonl")
    save_checkpoint(model, output, seed=config.seed,
                    inputs={**pretrained, **input_checksums([args.dataset, config.paths.vocab])},
                    extra={"task": task.to_dict(), "finetune": config.finetune.to_dict(),
                           "train_fraction": args.train_fraction, "from_scratch": args.from_scratch,
                           "epoch_losses": history})
    return model, history

def cmd_evaluate(args, config):
    vocab = load_vocab(config)
    task = config.task(args.task)
    require_file(args.dataset, "Dataset")
    model = load_model(config, vocab)
    report = evaluate(model, read_dataset(args.dataset), task, vocab, device=args.device)
    output_dir = args.output_dir or os.path.join(config.paths.report_dir, task.name)
    report.save(output_dir)
    print(json.dumps(report.metrics, indent=4, sort_keys=True))
    return report

####################################################################################
# Verification

def check_inputs(path, inputs):
    for input_path, checksum in sorted(inputs.items()):
        require_file(input_path, f"Input of {path}")
        if file_checksum(input_path) != checksum:
            raise ChecksumMismatch(f"{input_path} changed since {path} was produced.")

def artifact_inputs(path):
    """Reads the input checksums embedded in any artifact produced by the pipeline."""

    with open(path, "rb") as infile:
        start = infile.read(8)
    if start == b"LENSCKPT":
        header, _ = read_checkpoint_header(path)
        return header["inputs"]
    if start == b"LENSCORP":
        manifest_file = manifest_path(path)
        require_file(manifest_file, "Corpus manifest")
        with open(manifest_file) as infile:
            manifest = json.load(infile)
        if file_checksum(path) != manifest["checksum"]:
            raise ChecksumMismatch(f"{path} does not match the checksum of its manifest.")
        return manifest["inputs"]
    if start.startswith(b"#scheme="):
        with open(path, encoding="utf-8") as infile:
            meta = parse_vocab_header(path, infile.readline().rstrip("\n"))
        return json.loads(meta.get("inputs", "{}"))
    if start.startswith(b"{"):
        header, _ = read_flow_archive(path)
        return header["inputs"]
    raise ArtifactFormatError(f"{path} is not an artifact of the pipeline.")

def cmd_verify(args, config):
    for path in args.artifacts:
        require_file(path, "Artifact")
        inputs = artifact_inputs(path)
        check_inputs(path, inputs)
        logging.info(f"{path}: {len(inputs)} input checksums verified")
        print(f"OK {get_fname(path)}")
    return True
