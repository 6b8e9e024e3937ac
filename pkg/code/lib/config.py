""" Run configuration: one YAML file loaded into dataclasses. Command-line flags
override the values of the file."""

import os
from dataclasses import dataclass, field, fields, asdict

import yaml

from .corpus import CorpusConfig
from .directories import (ARCHIVE_DIR, CORPUS_DIR, EVAL_DIR, MODELS_DIR, PCAP_DIR,
                          VOCAB_DIR)
from .errors import InputError
from .finetune import TaskSpec
from .model import ModelConfig, TrainConfig
from .utils import default_seed

@dataclass
class PathsConfig:
    pcap_dir: str = PCAP_DIR
    archive: str = os.path.join(ARCHIVE_DIR, "flows.jsonl")
    vocab: str = os.path.join(VOCAB_DIR, "lens.vocab")
    corpus: str = os.path.join(CORPUS_DIR, "corpus.bin")
    checkpoint: str = os.path.join(MODELS_DIR, "lens.ckpt")
    report_dir: str = EVAL_DIR

@dataclass
class TokenizerConfig:
    scheme: str = "vanilla"
    target_size: int = 2048

@dataclass
class SweepConfig:
    alpha: list = field(default_factory=lambda: [0.1, 0.2])
    beta: list = field(default_factory=lambda: [0.1, 0.2])

@dataclass
class RunConfig:
    seed: int = field(default_factory=default_seed)
    paths: PathsConfig = field(default_factory=PathsConfig)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(batch_size=32, lr=3e-5, warmup_steps=0,
                                                                      epochs=10, tasks=["msp"]))
    tasks: list = field(default_factory=list)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def task(self, name):
        for task in self.tasks:
            if task.name == name:
                return task
        raise InputError(f"Unknown task '{name}', configured tasks: {[t.name for t in self.tasks]}")

    def to_dict(self):
        values = asdict(self)
        values["tasks"] = [t.to_dict() for t in self.tasks]
        return values

def section(cls, values, name):
    if values is None:
        return cls()
    if not isinstance(values, dict):
        raise InputError(f"Config section '{name}' must be a mapping.")
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise InputError(f"Unknown keys in config section '{name}': {sorted(unknown)}")
    return cls(**values)

SECTIONS = {"paths": PathsConfig, "tokenizer": TokenizerConfig, "corpus": CorpusConfig,
            "model": ModelConfig, "train": TrainConfig, "finetune": TrainConfig, "sweep": SweepConfig}

def parse_config(values):
    values = dict(values or {})
    unknown = set(values) - set(SECTIONS) - {"seed", "tasks"}
    if unknown:
        raise InputError(f"Unknown config keys: {sorted(unknown)}")
    config = RunConfig()
    for name, cls in SECTIONS.items():
        if name in values:
            setattr(config, name, section(cls, values[name], name))
    if "seed" in values:
        config.seed = int(values["seed"])
    config.tasks = [section(TaskSpec, task, "tasks") for task in values.get("tasks") or []]
    return config

def load_config(path=None):
    """Reads a YAML run configuration, the defaults when path is None."""

    if path is None:
        return RunConfig()
    if not os.path.isfile(path):
        raise FileNotFoundError(f"No such config file: '{path}'")
    with open(path) as infile:
        try:
            values = yaml.safe_load(infile)
        except yaml.YAMLError as e:
            raise InputError(f"Cannot parse {path}: {e}")
    if values is not None and not isinstance(values, dict):
        raise InputError(f"{path} must hold a mapping of config sections.")
    return parse_config(values)
