import os
import json
import tempfile
import unittest

import pandas as pd
import torch
import yaml

import lens
from lib import commands
from lib.config import load_config
from lib.model import load_checkpoint
from lib.tokenizer import Vocabulary

from .fixtures import write_labeled_pcaps

def tiny_run_config(tmp):
    return {"seed": 3,
            "paths": {"pcap_dir": os.path.join(tmp, "pcaps"),
                      "archive": os.path.join(tmp, "flows.jsonl"),
                      "vocab": os.path.join(tmp, "lens.vocab"),
                      "corpus": os.path.join(tmp, "corpus.bin"),
                      "checkpoint": os.path.join(tmp, "lens.ckpt"),
                      "report_dir": os.path.join(tmp, "eval")},
            "tokenizer": {"scheme": "vanilla"},
            "corpus": {"n_jobs": 1},
            "model": {"d_model": 16, "n_layers_enc": 1, "n_layers_dec": 1, "n_heads": 2, "d_ffn": 32,
                      "max_positions": 256, "dropout": 0.0},
            "train": {"batch_size": 4, "lr": 1.0e-3, "warmup_steps": 0, "total_steps": 2},
            "finetune": {"batch_size": 4, "lr": 1.0e-3, "warmup_steps": 0, "epochs": 1, "tasks": ["msp"]},
            "tasks": [{"name": "service", "kind": "understanding", "description": "classify the service",
                       "label_space": ["chat", "video"]},
                      {"name": "pkt_len", "kind": "generation", "description": "generate the packet length",
                       "field": "pkt_len", "granularity": "packet"}]}

class TestCommandLine(unittest.TestCase):

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = tmp.name
        write_labeled_pcaps(os.path.join(self.tmp, "pcaps"))
        self.config_path = os.path.join(self.tmp, "run.yaml")
        with open(self.config_path, "w") as outfile:
            yaml.safe_dump(tiny_run_config(self.tmp), outfile)

    def path(self, *names):
        return os.path.join(self.tmp, *names)

    def run_lens(self, *argv):
        return lens.main(list(argv) + ["--config", self.config_path])

    def prepare(self):
        self.assertEqual(self.run_lens("ingest"), 0)
        self.assertEqual(self.run_lens("train-tokenizer"), 0)
        self.assertEqual(self.run_lens("build-corpus"), 0)

    def test_missing_input(self):
        self.assertEqual(self.run_lens("ingest", self.path("nowhere")), 2)

    def test_bad_scheme(self):
        with self.assertRaises(SystemExit) as context:
            self.run_lens("train-tokenizer", "--scheme", "bytes")
        self.assertEqual(context.exception.code, 2)

    def test_ingest_is_reproducible(self):
        self.assertEqual(self.run_lens("ingest", "-o", self.path("a.jsonl")), 0)
        self.assertEqual(self.run_lens("ingest", "-o", self.path("b.jsonl")), 0)
        with open(self.path("a.jsonl")) as a, open(self.path("b.jsonl")) as b:
            self.assertEqual(a.read(), b.read())
        with open(self.path("a.report.json")) as infile:
            report = json.load(infile)
        self.assertEqual((report["files"], report["flows"]), (2, 12))

    def test_pipeline(self):
        self.prepare()
        self.assertEqual(Vocabulary.load(self.path("lens.vocab")).scheme.value, "vanilla")

        self.assertEqual(self.run_lens("pretrain", "--steps", "2"), 0)
        with open(self.path("lens.log.jsonl")) as infile:
            records = [json.loads(line) for line in infile]
        self.assertEqual(len(records), 2)

        self.assertEqual(self.run_lens("sweep", "--alpha", "0.1", "0.2", "--beta", "0.1", "0.2",
                                       "--steps", "1", "--output", self.path("sweep.csv")), 0)
        grid = pd.read_csv(self.path("sweep.csv"), index_col=0)
        self.assertEqual(grid.shape, (2, 2))
        self.assertFalse(grid.isna().any().any())

        self.assertEqual(self.run_lens("verify", self.path("lens.vocab"), self.path("corpus.bin"),
                                       self.path("lens.ckpt")), 0)

        for task in ("service", "pkt_len"):
            self.assertEqual(self.run_lens("make-dataset", "--task", task, "-o", self.path("data", task)), 0)
            self.assertEqual(self.run_lens("finetune", "--task", task,
                                           "--dataset", self.path("data", task, "train.jsonl"),
                                           "-o", self.path(f"{task}.ckpt")), 0)
            self.assertEqual(self.run_lens("evaluate", "--task", task,
                                           "--dataset", self.path("data", task, "test.jsonl"),
                                           "--checkpoint", self.path(f"{task}.ckpt"),
                                           "-o", self.path("eval", task)), 0)
            with open(self.path("eval", task, "report.json")) as infile:
                report = json.load(infile)
            self.assertEqual(report["task"]["name"], task)
        self.assertTrue(os.path.isfile(self.path("eval", "pkt_len", "cdf.csv")))

    def run_service_pipeline(self):
        """Every stage of the service task. Returns the artifacts, checkpoints as state dicts."""

        self.prepare()
        self.assertEqual(self.run_lens("pretrain", "--steps", "2"), 0)
        self.assertEqual(self.run_lens("make-dataset", "--task", "service", "-o", self.path("data")), 0)
        self.assertEqual(self.run_lens("finetune", "--task", "service", "--dataset", self.path("data", "train.jsonl"),
                                       "-o", self.path("service.ckpt")), 0)
        self.assertEqual(self.run_lens("evaluate", "--task", "service", "--dataset", self.path("data", "test.jsonl"),
                                       "--checkpoint", self.path("service.ckpt"), "-o", self.path("eval")), 0)
        artifacts = {}
        for name in ("flows.jsonl", "lens.vocab", "corpus.bin", "data/train.jsonl", "data/test.jsonl",
                     "eval/report.json"):
            with open(self.path(name), "rb") as infile:
                artifacts[name] = infile.read()
        for name in ("lens.ckpt", "service.ckpt"):
            artifacts[name] = load_checkpoint(self.path(name))[0].state_dict()
        return artifacts

    def test_pipeline_is_deterministic(self):
        first, second = self.run_service_pipeline(), self.run_service_pipeline()
        for name, content in first.items():
            if name.endswith(".ckpt"):
                for key, tensor in content.items():
                    self.assertTrue(torch.equal(tensor, second[name][key]), f"{name}: {key}")
            else:
                self.assertEqual(content, second[name], name)

    def test_sweep_cells_are_independent(self):
        self.prepare()
        alphas, betas = ["0.1", "0.2"], ["0.1", "0.2"]
        self.assertEqual(self.run_lens("sweep", "--alpha", *alphas, "--beta", *betas, "--steps", "1",
                                       "--output", self.path("sweep.csv")), 0)
        grid = pd.read_csv(self.path("sweep.csv"), index_col=0)
        for alpha, beta in (("0.2", "0.1"), ("0.1", "0.2")):
            self.assertEqual(self.run_lens("sweep", "--alpha", alpha, "--beta", beta, "--steps", "1",
                                           "--output", self.path("cell.csv")), 0)
            cell = pd.read_csv(self.path("cell.csv"), index_col=0)
            self.assertEqual(cell.iloc[0, 0], grid.iloc[betas.index(beta), alphas.index(alpha)])

    def test_verify_detects_changed_inputs(self):
        self.prepare()
        self.assertEqual(self.run_lens("verify", self.path("corpus.bin")), 0)
        with open(self.path("flows.jsonl"), "a") as outfile:
            outfile.write("\n")
        self.assertEqual(self.run_lens("verify", self.path("corpus.bin")), 2)

    def test_evaluate_without_checkpoint(self):
        self.prepare()
        self.assertEqual(self.run_lens("make-dataset", "--task", "service", "-o", self.path("data")), 0)
        self.assertEqual(self.run_lens("evaluate", "--task", "service", "--dataset", self.path("data", "test.jsonl"),
                                       "--checkpoint", self.path("missing.ckpt")), 2)

    def test_unknown_task(self):
        self.prepare()
        self.assertEqual(self.run_lens("make-dataset", "--task", "os_detection"), 2)

    def test_zero_steps_keeps_initialization(self):
        self.prepare()
        self.assertEqual(self.run_lens("pretrain", "--steps", "0"), 0)
        model, _ = load_checkpoint(self.path("lens.ckpt"))
        config = load_config(self.config_path)
        initial = commands.new_model(config, Vocabulary.load(self.path("lens.vocab")))
        for name, tensor in initial.state_dict().items():
            self.assertTrue(torch.equal(tensor, model.state_dict()[name]), name)

if __name__ == "__main__":
    unittest.main()
