import os
import json
import math
import tempfile
import unittest
from dataclasses import replace

import numpy as np
import torch
from parameterized import parameterized

from lib.corpus import CorpusConfig, build_corpus
from lib.errors import ArtifactFormatError, IdOutOfRange, NonFiniteLoss, PositionOverflow, ShapeMismatch
from lib.model import (LensModel, TrainConfig, apply_schedule, collate_examples, compute_losses, grad_check,
                       htp_accuracy, inverse_sqrt_lr_at, load_checkpoint, loss_htp, loss_msp, loss_pop,
                       make_optimizer, masked_mean_nll, msp_token_accuracy, pop_accuracy, pretrain, save_checkpoint,
                       total_loss, train_step)
from lib.utils import random_seed

from .fixtures import SLOW_TESTS, random_units, small_vocab, tiny_config

def corpus(n=16, seed=0, **config):
    config = CorpusConfig(**{"htp_rate": 0.9, **config})
    return build_corpus(random_units(n, seed=seed), small_vocab(), config, seed=seed)

def tiny_model(seed=0, **kwargs):
    random_seed(seed)
    return LensModel(tiny_config(len(small_vocab()), **kwargs))

class TestEmbedding(unittest.TestCase):

    def setUp(self):
        self.model = tiny_model().eval()
        self.batch = collate_examples(corpus(4))

    def test_sum_of_tables(self):
        b, m = self.batch, self.model
        x = m.embed(b.enc_ids, b.header_mask, b.packet_ids)
        positions = torch.arange(b.enc_ids.shape[1])
        expected = m.token_table(b.enc_ids) + m.position_table(positions)[None] + \
            m.header_table(b.header_mask) + m.packet_table(b.packet_ids)
        torch.testing.assert_close(x, expected)

    def test_header_flag(self):
        b, m = self.batch, self.model
        flipped = 1 - b.header_mask
        delta = m.embed(b.enc_ids, flipped, b.packet_ids) - m.embed(b.enc_ids, b.header_mask, b.packet_ids)
        diff = m.header_table.weight[1] - m.header_table.weight[0]
        torch.testing.assert_close(delta[0, 0], diff if b.header_mask[0, 0] == 0 else -diff)

    def test_position_overflow(self):
        ids = torch.full((1, 129), 100, dtype=torch.long)
        with self.assertRaises(PositionOverflow):
            self.model.embed(ids, torch.zeros_like(ids), torch.zeros_like(ids))

    @parameterized.expand([("token", 160, 0), ("packet", 100, 4)])
    def test_out_of_range(self, _, token, packet):
        ids = torch.full((1, 3), token, dtype=torch.long)
        with self.assertRaises(IdOutOfRange):
            self.model.embed(ids, torch.zeros_like(ids), torch.full_like(ids, packet))

    def test_shape_mismatch(self):
        ids = torch.full((1, 3), 100, dtype=torch.long)
        with self.assertRaises(ShapeMismatch):
            self.model.embed(ids, torch.zeros(1, 2, dtype=torch.long), torch.zeros_like(ids))

class TestLosses(unittest.TestCase):

    def test_total_loss(self):
        self.assertEqual(total_loss(1.0, 2.0, 3.0, 0.2, 0.2), 2.0)
        for alpha, beta in ((0.1, 0.3), (0.7, 0.05)):
            base = total_loss(1.5, 2.5, 3.5, 0.0, 0.0)
            self.assertAlmostEqual(total_loss(1.5, 2.5, 3.5, alpha, 0.0) - base, alpha * 2.5, delta=1e-12)
            self.assertAlmostEqual(total_loss(1.5, 2.5, 3.5, 0.0, beta) - base, beta * 3.5, delta=1e-12)

    @parameterized.expand([("nan", float("nan")), ("inf", float("inf"))])
    def test_non_finite(self, _, value):
        with self.assertRaises(NonFiniteLoss):
            total_loss(torch.tensor(value), torch.tensor(0.0), torch.tensor(0.0), 0.2, 0.2)

    @parameterized.expand([
        ("msp_uniform", lambda: loss_msp(torch.zeros(2, 4, 160), torch.tensor([[5, 9, 1, 0], [7, 0, 0, 0]])),
         math.log(160)),
        ("two_class", lambda: masked_mean_nll(torch.tensor([[[1.0, 0.0]]]), torch.tensor([[0]]), -1),
         0.3132617),
        ("pop_uniform", lambda: loss_pop(torch.zeros(2, 3, 3), torch.tensor([[0, 1, 2], [2, 0, -1]]),
                                         torch.tensor([True, True])), math.log(3)),
        ("htp_uniform", lambda: loss_htp(torch.zeros(3, 2), torch.tensor([0, 1, 1])), math.log(2)),
    ])
    def test_closed_form(self, _, loss, expected):
        self.assertAlmostEqual(float(loss()), expected, delta=1e-5)

    def test_empty_mask(self):
        logits = torch.randn(2, 3, 5)
        labels = torch.full((2, 3), -1)
        self.assertEqual(float(masked_mean_nll(logits, labels, -1)), 0.0)

    def test_pop_gate(self):
        logits = torch.randn(2, 3, 3)
        labels = torch.tensor([[1, 0, 2], [0, 1, -1]])
        z = torch.tensor([True, False])
        expected = torch.nn.functional.cross_entropy(logits[0], labels[0])
        torch.testing.assert_close(loss_pop(logits, labels, z), expected)

    def test_task_toggles(self):
        model = tiny_model()
        batch = collate_examples(corpus(8))
        msp_only = compute_losses(model.eval(), batch, tasks=("msp",))
        self.assertEqual(float(msp_only["pop"]), 0.0)
        self.assertEqual(float(msp_only["htp"]), 0.0)
        torch.testing.assert_close(msp_only["total"], msp_only["msp"])
        no_msp = compute_losses(model, batch, tasks=("pop", "htp"))
        c = model.config
        torch.testing.assert_close(no_msp["total"], c.alpha * no_msp["pop"] + c.beta * no_msp["htp"])

class TestHeadGradients(unittest.TestCase):

    def setUp(self):
        self.batch = collate_examples(corpus(8, seed=1))

    def head_grad(self, model, batch, head):
        model.zero_grad()
        compute_losses(model, batch)["total"].backward()
        return getattr(model, head).weight.grad

    def assert_zero(self, grad):
        self.assertTrue(grad is None or not grad.any())

    def test_gradients_reach_heads(self):
        model = tiny_model()
        self.assertTrue(self.batch.z.any() and (self.batch.htp_labels >= 0).any())
        self.assertTrue(self.head_grad(model, self.batch, "pop_head").any())
        self.assertTrue(self.head_grad(model, self.batch, "htp_head").any())

    def test_pop_head_without_z(self):
        batch = replace(self.batch, z=torch.zeros_like(self.batch.z))
        self.assert_zero(self.head_grad(tiny_model(), batch, "pop_head"))

    def test_pop_head_without_alpha(self):
        self.assert_zero(self.head_grad(tiny_model(alpha=0.0), self.batch, "pop_head"))

    def test_htp_head_without_labels(self):
        batch = replace(self.batch, htp_labels=torch.full_like(self.batch.htp_labels, -1))
        self.assert_zero(self.head_grad(tiny_model(), batch, "htp_head"))

class TestSchedule(unittest.TestCase):

    @parameterized.expand([(0, 0.0), (2, 0.5), (4, 1.0), (16, 0.5), (64, 0.25)])
    def test_inverse_sqrt(self, step, lr):
        self.assertAlmostEqual(inverse_sqrt_lr_at(1.0, 4, step), lr)

    def test_constant_without_warmup(self):
        self.assertEqual(inverse_sqrt_lr_at(3e-5, 0, 0), 3e-5)
        self.assertEqual(inverse_sqrt_lr_at(3e-5, 0, 1000), 3e-5)

    def test_apply_schedule(self):
        model = tiny_model()
        optimizer = make_optimizer(model, TrainConfig(lr=1e-3, weight_decay=0.01))
        self.assertEqual(apply_schedule(optimizer, 1e-3, 4, 16), 5e-4)
        self.assertEqual([group["lr"] for group in optimizer.param_groups], [5e-4, 5e-4])
        self.assertEqual([group["weight_decay"] for group in optimizer.param_groups], [0.0, 0.01])

    def test_step_uses_next_rate(self):
        model = tiny_model()
        config = TrainConfig(batch_size=4, lr=1e-3, warmup_steps=10, total_steps=20)
        batch = collate_examples(corpus(4))
        record = train_step(model, [batch], make_optimizer(model, config), config, step=0)
        self.assertAlmostEqual(record["lr"], 1e-4)
        self.assertEqual(set(record), {"step", "lr", "msp", "pop", "htp", "total"})

class TestAttention(unittest.TestCase):

    def setUp(self):
        self.model = tiny_model().eval()
        self.examples = corpus(6)

    def test_decoder_is_causal(self):
        batch = collate_examples(self.examples[:2])
        memory = self.model.encode(batch)
        inputs = batch.dec_inputs.clone()
        valid = torch.ones_like(inputs, dtype=torch.bool)
        before = self.model.decode(inputs, valid, memory, batch.enc_valid)
        k = inputs.shape[1] // 2
        inputs[:, k:] = 7
        after = self.model.decode(inputs, valid, memory, batch.enc_valid)
        torch.testing.assert_close(before[:, :k], after[:, :k])
        self.assertFalse(torch.allclose(before[:, k:], after[:, k:]))

    def test_padding_invariance(self):
        lengths = [len(e.encoder_input) for e in self.examples]
        short = int(np.argmin(lengths))
        alone = collate_examples([self.examples[short]])
        padded = collate_examples(self.examples)
        with torch.no_grad():
            a, b = self.model(alone), self.model(padded)
        n, m = alone.enc_ids.shape[1], alone.dec_targets.shape[1]
        torch.testing.assert_close(a.encoder_hidden[0], b.encoder_hidden[short, :n], atol=1e-5, rtol=1e-4)
        torch.testing.assert_close(a.lm_logits[0], b.lm_logits[short, :m], atol=1e-5, rtol=1e-4)
        torch.testing.assert_close(a.htp_logits[0], b.htp_logits[short], atol=1e-5, rtol=1e-4)

    def test_eval_is_deterministic(self):
        batch = collate_examples(self.examples)
        with torch.no_grad():
            a, b = self.model(batch), self.model(batch)
        for name in ("lm_logits", "pop_logits", "htp_logits"):
            torch.testing.assert_close(getattr(a, name), getattr(b, name), rtol=0, atol=0)

    def test_row_permutation(self):
        batch = collate_examples(self.examples)
        rows = torch.tensor([3, 0, 5, 1, 4, 2])
        with torch.no_grad():
            a, b = self.model(batch), self.model(batch.select(rows))
        for name in ("lm_logits", "pop_logits", "htp_logits"):
            torch.testing.assert_close(getattr(a, name)[rows], getattr(b, name), atol=1e-5, rtol=1e-4)

    def test_generate(self):
        batch = collate_examples(self.examples[:3])
        ids, truncated = self.model.generate(batch, max_len=5)
        self.assertEqual(ids.shape[0], 3)
        self.assertLessEqual(ids.shape[1], 5)
        self.assertEqual(truncated.dtype, torch.bool)

class TestGradCheck(unittest.TestCase):

    def test_gradients(self):
        model = tiny_model(dropout=0.1)
        batch = collate_examples(corpus(6, seed=1))
        self.assertTrue((batch.htp_labels >= 0).any())
        self.assertLess(grad_check(model, batch, n_coords=200), 1e-4)
        # The original model keeps its precision and mode
        self.assertEqual(next(model.parameters()).dtype, torch.float32)
        self.assertTrue(model.training)

class TestTraining(unittest.TestCase):

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = tmp.name
        self.examples = corpus(16, seed=2)
        self.config = TrainConfig(batch_size=4, lr=1e-3, warmup_steps=2, total_steps=3)

    def test_log(self):
        log_path = os.path.join(self.tmp, "log.jsonl")
        history = pretrain(tiny_model(), self.examples, self.config, seed=0, log_path=log_path)
        with open(log_path) as infile:
            records = [json.loads(line) for line in infile]
        self.assertEqual(len(records), 3)
        self.assertEqual(records, history)
        self.assertEqual([r["step"] for r in records], [0, 1, 2])

    def test_deterministic(self):
        runs = []
        for _ in range(2):
            model = tiny_model(seed=5).double()
            runs.append((pretrain(model, self.examples, self.config, seed=1), model.state_dict()))
        self.assertEqual(runs[0][0], runs[1][0])
        for name, tensor in runs[0][1].items():
            torch.testing.assert_close(tensor, runs[1][1][name], rtol=0, atol=0)

    def test_zero_steps(self):
        model = tiny_model()
        before = {k: v.clone() for k, v in model.state_dict().items()}
        config = TrainConfig(batch_size=4, warmup_steps=0, total_steps=0)
        self.assertEqual(pretrain(model, self.examples, config), [])
        for name, tensor in model.state_dict().items():
            torch.testing.assert_close(tensor, before[name], rtol=0, atol=0)

    def test_metrics(self):
        model = tiny_model()
        self.assertTrue(0.0 <= msp_token_accuracy(model, self.examples) <= 1.0)
        accuracies = pop_accuracy(model, self.examples)
        self.assertTrue(0.0 <= accuracies["pop_accuracy"] <= 1.0)
        self.assertTrue(0.0 <= accuracies["same_position_accuracy"] <= 1.0)
        self.assertTrue(0.0 <= htp_accuracy(model, self.examples) <= 1.0)

    def test_step_decreases_loss(self):
        model = tiny_model(seed=4)
        batch = collate_examples(self.examples[:8])
        config = TrainConfig(batch_size=8, lr=1e-3, warmup_steps=0, total_steps=1)
        with torch.no_grad():
            before = float(compute_losses(model.eval(), batch)["total"])
        train_step(model, [batch], make_optimizer(model, config), config, step=0)
        with torch.no_grad():
            after = float(compute_losses(model.eval(), batch)["total"])
        self.assertLess(after, before)

    def test_untrained_accuracy_is_chance(self):
        vocab_size = len(small_vocab())
        for seed in range(3):
            self.assertLessEqual(msp_token_accuracy(tiny_model(seed=seed).eval(), self.examples), 20 / vocab_size)

    @unittest.skipUnless(SLOW_TESTS, "set LENS_SLOW_TESTS=1 to run")
    def test_overfit(self):
        examples = corpus(32, seed=3)
        random_seed(0)
        model = LensModel(tiny_config(len(small_vocab()), d_model=64, n_layers_enc=2, n_layers_dec=2,
                                      n_heads=4, d_ffn=256))
        config = TrainConfig(batch_size=32, lr=3e-3, warmup_steps=100, total_steps=2000, log_every=200)
        pretrain(model, examples, config, seed=0)
        self.assertGreaterEqual(msp_token_accuracy(model, examples), 0.95)
        self.assertGreaterEqual(pop_accuracy(model, examples)["pop_accuracy"], 0.90)

class TestCheckpoint(unittest.TestCase):

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.path = os.path.join(tmp.name, "model.ckpt")

    def test_round_trip(self):
        model = tiny_model(seed=3)
        save_checkpoint(model, self.path, seed=3, inputs={"corpus": "abc"}, extra={"final_loss": 1.5})
        loaded, header = load_checkpoint(self.path)
        self.assertEqual(header["seed"], 3)
        self.assertEqual(header["inputs"], {"corpus": "abc"})
        self.assertEqual(header["extra"]["final_loss"], 1.5)
        self.assertEqual(loaded.config, model.config)
        for name, tensor in model.state_dict().items():
            torch.testing.assert_close(loaded.state_dict()[name], tensor, rtol=0, atol=0)
        # Tied weights stay tied
        self.assertIs(loaded.lm_head.weight, loaded.token_table.weight)

    def test_bad_magic(self):
        with open(self.path, "wb") as outfile:
            outfile.write(b"NOTACHECKPOINT")
        with self.assertRaises(ArtifactFormatError):
            load_checkpoint(self.path)

if __name__ == "__main__":
    unittest.main()
