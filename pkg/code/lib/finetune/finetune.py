""" Prompted fine-tuning, greedy prediction and evaluation of a downstream task."""

import os
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .tasks import TaskKind, build_prompt
from ..errors import EmptyDataset, EmptyEvalSet
from ..metrics import (accuracy, distribution_report, dr, empirical_distribution, jsd,
                       macro_f1, tvd)
from ..model import AverageMeter, collate_prompts, make_optimizer, train_step
from ..tokenizer import decode_hex, hex_to_text, label_pieces, normalize_label

MAX_DECODE_LEN = 32
DEFAULT_PAYLOAD_WORDS = 64

def prompt_batches(prompts, targets, batch_size, order):
    for i in range(0, len(order), batch_size):
        rows = order[i:i + batch_size]
        yield collate_prompts([prompts[j] for j in rows], [targets[j] for j in rows])

def finetune(model, examples, task, vocab, train_config, seed=0, train_fraction=1.0,
             max_payload_words=DEFAULT_PAYLOAD_WORDS, device="cpu", log_path=None):
    """ Trains the decoder to emit the label text of every example for
    train_config.epochs epochs. With train_fraction < 1 only a seeded subset of
    the examples is used. Returns the per-epoch mean training losses."""

    if not examples:
        raise EmptyDataset(f"No training example for task '{task.name}'.")
    rng = np.random.default_rng(seed)
    if train_fraction < 1.0:
        n = max(1, int(round(train_fraction * len(examples))))
        examples = [examples[i] for i in sorted(rng.choice(len(examples), n, replace=False))]
    torch.manual_seed(seed)
    model.to(device)
    prompts = [build_prompt(task, e.unit, vocab, max_payload_words, model.config.max_positions) for e in examples]
    targets = [np.array(label_pieces(vocab, e.label)) for e in examples]
    optimizer = make_optimizer(model, train_config)

    history, step = [], 0
    logfile = open(log_path, "w") if log_path else None
    try:
        for epoch in range(train_config.epochs):
            loss_m = AverageMeter()
            batches = list(prompt_batches(prompts, targets, train_config.batch_size, rng.permutation(len(prompts))))
            for i in range(0, len(batches), train_config.grad_accum):
                micro_batches = [b.to(device) for b in batches[i:i + train_config.grad_accum]]
                record = train_step(model, micro_batches, optimizer, train_config, step, tasks=("msp",))
                loss_m.update(record["msp"], n=sum(len(b) for b in micro_batches))
                if logfile is not None:
                    logfile.write(json.dumps({"epoch": epoch, **record}) + "\n")
                step += 1
            history.append(loss_m.avg)
            logging.info(f"Epoch {epoch + 1}/{train_config.epochs} loss={loss_m.avg:.4f}")
    finally:
        if logfile is not None:
            logfile.close()
    return history

def predict_batch(model, prompts, vocab, max_len=MAX_DECODE_LEN, device="cpu"):
    """Greedy decoding of a list of prompts. Returns (text, truncated) pairs."""

    model.eval()
    model.to(device)
    generated, truncated = model.generate(collate_prompts(prompts).to(device), max_len=max_len)
    results = []
    for ids, cut in zip(generated.cpu().numpy(), truncated.cpu().numpy()):
        results.append((hex_to_text(decode_hex(vocab, ids)), bool(cut)))
    return results

def predict(model, prompt, vocab, max_len=MAX_DECODE_LEN, device="cpu"):
    return predict_batch(model, [prompt], vocab, max_len, device)[0][0]

@dataclass
class EvalReport:
    task: dict
    n_examples: int
    metrics: dict
    truncated: int
    predictions: list = field(default_factory=list)
    topk_table: object = None
    cdf_table: object = None

    def to_dict(self):
        return {"task": self.task, "n_examples": self.n_examples, "metrics": self.metrics,
                "truncated": self.truncated, "predictions": self.predictions}

    def save(self, out_dir):
        """Writes report.json, and topk.csv and cdf.csv for generation tasks."""

        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as outfile:
            json.dump(self.to_dict(), outfile, indent=4, sort_keys=True)
        if self.topk_table is not None:
            self.topk_table.to_csv(os.path.join(out_dir, "topk.csv"), index=False)
            self.cdf_table.to_csv(os.path.join(out_dir, "cdf.csv"), index=False)
        logging.info(f"Report saved to {out_dir}")

def generation_metrics(golds, preds, task, k=5):
    real, generated = empirical_distribution(golds), empirical_distribution(preds)
    kind = "ip" if task.field.value.endswith("ip") else "port" if task.field.value.endswith("port") else "len"
    metrics = {"jsd": jsd(real, generated),
               "tvd": tvd(real, generated),
               "dr": dr(preds, kind),
               "dr_real": dr(golds, kind)}
    return metrics, distribution_report(golds, preds, k)

def evaluate(model, examples, task, vocab, batch_size=32, max_payload_words=DEFAULT_PAYLOAD_WORDS,
             device="cpu", k=5):
    if not examples:
        raise EmptyEvalSet(f"No test example for task '{task.name}'.")
    prompts = [build_prompt(task, e.unit, vocab, max_payload_words, model.config.max_positions) for e in examples]
    outputs = []
    for i in range(0, len(prompts), batch_size):
        outputs += predict_batch(model, prompts[i:i + batch_size], vocab, device=device)
    preds = [text for text, _ in outputs]
    golds = [normalize_label(e.label) for e in examples]
    truncated = sum(cut for _, cut in outputs)
    if truncated:
        logging.warning(f"{truncated} predictions hit the {MAX_DECODE_LEN} token decoding cap.")

    topk, cdf = None, None
    if task.kind == TaskKind.UNDERSTANDING:
        metrics = {"accuracy": accuracy(preds, golds), "macro_f1": macro_f1(preds, golds, task.label_space)}
    else:
        metrics, (topk, cdf) = generation_metrics(golds, preds, task, k)
    logging.info(f"Task '{task.name}': " + ", ".join(f"{name}={value:.4f}" for name, value in metrics.items()))
    return EvalReport(task=task.to_dict(),
                      n_examples=len(examples),
                      metrics=metrics,
                      truncated=truncated,
                      predictions=[{"gold": g, "pred": p, "truncated": c} for g, (p, c) in zip(golds, outputs)],
                      topk_table=topk,
                      cdf_table=cdf)
