""" Pre-training loop, evaluation of the pre-training tasks and the finite
difference gradient check."""

import copy
import json
import time
import logging

import numpy as np
import torch

from .batch import collate_examples
from .loss import compute_losses
from .scheduler import apply_schedule
from ..errors import EmptyEvalSet, NonFiniteLoss
from ..utils import format_time

HEADS = ("token_table", "lm_head", "pop_head", "htp_head")

class AverageMeter(object):
    """Computes and stores the average and current value"""

    def __init__(self):
        self.reset()

    def reset(self):
        self.val = 0
        self.avg = 0
        self.sum = 0
        self.count = 0

    def update(self, val, n=1):
        self.val = val
        self.sum += val * n
        self.count += n
        self.avg = self.sum / self.count

def make_optimizer(model, train_config):
    """AdamW without weight decay on gains, biases and the embedding tables."""

    exclude = (
        lambda n, p: p.ndim < 2
        or "norm" in n
        or "bias" in n
        or "_table" in n
    )
    named_parameters = list(model.named_parameters())
    gain_or_bias_params = [p for n, p in named_parameters if exclude(n, p) and p.requires_grad]
    rest_params = [p for n, p in named_parameters if not exclude(n, p) and p.requires_grad]
    return torch.optim.AdamW(
        [{"params": gain_or_bias_params, "weight_decay": 0.0},
         {"params": rest_params, "weight_decay": train_config.weight_decay}],
        lr=train_config.lr,
    )

def head_grad_norms(model):
    norms = {}
    for name, p in model.named_parameters():
        head = name.split(".")[0]
        if head in HEADS and p.grad is not None:
            norms[head] = float(p.grad.norm())
    return norms

def train_step(model, micro_batches, optimizer, train_config, step, tasks=None):
    """ One optimizer step over grad_accum micro batches. The update of step s uses
    the learning rate of schedule step s + 1. Returns the log record."""

    tasks = tasks if tasks is not None else train_config.tasks
    model.train()
    optimizer.zero_grad()
    lr = apply_schedule(optimizer, train_config.lr, train_config.warmup_steps, step + 1)

    sums = {"msp": 0.0, "pop": 0.0, "htp": 0.0, "total": 0.0}
    for batch in micro_batches:
        losses = compute_losses(model, batch, tasks)
        (losses["total"] / len(micro_batches)).backward()
        for k in sums:
            sums[k] += float(losses[k]) / len(micro_batches)

    grads_finite = all(torch.isfinite(p.grad).all() for p in model.parameters() if p.grad is not None)
    if not grads_finite:
        raise NonFiniteLoss(f"Non-finite gradients at step {step}, head norms: {head_grad_norms(model)}")
    optimizer.step()
    if not all(torch.isfinite(p).all() for p in model.parameters()):
        raise NonFiniteLoss(f"Non-finite parameters after step {step}, head norms: {head_grad_norms(model)}")
    return {"step": step, "lr": lr, **sums}

def iterate_batches(examples, batch_size, rng, collate_fn):
    """Endless stream of batches, reshuffled every epoch."""

    while True:
        order = rng.permutation(len(examples))
        for i in range(0, len(order), batch_size):
            yield collate_fn([examples[j] for j in order[i:i + batch_size]])

def pretrain(model, examples, train_config, seed=0, log_path=None, device="cpu"):
    """ Pre-trains for train_config.total_steps optimizer steps and writes one JSON
    line {step, lr, msp, pop, htp, total} per step. Returns the records."""

    if not examples:
        raise EmptyEvalSet("Cannot pre-train on an empty corpus.")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model.to(device)
    dtype = next(model.parameters()).dtype
    optimizer = make_optimizer(model, train_config)
    batches = iterate_batches(examples, train_config.batch_size, rng, collate_examples)

    history, loss_m = [], AverageMeter()
    logfile = open(log_path, "w") if log_path else None
    start_time = time.monotonic()
    try:
        for step in range(train_config.total_steps):
            micro_batches = [next(batches).to(device) for _ in range(train_config.grad_accum)]
            record = train_step(model, micro_batches, optimizer, train_config, step)
            history.append(record)
            loss_m.update(record["total"], n=1)
            if logfile is not None:
                logfile.write(json.dumps(record) + "\n")
            if train_config.log_every and (step + 1) % train_config.log_every == 0:
                logging.info(f"Step {step + 1}/{train_config.total_steps} lr={record['lr']:.3e} "
                             f"msp={record['msp']:.4f} pop={record['pop']:.4f} htp={record['htp']:.4f} "
                             f"total={loss_m.val:.4f} ({loss_m.avg:.4f})")
    finally:
        if logfile is not None:
            logfile.close()
    logging.info(f"Pre-training took {format_time(time.monotonic() - start_time)} ({dtype})")
    return history

####################################################################################
# Evaluation of the pre-training tasks

@torch.no_grad()
def run_eval(model, examples, batch_size, device):
    if not examples:
        raise EmptyEvalSet("The evaluation set is empty.")
    model.eval()
    model.to(device)
    for i in range(0, len(examples), batch_size):
        batch = collate_examples(examples[i:i + batch_size]).to(device)
        yield batch, model(batch)

def msp_token_accuracy(model, examples, batch_size=32, device="cpu"):
    """Fraction of non-PAD decoder targets predicted by the argmax of the teacher-forced logits."""

    correct, total = 0, 0
    for batch, output in run_eval(model, examples, batch_size, device):
        valid = batch.dec_valid
        correct += int(((output.lm_logits.argmax(-1) == batch.dec_targets) & valid).sum())
        total += int(valid.sum())
    return correct / total if total else 0.0

def pop_accuracy(model, examples, batch_size=32, device="cpu"):
    """ 3-way original-position accuracy over every labeled packet slot, the same
    accuracy restricted to shuffled flows, and the derived binary same-position
    accuracy."""

    counts = {"correct": 0, "total": 0, "shuffled_correct": 0, "shuffled_total": 0, "same_correct": 0}
    for batch, output in run_eval(model, examples, batch_size, device):
        labels = batch.pop_labels.masked_fill(~batch.z[:, None], -1)
        labeled = labels >= 0
        predictions = output.pop_logits.argmax(-1)
        hits = (predictions == labels) & labeled
        slots = torch.arange(labels.shape[1], device=labels.device)[None]
        same_hits = ((predictions == slots) == (labels == slots)) & labeled
        shuffled = labeled & ((labels != slots) & labeled).any(dim=1, keepdim=True)
        counts["correct"] += int(hits.sum())
        counts["total"] += int(labeled.sum())
        counts["shuffled_correct"] += int((hits & shuffled).sum())
        counts["shuffled_total"] += int(shuffled.sum())
        counts["same_correct"] += int(same_hits.sum())
    ratio = lambda a, b: counts[a] / counts[b] if counts[b] else None
    return {"pop_accuracy": ratio("correct", "total"),
            "pop_shuffled_accuracy": ratio("shuffled_correct", "shuffled_total"),
            "same_position_accuracy": ratio("same_correct", "total")}

def htp_accuracy(model, examples, batch_size=32, device="cpu"):
    correct, total = 0, 0
    for batch, output in run_eval(model, examples, batch_size, device):
        labeled = batch.htp_labels >= 0
        correct += int(((output.htp_logits.argmax(-1) == batch.htp_labels) & labeled).sum())
        total += int(labeled.sum())
    return correct / total if total else None

####################################################################################
# Gradient check

def coordinate_rows(name, param, batch):
    """Rows of the embedding tables the batch actually reads."""

    if name in ("token_table.weight", "lm_head.weight"):
        ids = torch.cat([batch.enc_ids.flatten(), batch.dec_targets.flatten(), batch.dec_inputs.flatten()])
        return torch.unique(ids)
    if name == "position_table.weight":
        return torch.arange(max(batch.enc_ids.shape[1], batch.dec_targets.shape[1]))
    if name == "packet_table.weight":
        return torch.unique(batch.packet_ids)
    return None

def sample_coordinates(named_parameters, batch, n_coords, rng):
    per_param = max(2, -(-n_coords // len(named_parameters)))
    coords = []
    for name, param in named_parameters:
        rows = coordinate_rows(name, param, batch)
        for _ in range(per_param):
            if rows is not None:
                idx = (int(rows[rng.integers(len(rows))]), int(rng.integers(param.shape[1])))
            else:
                idx = tuple(int(rng.integers(s)) for s in param.shape)
            coords.append((name, param, idx))
    return coords

def grad_check(model, batch, epsilon=1e-5, n_coords=200, seed=0, tasks=("msp", "pop", "htp")):
    """ Compares the analytic gradient of the total loss with central finite
    differences on a double precision, dropout-free copy of the model. Returns the
    maximum relative error |a - n| / max(|a|, |n|, 1e-3) over at least n_coords
    coordinates covering every parameter tensor."""

    model = copy.deepcopy(model).double().eval()
    rng = np.random.default_rng(seed)
    named_parameters = list(model.named_parameters())

    model.zero_grad()
    compute_losses(model, batch, tasks)["total"].backward()
    coords = sample_coordinates(named_parameters, batch, n_coords, rng)

    max_error = 0.0
    with torch.no_grad():
        for name, param, idx in coords:
            analytic = float(param.grad[idx]) if param.grad is not None else 0.0
            original = float(param[idx])
            param[idx] = original + epsilon
            plus = float(compute_losses(model, batch, tasks)["total"])
            param[idx] = original - epsilon
            minus = float(compute_losses(model, batch, tasks)["total"])
            param[idx] = original
            numeric = (plus - minus) / (2 * epsilon)
            error = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)
            max_error = max(max_error, error)
    logging.info(f"Gradient check over {len(coords)} coordinates: max relative error {max_error:.3e}")
    return max_error
