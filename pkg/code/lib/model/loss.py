import math

import torch
import torch.nn.functional as F

from .batch import PAD_ID
from ..errors import NonFiniteLoss

def masked_mean_nll(logits, labels, ignore_index):
    """Mean negative log-likelihood over the labels != ignore_index, 0 without any."""

    total = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), labels.reshape(-1),
                            ignore_index=ignore_index, reduction="sum")
    count = (labels != ignore_index).sum().clamp(min=1)
    return total / count

def loss_msp(lm_logits, dec_targets):
    """Mean NLL of the non-PAD decoder targets."""
    return masked_mean_nll(lm_logits, dec_targets, PAD_ID)

def loss_pop(pop_logits, labels, z):
    """Original-position cross-entropy over the labeled packet slots of the z=1 examples."""

    labels = labels.masked_fill(~z[:, None], -1)
    return masked_mean_nll(pop_logits, labels, -1)

def loss_htp(htp_logits, labels):
    """2-way cross-entropy averaged over the examples with a homology label."""
    return masked_mean_nll(htp_logits, labels, -1)

def total_loss(msp, pop, htp, alpha, beta):
    total = msp + alpha * pop + beta * htp
    value = float(total)
    if not math.isfinite(value):
        raise NonFiniteLoss(f"Non-finite loss: msp={float(msp)}, pop={float(pop)}, htp={float(htp)}")
    return total

def compute_losses(model, batch, tasks=("msp", "pop", "htp"), output=None):
    """ Runs the model (unless output is given) and returns the three component losses
    and their weighted total. Tasks left out of `tasks` contribute 0."""

    output = output if output is not None else model(batch)
    zero = output.lm_logits.new_zeros(())
    msp = loss_msp(output.lm_logits, batch.dec_targets) if "msp" in tasks else zero
    pop = loss_pop(output.pop_logits, batch.pop_labels, batch.z) if "pop" in tasks else zero
    htp = loss_htp(output.htp_logits, batch.htp_labels) if "htp" in tasks else zero
    config = model.config
    alpha = config.alpha if "pop" in tasks else 0.0
    beta = config.beta if "htp" in tasks else 0.0
    return {"msp": msp, "pop": pop, "htp": htp, "total": total_loss(msp, pop, htp, alpha, beta)}
