import numpy as np


def _warmup_lr(base_lr, warmup_length, step):
    return base_lr * step / warmup_length


def inverse_sqrt_lr_at(base_lr, warmup_length, step):
    """Linear warmup to base_lr, then base_lr * sqrt(warmup_length / step)."""

    if warmup_length == 0:
        return base_lr
    if step < warmup_length:
        return _warmup_lr(base_lr, warmup_length, step)
    return float(base_lr * np.sqrt(warmup_length / step))


def apply_schedule(optimizer, base_lr, warmup_length, step):
    """Sets the rate of schedule step on every parameter group, with and without
    weight decay alike, and returns it."""

    lr = inverse_sqrt_lr_at(base_lr, warmup_length, step)
    for param_group in optimizer.param_groups:
        param_group["lr"] = lr
    return lr
