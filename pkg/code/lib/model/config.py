from dataclasses import dataclass, field, asdict, fields

from ..errors import InputError

TASKS = ("msp", "pop", "htp")

class ConfigMixin:

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise InputError(f"Unknown {cls.__name__} keys: {sorted(unknown)}")
        return cls(**values)

@dataclass
class ModelConfig(ConfigMixin):
    """Desk-scale defaults. The full-scale model uses d_model=768, 12+12 layers,
    12 heads and d_ffn=2048."""

    d_model: int = 128
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    n_heads: int = 4
    d_ffn: int = 512
    vocab_size: int = 65642
    max_positions: int = 512
    max_packets: int = 3
    dropout: float = 0.1
    alpha: float = 0.2
    beta: float = 0.2
    tie_embeddings: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise InputError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}.")
        if self.alpha < 0 or self.beta < 0:
            raise InputError("Loss weights alpha and beta must be non-negative.")

@dataclass
class TrainConfig(ConfigMixin):
    batch_size: int = 16
    grad_accum: int = 1
    lr: float = 1e-3
    warmup_steps: int = 100
    total_steps: int = 1000
    weight_decay: float = 0.01
    epochs: int = 10
    tasks: list = field(default_factory=lambda: list(TASKS))
    log_every: int = 1

    def __post_init__(self):
        if self.lr <= 0:
            raise InputError(f"Learning rate must be positive, got {self.lr}.")
        if self.warmup_steps > self.total_steps:
            raise InputError(f"warmup_steps={self.warmup_steps} exceeds total_steps={self.total_steps}.")
        if self.batch_size < 1 or self.grad_accum < 1:
            raise InputError("batch_size and grad_accum must be at least 1.")
        unknown = set(self.tasks) - set(TASKS)
        if unknown:
            raise InputError(f"Unknown pre-training tasks: {sorted(unknown)}")
