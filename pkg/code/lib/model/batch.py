""" Padded tensor batches. Pre-training batches come from PretrainExamples,
fine-tuning batches from prompts and optional target ids."""

from dataclasses import dataclass, fields

import numpy as np
import torch

from ..tokenizer import END, PKT, SPECIAL_TOKENS

PAD_ID = 0
END_ID = SPECIAL_TOKENS.index(END)
PKT_ID = SPECIAL_TOKENS.index(PKT)
POP_SLOTS = 3

@dataclass
class Batch:
    enc_ids: torch.Tensor           # [M, L]
    enc_valid: torch.Tensor         # [M, L] bool
    header_mask: torch.Tensor       # [M, L] long
    packet_ids: torch.Tensor        # [M, L]
    dec_targets: torch.Tensor       # [M, L']
    pkt_positions: torch.Tensor     # [M, 3], -1 where the sequence has fewer packets
    end_positions: torch.Tensor     # [M], -1 without </s>
    pop_labels: torch.Tensor        # [M, 3], -1 = ignored
    htp_labels: torch.Tensor        # [M], -1 = ignored
    z: torch.Tensor                 # [M] bool

    def __len__(self):
        return self.enc_ids.shape[0]

    @property
    def dec_valid(self):
        return self.dec_targets != PAD_ID

    @property
    def dec_inputs(self):
        """Targets shifted right with <pad> as the start token."""

        inputs = torch.full_like(self.dec_targets, PAD_ID)
        inputs[:, 1:] = self.dec_targets[:, :-1]
        return inputs

    def to(self, device):
        return Batch(**{f.name: getattr(self, f.name).to(device) for f in fields(self)})

    def select(self, rows):
        return Batch(**{f.name: getattr(self, f.name)[rows] for f in fields(self)})

def pad_rows(rows, value=PAD_ID, dtype=np.int64):
    """Stacks 1-D arrays into a right-padded 2-D array."""

    width = max([len(r) for r in rows] + [1])
    out = np.full((len(rows), width), value, dtype=dtype)
    for i, row in enumerate(rows):
        out[i, :len(row)] = row
    return out

def structural_positions(ids):
    pkt = np.full(POP_SLOTS, -1, dtype=np.int64)
    found = np.flatnonzero(ids == PKT_ID)[:POP_SLOTS]
    pkt[:len(found)] = found
    ends = np.flatnonzero(ids == END_ID)
    return pkt, (ends[-1] if len(ends) else -1)

def collate(seqs, targets, pop_labels, htp_labels, z):
    ids = pad_rows([s.ids for s in seqs])
    valid = pad_rows([np.ones(len(s), dtype=bool) for s in seqs], value=False, dtype=bool)
    positions = [structural_positions(s.ids) for s in seqs]
    return Batch(enc_ids=torch.from_numpy(ids),
                 enc_valid=torch.from_numpy(valid),
                 header_mask=torch.from_numpy(pad_rows([s.header_mask.astype(np.int64) for s in seqs])),
                 packet_ids=torch.from_numpy(pad_rows([s.packet_ids for s in seqs])),
                 dec_targets=torch.from_numpy(pad_rows(targets)),
                 pkt_positions=torch.from_numpy(np.stack([p for p, _ in positions])),
                 end_positions=torch.tensor([e for _, e in positions], dtype=torch.long),
                 pop_labels=torch.tensor(pop_labels, dtype=torch.long).reshape(-1, POP_SLOTS),
                 htp_labels=torch.tensor(htp_labels, dtype=torch.long),
                 z=torch.tensor(z, dtype=torch.bool))

def collate_examples(examples):
    """Batch of PretrainExamples."""

    return collate([e.encoder_input for e in examples],
                   [e.msp.decoder_target for e in examples],
                   [e.pop_labels() for e in examples],
                   [e.htp_label() for e in examples],
                   [e.z for e in examples])

def collate_prompts(prompts, targets=None):
    """Batch of fine-tuning prompts. Without targets the decoder side holds a single <pad>."""

    n = len(prompts)
    targets = targets if targets is not None else [np.array([PAD_ID])] * n
    return collate(prompts, [np.asarray(t, dtype=np.int64) for t in targets],
                   [[-1] * POP_SLOTS] * n, [-1] * n, [False] * n)
