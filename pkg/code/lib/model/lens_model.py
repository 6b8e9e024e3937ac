""" Encoder-decoder transformer over traffic tokens. The encoder input embedding is
the sum of the token, position, header-region and packet embeddings; the decoder
embeds tokens and positions only. Three heads read the hidden states: the language
model head on the decoder, the packet order head at the first three <pkt> tokens
and the homology head at </s>."""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .batch import PAD_ID, END_ID
from .config import ModelConfig
from .transformer import DecoderBlock, EncoderBlock, causal_mask, padding_mask, _LAYER_NORM
from ..errors import IdOutOfRange, PositionOverflow, ShapeMismatch

N_POP_CLASSES = 3

@dataclass
class LensOutput:
    lm_logits: torch.Tensor     # [M, L', V]
    pop_logits: torch.Tensor    # [M, 3, 3]
    htp_logits: torch.Tensor    # [M, 2]
    encoder_hidden: torch.Tensor
    decoder_hidden: torch.Tensor

class LensModel(nn.Module):

    def __init__(self, config=None):
        super().__init__()
        self.config = config or ModelConfig()
        c = self.config
        self.token_table = nn.Embedding(c.vocab_size, c.d_model)
        self.position_table = nn.Embedding(c.max_positions, c.d_model)
        self.header_table = nn.Embedding(2, c.d_model)
        self.packet_table = nn.Embedding(c.max_packets + 1, c.d_model)
        self.dropout = nn.Dropout(c.dropout)

        self.encoder = nn.ModuleList([EncoderBlock(c.d_model, c.n_heads, c.d_ffn, c.dropout)
                                      for _ in range(c.n_layers_enc)])
        self.encoder_norm = _LAYER_NORM(c.d_model)
        self.decoder = nn.ModuleList([DecoderBlock(c.d_model, c.n_heads, c.d_ffn, c.dropout)
                                      for _ in range(c.n_layers_dec)])
        self.decoder_norm = _LAYER_NORM(c.d_model)

        self.lm_head = nn.Linear(c.d_model, c.vocab_size, bias=False)
        if c.tie_embeddings:
            self.lm_head.weight = self.token_table.weight
        self.pop_head = nn.Linear(c.d_model, N_POP_CLASSES)
        self.htp_head = nn.Linear(c.d_model, 2)
        self.apply(self._init_weights)

    def _init_weights(self, m):
        if isinstance(m, nn.Linear):
            nn.init.trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.constant_(m.bias, 0)
        elif isinstance(m, nn.Embedding):
            nn.init.normal_(m.weight, std=0.02)
        elif isinstance(m, nn.LayerNorm):
            nn.init.constant_(m.bias, 0)
            nn.init.constant_(m.weight, 1.0)

    def check_inputs(self, ids, packet_ids=None):
        c = self.config
        if ids.shape[1] > c.max_positions:
            raise PositionOverflow(f"Sequence length {ids.shape[1]} exceeds max_positions={c.max_positions}.")
        if ids.numel() and (ids.min() < 0 or ids.max() >= c.vocab_size):
            raise IdOutOfRange(f"Token ids must be in [0, {c.vocab_size}).")
        if packet_ids is not None:
            if packet_ids.shape != ids.shape:
                raise ShapeMismatch(f"packet_ids {tuple(packet_ids.shape)} != ids {tuple(ids.shape)}")
            if packet_ids.numel() and packet_ids.max() > c.max_packets:
                raise IdOutOfRange(f"Packet ids must be at most max_packets={c.max_packets}.")

    def embed(self, ids, header_mask, packet_ids):
        """Sum of the four encoder embeddings, dropout in training mode only."""

        self.check_inputs(ids, packet_ids)
        if header_mask.shape != ids.shape:
            raise ShapeMismatch(f"header_mask {tuple(header_mask.shape)} != ids {tuple(ids.shape)}")
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.token_table(ids) + self.position_table(positions)[None] + \
            self.header_table(header_mask.long()) + self.packet_table(packet_ids)
        return self.dropout(x)

    def embed_decoder(self, ids):
        self.check_inputs(ids)
        positions = torch.arange(ids.shape[1], device=ids.device)
        return self.dropout(self.token_table(ids) + self.position_table(positions)[None])

    def encode(self, batch):
        x = self.embed(batch.enc_ids, batch.header_mask, batch.packet_ids)
        mask = padding_mask(batch.enc_valid)
        for block in self.encoder:
            x = block(x, mask)
        return self.encoder_norm(x)

    def decode(self, dec_inputs, dec_valid, memory, enc_valid):
        if dec_inputs.shape[0] != memory.shape[0]:
            raise ShapeMismatch(f"Decoder batch {dec_inputs.shape[0]} != encoder batch {memory.shape[0]}")
        y = self.embed_decoder(dec_inputs)
        self_mask, cross_mask = causal_mask(dec_valid), padding_mask(enc_valid)
        for block in self.decoder:
            y = block(y, memory, self_mask, cross_mask)
        return self.decoder_norm(y)

    def lm_logits(self, hidden):
        if self.config.tie_embeddings:
            hidden = hidden * self.config.d_model ** -0.5
        return self.lm_head(hidden)

    def forward(self, batch):
        memory = self.encode(batch)
        # The start token is always attendable
        dec_valid = batch.dec_valid | first_column(batch.dec_valid)
        hidden = self.decode(batch.dec_inputs, dec_valid, memory, batch.enc_valid)
        rows = torch.arange(len(batch), device=memory.device)
        pkt_states = memory[rows[:, None], batch.pkt_positions.clamp(min=0)]
        end_states = memory[rows, batch.end_positions.clamp(min=0)]
        return LensOutput(lm_logits=self.lm_logits(hidden),
                          pop_logits=self.pop_head(pkt_states),
                          htp_logits=self.htp_head(end_states),
                          encoder_hidden=memory,
                          decoder_hidden=hidden)

    @torch.no_grad()
    def generate(self, batch, max_len=32):
        """ Greedy decoding until every row emitted </s> or max_len tokens. Returns
        the generated ids [M, <= max_len] (</s> included) and a per-row flag telling
        whether the row hit the length cap."""

        memory = self.encode(batch)
        M = len(batch)
        generated = torch.full((M, 1), PAD_ID, dtype=torch.long, device=memory.device)
        finished = torch.zeros(M, dtype=torch.bool, device=memory.device)
        for _ in range(max_len):
            valid = torch.ones_like(generated, dtype=torch.bool)
            hidden = self.decode(generated, valid, memory, batch.enc_valid)
            next_ids = self.lm_logits(hidden[:, -1]).argmax(dim=-1)
            next_ids = torch.where(finished, torch.full_like(next_ids, PAD_ID), next_ids)
            generated = torch.cat([generated, next_ids[:, None]], dim=1)
            finished |= next_ids == END_ID
            if finished.all():
                break
        return generated[:, 1:], ~finished

def first_column(valid):
    out = torch.zeros_like(valid)
    out[:, 0] = True
    return out
