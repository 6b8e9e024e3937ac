""" Turns HexUnits into token sequences and back. Every packet becomes
[header pieces] <head> [payload pieces] <pkt> and the sequence ends with </s>."""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import PositionOverflow
from .vocabulary import CONTINUATION, RESERVED_TOKENS, Scheme, split_words
from .wordpiece import wordpiece_pieces

@dataclass(eq=False)
class TokenSeq:
    """Token ids with the header-region flag and the packet number of every position."""

    ids: np.ndarray
    header_mask: np.ndarray = field(default=None)
    packet_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.header_mask = np.zeros(len(self.ids), dtype=bool) if self.header_mask is None \
            else np.asarray(self.header_mask, dtype=bool)
        self.packet_ids = np.zeros(len(self.ids), dtype=np.int64) if self.packet_ids is None \
            else np.asarray(self.packet_ids, dtype=np.int64)
        assert len(self.ids) == len(self.header_mask) == len(self.packet_ids), \
            "ids, header_mask and packet_ids must have equal lengths."

    def __len__(self):
        return len(self.ids)

    def __eq__(self, other):
        return isinstance(other, TokenSeq) and np.array_equal(self.ids, other.ids) \
            and np.array_equal(self.header_mask, other.header_mask) \
            and np.array_equal(self.packet_ids, other.packet_ids)

    @property
    def positions(self):
        return np.arange(len(self.ids), dtype=np.int64)

    def slice(self, start, stop=None):
        return TokenSeq(self.ids[start:stop], self.header_mask[start:stop], self.packet_ids[start:stop])

    @classmethod
    def concat(cls, seqs):
        seqs = list(seqs)
        if not seqs:
            return cls(np.zeros(0, dtype=np.int64))
        return cls(np.concatenate([s.ids for s in seqs]),
                   np.concatenate([s.header_mask for s in seqs]),
                   np.concatenate([s.packet_ids for s in seqs]))

    def copy(self):
        return TokenSeq(self.ids.copy(), self.header_mask.copy(), self.packet_ids.copy())

def word_pieces(vocab, hex_str, max_words=None):
    """Token strings of one header or payload region."""

    words = split_words(hex_str)
    if max_words is not None:
        words = words[:max_words]
    if vocab.scheme == Scheme.VANILLA:
        return words
    return wordpiece_pieces(vocab, words)

def encode(vocab, unit, with_headers=True, max_payload_words=None, max_packet_tokens=None):
    """ Encodes a HexUnit. Headers and their <head> separator are left out when
    with_headers is False. Pieces missing from the vocabulary map to <unk>.
    With max_packet_tokens, the payload pieces of a packet are cut so that the
    packet, <head> and <pkt> included, takes at most that many tokens."""

    ids, header_mask, packet_ids = [], [], []
    for k, (header, payload) in enumerate(unit.packets, start=1):
        header_pieces = word_pieces(vocab, header) if with_headers else []
        payload_pieces = word_pieces(vocab, payload, max_payload_words)
        if max_packet_tokens is not None:
            budget = max_packet_tokens - len(header_pieces) - 1 - int(with_headers)
            if budget < 0:
                raise PositionOverflow(f"Packet {k} needs {len(header_pieces) + 1 + int(with_headers)} "
                                       f"tokens without payload, the limit is {max_packet_tokens}.")
            payload_pieces = payload_pieces[:budget]
        if with_headers:
            ids += [vocab.token_to_id(p) for p in header_pieces] + [vocab.head_id]
            header_mask += [True] * len(header_pieces) + [False]
            packet_ids += [k] * (len(header_pieces) + 1)
        ids += [vocab.token_to_id(p) for p in payload_pieces] + [vocab.pkt_id]
        header_mask += [False] * (len(payload_pieces) + 1)
        packet_ids += [k] * (len(payload_pieces) + 1)
    ids.append(vocab.end_id)
    header_mask.append(False)
    packet_ids.append(0)
    return TokenSeq(ids, header_mask, packet_ids)

def packet_token_limit(max_positions, n_packets, prefix_len=0):
    """Per-packet token budget that keeps any sequence of at most n_packets packets,
    a prefix of prefix_len tokens and </s> within max_positions."""
    return (max_positions - prefix_len - 1) // n_packets

def render_token(token):
    return token[len(CONTINUATION):] if token.startswith(CONTINUATION) else token

def decode(vocab, ids):
    """Concatenates the token strings, specials verbatim and continuation markers stripped."""
    return "".join(render_token(vocab.id_to_token(int(i))) for i in ids)

def decode_hex(vocab, ids):
    """Like decode but keeps only the hex pieces."""
    return "".join(render_token(vocab.id_to_token(int(i))) for i in ids if not vocab.is_reserved(int(i)))

####################################################################################
# Labels are emitted as hex-encoded text so that the traffic vocabulary suffices

def text_to_hex(text):
    return text.encode("utf-8").hex()

def hex_to_text(hex_str):
    """Inverse of text_to_hex, dropping the '0' padding of the last word. Returns
    the normalized (stripped, lowercase) text."""

    if len(hex_str) % 2:
        hex_str = hex_str[:-1]
    try:
        text = bytes.fromhex(hex_str).decode("utf-8", errors="replace")
    except ValueError:
        logging.warning(f"Could not decode '{hex_str[:32]}' as hex text.")
        return ""
    return normalize_label(text.rstrip("\x00"))

def normalize_label(text):
    return text.strip().lower()

def label_pieces(vocab, label):
    """Target ids for a label: its hex-encoded text followed by </s>."""
    return [vocab.token_to_id(p) for p in word_pieces(vocab, text_to_hex(label))] + [vocab.end_id]
