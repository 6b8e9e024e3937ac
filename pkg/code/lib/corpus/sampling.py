""" Samplers of the three pre-training tasks: masked span prediction (MSP), packet
order prediction (POP) and homologous traffic prediction (HTP). Every flow draws
from its own substream so the result does not depend on the processing order."""

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError, NotEnoughFlows
from ..tokenizer import TokenSeq
from ..utils import flow_rng

POP_STREAM, HTP_STREAM, MSP_STREAM = 1, 2, 3
MAX_POP_PACKETS = 3
MAX_SPANS = 100

HOMOLOGOUS, HETEROLOGOUS = 1, 0

@dataclass
class MSPAnnotation:
    spans: list = field(default_factory=list)  # (start, length, sentinel_index)
    decoder_target: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

@dataclass
class POPAnnotation:
    applied: bool = False
    permutation: tuple = ()         # permutation[j] = new slot of original packet j (1-based)
    original_position: tuple = ()   # original_position[s] = original packet in slot s (1-based)

    @property
    def same_position(self):
        return tuple(p == j for j, p in enumerate(self.permutation, start=1))

    @property
    def t(self):
        return len(self.permutation)

@dataclass
class HTPAnnotation:
    applied: bool = False
    label: int = HOMOLOGOUS
    partner_index: int = None

@dataclass
class PretrainExample:
    encoder_input: TokenSeq
    msp: MSPAnnotation
    pop: POPAnnotation
    htp: HTPAnnotation

    @property
    def z(self):
        """True when every packet comes from one flow."""
        return not (self.htp.applied and self.htp.label == HETEROLOGOUS)

    def pop_labels(self):
        """Original-position classes (0-based) of the first 3 packet slots, -1 where
        no label applies."""

        labels = [-1] * MAX_POP_PACKETS
        if self.z:
            for s, c in enumerate(self.pop.original_position[:MAX_POP_PACKETS]):
                labels[s] = c - 1
        return labels

    def htp_label(self):
        return self.htp.label if self.htp.applied else -1

####################################################################################
# Packet level helpers

def split_packets(seq, pkt_id):
    """Cuts a sequence after every <pkt> token. Returns the packet sequences and the tail."""

    ends = np.flatnonzero(seq.ids == pkt_id) + 1
    starts = np.concatenate([[0], ends[:-1]]).astype(int)
    packets = [seq.slice(s, e) for s, e in zip(starts, ends)]
    tail = seq.slice(ends[-1] if len(ends) else 0)
    return packets, tail

def join_packets(packets, tail):
    """Concatenates packets renumbering their packet ids by slot."""

    renumbered = []
    for k, packet in enumerate(packets, start=1):
        packet = packet.copy()
        packet.packet_ids[:] = k
        renumbered.append(packet)
    return TokenSeq.concat(renumbered + [tail])

####################################################################################
# Masked span prediction

def sample_msp(seq, rng, vocab, mask_rate=0.15, max_span=5, max_spans=MAX_SPANS):
    """ Scans the sequence left to right in chunks of uniform length 1..max_span, cut
    short at reserved tokens, and masks every chunk with probability mask_rate. Each
    masked chunk becomes one sentinel in the encoder input; the decoder target is
    [s0, span0, s1, span1, ..., </s>]. A draw without any masked chunk masks one
    random token instead."""

    ids = seq.ids
    eligible = np.array([not vocab.is_reserved(int(i)) for i in ids], dtype=bool)
    if not eligible.any():
        raise InputError("The sequence has no maskable token.")

    spans, i, n = [], 0, len(ids)
    while i < n:
        if not eligible[i]:
            i += 1
            continue
        length = int(rng.integers(1, max_span + 1))
        stop = i + 1
        while stop < min(i + length, n) and eligible[stop]:
            stop += 1
        if rng.random() < mask_rate and len(spans) < max_spans:
            spans.append((i, stop - i, len(spans)))
        i = stop
    if not spans:
        candidates = np.flatnonzero(eligible)
        spans.append((int(candidates[rng.integers(len(candidates))]), 1, 0))
    return mask_spans(seq, spans, vocab)

def mask_spans(seq, spans, vocab):
    pieces, target, cursor = [], [], 0
    for start, length, j in spans:
        pieces.append(seq.slice(cursor, start))
        sentinel = vocab.sentinel_id(j)
        pieces.append(TokenSeq([sentinel], seq.header_mask[start:start + 1], seq.packet_ids[start:start + 1]))
        target += [sentinel] + seq.ids[start:start + length].tolist()
        cursor = start + length
    pieces.append(seq.slice(cursor))
    target.append(vocab.end_id)
    return TokenSeq.concat(pieces), MSPAnnotation(spans, np.array(target, dtype=np.int64))

def restore_msp(masked, annotation, vocab):
    """Puts the spans of the decoder target back in place of their sentinels."""

    span_ids, current = {}, None
    for i in annotation.decoder_target.tolist():
        if i in vocab.sentinel_ids:
            current = span_ids.setdefault(i, [])
        elif i != vocab.end_id and current is not None:
            current.append(i)
    restored = []
    for i in masked.ids.tolist():
        restored += span_ids[i] if i in span_ids else [i]
    return np.array(restored, dtype=np.int64)

####################################################################################
# Packet order prediction

def identity_pop(packet_count):
    t = min(packet_count, MAX_POP_PACKETS)
    identity = tuple(range(1, t + 1))
    return POPAnnotation(False, identity, identity)

def shuffle_packets(seq, permutation, pkt_id):
    """Moves original packet j to slot permutation[j]; later packets stay in place."""

    packets, tail = split_packets(seq, pkt_id)
    t = len(permutation)
    original_position = [0] * t
    for j, slot in enumerate(permutation, start=1):
        original_position[slot - 1] = j
    shuffled = [packets[c - 1] for c in original_position] + packets[t:]
    return join_packets(shuffled, tail), tuple(original_position)

def sample_pop_flow(seq, rng, vocab, rate):
    packet_count = int(np.sum(seq.ids == vocab.pkt_id))
    selected = rng.random() < rate
    if not selected or packet_count < 2:
        return seq, identity_pop(packet_count)
    t = min(packet_count, MAX_POP_PACKETS)
    identity = tuple(range(1, t + 1))
    candidates = [p for p in itertools.permutations(identity) if p != identity]
    permutation = candidates[int(rng.integers(len(candidates)))]
    shuffled, original_position = shuffle_packets(seq, permutation, vocab.pkt_id)
    return shuffled, POPAnnotation(True, tuple(permutation), original_position)

def sample_pop(flows, vocab, rate=0.15, seed=0, indices=None):
    """ Selects every flow with probability rate (flows with at least 2 packets only)
    and shuffles its first min(t, 3) packets with a uniform non-identity permutation.
    Returns the (possibly shuffled) sequences and their annotations. Flows left
    unshuffled get identity labels (original_position 1..t), and the POP loss still
    supervises them whenever the example has z = 1."""

    assert 0 < rate < 1, "POP rate must be in (0, 1)."
    indices = range(len(flows)) if indices is None else indices
    results = [sample_pop_flow(seq, flow_rng(seed, i, POP_STREAM), vocab, rate) for i, seq in zip(indices, flows)]
    return [r[0] for r in results], [r[1] for r in results]

####################################################################################
# Homologous traffic prediction

def subflows(seq, pkt_id):
    """Splits a flow at its packet midpoint, the first subflow holding ceil(t/2) packets."""

    packets, tail = split_packets(seq, pkt_id)
    middle = (len(packets) + 1) // 2
    return packets[:middle], packets[middle:], tail

def sample_htp(flows, vocab, rate=0.30, seed=0, excluded=(), heterologous_rate=0.5):
    """ Of the flows not in excluded, selects multi-packet ones with probability rate.
    A selected flow is rebuilt with probability heterologous_rate from its first
    subflow and the second subflow of a random other flow (label 0), otherwise it
    is kept intact (label 1). Partners always contribute their original packets."""

    excluded = set(excluded)
    eligible = [i for i in range(len(flows)) if i not in excluded]
    if len(eligible) < 2:
        raise NotEnoughFlows(f"HTP needs at least 2 flows outside POP, got {len(eligible)}.")
    multi_packet = [i for i, seq in enumerate(flows) if np.sum(seq.ids == vocab.pkt_id) >= 2]

    seqs, annotations = list(flows), [HTPAnnotation() for _ in flows]
    for i in eligible:
        rng = flow_rng(seed, i, HTP_STREAM)
        selected = rng.random() < rate
        heterologous = rng.random() < heterologous_rate
        if not selected or np.sum(flows[i].ids == vocab.pkt_id) < 2:
            continue
        if not heterologous:
            annotations[i] = HTPAnnotation(True, HOMOLOGOUS, None)
            continue
        partners = [j for j in multi_packet if j != i]
        if not partners:
            raise NotEnoughFlows("No other multi-packet flow can provide a second subflow.")
        j = partners[int(rng.integers(len(partners)))]
        first, _, tail = subflows(flows[i], vocab.pkt_id)
        _, second, _ = subflows(flows[j], vocab.pkt_id)
        seqs[i] = join_packets(first + second, tail)
        annotations[i] = HTPAnnotation(True, HETEROLOGOUS, j)
    return seqs, annotations
