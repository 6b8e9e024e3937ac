""" Builds the pre-training corpus: encodes the flows, applies POP, HTP on the
flows POP left alone, then MSP on every resulting sequence."""

import logging
from dataclasses import dataclass, asdict

import numpy as np
from joblib import Parallel, delayed

from .sampling import MSP_STREAM, MAX_SPANS, PretrainExample, sample_htp, sample_msp, sample_pop
from ..errors import NotEnoughFlows
from ..tokenizer import encode, packet_token_limit
from ..traffic import MAX_FLOW_PACKETS
from ..utils import flow_rng

@dataclass
class CorpusConfig:
    pop_rate: float = 0.15
    htp_rate: float = 0.30
    heterologous_rate: float = 0.5
    mask_rate: float = 0.15
    max_span: int = 5
    max_spans: int = MAX_SPANS
    max_payload_words: int = 64
    # Sequence length of the model the corpus is built for
    max_positions: int = 512
    n_jobs: int = 1

    def to_dict(self):
        return asdict(self)

def chunks(n, n_chunks):
    bounds = np.linspace(0, n, max(1, n_chunks) + 1).astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

def encode_chunk(vocab, units, max_payload_words, max_packet_tokens):
    return [encode(vocab, unit, with_headers=True, max_payload_words=max_payload_words,
                   max_packet_tokens=max_packet_tokens) for unit in units]

def msp_chunk(vocab, seqs, indices, seed, config):
    return [sample_msp(seq, flow_rng(seed, i, MSP_STREAM), vocab, config.mask_rate, config.max_span, config.max_spans)
            for i, seq in zip(indices, seqs)]

def build_corpus(units, vocab, config=None, seed=0):
    """ Returns one PretrainExample per HexUnit. The result only depends on the
    units, the vocabulary, the rates and the seed, not on config.n_jobs."""

    config = config or CorpusConfig()
    if len(units) < 2:
        raise NotEnoughFlows(f"The corpus needs at least 2 flows, got {len(units)}.")
    parallel = Parallel(n_jobs=config.n_jobs)
    parts = chunks(len(units), config.n_jobs)

    # HTP joins packets of two flows, every packet gets an equal share of the positions
    max_packet_tokens = packet_token_limit(config.max_positions, MAX_FLOW_PACKETS)
    logging.info(f"Encoding {len(units):,} flows...")
    seqs = [seq for part in parallel(delayed(encode_chunk)(vocab, [units[i] for i in r], config.max_payload_words,
                                                           max_packet_tokens)
                                     for r in parts) for seq in part]

    shuffled, pop = sample_pop(seqs, vocab, config.pop_rate, seed)
    excluded = {i for i, annotation in enumerate(pop) if annotation.applied}
    recombined, htp = sample_htp(seqs, vocab, config.htp_rate, seed, excluded, config.heterologous_rate)
    inputs = [shuffled[i] if pop[i].applied else recombined[i] for i in range(len(seqs))]
    logging.info(f"POP applied to {len(excluded):,} flows, "
                 f"HTP to {sum(a.applied for a in htp):,} flows")

    logging.info("Masking spans...")
    masked = [m for part in parallel(delayed(msp_chunk)(vocab, [inputs[i] for i in r], r, seed, config)
                                     for r in parts) for m in part]
    return [PretrainExample(encoder_input, msp, pop[i], htp[i]) for i, (encoder_input, msp) in enumerate(masked)]

def corpus_statistics(examples):
    """Task counts and rates reported in the corpus manifest."""

    n = len(examples)
    pop_applied = sum(e.pop.applied for e in examples)
    htp_applied = sum(e.htp.applied for e in examples)
    homologous = sum(e.htp.applied and e.htp.label == 1 for e in examples)
    masked = sum(length for e in examples for _, length, _ in e.msp.spans)
    total = sum(len(e.encoder_input) - len(e.msp.spans) +
                sum(length for _, length, _ in e.msp.spans) for e in examples)
    return {"count": n,
            "pop_applied": pop_applied,
            "htp_applied": htp_applied,
            "htp_homologous": homologous,
            "both_applied": sum(e.pop.applied and e.htp.applied for e in examples),
            "pop_rate": pop_applied / n if n else 0.0,
            "htp_rate": htp_applied / (n - pop_applied) if n > pop_applied else 0.0,
            "htp_homologous_rate": homologous / htp_applied if htp_applied else 0.0,
            "masked_token_fraction": masked / total if total else 0.0,
            "spans": sum(len(e.msp.spans) for e in examples)}
