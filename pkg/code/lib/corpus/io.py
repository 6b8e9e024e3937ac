""" Binary corpus file. Layout (little endian):

    b"LENSCORP" | version u16 | seed u64 | vocab checksum 64 ascii | count u32
    count x [record length u32 | record]

A record holds n_enc, n_dec, n_spans (u32), t_pop (u8), flags (u8), partner (i32)
followed by the encoder ids (u32), header mask (u8), packet ids (u8), decoder
target ids (u32), spans (3 x u32 each), the POP permutation and the original
positions (u8 each). The flag bits are pop.applied, htp.applied, htp.label, z."""

import os
import json
import struct
import logging

import numpy as np

from .sampling import HTPAnnotation, MSPAnnotation, POPAnnotation, PretrainExample
from .builder import corpus_statistics
from ..errors import ArtifactFormatError, ChecksumMismatch
from ..tokenizer import TokenSeq
from ..utils import ARTIFACT_VERSION, file_checksum

MAGIC = b"LENSCORP"
HEADER = struct.Struct("<HQ64sI")
LENGTH = struct.Struct("<I")
FIXED = struct.Struct("<IIIBBi")

POP_APPLIED, HTP_APPLIED, HTP_LABEL, Z = 1, 2, 4, 8

def manifest_path(path):
    root, _ = os.path.splitext(path)
    return root + ".manifest.json"

def encode_example(example):
    seq, msp, pop, htp = example.encoder_input, example.msp, example.pop, example.htp
    flags = POP_APPLIED * pop.applied | HTP_APPLIED * htp.applied | \
        HTP_LABEL * bool(htp.label) | Z * example.z
    partner = -1 if htp.partner_index is None else htp.partner_index
    spans = np.array(msp.spans, dtype="<u4").reshape(-1, 3)
    return b"".join([FIXED.pack(len(seq), len(msp.decoder_target), len(spans), pop.t, flags, partner),
                     seq.ids.astype("<u4").tobytes(),
                     seq.header_mask.astype("u1").tobytes(),
                     seq.packet_ids.astype("u1").tobytes(),
                     msp.decoder_target.astype("<u4").tobytes(),
                     spans.tobytes(),
                     np.array(pop.permutation, dtype="u1").tobytes(),
                     np.array(pop.original_position, dtype="u1").tobytes()])

def decode_example(record):
    n_enc, n_dec, n_spans, t, flags, partner = FIXED.unpack_from(record)
    offset = FIXED.size

    def take(dtype, count):
        nonlocal offset
        array = np.frombuffer(record, dtype=dtype, count=count, offset=offset)
        offset += array.nbytes
        return array

    ids, header_mask, packet_ids = take("<u4", n_enc), take("u1", n_enc), take("u1", n_enc)
    target, spans = take("<u4", n_dec), take("<u4", 3 * n_spans).reshape(-1, 3)
    permutation, original_position = take("u1", t), take("u1", t)
    if offset != len(record):
        raise ArtifactFormatError(f"Corpus record has {len(record) - offset} trailing bytes.")
    return PretrainExample(
        encoder_input=TokenSeq(ids, header_mask, packet_ids),
        msp=MSPAnnotation([tuple(int(x) for x in span) for span in spans], target.astype(np.int64)),
        pop=POPAnnotation(bool(flags & POP_APPLIED), tuple(int(x) for x in permutation),
                          tuple(int(x) for x in original_position)),
        htp=HTPAnnotation(bool(flags & HTP_APPLIED), int(bool(flags & HTP_LABEL)),
                          None if partner < 0 else partner))

def write_corpus(examples, path, vocab, seed, inputs=None, config=None):
    """Writes the corpus file and its JSON manifest. Returns the manifest."""

    with open(path, "wb") as outfile:
        outfile.write(MAGIC + HEADER.pack(ARTIFACT_VERSION, seed, vocab.checksum().encode("ascii"), len(examples)))
        for example in examples:
            record = encode_example(example)
            outfile.write(LENGTH.pack(len(record)) + record)

    manifest = {"version": ARTIFACT_VERSION,
                "seed": seed,
                "vocab_checksum": vocab.checksum(),
                "vocab_scheme": vocab.scheme.value,
                "inputs": inputs or {},
                "config": config or {},
                "checksum": file_checksum(path),
                **corpus_statistics(examples)}
    with open(manifest_path(path), "w") as outfile:
        json.dump(manifest, outfile, indent=4, sort_keys=True)
    logging.info(f"Wrote {len(examples):,} examples to {path}")
    return manifest

def read_corpus_header(infile, path):
    magic = infile.read(len(MAGIC))
    if magic != MAGIC:
        raise ArtifactFormatError(f"{path} is not a corpus file (magic={magic!r}).")
    raw = infile.read(HEADER.size)
    if len(raw) != HEADER.size:
        raise ArtifactFormatError(f"{path} has a truncated header.")
    version, seed, checksum, count = HEADER.unpack(raw)
    if version != ARTIFACT_VERSION:
        raise ArtifactFormatError(f"{path} has version {version}, expected {ARTIFACT_VERSION}.")
    return {"version": version, "seed": seed, "vocab_checksum": checksum.decode("ascii"), "count": count}

def read_corpus(path, vocab=None):
    """ Returns the header and the examples of a corpus file. When a vocabulary is
    given, its checksum must match the one the corpus was built with."""

    with open(path, "rb") as infile:
        header = read_corpus_header(infile, path)
        if vocab is not None and vocab.checksum() != header["vocab_checksum"]:
            raise ChecksumMismatch(f"{path} was built with another vocabulary "
                                   f"({header['vocab_checksum'][:12]} != {vocab.checksum()[:12]}).")
        examples = []
        for _ in range(header["count"]):
            raw = infile.read(LENGTH.size)
            if len(raw) != LENGTH.size:
                raise ArtifactFormatError(f"{path} ends after {len(examples)} of {header['count']} records.")
            (length,) = LENGTH.unpack(raw)
            record = infile.read(length)
            if len(record) != length:
                raise ArtifactFormatError(f"{path} ends inside record {len(examples)}.")
            examples.append(decode_example(record))
    return header, examples
