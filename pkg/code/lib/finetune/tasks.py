""" Downstream tasks and their labeled datasets. Understanding tasks predict the
class of a flow or packet, generation tasks predict one header field of a packet.
Both read a prompt "[task description] <tsk> [traffic]" and emit the label text."""

import json
import logging
from enum import Enum
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from ..errors import EmptyDataset, GranularityMismatch, InputError
from ..tokenizer import TokenSeq, encode, packet_token_limit, text_to_hex, word_pieces
from ..traffic import Granularity, HexUnit, to_hex_unit

TRAIN_FRACTION = 0.8  # 4:1 train/test split

class TaskKind(str, Enum):
    UNDERSTANDING = "understanding"
    GENERATION = "generation"

class HeaderField(str, Enum):
    SRC_IP = "src_ip"
    DST_IP = "dst_ip"
    SRC_PORT = "src_port"
    DST_PORT = "dst_port"
    PKT_LEN = "pkt_len"

@dataclass
class TaskSpec:
    name: str
    kind: TaskKind
    description: str
    label_space: list = dataclass_field(default_factory=list)
    field: HeaderField = None
    granularity: Granularity = Granularity.FLOW

    def __post_init__(self):
        self.kind = TaskKind(self.kind)
        self.granularity = Granularity(self.granularity)
        self.field = None if self.field is None else HeaderField(self.field)
        self.label_space = [str(label).strip().lower() for label in self.label_space]
        if not self.description.strip():
            raise InputError(f"Task '{self.name}' needs a non-empty description.")
        if self.kind == TaskKind.UNDERSTANDING and not self.label_space:
            raise InputError(f"Understanding task '{self.name}' needs a label space.")
        if self.kind == TaskKind.GENERATION:
            if self.field is None:
                raise InputError(f"Generation task '{self.name}' needs a header field.")
            if self.granularity != Granularity.PACKET:
                raise InputError(f"Generation task '{self.name}' works on packets.")

    def to_dict(self):
        return {"name": self.name, "kind": self.kind.value, "description": self.description,
                "label_space": self.label_space, "field": self.field and self.field.value,
                "granularity": self.granularity.value}

@dataclass(frozen=True)
class LabeledExample:
    unit: HexUnit
    label: str

####################################################################################
# Header field values

def field_value(fields, header_field):
    """Ground-truth text of a header field: dotted quad or decimal."""

    header_field = HeaderField(header_field)
    if header_field == HeaderField.PKT_LEN:
        return str(fields.length)
    return str(getattr(fields, header_field.value))

def mask_header_field(header_hex, header_field, transport):
    """ Zeroes the bytes of the field to predict. Addresses and ports are already
    zero after anonymization; the packet length lives in the IPv4 total length
    and, for UDP, in the UDP length."""

    header = bytearray.fromhex(header_hex)
    ihl = (header[0] & 0x0F) * 4
    header_field = HeaderField(header_field)
    if header_field == HeaderField.SRC_IP:
        header[12:16] = bytes(4)
    elif header_field == HeaderField.DST_IP:
        header[16:20] = bytes(4)
    elif header_field == HeaderField.SRC_PORT:
        header[ihl:ihl + 2] = bytes(2)
    elif header_field == HeaderField.DST_PORT:
        header[ihl + 2:ihl + 4] = bytes(2)
    else:
        header[2:4] = bytes(2)
        if transport == "UDP":
            header[ihl + 4:ihl + 6] = bytes(2)
    return header.hex()

####################################################################################
# Datasets

def understanding_examples(flows, task):
    examples = []
    for flow in flows:
        label = flow.label.strip().lower()
        if label not in task.label_space:
            continue
        examples += [LabeledExample(unit, label) for unit in to_hex_unit(flow, task.granularity)]
    return examples

def generation_examples(flows, task):
    examples = []
    for flow in flows:
        for unit, packet in zip(to_hex_unit(flow, Granularity.PACKET), flow.packets):
            header = mask_header_field(unit.headers[0], task.field, packet.transport)
            examples.append(LabeledExample(HexUnit((header,), unit.payloads, Granularity.PACKET),
                                           field_value(packet.fields, task.field)))
    return examples

def split_dataset(examples, seed=0, train_fraction=TRAIN_FRACTION):
    """Seeded shuffle then a 4:1 train/test split."""

    order = np.random.default_rng(seed).permutation(len(examples))
    n_train = int(round(train_fraction * len(examples)))
    return [examples[i] for i in order[:n_train]], [examples[i] for i in order[n_train:]]

def make_dataset(flows, task, seed=0):
    """Builds the labeled examples of a task from anonymized flows and splits them."""

    if task.kind == TaskKind.UNDERSTANDING:
        examples = understanding_examples(flows, task)
    else:
        examples = generation_examples(flows, task)
    if not examples:
        raise EmptyDataset(f"No flow provides an example for task '{task.name}'.")
    train, test = split_dataset(examples, seed)
    logging.info(f"Task '{task.name}': {len(train)} train and {len(test)} test examples")
    return train, test

def write_dataset(examples, path):
    with open(path, "w") as outfile:
        for example in examples:
            outfile.write(json.dumps({**example.unit.to_dict(), "label": example.label}, sort_keys=True) + "\n")

def read_dataset(path):
    with open(path) as infile:
        records = [json.loads(line) for line in infile if line.strip()]
    return [LabeledExample(HexUnit.from_dict(r), str(r["label"])) for r in records]

####################################################################################
# Prompts

def build_prompt(task, unit, vocab, max_payload_words=None, max_positions=None):
    """ "[description] <tsk> [traffic]". The description is hex-encoded text outside
    any packet; headers are left out for generation tasks. With max_positions the
    payloads are cut so that the prompt fits."""

    if unit.granularity != task.granularity:
        raise GranularityMismatch(f"Task '{task.name}' expects {task.granularity.value} units, "
                                  f"got a {unit.granularity.value} unit.")
    if not task.description.strip():
        raise InputError(f"Task '{task.name}' has an empty description.")
    description = [vocab.token_to_id(p) for p in word_pieces(vocab, text_to_hex(task.description))]
    prefix = TokenSeq(description + [vocab.tsk_id])
    max_packet_tokens = None
    if max_positions is not None:
        max_packet_tokens = packet_token_limit(max_positions, unit.packet_count, len(prefix))
    traffic = encode(vocab, unit, with_headers=task.kind == TaskKind.UNDERSTANDING,
                     max_payload_words=max_payload_words, max_packet_tokens=max_packet_tokens)
    return TokenSeq.concat([prefix, traffic])
