""" Hexadecimal serialization of anonymized flows. A HexUnit keeps the 
header/payload boundary of every packet it covers."""

import re
from enum import Enum
from dataclasses import dataclass

from ..errors import EmptyFlow, InputError

HEX_PATTERN = re.compile(r"\A(?:[0-9a-f]{2})*\Z")

class Granularity(str, Enum):
    FLOW = "flow"
    PACKET = "packet"

# First three packets of a flow, first five packets for packet level tasks
DEFAULT_MAX_PACKETS = {Granularity.FLOW: 3, Granularity.PACKET: 5}
MAX_FLOW_PACKETS = 3

@dataclass(frozen=True)
class HexUnit:
    headers: tuple
    payloads: tuple
    granularity: Granularity = Granularity.FLOW

    def __post_init__(self):
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        assert len(self.headers) == len(self.payloads), "Every packet needs a header and a payload."
        for hex_str in self.headers + self.payloads:
            if not HEX_PATTERN.match(hex_str):
                raise InputError(f"Not a lowercase even-length hex string: '{hex_str[:32]}'")
        if self.packet_count == 0:
            raise EmptyFlow("A HexUnit covers at least one packet.")
        if self.granularity == Granularity.PACKET and self.packet_count != 1:
            raise InputError(f"A packet unit encodes one packet, got {self.packet_count}.")
        if self.granularity == Granularity.FLOW and self.packet_count > MAX_FLOW_PACKETS:
            raise InputError(f"A flow unit covers at most {MAX_FLOW_PACKETS} packets, got {self.packet_count}.")

    @property
    def packet_count(self):
        return len(self.headers)

    @property
    def header_hex(self):
        return "".join(self.headers)

    @property
    def payload_hex(self):
        return "".join(self.payloads)

    @property
    def packets(self):
        return list(zip(self.headers, self.payloads))

    def packet_bytes(self):
        return [bytes.fromhex(h + p) for h, p in self.packets]

    def to_dict(self):
        """Dataset record layout: per-packet hex and header length in bytes."""
        return {"hex": [h + p for h, p in self.packets],
                "header_len_per_packet": [len(h) // 2 for h in self.headers],
                "granularity": self.granularity.value}

    @classmethod
    def from_dict(cls, record):
        hexes, header_lens = record["hex"], record["header_len_per_packet"]
        assert len(hexes) == len(header_lens), "hex and header_len_per_packet lengths differ."
        return cls(headers=tuple(h[:2 * n] for h, n in zip(hexes, header_lens)),
                   payloads=tuple(h[2 * n:] for h, n in zip(hexes, header_lens)),
                   granularity=record.get("granularity", Granularity.FLOW))

def to_hex_unit(flow, granularity=Granularity.FLOW, max_packets=None):
    """ Serializes an anonymized flow. FLOW granularity gives a single unit with the
    first max_packets packets (default 3), PACKET granularity gives one unit per 
    packet for the first max_packets packets (default 5)."""

    granularity = Granularity(granularity)
    if not flow.anonymized:
        raise InputError(f"Flow {flow.key} must be anonymized before serialization.")
    if len(flow.packets) == 0:
        raise EmptyFlow(f"Flow {flow.key} has no packets.")
    max_packets = max_packets or DEFAULT_MAX_PACKETS[granularity]

    packets = flow.packets[:max_packets]
    headers = tuple(p.header_bytes.hex() for p in packets)
    payloads = tuple(p.payload_bytes.hex() for p in packets)
    if granularity == Granularity.FLOW:
        return [HexUnit(headers, payloads, granularity)]
    return [HexUnit((h,), (p,), granularity) for h, p in zip(headers, payloads)]
