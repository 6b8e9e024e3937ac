""" Reader for classic (libpcap) capture files. Both byte orders are handled;
pcapng is not supported."""

import struct
from dataclasses import dataclass

from ..errors import BadMagic, TruncatedRecord

PCAP_MAGIC = 0xa1b2c3d4
PCAP_MAGIC_SWAPPED = 0xd4c3b2a1
GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

LINKTYPE_ETHERNET = 1

@dataclass(frozen=True)
class RawPacket:
    """One pcap record: capture time, link type of the file and the captured bytes."""

    ts_sec: int
    ts_usec: int
    link_type: int
    data: bytes
    orig_len: int = 0

    @property
    def timestamp(self):
        return self.ts_sec + self.ts_usec / 1e6

def _byte_order(path, buf):
    """Returns the struct byte order prefix encoded by the global header magic."""

    if len(buf) < GLOBAL_HEADER_LEN:
        raise BadMagic(f"{path}: {len(buf)} bytes is too short for a pcap global header (offset 0)")
    magic = struct.unpack("<I", buf[:4])[0]
    if magic == PCAP_MAGIC:
        return "<"
    elif magic == PCAP_MAGIC_SWAPPED:
        return ">"
    raise BadMagic(f"{path}: unknown magic 0x{magic:08x} at offset 0, not a classic pcap file")

def parse_pcap(path):
    """ Reads every record of a classic pcap file, in file order. Raises BadMagic if
    the file does not start with a pcap global header and TruncatedRecord if a record
    header claims more bytes than remain in the file."""

    with open(path, "rb") as infile:
        buf = infile.read()

    order = _byte_order(path, buf)
    link_type = struct.unpack(order + "I", buf[20:24])[0]

    packets, offset = [], GLOBAL_HEADER_LEN
    while offset < len(buf):
        if offset + RECORD_HEADER_LEN > len(buf):
            raise TruncatedRecord(f"{path}: partial record header at offset {offset}")
        ts_sec, ts_usec, incl_len, orig_len = struct.unpack(order + "IIII", 
                                                buf[offset:offset + RECORD_HEADER_LEN])
        start = offset + RECORD_HEADER_LEN
        if start + incl_len > len(buf):
            raise TruncatedRecord(f"{path}: record at offset {offset} claims {incl_len} bytes, "
                                  f"only {len(buf) - start} remain")
        packets.append(RawPacket(ts_sec, ts_usec, link_type, buf[start:start + incl_len], orig_len))
        offset = start + incl_len
    return packets
