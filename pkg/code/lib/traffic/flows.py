""" Groups parsed packets into bidirectional session flows and anonymizes them. 
A packet is kept from its IPv4 header on; the link-layer header and any Ethernet 
padding are dropped. Its header part is the IPv4 header plus the TCP/UDP header, 
everything after that is payload."""

import logging
import ipaddress
from collections import Counter
from dataclasses import dataclass, field, replace

import dpkt

from .pcap import LINKTYPE_ETHERNET
from ..errors import AlreadyAnonymized, EmptyFlow

TRANSPORTS = {dpkt.ip.IP_PROTO_TCP: "TCP", dpkt.ip.IP_PROTO_UDP: "UDP"}

# Byte ranges (relative to the start of the IPv4 header or of the transport header) 
# that anonymization resets to zero
IP_CHECKSUM = slice(10, 12)
IP_ADDRESSES = slice(12, 20)
PORTS = slice(0, 4)
TRANSPORT_CHECKSUM = {"TCP": slice(16, 18), "UDP": slice(6, 8)}

@dataclass(frozen=True, order=True)
class FlowKey:
    """Canonical bidirectional 5-tuple, endpoint_a <= endpoint_b."""

    endpoint_a: tuple
    endpoint_b: tuple
    transport: str

    @classmethod
    def canonical(cls, src, sport, dst, dport, transport):
        a, b = (src, sport), (dst, dport)
        # Compare addresses numerically so that "9.0.0.1" < "10.0.0.1"
        sort_key = lambda e: (int(ipaddress.IPv4Address(e[0])), e[1])
        if sort_key(b) < sort_key(a):
            a, b = b, a
        return cls(a, b, transport)

@dataclass(frozen=True)
class PacketFields:
    """Header field values before anonymization, the ground truth of the
    header-field generation tasks."""

    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    length: int

@dataclass(frozen=True)
class ParsedPacket:
    header_bytes: bytes
    payload_bytes: bytes
    index: int
    transport: str
    fields: PacketFields

    @property
    def ip_header_len(self):
        return (self.header_bytes[0] & 0x0F) * 4

    @property
    def data(self):
        return self.header_bytes + self.payload_bytes

@dataclass(frozen=True)
class SessionFlow:
    key: FlowKey
    packets: tuple
    anonymized: bool = False
    source: str = ""
    label: str = ""

    def __post_init__(self):
        if len(self.packets) == 0:
            raise EmptyFlow(f"Flow {self.key} has no packets.")

@dataclass
class IngestReport:
    files: int = 0
    packets: int = 0
    flows: int = 0
    skipped: int = 0
    reasons: Counter = field(default_factory=Counter)

    def skip(self, reason):
        self.skipped += 1
        self.reasons[reason] += 1

    def merge(self, other):
        self.files += other.files
        self.packets += other.packets
        self.flows += other.flows
        self.skipped += other.skipped
        self.reasons.update(other.reasons)

    def to_dict(self):
        return {"files": self.files, 
                "packets": self.packets, 
                "flows": self.flows, 
                "skipped": self.skipped, 
                "reasons": dict(sorted(self.reasons.items()))}

####################################################################################
# Dissection

def dissect(raw, index):
    """ Splits an Ethernet/IPv4/TCP|UDP frame into header and payload bytes. 
    Returns (ParsedPacket, FlowKey, None) or (None, None, reason) for frames 
    that are skipped."""

    if raw.link_type != LINKTYPE_ETHERNET:
        return None, None, "unsupported_link_type"
    try:
        eth = dpkt.ethernet.Ethernet(raw.data)
    except dpkt.UnpackError:
        return None, None, "truncated"
    if eth.type != dpkt.ethernet.ETH_TYPE_IP or getattr(eth, "vlan_tags", None):
        return None, None, "non_ipv4"

    ip = eth.data
    if not isinstance(ip, dpkt.ip.IP):
        # dpkt keeps the raw bytes when the IPv4 header does not decode
        if len(ip) and ip[0] >> 4 != 4:
            return None, None, "non_ipv4"
        return None, None, "truncated"
    if ip.v != 4:
        return None, None, "non_ipv4"
    ihl = ip.hl * 4
    datagram = raw.data[dpkt.ethernet.ETH_HDR_LEN:]
    if ihl < dpkt.ip.IP.__hdr_len__ or len(datagram) < ihl or ip.len < ihl:
        return None, None, "truncated"
    # Drop the Ethernet padding of short frames
    if ip.len <= len(datagram):
        datagram = datagram[:ip.len]
    if ip.mf or ip.offset:
        return None, None, "fragment"

    if ip.p not in TRANSPORTS:
        return None, None, "non_tcp_udp"
    segment = ip.data
    if ip.p == dpkt.ip.IP_PROTO_TCP:
        if not isinstance(segment, dpkt.tcp.TCP):
            return None, None, "truncated"
        l4_len = segment.off * 4
        if l4_len < dpkt.tcp.TCP.__hdr_len__:
            return None, None, "truncated"
    else:
        if not isinstance(segment, dpkt.udp.UDP):
            return None, None, "truncated"
        l4_len = dpkt.udp.UDP_HDR_LEN
    if len(datagram) < ihl + l4_len:
        return None, None, "truncated"

    src, dst = str(ipaddress.IPv4Address(ip.src)), str(ipaddress.IPv4Address(ip.dst))
    transport = TRANSPORTS[ip.p]
    packet = ParsedPacket(header_bytes=bytes(datagram[:ihl + l4_len]),
                          payload_bytes=bytes(datagram[ihl + l4_len:]),
                          index=index,
                          transport=transport,
                          fields=PacketFields(src, dst, segment.sport, segment.dport, ip.len))
    return packet, FlowKey.canonical(src, segment.sport, dst, segment.dport, transport), None

def extract_flows(packets, report=None, source="", label=""):
    """ Groups packets by canonical FlowKey. Packet order inside a flow follows the 
    capture order and flows are returned in order of first appearance. Skipped 
    packets are counted in the report."""

    report = report if report is not None else IngestReport()
    grouped = {}
    for index, raw in enumerate(packets):
        report.packets += 1
        packet, key, reason = dissect(raw, index)
        if packet is None:
            report.skip(reason)
            if reason == "truncated":
                logging.warning(f"{source or 'capture'}: packet {index} is shorter than its declared headers, skipped.")
            continue
        grouped.setdefault(key, []).append(packet)
    flows = [SessionFlow(key, tuple(pkts), source=source, label=label) for key, pkts in grouped.items()]
    report.flows += len(flows)
    return flows

####################################################################################
# Anonymization

def anonymize_header(header_bytes, transport):
    """Zeroes the IPv4 addresses, both ports, and the IP and transport checksums."""

    header = bytearray(header_bytes)
    ihl = (header[0] & 0x0F) * 4
    header[IP_CHECKSUM] = bytes(2)
    header[IP_ADDRESSES] = bytes(8)
    transport_header = header[ihl:]
    transport_header[PORTS] = bytes(4)
    transport_header[TRANSPORT_CHECKSUM[transport]] = bytes(2)
    header[ihl:] = transport_header
    return bytes(header)

def anonymize(flow):
    """Returns the flow with every endpoint reset to 0.0.0.0:0."""

    if flow.anonymized:
        raise AlreadyAnonymized(f"Flow {flow.key} from '{flow.source}' is already anonymized.")
    packets = tuple(replace(packet, header_bytes=anonymize_header(packet.header_bytes, packet.transport)) 
                    for packet in flow.packets)
    return replace(flow, packets=packets, anonymized=True)
