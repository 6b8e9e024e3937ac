""" Shared test fixtures: Ethernet/IPv4 frames built byte by byte, capture files
written with dpkt (independent of the pcap reader under test), synthetic hex
units and small model configurations."""

import os
import socket
import struct
from functools import lru_cache

import dpkt
import numpy as np

from lib.model import ModelConfig
from lib.tokenizer import build_vanilla_vocab, train_wordpiece
from lib.traffic import HexUnit

SLOW_TESTS = bool(os.environ.get("LENS_SLOW_TESTS"))

ETH_SRC = bytes.fromhex("020000000001")
ETH_DST = bytes.fromhex("020000000002")
BASE_TS = 1_700_000_000

####################################################################################
# Frames

def tcp_header(sport, dport, seq=1, flags=0x18):
    return struct.pack("!HHIIBBHHH", sport, dport, seq, 0, 0x50, flags, 65535, 0x1234, 0)

def udp_header(sport, dport, payload_len):
    return struct.pack("!HHHH", sport, dport, 8 + payload_len, 0xabcd)

def ipv4_packet(src, dst, sport, dport, payload=b"", transport="TCP", frag=0, ident=1):
    if transport == "TCP":
        l4, proto = tcp_header(sport, dport), 6
    else:
        l4, proto = udp_header(sport, dport, len(payload)), 17
    total_length = 20 + len(l4) + len(payload)
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total_length, ident, frag, 64, proto, 0xbeef,
                     socket.inet_aton(src), socket.inet_aton(dst))
    return ip + l4 + payload

def ethernet_frame(ip_bytes, eth_type=0x0800, padding=0):
    return ETH_DST + ETH_SRC + struct.pack("!H", eth_type) + ip_bytes + bytes(padding)

def frame(src, dst, sport, dport, payload=b"", transport="TCP", **kwargs):
    padding = kwargs.pop("padding", 0)
    return ethernet_frame(ipv4_packet(src, dst, sport, dport, payload, transport, **kwargs), padding=padding)

def arp_frame():
    return ethernet_frame(bytes(28), eth_type=0x0806)

def session_frames(client, server, sport, dport, n_packets, transport="TCP", payload=b"\x00\x01\x02\x03"):
    """Alternating client -> server and server -> client packets."""

    frames = []
    for i in range(n_packets):
        if i % 2 == 0:
            frames.append(frame(client, server, sport, dport, payload + bytes([i]), transport))
        else:
            frames.append(frame(server, client, dport, sport, payload + bytes([i]), transport))
    return frames

####################################################################################
# Capture files

def write_pcap(path, frames, linktype=dpkt.pcap.DLT_EN10MB):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as outfile:
        writer = dpkt.pcap.Writer(outfile, linktype=linktype)
        for i, data in enumerate(frames):
            writer.writepkt(data, ts=BASE_TS + i / 1000)
    return path

def write_pcap_big_endian(path, frames):
    """Classic pcap with a big endian global header and record headers."""

    with open(path, "wb") as outfile:
        outfile.write(struct.pack(">IHHiIII", 0xa1b2c3d4, 2, 4, 0, 0, 65535, 1))
        for i, data in enumerate(frames):
            outfile.write(struct.pack(">IIII", BASE_TS, i * 1000, len(data), len(data)))
            outfile.write(data)
    return path

def write_labeled_pcaps(root, labels=("chat", "video"), flows_per_file=6, n_packets=3):
    """ One capture per label under root/<label>/. The first payload bytes of every
    packet depend on the label only."""

    paths = []
    for k, label in enumerate(labels):
        frames = []
        for f in range(flows_per_file):
            client = f"10.0.{k}.{f + 1}"
            payload = bytes([0x11 * (k + 1)] * 4) + bytes([f])
            frames += session_frames(client, "192.168.1.1", 40000 + f, 443, n_packets, "TCP", payload)
        paths.append(write_pcap(os.path.join(root, label, f"{label}.pcap"), frames))
    return paths

####################################################################################
# Synthetic traffic

def random_hex(rng, n_bytes):
    return rng.integers(0, 256, n_bytes, dtype=np.uint8).tobytes().hex()

def random_units(n, seed=0, min_packets=2, max_packets=3, header_bytes=8, max_payload_bytes=8, min_payload_bytes=0):
    rng = np.random.default_rng(seed)
    units = []
    for _ in range(n):
        t = int(rng.integers(min_packets, max_packets + 1))
        headers = tuple(random_hex(rng, header_bytes) for _ in range(t))
        payloads = tuple(random_hex(rng, int(rng.integers(min_payload_bytes, max_payload_bytes + 1))) for _ in range(t))
        units.append(HexUnit(headers, payloads))
    return units

@lru_cache(maxsize=1)
def small_vocab():
    return train_wordpiece(random_units(64, seed=1), 160)

def vanilla_vocab():
    return build_vanilla_vocab()

def tiny_config(vocab_size, **kwargs):
    values = dict(d_model=16, n_layers_enc=1, n_layers_dec=1, n_heads=2, d_ffn=32,
                  vocab_size=vocab_size, max_positions=128, dropout=0.0)
    values.update(kwargs)
    return ModelConfig(**values)
