""" Flow archive: the JSON-lines artifact produced by ingest. The first line is a
header record, every other line is one anonymized flow together with the 
pre-anonymization header fields of its packets."""

import os
import glob
import json
import logging

from joblib import Parallel, delayed

from .pcap import parse_pcap
from .flows import (FlowKey, IngestReport, PacketFields, ParsedPacket, SessionFlow, 
                    anonymize, extract_flows)
from ..errors import ArtifactFormatError
from ..utils import ARTIFACT_VERSION

ARCHIVE_FORMAT = "lens-flows"

def expand_pcap_paths(paths):
    """Expands directories into the sorted list of pcap files they contain."""

    pcap_paths = []
    for path in paths:
        if os.path.isdir(path):
            found = sorted(glob.glob(os.path.join(path, "**", "*.pcap"), recursive=True))
            logging.info(f"Found {len(found)} pcap files in {path}")
            pcap_paths.extend(found)
        elif os.path.isfile(path):
            pcap_paths.append(path)
        else:
            raise FileNotFoundError(f"No such file or directory: '{path}'")
    return pcap_paths

def ingest_file(path):
    """Parses one capture, extracts its flows and anonymizes them. The flow label is
    the name of the directory holding the capture."""

    report = IngestReport(files=1)
    label = os.path.basename(os.path.dirname(os.path.abspath(path)))
    flows = extract_flows(parse_pcap(path), report, source=os.path.basename(path), label=label)
    return [anonymize(flow) for flow in flows], report

def ingest_paths(paths, n_jobs=1):
    """ Ingests every capture under paths. Files are processed in parallel when
    n_jobs > 1 and merged in input order."""

    pcap_paths = expand_pcap_paths(paths)
    results = Parallel(n_jobs=n_jobs)(delayed(ingest_file)(path) for path in pcap_paths)
    flows, report = [], IngestReport()
    for file_flows, file_report in results:
        flows.extend(file_flows)
        report.merge(file_report)
    return flows, report

####################################################################################
# Serialization

def flow_to_record(flow):
    return {"source": flow.source,
            "label": flow.label,
            "key": [list(flow.key.endpoint_a), list(flow.key.endpoint_b), flow.key.transport],
            "anonymized": flow.anonymized,
            "packets": [{"header": p.header_bytes.hex(),
                         "payload": p.payload_bytes.hex(),
                         "index": p.index,
                         "fields": vars(p.fields)} for p in flow.packets]}

def flow_from_record(record):
    a, b, transport = record["key"]
    packets = tuple(ParsedPacket(header_bytes=bytes.fromhex(p["header"]),
                                 payload_bytes=bytes.fromhex(p["payload"]),
                                 index=p["index"],
                                 transport=transport,
                                 fields=PacketFields(**p["fields"])) for p in record["packets"])
    return SessionFlow(FlowKey(tuple(a), tuple(b), transport), packets, 
                       anonymized=record["anonymized"], 
                       source=record["source"], 
                       label=record["label"])

def write_flow_archive(flows, path, seed, inputs):
    header = {"format": ARCHIVE_FORMAT, "version": ARTIFACT_VERSION, "seed": seed, "inputs": inputs}
    with open(path, "w") as outfile:
        outfile.write(json.dumps(header, sort_keys=True) + "\n")
        for flow in flows:
            outfile.write(json.dumps(flow_to_record(flow), sort_keys=True) + "\n")

def read_flow_archive(path):
    """Returns the header record and the list of flows of an archive."""

    with open(path) as infile:
        header = json.loads(infile.readline() or "{}")
        if header.get("format") != ARCHIVE_FORMAT:
            raise ArtifactFormatError(f"{path} is not a flow archive.")
        flows = [flow_from_record(json.loads(line)) for line in infile if line.strip()]
    return header, flows
