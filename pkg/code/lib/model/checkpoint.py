""" Checkpoint file: b"LENSCKPT" | version u16 | header length u32 | JSON header |
tensor data. The header holds the model config, the seed, the input checksums and
the manifest of (name, shape, offset) of every tensor, stored as little endian
float32 in manifest order."""

import json
import struct
import logging

import numpy as np
import torch

from .config import ModelConfig
from .lens_model import LensModel
from ..errors import ArtifactFormatError
from ..utils import ARTIFACT_VERSION

MAGIC = b"LENSCKPT"
HEADER = struct.Struct("<HI")

def save_checkpoint(model, path, seed=0, inputs=None, extra=None):
    state = model.state_dict()
    manifest, blobs, offset = [], [], 0
    for name, tensor in state.items():
        blob = tensor.detach().cpu().to(torch.float32).numpy().astype("<f4").tobytes()
        manifest.append([name, list(tensor.shape), offset])
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"config": model.config.to_dict(),
                         "seed": seed,
                         "inputs": inputs or {},
                         "manifest": manifest,
                         "extra": extra or {}}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as outfile:
        outfile.write(MAGIC + HEADER.pack(ARTIFACT_VERSION, len(header)) + header)
        for blob in blobs:
            outfile.write(blob)
    logging.info(f"Saved checkpoint with {len(manifest)} tensors to {path}")

def read_checkpoint_header(path):
    with open(path, "rb") as infile:
        magic = infile.read(len(MAGIC))
        if magic != MAGIC:
            raise ArtifactFormatError(f"{path} is not a checkpoint (magic={magic!r}).")
        raw = infile.read(HEADER.size)
        if len(raw) != HEADER.size:
            raise ArtifactFormatError(f"{path} has a truncated header.")
        version, header_len = HEADER.unpack(raw)
        if version != ARTIFACT_VERSION:
            raise ArtifactFormatError(f"{path} has version {version}, expected {ARTIFACT_VERSION}.")
        header = json.loads(infile.read(header_len).decode("utf-8"))
        data = infile.read()
    return header, data

def load_checkpoint(path):
    """Returns the model rebuilt from its config and weights, and the header."""

    header, data = read_checkpoint_header(path)
    model = LensModel(ModelConfig.from_dict(header["config"]))
    state = {}
    for name, shape, offset in header["manifest"]:
        count = int(np.prod(shape))
        if offset + 4 * count > len(data):
            raise ArtifactFormatError(f"{path} is truncated inside tensor {name}.")
        array = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        state[name] = torch.from_numpy(array.copy())
    model.load_state_dict(state)
    return model, header
