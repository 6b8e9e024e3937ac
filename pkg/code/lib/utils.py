import os
import time
import random
import hashlib

import numpy as np
import torch

from .directories import SEED_ENV_VAR
from .errors import InputError

ARTIFACT_VERSION = 1

def get_fname(path):
    """Returns the file name without the extension."""
    return os.path.splitext(os.path.basename(path))[0]

def file_checksum(path, chunk_size=1 << 20):
    """Returns the sha256 hex digest of a file's content."""

    digest = hashlib.sha256()
    with open(path, "rb") as infile:
        for chunk in iter(lambda: infile.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()

def text_checksum(text):
    """Returns the sha256 hex digest of a string."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()

def input_checksums(paths):
    """Maps each input path to the checksum of its content. Directories are
    expanded to the files they contain."""

    checksums = {}
    for path in paths:
        if os.path.isdir(path):
            for root, _, fnames in sorted(os.walk(path)):
                for fname in sorted(fnames):
                    fpath = os.path.join(root, fname)
                    checksums[fpath] = file_checksum(fpath)
        else:
            checksums[path] = file_checksum(path)
    return checksums

def default_seed():
    """Seed from the LENS_SEED environment variable, 0 when unset."""

    value = os.environ.get(SEED_ENV_VAR, "0")
    try:
        return int(value)
    except ValueError:
        raise InputError(f"{SEED_ENV_VAR} must be an integer, got '{value}'.")

def random_seed(seed=0):
    """Seeds every generator the pipeline touches."""

    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)

def flow_rng(seed, index, stream):
    """Counter-based substream keyed by (seed, flow index, stream id) so that
    per-flow draws do not depend on the processing order."""
    return np.random.default_rng([seed, index, stream])

def format_time(seconds):
    return time.strftime('%H:%M:%S', time.gmtime(seconds))
