""" Token vocabularies over hexadecimal traffic. Ids 0-5 are the special tokens 
(PAD has id 0), ids 6-105 the sentinels, the regular tokens follow."""

import re
import json
from enum import Enum
from functools import lru_cache

from ..errors import IdOutOfRange, InvalidHexChar, ArtifactFormatError
from ..utils import ARTIFACT_VERSION, text_checksum

PAD, END, UNK, TSK, HEAD, PKT = "<pad>", "</s>", "<unk>", "<tsk>", "<head>", "<pkt>"
SPECIAL_TOKENS = (PAD, END, UNK, TSK, HEAD, PKT)
N_SENTINELS = 100
SENTINEL_TOKENS = tuple(f"<extra_id_{i}>" for i in range(N_SENTINELS))
RESERVED_TOKENS = SPECIAL_TOKENS + SENTINEL_TOKENS

HEX_DIGITS = "0123456789abcdef"
WORD_LEN = 4
CONTINUATION = "##"
INVALID_HEX = re.compile(r"[^0-9a-f]")

class Scheme(str, Enum):
    VANILLA = "vanilla"
    WORDPIECE_WORD = "wordpiece_word"
    WORDPIECE_PD = "wordpiece_pd"

class Vocabulary:
    """Immutable token <-> id bijection."""

    def __init__(self, tokens, scheme, seed=0, inputs=None):
        self.tokens = tuple(tokens)
        self.ids = {token: i for i, token in enumerate(self.tokens)}
        assert len(self.ids) == len(self.tokens), "Vocabulary tokens must be unique."
        assert self.tokens[:len(RESERVED_TOKENS)] == RESERVED_TOKENS, \
            "Vocabulary must start with the special and sentinel tokens."
        self.scheme = Scheme(scheme)
        self.seed = seed
        self.inputs = inputs or {}
        self._backend = None

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.ids

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens and self.scheme == other.scheme

    def __repr__(self):
        return f"Vocabulary(scheme={self.scheme.value}, size={len(self)})"

    def __getstate__(self):
        # The WordPiece backend is rebuilt lazily in worker processes
        state = dict(self.__dict__)
        state["_backend"] = None
        return state

    def token_to_id(self, token):
        """Unknown tokens map to UNK."""
        return self.ids.get(token, self.unk_id)

    def id_to_token(self, i):
        if not 0 <= i < len(self.tokens):
            raise IdOutOfRange(f"Token id {i} is outside [0, {len(self.tokens)}).")
        return self.tokens[i]

    @property
    def pad_id(self):
        return self.ids[PAD]

    @property
    def end_id(self):
        return self.ids[END]

    @property
    def unk_id(self):
        return self.ids[UNK]

    @property
    def tsk_id(self):
        return self.ids[TSK]

    @property
    def head_id(self):
        return self.ids[HEAD]

    @property
    def pkt_id(self):
        return self.ids[PKT]

    def sentinel_id(self, i):
        assert 0 <= i < N_SENTINELS, f"Only {N_SENTINELS} sentinels exist."
        return self.ids[SENTINEL_TOKENS[i]]

    @property
    def special_ids(self):
        return frozenset(range(len(SPECIAL_TOKENS)))

    @property
    def sentinel_ids(self):
        return frozenset(range(len(SPECIAL_TOKENS), len(RESERVED_TOKENS)))

    def is_reserved(self, i):
        return i < len(RESERVED_TOKENS)

    def checksum(self):
        return text_checksum(self.scheme.value + "\n" + "\n".join(self.tokens))

    ####################################################################################
    # File format: one header comment line then one token per line, line i <-> id i

    def save(self, path):
        header = f"#scheme={self.scheme.value} #seed={self.seed} #version={ARTIFACT_VERSION} " \
                 f"#inputs={json.dumps(self.inputs, sort_keys=True, separators=(',', ':'))}"
        with open(path, "w", encoding="utf-8") as outfile:
            outfile.write(header + "\n")
            for token in self.tokens:
                outfile.write(token + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as infile:
            header = infile.readline().rstrip("\n")
            tokens = [line.rstrip("\n") for line in infile]
        meta = parse_vocab_header(path, header)
        return cls(tokens, meta["scheme"], seed=int(meta["seed"]), inputs=json.loads(meta.get("inputs", "{}")))

def parse_vocab_header(path, header):
    if not header.startswith("#scheme="):
        raise ArtifactFormatError(f"{path} does not start with a vocabulary header line.")
    meta = {}
    for item in header.split(" #"):
        key, _, value = item.lstrip("#").partition("=")
        meta[key] = value
    return meta

####################################################################################
# Words

def check_hex(hex_str):
    match = INVALID_HEX.search(hex_str)
    if match:
        raise InvalidHexChar(f"Invalid hex character '{match.group()}' at position {match.start()}.")

def split_words(hex_str):
    """Cuts a hex string into 4-digit words, right-padding the last one with '0'."""

    check_hex(hex_str)
    words = [hex_str[i:i + WORD_LEN] for i in range(0, len(hex_str), WORD_LEN)]
    if words and len(words[-1]) < WORD_LEN:
        words[-1] = words[-1].ljust(WORD_LEN, "0")
    return words

def all_words():
    return [f"{i:04x}" for i in range(16 ** WORD_LEN)]

@lru_cache(maxsize=1)
def build_vanilla_vocab():
    """Every 4-digit hex word from 0000 to ffff plus the reserved tokens."""
    return Vocabulary(RESERVED_TOKENS + tuple(all_words()), Scheme.VANILLA)
