""" WordPiece vocabulary trainer for hex traffic. Two variants:

- without a predefined vocabulary, the symbols start as single hex characters, 
  non-initial ones carrying the '##' continuation marker, and merges happen inside 
  4-digit words;
- with a predefined vocabulary, its 4-digit words seed the symbol inventory and
  merges join adjacent words of a header or payload region, up to 8 hex characters.

Pairs are scored with freq(ab) / (freq(a) * freq(b)) and the best pair is merged
until the vocabulary reaches the target size. Without a predefined vocabulary the 16 hex
characters and their 16 continuation forms are always in the vocabulary, with
one every region splits into 4-digit words. Either way valid hex never maps to UNK."""

import logging
from collections import Counter

from tqdm import tqdm
from tokenizers import Tokenizer
from tokenizers.models import WordPiece

from .vocabulary import (CONTINUATION, HEX_DIGITS, RESERVED_TOKENS, UNK, Scheme, Vocabulary,
                         split_words)
from ..errors import CorpusTooSmall

MAX_PIECE_CHARS = 8
BASE_ALPHABET = tuple(HEX_DIGITS) + tuple(CONTINUATION + c for c in HEX_DIGITS)

def piece_text(symbol):
    return symbol[len(CONTINUATION):] if symbol.startswith(CONTINUATION) else symbol

def merge_symbols(a, b):
    """'ab' + '##cd' -> 'abcd', '##ab' + '##cd' -> '##abcd'."""
    return a + piece_text(b)

def region_words(unit):
    """Yields the 4-digit word lists of every header and payload region of a unit."""

    for header, payload in unit.packets:
        for region in (header, payload):
            if region:
                yield split_words(region)

def count_sequences(corpus, predefined):
    """Counts the symbol sequences the merges operate on: single words split into
    characters, or whole regions split into words."""

    counts = Counter()
    for unit in corpus:
        for words in region_words(unit):
            if predefined is None:
                counts.update(tuple([w[0]] + [CONTINUATION + c for c in w[1:]]) for w in words)
            else:
                counts[tuple(words)] += 1
    return counts

def pair_statistics(splits, counts):
    pair_freqs, symbol_freqs = Counter(), Counter()
    for seq, symbols in splits.items():
        freq = counts[seq]
        for symbol in symbols:
            symbol_freqs[symbol] += freq
        for a, b in zip(symbols, symbols[1:]):
            pair_freqs[(a, b)] += freq
    return pair_freqs, symbol_freqs

def apply_merge(symbols, a, b, merged):
    out, i = [], 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out

def train_wordpiece(corpus, target_size, predefined=None, seed=0):
    """ Trains a WordPiece vocabulary of exactly target_size entries (special and 
    sentinel tokens included) over an iterable of HexUnits. Raises CorpusTooSmall 
    when the target is below the base inventory or when the merges run out."""

    scheme = Scheme.WORDPIECE_WORD if predefined is None else Scheme.WORDPIECE_PD
    seeded = [] if predefined is None else \
        [t for t in predefined.tokens[len(RESERVED_TOKENS):] if t not in BASE_ALPHABET and not t.startswith(CONTINUATION)]
    # The predefined words cover every hex region, the single characters are only needed without them
    vocab = list(RESERVED_TOKENS) + (list(BASE_ALPHABET) if predefined is None else []) + seeded
    if target_size < len(vocab):
        raise CorpusTooSmall(f"Target size {target_size} is below the {len(vocab)} entries "
                             "of the base inventory.")

    counts = count_sequences(corpus, predefined)
    if not counts:
        raise CorpusTooSmall("The corpus contains no hex words.")
    logging.info(f"Training {scheme.value} on {sum(counts.values()):,} sequences "
                 f"({len(counts):,} distinct), target size {target_size:,}")

    known = set(vocab)
    splits = {seq: list(seq) for seq in counts}
    with tqdm(total=target_size - len(vocab), disable=logging.root.level > logging.INFO) as pbar:
        while len(vocab) < target_size:
            pair_freqs, symbol_freqs = pair_statistics(splits, counts)
            candidates = [(pair, freq) for pair, freq in pair_freqs.items()
                          if len(piece_text(pair[0])) + len(piece_text(pair[1])) <= MAX_PIECE_CHARS]
            if not candidates:
                raise CorpusTooSmall(f"The corpus only supports {len(vocab):,} distinct symbols, "
                                     f"target size is {target_size:,}.")
            # Highest score, then highest frequency, then the lexicographically smallest pair
            (a, b), _ = min(candidates, key=lambda c: (-c[1] / (symbol_freqs[c[0][0]] * symbol_freqs[c[0][1]]), 
                                                         -c[1], c[0]))
            merged = merge_symbols(a, b)
            for seq, symbols in splits.items():
                if a in symbols:
                    splits[seq] = apply_merge(symbols, a, b, merged)
            if merged not in known:
                known.add(merged)
                vocab.append(merged)
                pbar.update(1)
    return Vocabulary(vocab, scheme, seed=seed)

####################################################################################
# Encoding backend

# Pd pieces are matched over a whole region string
MAX_REGION_CHARS = 1 << 20

def wordpiece_backend(vocab):
    """ Greedy longest-match-first WordPiece model of the tokenizers library, built
    once per vocabulary."""

    if vocab._backend is None:
        if vocab.scheme == Scheme.WORDPIECE_WORD:
            model = WordPiece(dict(vocab.ids), unk_token=UNK, continuing_subword_prefix=CONTINUATION,
                              max_input_chars_per_word=MAX_PIECE_CHARS)
        elif vocab.scheme == Scheme.WORDPIECE_PD:
            model = WordPiece(dict(vocab.ids), unk_token=UNK, continuing_subword_prefix="",
                              max_input_chars_per_word=MAX_REGION_CHARS)
        else:
            raise ValueError(f"{vocab.scheme.value} vocabularies are not WordPiece vocabularies.")
        vocab._backend = Tokenizer(model)
    return vocab._backend

def wordpiece_pieces(vocab, words):
    """Splits the 4-digit words of one region into vocabulary pieces."""

    if not words:
        return []
    backend = wordpiece_backend(vocab)
    sequence = words if vocab.scheme == Scheme.WORDPIECE_WORD else ["".join(words)]
    return backend.encode(sequence, is_pretokenized=True, add_special_tokens=False).tokens
