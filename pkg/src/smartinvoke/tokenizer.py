"""Byte-level BPE tokenizer and cursor-centred context encoding."""

from __future__ import annotations

import json
import os
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

CLS, PAD, SEP, UNK = "<s>", "<pad>", "</s>", "<unk>"
DEFAULT_WINDOW = 512
DEFAULT_SUFFIX_CAP = 128

# whitespace runs, word runs, punctuation runs; the alternation covers every character
_PRETOKENIZE = re.compile(r"\s+|\w+|[^\w\s]+")


class WindowTooSmall(ValueError):
    pass


@lru_cache(maxsize=None)
def bytes_to_unicode() -> dict[int, str]:
    """Reversible byte -> printable-character map used by byte-level BPE files."""
    printable = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    codes = printable[:]
    n = 0
    for b in range(256):
        if b not in printable:
            printable.append(b)
            codes.append(256 + n)
            n += 1
    return dict(zip(printable, (chr(c) for c in codes)))


@lru_cache(maxsize=None)
def unicode_to_bytes() -> dict[str, int]:
    return {v: k for k, v in bytes_to_unicode().items()}


class Vocabulary:
    """Token map, ranked merges and the four special tokens."""

    def __init__(self, token_to_id: dict[str, int], merges: Sequence[tuple[str, str]] = ()):
        self.token_to_id = dict(token_to_id)
        self.id_to_token = {i: t for t, i in self.token_to_id.items()}
        if len(self.id_to_token) != len(self.token_to_id):
            raise ValueError("token ids must be unique")
        for special in (CLS, PAD, SEP, UNK):
            if special not in self.token_to_id:
                raise ValueError(f"vocabulary lacks special token {special}")
        self.merges = [tuple(m) for m in merges]
        for a, b in self.merges:
            if a not in self.token_to_id or b not in self.token_to_id:
                raise ValueError(f"merge ({a!r}, {b!r}) references an unknown token")
        self.ranks = {pair: r for r, pair in enumerate(self.merges)}
        self.cls_id = self.token_to_id[CLS]
        self.pad_id = self.token_to_id[PAD]
        self.sep_id = self.token_to_id[SEP]
        self.unk_id = self.token_to_id[UNK]
        self.special_ids = frozenset((self.cls_id, self.pad_id, self.sep_id, self.unk_id))

    def __len__(self) -> int:
        return max(self.id_to_token) + 1

    @classmethod
    def byte_level(cls) -> "Vocabulary":
        """Built-in vocabulary: four specials then the 256 byte symbols, no merges."""
        table = {CLS: 0, PAD: 1, SEP: 2, UNK: 3}
        for b, ch in sorted(bytes_to_unicode().items()):
            table[ch] = 4 + b
        return cls(table)

    @classmethod
    def from_files(cls, vocab_path: str | os.PathLike, merges_path: str | os.PathLike) -> "Vocabulary":
        with open(vocab_path, encoding="utf-8") as fh:
            table = json.load(fh)
        merges = []
        with open(merges_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line or line.startswith("#version"):
                    continue
                a, b = line.split(" ")
                merges.append((a, b))
        return cls(table, merges)

    def save(self, vocab_path: str | os.PathLike, merges_path: str | os.PathLike) -> None:
        with open(vocab_path, "w", encoding="utf-8") as fh:
            json.dump(self.token_to_id, fh, ensure_ascii=False)
        with open(merges_path, "w", encoding="utf-8") as fh:
            fh.writelines(f"{a} {b}\n" for a, b in self.merges)

    def to_dict(self) -> dict:
        return {"tokens": self.token_to_id, "merges": [list(m) for m in self.merges]}

    @classmethod
    def from_dict(cls, obj: dict) -> "Vocabulary":
        return cls(obj["tokens"], [tuple(m) for m in obj["merges"]])


def learn_merges(corpus: Sequence[str], n_merges: int) -> Vocabulary:
    """Minimal BPE merge learning, used to build small test vocabularies."""
    vocab = Vocabulary.byte_level()
    table = dict(vocab.token_to_id)
    b2u = bytes_to_unicode()
    words = Counter()
    for text in corpus:
        for piece in _PRETOKENIZE.findall(text):
            words[tuple(b2u[b] for b in piece.encode("utf-8"))] += 1
    merges: list[tuple[str, str]] = []
    for _ in range(n_merges):
        pairs = Counter()
        for word, freq in words.items():
            for pair in zip(word, word[1:]):
                pairs[pair] += freq
        if not pairs:
            break
        # most frequent, ties broken lexicographically for determinism
        best = min(pairs, key=lambda p: (-pairs[p], p))
        merges.append(best)
        table.setdefault(best[0] + best[1], len(table))
        merged = Counter()
        for word, freq in words.items():
            merged[_merge_pair(word, best)] += freq
        words = merged
    return Vocabulary(table, merges)


def _merge_pair(word: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    out = []
    i = 0
    while i < len(word):
        if i + 1 < len(word) and word[i] == pair[0] and word[i + 1] == pair[1]:
            out.append(word[i] + word[i + 1])
            i += 2
        else:
            out.append(word[i])
            i += 1
    return tuple(out)


@dataclass(frozen=True)
class TokenizedContext:
    ids: np.ndarray
    attention_mask: np.ndarray
    sep_index: int
    n_s: int

    @property
    def window(self) -> int:
        return len(self.ids)

    @property
    def n_prefix(self) -> int:
        return self.sep_index - 1

    def summary(self) -> dict:
        return {
            "window": self.window,
            "content_length": int(self.attention_mask.sum()),
            "kept_prefix": self.n_prefix,
            "n_s": self.n_s,
            "sep_index": self.sep_index,
        }


class Tokenizer:
    STRATEGIES = ("joint", "prefix", "suffix")

    def __init__(self, vocab: Vocabulary | None = None):
        self.vocab = vocab or Vocabulary.byte_level()
        self._b2u = bytes_to_unicode()
        self._u2b = unicode_to_bytes()
        self._bpe = lru_cache(maxsize=65536)(self._bpe_word)

    def _bpe_word(self, piece: str) -> tuple[int, ...]:
        symbols = [self._b2u[b] for b in piece.encode("utf-8")]
        ranks = self.vocab.ranks
        while len(symbols) > 1:
            best_rank, best = None, None
            for pair in zip(symbols, symbols[1:]):
                r = ranks.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank, best = r, pair
            if best is None:
                break
            symbols = list(_merge_pair(tuple(symbols), best))
        t2i = self.vocab.token_to_id
        return tuple(t2i.get(s, self.vocab.unk_id) for s in symbols)

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for piece in _PRETOKENIZE.findall(text):
            ids.extend(self._bpe(piece))
        return ids

    def decode_bytes(self, ids: Sequence[int]) -> bytes:
        out = bytearray()
        for i in ids:
            i = int(i)
            if i in self.vocab.special_ids:
                continue
            out.extend(self._u2b[ch] for ch in self.vocab.id_to_token[i])
        return bytes(out)

    def decode(self, ids: Sequence[int]) -> str:
        return self.decode_bytes(ids).decode("utf-8", errors="replace")

    def _layout(self, left: list[int], right: list[int], window: int) -> TokenizedContext:
        ids = np.full(window, self.vocab.pad_id, dtype=np.int64)
        content = [self.vocab.cls_id, *left, self.vocab.sep_id, *right]
        ids[: len(content)] = content
        mask = np.zeros(window, dtype=np.int64)
        mask[: len(content)] = 1
        return TokenizedContext(ids, mask, 1 + len(left), len(right))

    def encode_joint(
        self, prefix: str, suffix: str, window: int = DEFAULT_WINDOW, suffix_cap: int = DEFAULT_SUFFIX_CAP
    ) -> TokenizedContext:
        """``[cls] prefix [sep] suffix [pad]...`` keeping the tokens nearest the cursor.

        The suffix keeps at most ``suffix_cap`` leading tokens; the prefix keeps
        its last ``window - 2 - n_s`` tokens.
        """
        if window <= suffix_cap + 2:
            raise WindowTooSmall(f"window {window} must exceed suffix_cap + 2 = {suffix_cap + 2}")
        right = self.encode(suffix)[:suffix_cap]
        budget = window - 2 - len(right)
        left = self.encode(prefix)
        left = left[len(left) - budget :] if len(left) > budget else left
        return self._layout(left, right, window)

    def encode_prefix_only(self, prefix: str, window: int = DEFAULT_WINDOW) -> TokenizedContext:
        if window < 3:
            raise WindowTooSmall(f"window {window} leaves no room for content")
        left = self.encode(prefix)
        budget = window - 2
        left = left[len(left) - budget :] if len(left) > budget else left
        return self._layout(left, [], window)

    def encode_suffix_only(self, suffix: str, window: int = DEFAULT_WINDOW) -> TokenizedContext:
        if window < 3:
            raise WindowTooSmall(f"window {window} leaves no room for content")
        # suffix content sits before the separator; n_s stays 0
        return self._layout(self.encode(suffix)[: window - 2], [], window)

    def encode_context(
        self,
        prefix: str,
        suffix: str,
        strategy: str = "joint",
        window: int = DEFAULT_WINDOW,
        suffix_cap: int = DEFAULT_SUFFIX_CAP,
    ) -> TokenizedContext:
        if strategy == "joint":
            return self.encode_joint(prefix, suffix, window, suffix_cap)
        if strategy == "prefix":
            return self.encode_prefix_only(prefix, window)
        if strategy == "suffix":
            return self.encode_suffix_only(suffix, window)
        raise ValueError(f"unknown tokenization strategy {strategy!r}")

    def batch(self, contexts: Sequence[TokenizedContext]) -> tuple[np.ndarray, np.ndarray]:
        return np.stack([c.ids for c in contexts]), np.stack([c.attention_mask for c in contexts])
