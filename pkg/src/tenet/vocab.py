"""Explanation vocabulary built from caption text.

Pipeline: tokenize every caption, count word occurrences over the whole
corpus, drop rare and short words, keep the most frequent survivors in
rank order. The resulting word list is the label space of the caption
head, so its order must be deterministic across runs and platforms.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)


def tokenize(caption: str) -> list[str]:
    """Split a caption into lowercase word tokens.

    Rule: lowercase, strip every non-alphanumeric character except
    apostrophes that sit inside a word, split on whitespace, drop empties.
    """
    tokens = []
    for chunk in caption.lower().split():
        word = "".join(ch for ch in chunk if ch.isalnum() or ch == "'").strip("'")
        if word:
            tokens.append(word)
    return tokens


@dataclass
class FrequencyTable:
    """Occurrence counts for every token seen in a caption corpus."""

    entries: dict[str, int] = field(default_factory=dict)

    @property
    def total_raw_words(self) -> int:
        """Number of distinct tokens (the raw vocabulary size)."""
        return len(self.entries)


def count_corpus(captions: Iterable[str]) -> FrequencyTable:
    """Count token occurrences across a caption stream in one pass."""
    counter: Counter[str] = Counter()
    for caption in captions:
        counter.update(tokenize(caption))
    return FrequencyTable(entries=dict(counter))


def merge_tables(tables: Iterable[FrequencyTable]) -> FrequencyTable:
    """Commutative merge of per-shard counts into one table."""
    merged: Counter[str] = Counter()
    for table in tables:
        merged.update(table.entries)
    return FrequencyTable(entries=dict(merged))


@dataclass
class Vocabulary:
    """Ranked word list; rank 0 is the most frequent word."""

    words: list[str]
    counts: list[int]
    min_count: int
    min_length: int
    _rank: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._rank = {w: i for i, w in enumerate(self.words)}

    @property
    def size(self) -> int:
        return len(self.words)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._rank

    def rank_of(self, word: str) -> int | None:
        """Rank of a word, or None if it is not in the vocabulary."""
        return self._rank.get(word)

    def to_tsv(self) -> str:
        """One word<TAB>count line per entry, in rank order."""
        return "".join(f"{w}\t{c}\n" for w, c in zip(self.words, self.counts))

    def save_tsv(self, path: Path | str) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")

    @classmethod
    def load_tsv(cls, path: Path | str, min_count: int = 0, min_length: int = 0) -> "Vocabulary":
        words, counts = [], []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            word, count = line.split("\t")
            words.append(word)
            counts.append(int(count))
        return cls(words=words, counts=counts, min_count=min_count, min_length=min_length)

    def sha256(self) -> str:
        """Content hash of the ranked word/count list."""
        return hashlib.sha256(self.to_tsv().encode("utf-8")).hexdigest()


def build_vocabulary(table: FrequencyTable, min_count: int = 4, min_length: int = 3,
                     vocab_size: int = 1000) -> Vocabulary:
    """Filter and rank a frequency table into the final vocabulary.

    Keeps tokens with count >= min_count and length >= min_length, sorts
    by count descending (ties broken lexicographically ascending), and
    truncates to vocab_size. May return fewer than vocab_size words.
    """
    if min_count < 1 or min_length < 1 or vocab_size < 1:
        raise ValueError("min_count, min_length and vocab_size must all be >= 1")
    kept = [(word, count) for word, count in table.entries.items()
            if count >= min_count and len(word) >= min_length]
    kept.sort(key=lambda wc: (-wc[1], wc[0]))
    kept = kept[:vocab_size]
    return Vocabulary(words=[w for w, _ in kept], counts=[c for _, c in kept],
                      min_count=min_count, min_length=min_length)


def corpus_stats(table: FrequencyTable) -> dict[str, int]:
    """Distribution summary of a raw frequency table."""
    counts = table.entries.values()
    return {
        "distinct_words": len(table.entries),
        "hapax_count": sum(1 for c in counts if c == 1),
        "count_le_3": sum(1 for c in table.entries.values() if c <= 3),
        "len_1_count": sum(1 for w in table.entries if len(w) == 1),
        "len_2_count": sum(1 for w in table.entries if len(w) == 2),
    }


def read_captions(path: Path | str) -> Iterator[str]:
    """Yield captions from a COCO captions JSON or a one-per-line text file."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed JSON in {path}: {exc}") from exc
        for ann in data.get("annotations", []):
            yield ann["caption"]
    else:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    yield line


def write_stats_json(stats: dict[str, int], path: Path | str) -> None:
    Path(path).write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
