"""Corpus model and plumbing: JSONL I/O, sentence segmentation, splits, stats.

A corpus is a list of documents; a document is an ordered list of sentences,
each optionally carrying a gold rhetorical role. Everything here is immutable
after construction and safe to share across parallel readers.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .roles import NUM_ROLES, RhetoricalRole


@dataclass(frozen=True)
class Sentence:
    """One sentence with its 0-based position and optional gold role."""

    index: int
    text: str
    gold: RhetoricalRole | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.text, str) or not self.text.strip():
            raise DataError(f"sentence {self.index}: text empty after trimming")
        if self.index < 0:
            raise DataError(f"negative sentence index {self.index}")


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: tuple[Sentence, ...]

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise DataError("document with empty doc_id")
        if len(self.sentences) < 1:
            raise DataError(f"document {self.doc_id!r} has no sentences")
        for pos, sent in enumerate(self.sentences):
            if sent.index != pos:
                raise DataError(
                    f"document {self.doc_id!r}: sentence index {sent.index} at position {pos}"
                )

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def is_labeled(self) -> bool:
        return all(s.gold is not None for s in self.sentences)

    def gold_labels(self) -> list[RhetoricalRole]:
        """Gold roles in order; raises if any sentence is unlabeled."""
        labels = []
        for sent in self.sentences:
            if sent.gold is None:
                raise DataError(
                    f"document {self.doc_id!r}: sentence {sent.index} has no gold label"
                )
            labels.append(sent.gold)
        return labels


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    split_tag: str | None = None

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise DataError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
        if self.split_tag is not None and self.split_tag not in ("train", "validation", "test"):
            raise DataError(f"unknown split tag {self.split_tag!r}")

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    @property
    def n_sentences(self) -> int:
        return sum(len(d) for d in self.documents)

    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.documents]


@dataclass(frozen=True)
class CorpusStats:
    n_docs: int
    n_sentences: int
    avg_sentences_per_doc: float
    avg_tokens_per_sentence: float
    per_label_sentence_counts: dict[RhetoricalRole, int]
    per_label_avg_tokens: dict[RhetoricalRole, float]


@dataclass(frozen=True)
class ShiftSequence:
    """Binary segment-boundary indicators, one per sentence."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.bits) < 1:
            raise DataError("empty shift sequence")
        if any(b not in (0, 1) for b in self.bits):
            raise DataError("shift bits must be 0 or 1")

    def __len__(self) -> int:
        return len(self.bits)


def _sentence_from_obj(obj, doc_id: str, index: int, line_no: int) -> Sentence:
    if not isinstance(obj, dict) or "text" not in obj:
        raise DataError(f"line {line_no}: sentence {index} of {doc_id!r} is not an object with 'text'")
    text = obj["text"]
    if not isinstance(text, str):
        raise DataError(f"line {line_no}: sentence {index} of {doc_id!r} has non-string text")
    raw_label = obj.get("label")
    gold = None
    if raw_label is not None:
        try:
            gold = RhetoricalRole.parse(raw_label)
        except DataError as exc:
            raise DataError(f"line {line_no}: {exc}") from None
    try:
        return Sentence(index=index, text=text, gold=gold)
    except DataError as exc:
        raise DataError(f"line {line_no}: {exc}") from None


def load_jsonl(path) -> Corpus:
    """Load a corpus from one-JSON-object-per-line, preserving order.

    Labels are accepted as canonical names or integer ids. Errors carry the
    1-based line number of the offending record.
    """
    documents: list[Document] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {line_no}: malformed JSON ({exc.msg})") from None
            if not isinstance(record, dict) or "doc_id" not in record:
                raise DataError(f"line {line_no}: record is not an object with 'doc_id'")
            doc_id = record["doc_id"]
            if not isinstance(doc_id, str) or not doc_id:
                raise DataError(f"line {line_no}: doc_id must be a non-empty string")
            if doc_id in seen:
                raise DataError(f"line {line_no}: duplicate doc_id {doc_id!r}")
            seen.add(doc_id)
            raw_sents = record.get("sentences")
            if not isinstance(raw_sents, list) or not raw_sents:
                raise DataError(f"line {line_no}: document {doc_id!r} has no sentences")
            sentences = tuple(
                _sentence_from_obj(s, doc_id, i, line_no) for i, s in enumerate(raw_sents)
            )
            documents.append(Document(doc_id=doc_id, sentences=sentences))
    if not documents:
        raise DataError("empty corpus")
    return Corpus(documents=tuple(documents))


def write_jsonl(corpus: Corpus, path) -> None:
    """Write the canonical schema; the label key is always present."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus:
            record = {
                "doc_id": doc.doc_id,
                "sentences": [
                    {
                        "text": s.text,
                        "label": s.gold.canonical_name if s.gold is not None else None,
                    }
                    for s in doc.sentences
                ],
            }
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")


# Sentence boundary: terminal punctuation, whitespace, then uppercase/digit.
_BOUNDARY = re.compile(r"([.?!]+)(\s+)(?=[A-Z0-9])")
_PARAGRAPH = re.compile(r"\n[^\S\n]*\n\s*")
_ABBREVIATIONS = frozenset(
    {"Mr.", "Mrs.", "Dr.", "No.", "vs.", "Sec.", "Art.", "Hon.", "Ors.", "Anr."}
)
_INITIAL = re.compile(r"(?:^|[\s(\[\"'])[A-Za-z]\.$")


def _split_paragraph(par: str) -> list[str]:
    out = []
    start = 0
    for match in _BOUNDARY.finditer(par):
        token_end = match.end(1)
        prefix = par[:token_end]
        prev_token = prefix.rsplit(None, 1)[-1] if prefix.strip() else ""
        if prev_token in _ABBREVIATIONS or (_INITIAL.search(prefix) and len(prev_token) == 2):
            continue
        candidate = par[start:token_end].strip()
        if candidate:
            out.append(candidate)
        start = match.end()
    tail = par[start:].strip()
    if tail:
        out.append(tail)
    return out


def segment_text(raw: str) -> list[str]:
    """Rule-based sentence segmentation.

    Paragraph breaks (blank lines) are always boundaries. Within a paragraph,
    a run of terminal punctuation followed by whitespace and an uppercase
    letter or digit opens a boundary, unless the preceding token is a known
    abbreviation or a single-letter initial. Non-whitespace characters are
    preserved in order.
    """
    sentences: list[str] = []
    for par in _PARAGRAPH.split(raw):
        if par.strip():
            sentences.extend(_split_paragraph(par))
    return sentences


def split_corpus(
    corpus: Corpus, ratios: tuple[float, float, float], seed: int
) -> tuple[Corpus, Corpus, Corpus]:
    """Partition by document into train/validation/test.

    Sizes are floor(n*r_train) and floor(n*r_val) with the remainder going to
    test. A tiny epsilon guards against products like 7120*0.7 landing one ulp
    below the exact integer.
    """
    r_train, r_val, r_test = ratios
    if min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must be positive and sum to 1, got {ratios}")
    n = len(corpus)
    if n < 3 and all(r > 0 for r in ratios):
        raise DataError("corpus too small to split")
    n_train = math.floor(n * r_train + 1e-9)
    n_val = math.floor(n * r_val + 1e-9)
    n_test = n - n_train - n_val
    if n_test < 0:
        n_val += n_test
        n_test = 0
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    docs = corpus.documents
    train = tuple(docs[i] for i in order[:n_train])
    val = tuple(docs[i] for i in order[n_train : n_train + n_val])
    test = tuple(docs[i] for i in order[n_train + n_val :])
    return (
        Corpus(documents=train, split_tag="train"),
        Corpus(documents=val, split_tag="validation"),
        Corpus(documents=test, split_tag="test"),
    )


def compute_stats(corpus: Corpus) -> CorpusStats:
    from .encode import tokenize

    n_docs = len(corpus)
    n_sentences = 0
    total_tokens = 0
    counts = {role: 0 for role in RhetoricalRole}
    token_sums = {role: 0 for role in RhetoricalRole}
    for doc in corpus:
        n_sentences += len(doc)
        for sent in doc.sentences:
            n_tok = len(tokenize(sent.text))
            total_tokens += n_tok
            if sent.gold is not None:
                counts[sent.gold] += 1
                token_sums[sent.gold] += n_tok
    return CorpusStats(
        n_docs=n_docs,
        n_sentences=n_sentences,
        avg_sentences_per_doc=n_sentences / n_docs if n_docs else 0.0,
        avg_tokens_per_sentence=total_tokens / n_sentences if n_sentences else 0.0,
        per_label_sentence_counts=counts,
        per_label_avg_tokens={
            role: (token_sums[role] / counts[role] if counts[role] else 0.0)
            for role in RhetoricalRole
        },
    )


def label_shift_sequence(labels: list[RhetoricalRole]) -> ShiftSequence:
    """bits[j] = 1 iff the role changes at j; bits[0] = 1 by convention."""
    if not labels:
        raise DataError("cannot compute shifts of an empty label list")
    bits = [1]
    for j in range(1, len(labels)):
        bits.append(1 if labels[j] != labels[j - 1] else 0)
    return ShiftSequence(bits=tuple(bits))


NUM_LABELS = NUM_ROLES
