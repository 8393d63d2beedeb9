from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from fbrag.chunker import Chunk
from fbrag.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

'''
From-scratch Okapi BM25 over chunks.

    score(i) = sum over query tokens t of IDF(t) * tf(t,i)*(k1+1) / (tf(t,i) + k1*(1-b+b*len_i/avg_len))
    IDF(t) = ln(1 + (n - df(t) + 0.5) / (df(t) + 0.5))

Query tokens are counted with multiplicity, so a term repeated in a long rationale weighs more.
'''

K1 = 1.5
B = 0.75

_TOKEN = re.compile(r'[^\W_]+')


def tokenize(text: str) -> list[str]:
    '''Lowercase, then keep runs of Unicode letters and digits. No stemming, no stopwords.'''
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True, eq=False)
class Posting:
    positions: np.ndarray  # index of the chunk in the index order
    tfs: np.ndarray


@dataclass(frozen=True, eq=False)
class ChunkIndex:
    chunk_ids: tuple[int, ...]
    term_freqs: tuple[Mapping[str, int], ...]
    doc_freqs: Mapping[str, int]
    lengths: np.ndarray
    avg_len: float
    k1: float = K1
    b: float = B
    _postings: Mapping[str, Posting] = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.chunk_ids)

    def idf(self, term: str) -> float:
        df = self.doc_freqs.get(term, 0)
        return math.log(1 + (self.n - df + 0.5) / (df + 0.5))

    def score(self, query_text: str) -> np.ndarray:
        return score_all(self, query_text)


def build_index(chunks: Sequence[Chunk], k1: float = K1, b: float = B) -> ChunkIndex:
    ids = tuple(chunk.id for chunk in chunks)
    if len(set(ids)) != len(ids):
        duplicated = sorted(i for i, count in Counter(ids).items() if count > 1)
        raise InvalidArgumentError(f'Duplicate chunk ids: {duplicated}')

    term_freqs: list[Mapping[str, int]] = []
    doc_freqs: Counter[str] = Counter()
    positions: dict[str, list[int]] = {}
    tfs: dict[str, list[int]] = {}
    for position, chunk in enumerate(chunks):
        counts = Counter(tokenize(chunk.text))
        term_freqs.append(MappingProxyType(dict(counts)))
        doc_freqs.update(counts.keys())
        for term, tf in counts.items():
            positions.setdefault(term, []).append(position)
            tfs.setdefault(term, []).append(tf)

    lengths = np.array([sum(tf.values()) for tf in term_freqs], dtype=np.float64)
    avg_len = float(lengths.mean()) if len(lengths) else 0.0
    postings = {
        term: Posting(np.array(positions[term], dtype=np.int64), np.array(tfs[term], dtype=np.float64))
        for term in positions
    }
    logger.debug(f'Indexed {len(ids)} chunks, {len(doc_freqs)} distinct terms, avg_len={avg_len:.1f}')
    return ChunkIndex(
        chunk_ids=ids,
        term_freqs=tuple(term_freqs),
        doc_freqs=MappingProxyType(dict(doc_freqs)),
        lengths=lengths,
        avg_len=avg_len,
        k1=k1,
        b=b,
        _postings=MappingProxyType(postings),
    )


def score_all(index: ChunkIndex, query_text: str) -> np.ndarray:
    '''One score per indexed chunk, in index order. Never negative.'''
    scores = np.zeros(index.n, dtype=np.float64)
    if index.n == 0:
        return scores

    if index.avg_len > 0:
        length_norm = index.k1 * (1 - index.b + index.b * index.lengths / index.avg_len)
    else:
        length_norm = np.full(index.n, index.k1 * (1 - index.b))

    for term, count in Counter(tokenize(query_text)).items():
        posting = index._postings.get(term)
        if posting is None:
            continue
        norm = length_norm[posting.positions]
        term_scores = index.idf(term) * posting.tfs * (index.k1 + 1) / (posting.tfs + norm)
        scores[posting.positions] += count * term_scores
    return scores


def rank(scores: Sequence[float] | np.ndarray) -> list[int]:
    '''Positions by descending score, ties broken by the lower position.'''
    return sorted(range(len(scores)), key=lambda i: (-float(scores[i]), i))


def select_by_budget(scores: Sequence[float] | np.ndarray, chunks: Sequence[Chunk], budget: int) -> list[int]:
    '''
    Walk the ranking and take chunks while the cumulative word count stays within budget.
    The top chunk is always taken when budget > 0, even if it alone overflows.
    Returns chunk ids in ascending (document) order.
    '''
    if len(scores) != len(chunks):
        raise InvalidArgumentError(f'{len(scores)} scores for {len(chunks)} chunks')
    if budget <= 0:
        return []

    selected: list[int] = []
    used = 0
    for position in rank(scores):
        chunk = chunks[position]
        if used + chunk.word_count > budget:
            if not selected:
                selected.append(chunk.id)
            break
        selected.append(chunk.id)
        used += chunk.word_count
    return sorted(selected)


@dataclass(frozen=True)
class ScoredChunk:
    chunk_id: int
    s_backward: float
    s_forward: float
    s_combined: float
