from typing import Protocol

import numpy as np

from .lexical import (
    ChunkIndex,
    ScoredChunk,
    build_index,
    rank,
    score_all,
    select_by_budget,
    tokenize,
)


class Retriever(Protocol):
    '''
    The importance function S(chunk; text). Scores come back one per indexed chunk, in index order,
    and must be non-negative. ChunkIndex is the only implementation shipped.
    '''
    chunk_ids: tuple[int, ...]

    def score(self, query_text: str) -> np.ndarray:
        pass
