from __future__ import annotations

import re
from dataclasses import dataclass

from fbrag.errors import InvalidArgumentError

'''
Word chunking. A word is a maximal run of non-whitespace characters (Unicode whitespace).
Chunks never split a word and keep the whitespace between their own words, so
text[chunk.char_span[0]:chunk.char_span[1]] == chunk.text.
'''

DEFAULT_CHUNK_SIZE = 300

_WORD = re.compile(r'\S+')


@dataclass(frozen=True)
class Chunk:
    id: int
    text: str
    word_count: int
    char_span: tuple[int, int]

    def words(self) -> list[str]:
        return _WORD.findall(self.text)


def count_words(text: str) -> int:
    return sum(1 for _ in _WORD.finditer(text))


def chunk_document(text: str, chunk_size: int = DEFAULT_CHUNK_SIZE) -> list[Chunk]:
    if chunk_size < 1:
        raise InvalidArgumentError(f'chunk_size must be a positive word count, got {chunk_size}')

    matches = list(_WORD.finditer(text))
    chunks: list[Chunk] = []
    for start in range(0, len(matches), chunk_size):
        group = matches[start:start + chunk_size]
        span = (group[0].start(), group[-1].end())
        chunks.append(Chunk(len(chunks), text[span[0]:span[1]], len(group), span))
    return chunks


def join_chunks(chunks: list[Chunk], separator: str = '\n\n') -> str:
    '''Join chunks in the order given.'''
    return separator.join(chunk.text for chunk in chunks)
