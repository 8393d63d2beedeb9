from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from fbrag.chunker import Chunk, join_chunks
from fbrag.errors import InvalidArgumentError
from fbrag.llm.gateway import CompletionSink, LlmGateway
from fbrag.llm.params import GenParams
from fbrag.llm.parsing import ForwardSample
from fbrag.llm.templates import PromptTemplate
from fbrag.pipeline.config import Normalization
from fbrag.retrieval import Retriever, ScoredChunk, select_by_budget

logger = logging.getLogger(__name__)


def stage1_recall(query: str, chunks: Sequence[Chunk], index: Retriever, budget: int) -> list[int]:
    '''Recall-focused retrieval: backward BM25 scores against the query, budgeted.'''
    return select_by_budget(index.score(query), chunks, budget)


def forward_score(index: Retriever, samples: Sequence[ForwardSample]) -> np.ndarray:
    '''Per chunk, the maximum over samples of the BM25 score against the sample's text.'''
    if not samples:
        raise InvalidArgumentError('forward_score needs at least one sample')
    return np.max(np.stack([index.score(sample.forward_text()) for sample in samples]), axis=0)


def minmax(scores: np.ndarray) -> np.ndarray:
    '''Map to [0, 1]. A constant vector maps to zeros.'''
    if len(scores) == 0:
        return scores.astype(np.float64)
    low, high = float(scores.min()), float(scores.max())
    if high == low:
        return np.zeros_like(scores, dtype=np.float64)
    return (scores - low) / (high - low)


def stage2_fb_scores(
    query: str,
    all_chunks: Sequence[Chunk],
    index: Retriever,
    samples: Sequence[ForwardSample],
    eta_b: float,
    eta_f: float,
    normalization: Normalization = Normalization.MINMAX,
) -> list[ScoredChunk]:
    '''
    S_FB = eta_b * S_B + eta_f * S_F over every chunk of the full context, not only the recalled ones.
    '''
    if index.chunk_ids != tuple(chunk.id for chunk in all_chunks):
        raise InvalidArgumentError('The index must cover exactly the chunks of the full context')
    if eta_b < 0 or eta_f < 0 or eta_b + eta_f <= 0:
        raise InvalidArgumentError(f'Invalid mixing weights eta_b={eta_b}, eta_f={eta_f}')
    if eta_f > 0 and not samples:
        raise InvalidArgumentError('eta_f > 0 needs at least one forward sample')

    backward = index.score(query)
    forward = forward_score(index, samples) if samples else np.zeros(len(index.chunk_ids))
    if samples and not forward.any():
        logger.debug(f'None of the {len(samples)} forward samples shares a term with the context')
    if normalization is Normalization.MINMAX:
        backward, forward = minmax(backward), minmax(forward)

    combined = eta_b * backward + eta_f * forward
    return [
        ScoredChunk(chunk.id, float(backward[i]), float(forward[i]), float(combined[i]))
        for i, chunk in enumerate(all_chunks)
    ]


def select_context(scored: Sequence[ScoredChunk], chunks: Sequence[Chunk], budget: int) -> list[int]:
    '''Precision-focused selection by combined score; ids come back in document order.'''
    return select_by_budget([item.s_combined for item in scored], chunks, budget)


def build_prompt(template: PromptTemplate, chunks: Sequence[Chunk], query: str, choices: Optional[Sequence[str]] = None) -> str:
    '''Chunks are joined in the order given, separated by a blank line.'''
    return template.render(join_chunks(list(chunks)), query, choices)


async def generate_answer(
    prompt: str,
    template: PromptTemplate,
    gateway: LlmGateway,
    params: GenParams,
    sink: Optional[CompletionSink] = None,
) -> str:
    params = params.with_(n_samples=1, max_new_tokens=template.max_new_tokens)
    texts = await gateway.generate(prompt, params, sink)
    return texts[0].strip()


async def stage3_generate(
    query: str,
    c2_chunks: Sequence[Chunk],
    template: PromptTemplate,
    gateway: LlmGateway,
    params: GenParams,
    choices: Optional[Sequence[str]] = None,
    sink: Optional[CompletionSink] = None,
) -> str:
    if not c2_chunks:
        raise InvalidArgumentError('Final generation needs a non-empty context')
    prompt = build_prompt(template, c2_chunks, query, choices)
    return await generate_answer(prompt, template, gateway, params, sink)
