from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

from fbrag.chunker import Chunk, chunk_document, count_words, join_chunks
from fbrag.datasets.registry import template_by_id
from fbrag.errors import ConfigError, InvalidArgumentError, StageError
from fbrag.llm.gateway import LlmGateway
from fbrag.llm.parsing import ForwardSample
from fbrag.llm.templates import PromptTemplate
from fbrag.metrics import normalize_answer
from fbrag.pipeline.config import FbConfig, Mode
from fbrag.pipeline.stages import (
    build_prompt,
    generate_answer,
    select_context,
    stage1_recall,
    stage2_fb_scores,
    stage3_generate,
)
from fbrag.pipeline.timing import StageTimer
from fbrag.retrieval import ChunkIndex, ScoredChunk, build_index, select_by_budget

logger = logging.getLogger(__name__)

UNANSWERABLE = 'unanswerable'


@dataclass
class PipelineResult:
    mode: Mode
    answer: str = ''
    c1_ids: list[int] = field(default_factory=list)
    c2_ids: list[int] = field(default_factory=list)
    scored: list[ScoredChunk] = field(default_factory=list)
    samples: list[ForwardSample] = field(default_factory=list)
    stage_latencies_s: dict[str, float] = field(default_factory=dict)
    generation_latencies_s: list[float] = field(default_factory=list)
    prompt_words: dict[str, int] = field(default_factory=dict)
    routed_to_full_context: bool = False
    # kept for inspection; not part of the serialized record
    final_prompt: str = ''

    @property
    def total_latency_s(self) -> float:
        return sum(self.stage_latencies_s.values())

    def to_json(self) -> dict[str, Any]:
        return {
            'mode': self.mode.value,
            'answer': self.answer,
            'c1_ids': self.c1_ids,
            'c2_ids': self.c2_ids,
            'scored': [asdict(item) for item in self.scored],
            'samples': [asdict(sample) for sample in self.samples],
            'stage_latencies_s': self.stage_latencies_s,
            'total_latency_s': self.total_latency_s,
            'generation_latencies_s': self.generation_latencies_s,
            'prompt_words': self.prompt_words,
            'routed_to_full_context': self.routed_to_full_context,
        }


@contextmanager
def _stage(timer: StageTimer, name: str):
    '''Time the stage and tag whatever fails inside it with the stage name.'''
    logger.debug(f'Entering {name}')
    with timer.stage(name):
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            raise StageError(name, e) from e


def _resolve(template_id: Optional[str], key: str) -> PromptTemplate:
    if template_id is None:
        raise ConfigError(key, 'not set; resolve it with FbConfig.for_task')
    return template_by_id(template_id)


def _prepare(config: FbConfig, full_context_text: str) -> tuple[list[Chunk], ChunkIndex]:
    chunks = chunk_document(full_context_text, config.chunk_size_words)
    return chunks, build_index(chunks)


def _by_id(chunks: Sequence[Chunk], ids: Sequence[int]) -> list[Chunk]:
    return [chunks[i] for i in ids]


def _finish(result: PipelineResult, timer: StageTimer) -> PipelineResult:
    result.stage_latencies_s = dict(timer.stages)
    result.generation_latencies_s = list(timer.generations)
    return result


async def run_fb_rag(
    config: FbConfig,
    query: str,
    full_context_text: str,
    gateway_forward: LlmGateway,
    gateway_final: LlmGateway,
    choices: Optional[Sequence[str]] = None,
) -> PipelineResult:
    '''
    Stage I narrows the context to C1 by backward lookup. Stage II samples rationales and answers
    from C1 and rescores every chunk of the full context with both lookups. Stage III answers from C2.
    '''
    if config.mode is not Mode.FB:
        raise InvalidArgumentError(f'run_fb_rag needs mode fb, got {config.mode.value}')
    stage2_template = _resolve(config.stage2_template, 'stage2_template')
    final_template = _resolve(config.final_template, 'final_template')

    timer = StageTimer(config.latency_clock)
    result = PipelineResult(Mode.FB)
    chunks, index = _prepare(config, full_context_text)

    with _stage(timer, 'stage1'):
        result.c1_ids = stage1_recall(query, chunks, index, config.stage1_budget_words)

    with _stage(timer, 'stage2'):
        if config.eta_f > 0:
            c1_text = join_chunks(_by_id(chunks, result.c1_ids))
            result.prompt_words['stage2'] = count_words(stage2_template.render(c1_text, query, choices))
            result.samples = await gateway_forward.sample_forward(
                query, c1_text, stage2_template, config.forward_gen_params(), choices, sink=timer,
            )
        result.scored = stage2_fb_scores(
            query, chunks, index, result.samples, config.eta_b, config.eta_f, config.normalization,
        )
        result.c2_ids = select_context(result.scored, chunks, config.stage2_budget_words)

    with _stage(timer, 'stage3'):
        c2_chunks = _by_id(chunks, result.c2_ids)
        if c2_chunks:
            result.final_prompt = build_prompt(final_template, c2_chunks, query, choices)
            result.prompt_words['stage3'] = count_words(result.final_prompt)
        result.answer = await stage3_generate(
            query, c2_chunks, final_template, gateway_final, config.final_gen_params(), choices, sink=timer,
        )

    logger.debug(f'fb: C1={len(result.c1_ids)} chunks, C2={result.c2_ids}, {len(result.samples)} samples')
    return _finish(result, timer)


async def run_baseline(
    config: FbConfig,
    query: str,
    full_context_text: str,
    gateway_final: LlmGateway,
    choices: Optional[Sequence[str]] = None,
) -> PipelineResult:
    mode = config.mode
    if mode is Mode.FB:
        raise InvalidArgumentError('run_baseline does not run mode fb')
    final_template = _resolve(config.final_template, 'final_template')
    params = config.final_gen_params()

    timer = StageTimer(config.latency_clock)
    result = PipelineResult(mode)
    chunks, index = _prepare(config, full_context_text)

    async def answer_with(stage: str, template: PromptTemplate, selected: list[Chunk]) -> str:
        if not selected:
            raise InvalidArgumentError('Generation needs a non-empty context')
        result.final_prompt = build_prompt(template, selected, query, choices)
        result.prompt_words[stage] = count_words(result.final_prompt)
        return await generate_answer(result.final_prompt, template, gateway_final, params, sink=timer)

    if mode is Mode.LONG_CONTEXT:
        with _stage(timer, 'generation'):
            result.c2_ids = [chunk.id for chunk in chunks]
            result.answer = await answer_with('generation', final_template, chunks)
        return _finish(result, timer)

    with _stage(timer, 'retrieval'):
        backward = index.score(query)
        result.scored = [ScoredChunk(chunk.id, float(s), 0.0, float(s)) for chunk, s in zip(chunks, backward)]
        result.c2_ids = select_by_budget(backward, chunks, config.stage2_budget_words)

    if mode is Mode.VANILLA:
        prompt_order = sorted(result.c2_ids, key=lambda i: (-float(backward[i]), i))
    else:
        prompt_order = result.c2_ids

    if mode is Mode.SELF_ROUTE:
        route_template = _resolve(config.self_route_template, 'self_route_template')
        with _stage(timer, 'generation'):
            result.answer = await answer_with('generation', route_template, _by_id(chunks, prompt_order))
        if UNANSWERABLE in normalize_answer(result.answer):
            logger.debug('self_route: retrieved context judged insufficient, answering from the full context')
            result.routed_to_full_context = True
            with _stage(timer, 'self_route_fallback'):
                result.answer = await answer_with('self_route_fallback', final_template, chunks)
        return _finish(result, timer)

    with _stage(timer, 'generation'):
        result.answer = await answer_with('generation', final_template, _by_id(chunks, prompt_order))
    return _finish(result, timer)


async def run_pipeline(
    config: FbConfig,
    query: str,
    full_context_text: str,
    gateway_forward: Optional[LlmGateway],
    gateway_final: LlmGateway,
    choices: Optional[Sequence[str]] = None,
) -> PipelineResult:
    if config.mode is Mode.FB:
        if gateway_forward is None:
            raise ConfigError('forward_backend', 'missing required key for mode "fb"')
        return await run_fb_rag(config, query, full_context_text, gateway_forward, gateway_final, choices)
    return await run_baseline(config, query, full_context_text, gateway_final, choices)
