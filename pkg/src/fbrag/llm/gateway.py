from __future__ import annotations

import asyncio
import logging
from typing import Optional, Protocol, Sequence

from fbrag.errors import ProtocolError
from fbrag.llm.backends import Completion, LlmBackend
from fbrag.llm.params import GenParams
from fbrag.llm.parsing import ForwardSample, parse_forward_sample
from fbrag.llm.templates import STAGE2_EXTRA_TOKENS, PromptTemplate
from fbrag.utils import IdGenerator

logger = logging.getLogger(__name__)


class CompletionSink(Protocol):
    def record(self, completion: Completion) -> None:
        pass


class LlmGateway:
    '''
    Uniform generation interface over one backend. Shareable between tasks; at most
    `max_concurrency` model requests are in flight at once, counting each of a backend's parallel samples.
    '''
    def __init__(self, backend: LlmBackend, max_concurrency: int = 8, name: str = 'llm') -> None:
        self._backend = backend
        self._semaphore = asyncio.Semaphore(max_concurrency)
        self.name = name

    @property
    def backend(self) -> LlmBackend:
        return self._backend

    async def complete(self, prompt: str, params: GenParams, sink: Optional[CompletionSink] = None) -> Completion:
        request_id = IdGenerator.generate_id()
        logger.debug(f'{self.name} {request_id}: n={params.n_samples} max_new_tokens={params.max_new_tokens}')
        completion = await self._backend.complete(prompt, params, request_id, limiter=self._semaphore)
        if len(completion.texts) != params.n_samples:
            raise ProtocolError(request_id, f'asked for {params.n_samples} texts, got {len(completion.texts)}')
        if sink is not None:
            sink.record(completion)
        return completion

    async def generate(self, prompt: str, params: GenParams, sink: Optional[CompletionSink] = None) -> list[str]:
        return (await self.complete(prompt, params, sink)).texts

    async def sample_forward(
        self,
        query: str,
        context_text: str,
        template: PromptTemplate,
        params: GenParams,
        choices: Optional[Sequence[str]] = None,
        sink: Optional[CompletionSink] = None,
    ) -> list[ForwardSample]:
        prompt = template.render(context_text, query, choices)
        params = params.with_(max_new_tokens=template.max_new_tokens + STAGE2_EXTRA_TOKENS)
        texts = await self.generate(prompt, params, sink)
        samples = [parse_forward_sample(text) for text in texts]
        unparsed = sum(1 for sample in samples if not sample.parsed)
        if unparsed:
            logger.debug(f'{unparsed}/{len(samples)} forward samples had no Rationale/Answer markers, using raw text')
        return samples

    async def aclose(self) -> None:
        await self._backend.aclose()

    async def __aenter__(self) -> LlmGateway:
        return self

    async def __aexit__(self, *exc_info) -> None:
        await self.aclose()
