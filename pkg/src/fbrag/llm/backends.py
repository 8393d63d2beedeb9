from __future__ import annotations

import asyncio
import json
import logging
import os
import re
import time
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Protocol, Sequence

import httpx
import openai

from fbrag.chunker import count_words
from fbrag.errors import BackendUnavailableError, ConfigError, ProtocolError
from fbrag.llm.params import GenParams, LlmEndpointConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Completion:
    request_id: str
    texts: list[str]
    # generation time as seen by the backend; for parallel samples this is the slowest one
    elapsed_s: float
    prompt_words: int


Limiter = asyncio.Semaphore


class LlmBackend(Protocol):
    async def complete(
        self, prompt: str, params: GenParams, request_id: str, limiter: Optional[Limiter] = None,
    ) -> Completion:
        '''Every request sent to the model holds `limiter` while it is in flight.'''
        pass

    async def aclose(self) -> None:
        pass


def _hold(limiter: Optional[Limiter]):
    return limiter if limiter is not None else nullcontext()


def _truncate_words(text: str, limit: int) -> str:
    for i, match in enumerate(re.finditer(r'\S+', text)):
        if i + 1 == limit:
            return text[:match.end()]
    return text


'''
OpenAI-compatible chat completions through the openai client; retries are ours, not the SDK's
'''

class HttpBackend:
    def __init__(self, config: LlmEndpointConfig, transport: Optional[httpx.AsyncBaseTransport] = None) -> None:
        self._config = config
        api_key = os.environ.get(config.api_key_env, '').strip()
        if not api_key:
            logger.debug(f'{config.api_key_env} is not set, sending requests without auth')
        self._client = openai.AsyncOpenAI(
            base_url=config.base_url.rstrip('/'),
            api_key=api_key or 'EMPTY',
            timeout=config.timeout_s,
            max_retries=0,
            http_client=httpx.AsyncClient(transport=transport, timeout=config.timeout_s) if transport else None,
        )

    @property
    def config(self) -> LlmEndpointConfig:
        return self._config

    def build_body(self, prompt: str, params: GenParams, n: int) -> dict[str, Any]:
        body: dict[str, Any] = {
            'model': self._config.model_name,
            'messages': [{'role': 'user', 'content': prompt}],
            'temperature': params.temperature,
            'top_p': params.top_p,
            'max_tokens': params.max_new_tokens,
            'n': n,
        }
        if self._config.send_top_k:
            # not part of the OpenAI schema; vLLM and TGI accept it in the body
            body['extra_body'] = {'top_k': params.top_k}
        return body

    async def complete(
        self, prompt: str, params: GenParams, request_id: str, limiter: Optional[Limiter] = None,
    ) -> Completion:
        start = time.perf_counter()
        if self._config.parallel_samples and params.n_samples > 1:
            try:
                async with asyncio.TaskGroup() as group:
                    batches = [
                        group.create_task(self._post(self.build_body(prompt, params, 1), f'{request_id}.{k}', 1, limiter))
                        for k in range(params.n_samples)
                    ]
            except BaseExceptionGroup as e:
                # siblings are cancelled by now; surface the first real failure
                raise e.exceptions[0]
            texts = [text for batch in batches for text in batch.result()]
        else:
            body = self.build_body(prompt, params, params.n_samples)
            texts = await self._post(body, request_id, params.n_samples, limiter)
        return Completion(request_id, texts, time.perf_counter() - start, count_words(prompt))

    async def _post(self, body: dict[str, Any], request_id: str, expected: int, limiter: Optional[Limiter]) -> list[str]:
        last_reason = 'no attempt made'
        for attempt in range(self._config.retries + 1):
            if attempt:
                delay = self._config.backoff_s * 2 ** (attempt - 1)
                logger.warning(f'Request {request_id}: retry {attempt}/{self._config.retries} in {delay:.2f}s ({last_reason})')
                await asyncio.sleep(delay)
            try:
                async with _hold(limiter):
                    response = await self._client.chat.completions.create(
                        **body, extra_headers={'X-Request-Id': request_id},
                    )
            except (openai.APIConnectionError, openai.RateLimitError, openai.InternalServerError) as e:
                last_reason = f'{type(e).__name__}: {e}'
                continue
            except openai.APIStatusError as e:
                raise ProtocolError(request_id, str(e)[:300], e.status_code) from e
            except openai.APIError as e:
                raise ProtocolError(request_id, f'malformed response: {e}') from e
            return self._parse(response, request_id, expected)

        raise BackendUnavailableError(request_id, f'gave up after {self._config.retries + 1} attempts: {last_reason}')

    @staticmethod
    def _parse(response: Any, request_id: str, expected: int) -> list[str]:
        try:
            texts = [choice.message.content for choice in response.choices]
        except (AttributeError, TypeError) as e:
            raise ProtocolError(request_id, f'malformed response: {e!r}') from e
        if len(texts) != expected or not all(isinstance(text, str) for text in texts):
            raise ProtocolError(request_id, f'expected {expected} string choices, got {len(texts)}')
        return texts

    async def aclose(self) -> None:
        await self._client.close()


'''
Deterministic mock backend. Output is a pure function of (prompt, params, rules).
'''

ECHO = 'echo'
_QUESTION_LINE = re.compile(r'^.*\b(?:Question|Query):.*$', re.MULTILINE)


@dataclass(frozen=True)
class MockRule:
    pattern: str
    responses: tuple[str, ...]
    regex: bool = False

    def matches(self, prompt: str) -> bool:
        if self.regex:
            return re.search(self.pattern, prompt) is not None
        return self.pattern in prompt

    @staticmethod
    def from_mapping(data: dict[str, Any]) -> MockRule:
        if 'pattern' not in data:
            raise ConfigError('rules.pattern', 'missing')
        responses = data.get('responses', [data['response']] if 'response' in data else None)
        if not responses:
            raise ConfigError('rules.responses', f'rule "{data["pattern"]}" has no response')
        return MockRule(data['pattern'], tuple(responses), bool(data.get('regex', False)))


@dataclass
class MockBackend:
    '''
    The first rule whose pattern occurs in the prompt answers; sample k gets responses[k % len].
    Without a matching rule the default answers: "echo" returns the last question line of the prompt.
    Texts are cut to max_new_tokens words, which mimics a hard decoding limit.
    '''
    rules: Sequence[MockRule] = field(default_factory=list)
    default: str = ECHO
    base_delay: float = 0.0
    delay_per_prompt_word: float = 0.0
    delay_per_token: float = 0.0
    simulate_delay: bool = False
    context_limit_words: Optional[int] = None

    @classmethod
    def from_file(cls, path: str | Path, **kwargs: Any) -> MockBackend:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
        if isinstance(data, dict) and 'rules' not in data:
            data = {'rules': [{'pattern': key, 'response': value} for key, value in data.items()]}
        rules = [MockRule.from_mapping(rule) for rule in data.get('rules', [])]
        if 'default' in data:
            kwargs.setdefault('default', data['default'])
        return cls(rules=rules, **kwargs)

    def respond(self, prompt: str, k: int) -> str:
        for rule in self.rules:
            if rule.matches(prompt):
                return rule.responses[k % len(rule.responses)]
        if self.default != ECHO:
            return self.default
        questions = _QUESTION_LINE.findall(prompt)
        if questions:
            return questions[-1].strip()
        lines = [line for line in prompt.splitlines() if line.strip()]
        return lines[-1].strip() if lines else ''

    async def complete(
        self, prompt: str, params: GenParams, request_id: str, limiter: Optional[Limiter] = None,
    ) -> Completion:
        prompt_words = count_words(prompt)
        if self.context_limit_words is not None and prompt_words > self.context_limit_words:
            raise ProtocolError(request_id, f'prompt of {prompt_words} words exceeds context limit {self.context_limit_words}', 400)

        texts = [_truncate_words(self.respond(prompt, k), params.max_new_tokens) for k in range(params.n_samples)]
        generated = max(count_words(text) for text in texts)
        elapsed = self.base_delay + self.delay_per_prompt_word * prompt_words + self.delay_per_token * generated
        if self.simulate_delay and elapsed > 0:
            async with _hold(limiter):
                await asyncio.sleep(elapsed)
        return Completion(request_id, texts, elapsed, prompt_words)

    async def aclose(self) -> None:
        return
