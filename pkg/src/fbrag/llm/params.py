from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any

from fbrag.errors import ConfigError

DEFAULT_TOP_P = 0.9
DEFAULT_TOP_K = 50
DEFAULT_SAMPLES = 5


@dataclass(frozen=True)
class GenParams:
    top_p: float = DEFAULT_TOP_P
    top_k: int = DEFAULT_TOP_K
    temperature: float = 1.0
    max_new_tokens: int = 64
    n_samples: int = DEFAULT_SAMPLES

    def __post_init__(self):
        if not 0 < self.top_p <= 1:
            raise ConfigError('top_p', f'must be in (0, 1], got {self.top_p}')
        if self.top_k < 1:
            raise ConfigError('top_k', f'must be positive, got {self.top_k}')
        if self.temperature < 0:
            raise ConfigError('temperature', f'must be non-negative, got {self.temperature}')
        if self.max_new_tokens < 1:
            raise ConfigError('max_new_tokens', f'must be positive, got {self.max_new_tokens}')
        if self.n_samples < 1:
            raise ConfigError('n_samples', f'must be positive, got {self.n_samples}')

    @classmethod
    def forward_default(cls) -> GenParams:
        '''Stage II sampling: nucleus + top-k at temperature 1.'''
        return cls()

    @classmethod
    def greedy(cls) -> GenParams:
        '''Stage III and baseline generation.'''
        return cls(temperature=0.0, n_samples=1)

    def with_(self, **changes: Any) -> GenParams:
        return replace(self, **changes)

    def to_mapping(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str
    model_name: str
    api_key_env: str = 'OPENAI_API_KEY'
    timeout_s: float = 60.0
    retries: int = 3
    # Some OpenAI-compatible servers reject unknown body fields; turn this off for them.
    send_top_k: bool = True
    # Issue the K samples as K concurrent n=1 requests instead of one request with n=K.
    parallel_samples: bool = False
    max_concurrency: int = 8
    backoff_s: float = 0.5

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ConfigError('timeout_s', f'must be positive, got {self.timeout_s}')
        if self.retries < 0:
            raise ConfigError('retries', f'must be non-negative, got {self.retries}')
        if self.max_concurrency < 1:
            raise ConfigError('max_concurrency', f'must be positive, got {self.max_concurrency}')
