from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping, Optional

from fbrag.chunker import DEFAULT_CHUNK_SIZE
from fbrag.errors import ConfigError
from fbrag.llm.params import DEFAULT_SAMPLES, GenParams


class Mode(enum.Enum):
    FB = 'fb'
    VANILLA = 'vanilla'
    OP = 'op'
    SELF_ROUTE = 'self_route'
    LONG_CONTEXT = 'long_context'


class Normalization(enum.Enum):
    NONE = 'none'
    MINMAX = 'minmax'


class LatencyClock(enum.Enum):
    # wall-clock time of every stage
    WALL = 'wall'
    # only generation time reported by the backends; deterministic with mock backends
    BACKEND = 'backend'


_ENUM_FIELDS = {'mode': Mode, 'normalization': Normalization, 'latency_clock': LatencyClock}
_PARAM_FIELDS = ('forward_params', 'final_params')


@dataclass(frozen=True)
class FbConfig:
    mode: Mode = Mode.FB
    eta_b: float = 0.0
    eta_f: float = 1.0
    k: int = DEFAULT_SAMPLES
    stage1_budget_words: int = 6000
    stage2_budget_words: int = 6000
    chunk_size_words: int = DEFAULT_CHUNK_SIZE
    forward_params: GenParams = field(default_factory=GenParams.forward_default)
    final_params: GenParams = field(default_factory=GenParams.greedy)
    # template ids such as "hotpotqa/stage2"; None means "the dataset's own"
    stage2_template: Optional[str] = None
    final_template: Optional[str] = None
    self_route_template: Optional[str] = None
    normalization: Normalization = Normalization.MINMAX
    latency_clock: LatencyClock = LatencyClock.WALL

    def __post_init__(self):
        if self.eta_b < 0:
            raise ConfigError('eta_b', f'must be non-negative, got {self.eta_b}')
        if self.eta_f < 0:
            raise ConfigError('eta_f', f'must be non-negative, got {self.eta_f}')
        if self.eta_b + self.eta_f <= 0:
            raise ConfigError('eta_f', 'eta_b + eta_f must be positive')
        if self.k < 1:
            raise ConfigError('k', f'must be positive, got {self.k}')
        if self.chunk_size_words < 1:
            raise ConfigError('chunk_size_words', f'must be positive, got {self.chunk_size_words}')
        for key in ('stage1_budget_words', 'stage2_budget_words'):
            if getattr(self, key) < 0:
                raise ConfigError(key, f'must be non-negative, got {getattr(self, key)}')

    @classmethod
    def ours_f(cls, **changes: Any) -> FbConfig:
        '''Forward component only.'''
        return cls(mode=Mode.FB, eta_b=0.0, eta_f=1.0, **changes)

    @classmethod
    def ours_fb(cls, **changes: Any) -> FbConfig:
        '''Forward and backward components weighted equally.'''
        return cls(mode=Mode.FB, eta_b=0.5, eta_f=0.5, **changes)

    def forward_gen_params(self) -> GenParams:
        return self.forward_params.with_(n_samples=self.k)

    def final_gen_params(self) -> GenParams:
        return self.final_params.with_(n_samples=1)

    def with_(self, **changes: Any) -> FbConfig:
        return replace(self, **changes)

    def for_task(self, task_name: str) -> FbConfig:
        '''Fill unset template ids with the task's own templates.'''
        return replace(
            self,
            stage2_template=self.stage2_template or f'{task_name}/stage2',
            final_template=self.final_template or f'{task_name}/final',
            self_route_template=self.self_route_template or f'{task_name}/self_route',
        )

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> FbConfig:
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, 'unknown key')
        if 'mode' not in data:
            raise ConfigError('mode', 'missing required key')

        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key in _ENUM_FIELDS:
                try:
                    kwargs[key] = _ENUM_FIELDS[key](value)
                except ValueError:
                    choices = [member.value for member in _ENUM_FIELDS[key]]
                    raise ConfigError(key, f'"{value}" is not one of {choices}') from None
            elif key in _PARAM_FIELDS:
                if not isinstance(value, Mapping):
                    raise ConfigError(key, 'must be a table')
                base = GenParams.forward_default() if key == 'forward_params' else GenParams.greedy()
                kwargs[key] = _merge_params(base, value, key)
            else:
                kwargs[key] = value

        if kwargs['mode'] is Mode.FB:
            for key in ('eta_b', 'eta_f'):
                if key not in kwargs:
                    raise ConfigError(key, 'missing required key for mode "fb"')
        for key in ('eta_b', 'eta_f'):
            if key in kwargs and not isinstance(kwargs[key], (int, float)):
                raise ConfigError(key, f'must be a number, got {kwargs[key]!r}')
        for key in ('k', 'stage1_budget_words', 'stage2_budget_words', 'chunk_size_words'):
            if key in kwargs and not isinstance(kwargs[key], int):
                raise ConfigError(key, f'must be an integer, got {kwargs[key]!r}')
        return cls(**kwargs)

    def to_mapping(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, enum.Enum):
                value = value.value
            elif isinstance(value, GenParams):
                value = value.to_mapping()
            if value is not None:
                out[f.name] = value
        return out


def _merge_params(base: GenParams, overrides: Mapping[str, Any], prefix: str) -> GenParams:
    known = {f.name for f in fields(GenParams)}
    for key in overrides:
        if key not in known:
            raise ConfigError(f'{prefix}.{key}', 'unknown key')
    return base.with_(**dict(overrides))
