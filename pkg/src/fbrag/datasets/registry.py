from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import cache
from types import MappingProxyType
from typing import Mapping

from fbrag.errors import ConfigError
from fbrag.llm.templates import STAGE2_EXTRA_TOKENS, PromptTemplate
from fbrag.metrics import MetricKind

here = os.path.dirname(__file__)

'''
Per-dataset task specifications. Prompts, decoding limits and reference statistics live in
tasks.json so they can be audited without reading code. The LongBench limits are the ones released
with that benchmark; the two InfiniteBench tasks use 64.
'''


@dataclass(frozen=True)
class TaskSpec:
    name: str
    metric: MetricKind
    template_final: PromptTemplate
    template_self_route: PromptTemplate
    template_stage2: PromptTemplate
    max_new_tokens: int
    benchmark: str
    reference_queries: int
    reference_avg_words: int

    @property
    def stage2_max_new_tokens(self) -> int:
        return self.max_new_tokens + STAGE2_EXTRA_TOKENS

    @property
    def is_mcq(self) -> bool:
        return self.metric is MetricKind.MCQ_ACCURACY

    def template(self, kind: str) -> PromptTemplate:
        try:
            return {'final': self.template_final, 'self_route': self.template_self_route, 'stage2': self.template_stage2}[kind]
        except KeyError:
            raise ConfigError('template', f'unknown template kind "{kind}"') from None


def _load_spec(name: str, data: dict) -> TaskSpec:
    limit = data['max_new_tokens']
    return TaskSpec(
        name=name,
        metric=MetricKind(data['metric']),
        template_final=PromptTemplate(f'{name}/final', data['final'], limit),
        template_self_route=PromptTemplate(f'{name}/self_route', data['self_route'], limit),
        template_stage2=PromptTemplate(f'{name}/stage2', data['stage2'], limit),
        max_new_tokens=limit,
        benchmark=data['benchmark'],
        reference_queries=data['reference_queries'],
        reference_avg_words=data['reference_avg_words'],
    )


@cache
def registry() -> Mapping[str, TaskSpec]:
    with open(os.path.join(here, 'tasks.json'), encoding='utf-8') as f:
        raw = json.load(f)
    return MappingProxyType({name: _load_spec(name, data) for name, data in raw.items()})


def normalize_task_name(name: str) -> str:
    return name.strip().lower().replace('.', '_').replace('-', '_').replace(' ', '_')


def get_task(name: str) -> TaskSpec:
    key = normalize_task_name(name)
    tasks = registry()
    if key not in tasks:
        raise ConfigError('dataset', f'unknown dataset "{name}", expected one of {sorted(tasks)}')
    return tasks[key]


def template_by_id(template_id: str) -> PromptTemplate:
    '''Template ids look like "hotpotqa/stage2".'''
    task_name, _, kind = template_id.partition('/')
    return get_task(task_name).template(kind)
