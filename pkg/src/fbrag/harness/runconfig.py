from __future__ import annotations

import json
import logging
import tomllib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from fbrag.errors import ConfigError
from fbrag.llm.backends import HttpBackend, LlmBackend, MockBackend, MockRule
from fbrag.llm.gateway import LlmGateway
from fbrag.llm.params import LlmEndpointConfig
from fbrag.pipeline.config import FbConfig, Mode

logger = logging.getLogger(__name__)

'''
Run configuration files. Top-level keys are the FbConfig fields plus the harness keys below;
backend tables pick their implementation with `kind = "http"` or `kind = "mock"`.
'''

HARNESS_KEYS = ('dataset', 'forward_backend', 'final_backend')
_HTTP_KEYS = {f.name for f in fields(LlmEndpointConfig)}
_MOCK_KEYS = {
    'fixture', 'rules', 'default', 'base_delay', 'delay_per_prompt_word',
    'delay_per_token', 'simulate_delay', 'context_limit_words',
}
DEFAULT_MOCK_CONCURRENCY = 8


@dataclass(frozen=True)
class RunConfig:
    fb: FbConfig
    final_backend: Mapping[str, Any]
    forward_backend: Optional[Mapping[str, Any]] = None
    dataset: Optional[str] = None
    # relative mock fixture paths resolve against this directory
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base_dir: Path | str = '.') -> RunConfig:
        data = dict(data)
        harness = {key: data.pop(key) for key in HARNESS_KEYS if key in data}
        fb = FbConfig.from_mapping(data)

        if 'final_backend' not in harness:
            raise ConfigError('final_backend', 'missing required key')
        if fb.mode is Mode.FB and 'forward_backend' not in harness:
            raise ConfigError('forward_backend', 'missing required key for mode "fb"')
        for key in ('forward_backend', 'final_backend'):
            if key in harness:
                _check_backend_table(harness[key], key)

        return cls(
            fb=fb,
            final_backend=dict(harness['final_backend']),
            forward_backend=dict(harness['forward_backend']) if 'forward_backend' in harness else None,
            dataset=harness.get('dataset'),
            base_dir=Path(base_dir).resolve(),
        )

    def with_fb(self, **changes: Any) -> RunConfig:
        return replace(self, fb=self.fb.with_(**changes))

    def to_mapping(self) -> dict[str, Any]:
        '''A self-contained snapshot: fixture paths are made absolute.'''
        out = self.fb.to_mapping()
        if self.dataset is not None:
            out['dataset'] = self.dataset
        out['final_backend'] = self._absolute(self.final_backend)
        if self.forward_backend is not None:
            out['forward_backend'] = self._absolute(self.forward_backend)
        return out

    def _absolute(self, table: Mapping[str, Any]) -> dict[str, Any]:
        table = dict(table)
        if 'fixture' in table:
            table['fixture'] = str(self.base_dir / table['fixture'])
        return table

    def describe_backends(self) -> dict[str, str]:
        out = {'final': _describe(self.final_backend)}
        if self.forward_backend is not None:
            out['forward'] = _describe(self.forward_backend)
        return out

    def make_gateways(self) -> tuple[Optional[LlmGateway], LlmGateway]:
        forward = None
        if self.forward_backend is not None and self.fb.mode is Mode.FB:
            forward = make_gateway(self.forward_backend, 'forward_backend', self.base_dir)
        return forward, make_gateway(self.final_backend, 'final_backend', self.base_dir)


def _describe(table: Mapping[str, Any]) -> str:
    if table['kind'] == 'http':
        return f'{table.get("base_url")} ({table.get("model_name")})'
    return f'mock:{table.get("fixture", "inline")}'


def _check_backend_table(table: Any, key: str) -> None:
    if not isinstance(table, Mapping):
        raise ConfigError(key, 'must be a table')
    kind = table.get('kind')
    if kind not in ('http', 'mock'):
        raise ConfigError(f'{key}.kind', f'must be "http" or "mock", got {kind!r}')
    known = _HTTP_KEYS if kind == 'http' else _MOCK_KEYS
    for name in table:
        if name != 'kind' and name not in known:
            raise ConfigError(f'{key}.{name}', 'unknown key')
    if kind == 'http':
        for name in ('base_url', 'model_name'):
            if name not in table:
                raise ConfigError(f'{key}.{name}', 'missing required key')


def make_backend(table: Mapping[str, Any], key: str, base_dir: Path) -> LlmBackend:
    _check_backend_table(table, key)
    options = {name: value for name, value in table.items() if name != 'kind'}
    if table['kind'] == 'http':
        return HttpBackend(LlmEndpointConfig(**options))

    fixture = options.pop('fixture', None)
    rules = [MockRule.from_mapping(rule) for rule in options.pop('rules', [])]
    if fixture is None:
        return MockBackend(rules=rules, **options)
    path = base_dir / fixture
    if not path.is_file():
        raise ConfigError(f'{key}.fixture', f'no such file: {path}')
    backend = MockBackend.from_file(path, **options)
    # inline rules take precedence over the fixture's
    return replace(backend, rules=[*rules, *backend.rules])


def make_gateway(table: Mapping[str, Any], key: str, base_dir: Path) -> LlmGateway:
    backend = make_backend(table, key, base_dir)
    concurrency = table.get('max_concurrency', DEFAULT_MOCK_CONCURRENCY)
    return LlmGateway(backend, concurrency, name=key.removesuffix('_backend'))


def read_config_file(path: Path | str) -> dict[str, Any]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigError('config', f'cannot read {path}: {e}') from e
    try:
        if path.suffix == '.toml':
            return tomllib.loads(raw.decode('utf-8'))
        return json.loads(raw)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError('config', f'cannot parse {path}: {e}') from e


def apply_overrides(
    data: Mapping[str, Any],
    mode: Optional[str] = None,
    forward_url: Optional[str] = None,
    final_url: Optional[str] = None,
) -> dict[str, Any]:
    '''Command-line flags win over the file. A backend URL turns that backend into an http one.'''
    data = dict(data)
    if mode is not None:
        data['mode'] = mode
    for key, url in (('forward_backend', forward_url), ('final_backend', final_url)):
        if url is None:
            continue
        table = dict(data.get(key) or {})
        if table.get('kind') != 'http':
            table = {name: value for name, value in table.items() if name in _HTTP_KEYS}
        table.update(kind='http', base_url=url)
        data[key] = table
    return data


def load_run_config(path: Path | str, **overrides: Optional[str]) -> RunConfig:
    path = Path(path)
    data = apply_overrides(read_config_file(path), **overrides)
    config = RunConfig.from_mapping(data, base_dir=path.parent)
    logger.debug(f'Loaded {path}: mode={config.fb.mode.value}')
    return config
