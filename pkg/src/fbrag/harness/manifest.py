from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Optional

from fbrag.errors import ConfigError

MANIFEST_NAME = 'manifest.json'
RECORDS_NAME = 'records.jsonl'
AGGREGATE_NAME = 'aggregate.txt'


def build_id() -> str:
    try:
        return f'fbrag {version("fbrag")}'
    except PackageNotFoundError:
        return 'fbrag (not installed)'


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


@dataclass
class RunManifest:
    '''
    Everything needed to repeat a run: with mock backends the config snapshot and the dataset
    path reproduce the records byte for byte.
    '''
    config: dict[str, Any]
    dataset: str
    dataset_path: str
    backends: dict[str, str]
    records_path: str = RECORDS_NAME
    build: str = field(default_factory=build_id)
    started_at: str = field(default_factory=now)
    finished_at: Optional[str] = None

    def finish(self) -> None:
        self.finished_at = now()

    def write(self, out_dir: Path) -> Path:
        path = out_dir / MANIFEST_NAME
        path.write_text(json.dumps(asdict(self), indent=2, ensure_ascii=False) + '\n', encoding='utf-8')
        return path

    @classmethod
    def read(cls, path: Path | str) -> RunManifest:
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError('manifest', f'cannot read {path}: {e}') from e
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError('manifest', f'{path} is not a run manifest: {e}') from e
