"""JSONL loader for LongBench / InfiniteBench style files.

One JSON object per line with "_id", "input", "context", "answers" and, for multiple choice,
"all_classes". Blank lines are skipped; any other bad line fails the whole load with its line number.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

from fbrag.chunker import count_words
from fbrag.datasets.registry import TaskSpec
from fbrag.errors import DatasetError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Example:
    id: str
    input: str
    context: str
    answers: list[str]
    all_classes: Optional[list[str]] = None


def _string_list(value: Any) -> bool:
    return isinstance(value, list) and all(isinstance(item, str) for item in value)


def _to_example(data: Any, spec: TaskSpec) -> Example:
    if not isinstance(data, dict):
        raise ValueError('expected a JSON object')
    for key in ('_id', 'input', 'context', 'answers'):
        if key not in data:
            raise ValueError(f'missing required field "{key}"')
    for key in ('input', 'context'):
        if not isinstance(data[key], str):
            raise ValueError(f'field "{key}" must be a string')
    if not _string_list(data['answers']) or not data['answers']:
        raise ValueError('field "answers" must be a non-empty array of strings')

    all_classes = data.get('all_classes')
    if spec.is_mcq:
        if not _string_list(all_classes) or not all_classes:
            raise ValueError(f'{spec.name} is multiple choice, "all_classes" must be a non-empty array of strings')
    else:
        # LongBench writes null here for non-MCQ tasks
        all_classes = None

    return Example(str(data['_id']), data['input'], data['context'], list(data['answers']), all_classes)


def load_jsonl(path: str | Path, spec: TaskSpec) -> list[Example]:
    path = Path(path)
    examples: list[Example] = []
    try:
        # decoded line by line so a bad byte is reported with its line number
        with path.open('rb') as f:
            for line_num, raw in enumerate(f, 1):
                try:
                    line = raw.decode('utf-8')
                    if not line.strip():
                        continue
                    examples.append(_to_example(json.loads(line), spec))
                except ValueError as e:
                    raise DatasetError(str(path), line_num, str(e)) from e
    except OSError as e:
        raise DatasetError(str(path), None, repr(e)) from e
    logger.debug(f'Loaded {len(examples)} {spec.name} examples from {path}')
    return examples


def summarize_examples(examples: Sequence[Example]) -> tuple[int, float]:
    '''Query count and mean context length in words.'''
    if not examples:
        return 0, 0.0
    return len(examples), sum(count_words(example.context) for example in examples) / len(examples)
