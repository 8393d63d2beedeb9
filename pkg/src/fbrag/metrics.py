"""Evaluation metrics: token F1 for QA, Rouge-L F1 for summarization, accuracy for multiple choice.

Normalization follows the LongBench / SQuAD convention: lowercase, drop ASCII punctuation (without
inserting spaces), drop the articles a/an/the, collapse whitespace. Rouge-L comes from rouge_score,
tokenized with the same punctuation rules but keeping the articles. Multiple gold answers are
handled by taking the maximum over golds.
"""

from __future__ import annotations

import enum
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

from rouge_score import rouge_scorer, tokenizers

from fbrag.errors import InvalidArgumentError
from fbrag.utils import half_up

_PUNCTUATION = set(string.punctuation)
_ARTICLES = re.compile(r'\b(a|an|the)\b')


class MetricKind(enum.Enum):
    QA_F1 = 'qa_f1'
    ROUGE_L_F1 = 'rouge_l_f1'
    MCQ_ACCURACY = 'mcq_accuracy'


def _strip_punctuation(text: str) -> str:
    return ''.join(ch for ch in text.lower() if ch not in _PUNCTUATION)


def normalize_answer(text: str) -> str:
    text = _strip_punctuation(text)
    text = _ARTICLES.sub(' ', text)
    return ' '.join(text.split())


def _require_golds(golds: Sequence[str]) -> None:
    if not golds:
        raise InvalidArgumentError('At least one gold answer is required')


def _f1(common: int, n_pred: int, n_gold: int) -> float:
    if common == 0:
        return 0.0
    precision = common / n_pred
    recall = common / n_gold
    return 2 * precision * recall / (precision + recall)


def _token_f1(prediction: str, gold: str) -> float:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    common = Counter(pred_tokens) & Counter(gold_tokens)
    return _f1(sum(common.values()), len(pred_tokens), len(gold_tokens))


def qa_f1(prediction: str, golds: Sequence[str]) -> float:
    _require_golds(golds)
    return max(_token_f1(prediction, gold) for gold in golds)


class _AnswerTokenizer(tokenizers.Tokenizer):
    '''normalize_answer's punctuation and whitespace rules, articles kept.'''
    def tokenize(self, text: str) -> list[str]:
        return _strip_punctuation(text).split()


_ROUGE_TOKENIZER = _AnswerTokenizer()
_ROUGE = rouge_scorer.RougeScorer(['rougeL'], tokenizer=_ROUGE_TOKENIZER)


def _rouge_l(prediction: str, gold: str) -> float:
    pred_tokens = _ROUGE_TOKENIZER.tokenize(prediction)
    gold_tokens = _ROUGE_TOKENIZER.tokenize(gold)
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    return _ROUGE.score(gold, prediction)['rougeL'].fmeasure


def rouge_l_f1(prediction: str, golds: Sequence[str]) -> float:
    _require_golds(golds)
    return max(_rouge_l(prediction, gold) for gold in golds)


def _label_pattern(label: str) -> re.Pattern:
    # "B", "B.", "B)", "(B)", "B:" but not the article in "a dog"
    return re.compile(rf'(?<![0-9a-z])\(?{label}(?:[.):]|$)', re.IGNORECASE)


def _first_choice(prediction: str, choices: Sequence[str]) -> Optional[int]:
    stripped = prediction.strip()
    lowered = stripped.lower()
    normalized = f' {normalize_answer(prediction)} '
    best: Optional[tuple[int, int, int]] = None  # (position, -length, choice index)
    for i, choice in enumerate(choices):
        candidates = []
        text = normalize_answer(choice)
        if text:
            position = normalized.find(f' {text} ')
            if position >= 0:
                candidates.append((position, -len(text), i))
        if i < len(string.ascii_uppercase):
            label = string.ascii_lowercase[i]
            # "B is correct"; case-sensitive so a leading article "a" is not label A
            if lowered == label or re.match(rf'\(?{label.upper()}\b', stripped):
                candidates.append((0, -1, i))
            else:
                match = _label_pattern(label).search(lowered)
                if match:
                    candidates.append((match.start(), -1, i))
        for candidate in candidates:
            if best is None or candidate < best:
                best = candidate
    return None if best is None else best[2]


def mcq_accuracy(prediction: str, gold_choice: str, all_choices: Sequence[str]) -> float:
    '''
    1 iff the first choice mentioned in the prediction, by text or by its letter label, is the gold one.
    Positions of text matches and label matches are compared on slightly different normalizations,
    which only matters when a prediction mentions two different choices.
    '''
    if gold_choice not in all_choices:
        raise InvalidArgumentError(f'Gold choice "{gold_choice}" is not one of the choices')
    first = _first_choice(prediction, all_choices)
    if first is None:
        return 0.0
    return float(all_choices[first] == gold_choice)


def score(kind: MetricKind, prediction: str, golds: Sequence[str], choices: Optional[Sequence[str]] = None) -> float:
    if kind is MetricKind.QA_F1:
        return qa_f1(prediction, golds)
    if kind is MetricKind.ROUGE_L_F1:
        return rouge_l_f1(prediction, golds)
    _require_golds(golds)
    if not choices:
        raise InvalidArgumentError('mcq_accuracy needs the choice list')
    candidates = [gold for gold in golds if gold in choices]
    if not candidates:
        return 0.0
    return max(mcq_accuracy(prediction, gold, choices) for gold in candidates)


@dataclass(frozen=True)
class EvalRecord:
    example_id: str
    dataset: str
    mode: str
    metric: MetricKind
    prediction: str
    answers: list[str]
    score: float
    stage_latencies_s: dict[str, float] = field(default_factory=dict)
    total_latency_s: float = 0.0

    def to_json(self) -> dict:
        return {
            'example_id': self.example_id,
            'dataset': self.dataset,
            'mode': self.mode,
            'metric': self.metric.value,
            'prediction': self.prediction,
            'answers': self.answers,
            'score': self.score,
            'stage_latencies_s': self.stage_latencies_s,
            'total_latency_s': self.total_latency_s,
        }


def aggregate(records: Sequence[EvalRecord]) -> float:
    '''Mean score as a percentage, rounded half-up to 2 decimals.'''
    if not records:
        raise InvalidArgumentError('Cannot aggregate an empty record list')
    kinds = {record.metric for record in records}
    if len(kinds) != 1:
        raise InvalidArgumentError(f'Records mix metric kinds: {sorted(kind.value for kind in kinds)}')
    return half_up(sum(record.score for record in records) / len(records) * 100)
