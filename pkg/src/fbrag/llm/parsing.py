from __future__ import annotations

import re
from dataclasses import dataclass

'''
Parsing of Stage II samples. The Stage II prompt ends with the cue "Rationale:", so a sample that
starts straight away with its reasoning is read as if the cue were at position zero.
Parsing never raises; whatever the model produced is kept in `raw`.
'''

_RATIONALE = re.compile(r'rationale\s*:', re.IGNORECASE)
_ANSWER = re.compile(r'answer\s*:', re.IGNORECASE)


@dataclass(frozen=True)
class ForwardSample:
    rationale: str
    answer: str
    raw: str

    @property
    def parsed(self) -> bool:
        return bool(self.rationale or self.answer)

    def forward_text(self) -> str:
        '''The pseudo-query used for forward scoring.'''
        if self.parsed:
            return f'{self.rationale} {self.answer}'.strip()
        return self.raw


def parse_forward_sample(raw: str) -> ForwardSample:
    rationale_marker = _RATIONALE.search(raw)
    rationale_start = rationale_marker.end() if rationale_marker else 0

    answer_marker = _ANSWER.search(raw, rationale_start)
    if answer_marker is None:
        if rationale_marker is None:
            return ForwardSample('', '', raw)
        # truncated before the answer
        return ForwardSample(raw[rationale_start:].strip(), '', raw)

    return ForwardSample(
        raw[rationale_start:answer_marker.start()].strip(),
        raw[answer_marker.end():].strip(),
        raw,
    )
