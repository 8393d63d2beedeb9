from __future__ import annotations

import re
import string
from dataclasses import dataclass
from typing import Optional, Sequence

from fbrag.errors import InvalidArgumentError

_SLOT = re.compile(r'\{(context|input|all_classes)\}')

STAGE2_CUE = 'Rationale:'
# Stage II generates reasoning before the answer, so it gets this many tokens on top of the task limit.
STAGE2_EXTRA_TOKENS = 64


def render_choices(choices: Sequence[str]) -> str:
    return '\n'.join(f'{label}. {choice}' for label, choice in zip(string.ascii_uppercase, choices))


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str
    max_new_tokens: int

    def slots(self) -> set[str]:
        return set(_SLOT.findall(self.text))

    def render(self, context: str, input: str, choices: Optional[Sequence[str]] = None) -> str:
        '''
        Fill the slots in a single pass so braces or slot names inside the context or the
        question are never substituted again.
        '''
        if 'all_classes' in self.slots() and not choices:
            raise InvalidArgumentError(f'Template {self.name} needs choices')
        values = {
            'context': context,
            'input': input,
            'all_classes': render_choices(choices or []),
        }
        return _SLOT.sub(lambda match: values[match.group(1)], self.text)

    def ends_with_cue(self) -> bool:
        return self.text.rstrip().endswith(STAGE2_CUE)
