from __future__ import annotations

import time
from contextlib import contextmanager
from typing import Callable, Optional

from fbrag.llm.backends import Completion
from fbrag.pipeline.config import LatencyClock


class StageTimer:
    '''
    Per-run latency accounting. Used as the completion sink of the gateways so every generation
    of the run is recorded against the stage that issued it.

    With LatencyClock.WALL a stage costs its wall-clock time. With LatencyClock.BACKEND a stage costs
    the generation time the backends reported, so mock runs yield reproducible numbers.
    '''
    def __init__(self, clock_mode: LatencyClock = LatencyClock.WALL, clock: Callable[[], float] = time.perf_counter):
        self._mode = clock_mode
        self._clock = clock
        self._current: Optional[str] = None
        self._backend_s: dict[str, float] = {}
        self.stages: dict[str, float] = {}
        self.generations: list[float] = []

    @contextmanager
    def stage(self, name: str):
        if self._current is not None:
            raise RuntimeError(f'Stage {name} started inside stage {self._current}')
        self._current = name
        self._backend_s[name] = 0.0
        start = self._clock()
        try:
            yield
        finally:
            wall = self._clock() - start
            self.stages[name] = wall if self._mode is LatencyClock.WALL else self._backend_s[name]
            self._current = None

    def record(self, completion: Completion) -> None:
        self.generations.append(completion.elapsed_s)
        if self._current is not None:
            self._backend_s[self._current] += completion.elapsed_s

    @property
    def total(self) -> float:
        return sum(self.stages.values())
