from __future__ import annotations

import asyncio
import json
import logging
from pathlib import Path
from typing import Any, Optional

logger = logging.getLogger(__name__)


class OrderedAppender:
    '''
    The single writer of a JSONL file. Workers hand over records tagged with their position in
    the dataset; lines are written in position order no matter which worker finishes first.
    '''
    def __init__(self, path: Path | str) -> None:
        self._path = Path(path)
        self._queue: asyncio.Queue[Optional[tuple[int, dict[str, Any]]]] = asyncio.Queue()
        self._pending: dict[int, str] = {}
        self._next = 0
        self._task: Optional[asyncio.Task] = None
        self.written = 0

    def append(self, position: int, record: dict[str, Any]) -> None:
        self._queue.put_nowait((position, record))

    async def run(self) -> None:
        with self._path.open('w', encoding='utf-8', newline='\n') as f:
            while True:
                item = await self._queue.get()
                if item is None:
                    break
                position, record = item
                self._pending[position] = json.dumps(record, ensure_ascii=False)
                while self._next in self._pending:
                    f.write(self._pending.pop(self._next) + '\n')
                    self._next += 1
                    self.written += 1
                f.flush()

            # positions after a failed example
            if self._pending:
                logger.warning(f'{len(self._pending)} records written after a gap at position {self._next}')
            for position in sorted(self._pending):
                f.write(self._pending.pop(position) + '\n')
                self.written += 1

    async def __aenter__(self) -> OrderedAppender:
        self._task = asyncio.get_running_loop().create_task(self.run())
        return self

    async def __aexit__(self, *exc_info) -> None:
        self._queue.put_nowait(None)
        assert self._task is not None
        await self._task
