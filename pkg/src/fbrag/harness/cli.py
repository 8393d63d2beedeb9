from __future__ import annotations

import argparse
import asyncio
import csv
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from termcolor import colored
from tqdm import tqdm

from fbrag import metrics
from fbrag.datasets import Example, TaskSpec, get_task, load_jsonl, summarize_examples
from fbrag.errors import (
    ALREADY_LOGGED_ERROR_NOTE,
    BackendError,
    ConfigError,
    DatasetError,
    InvalidArgumentError,
    StageError,
)
from fbrag.harness.appender import OrderedAppender
from fbrag.harness.logs import setup_logging
from fbrag.harness.manifest import AGGREGATE_NAME, RECORDS_NAME, RunManifest
from fbrag.harness.runconfig import RunConfig, load_run_config
from fbrag.llm.gateway import LlmGateway
from fbrag.metrics import EvalRecord
from fbrag.pipeline.config import FbConfig
from fbrag.pipeline.runner import run_pipeline

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_DATASET = 4

SWEEP_AXES = ('chunks', 'samples', 'budget')


@dataclass(frozen=True)
class RunSummary:
    dataset: str
    mode: str
    score: float
    mean_latency_s: float

    def line(self) -> str:
        return f'{self.dataset} {self.mode} {self.score:.2f} {self.mean_latency_s:.6f}'


def exit_code_for(error: BaseException) -> int:
    while isinstance(error, StageError):
        error = error.cause
    if isinstance(error, (ConfigError, InvalidArgumentError)):
        return EXIT_CONFIG
    if isinstance(error, BackendError):
        return EXIT_BACKEND
    if isinstance(error, DatasetError):
        return EXIT_DATASET
    return EXIT_ERROR


def _first_error(error: BaseException) -> BaseException:
    while isinstance(error, BaseExceptionGroup):
        error = error.exceptions[0]
    return error


def resolve_task(run_config: RunConfig, dataset_path: Path) -> TaskSpec:
    '''The config's dataset key wins; otherwise the file name, e.g. hotpotqa.jsonl.'''
    return get_task(run_config.dataset or dataset_path.stem)


async def evaluate_example(
    position: int,
    example: Example,
    task: TaskSpec,
    config: FbConfig,
    gateway_forward: Optional[LlmGateway],
    gateway_final: LlmGateway,
) -> tuple[EvalRecord, dict]:
    try:
        result = await run_pipeline(
            config, example.input, example.context, gateway_forward, gateway_final, example.all_classes,
        )
    except Exception as e:
        logger.error(f'Example {position} ({example.id}) failed: {e}')
        e.add_note(ALREADY_LOGGED_ERROR_NOTE)
        raise

    record = EvalRecord(
        example_id=example.id,
        dataset=task.name,
        mode=config.mode.value,
        metric=task.metric,
        prediction=result.answer,
        answers=example.answers,
        score=metrics.score(task.metric, result.answer, example.answers, example.all_classes),
        stage_latencies_s=result.stage_latencies_s,
        total_latency_s=result.total_latency_s,
    )
    return record, record.to_json() | {'pipeline': result.to_json()}


async def run_dataset(
    run_config: RunConfig,
    task: TaskSpec,
    examples: Sequence[Example],
    records_path: Path,
    workers: int = 1,
) -> list[EvalRecord]:
    '''Evaluate every example with at most `workers` in flight; records land in dataset order.'''
    config = run_config.fb.for_task(task.name)
    gateway_forward, gateway_final = run_config.make_gateways()
    semaphore = asyncio.Semaphore(workers)
    records: list[Optional[EvalRecord]] = [None] * len(examples)

    with tqdm(total=len(examples), desc=f'{task.name} {config.mode.value}', unit='example') as progress:
        async with OrderedAppender(records_path) as appender:

            async def work(position: int, example: Example) -> None:
                async with semaphore:
                    record, line = await evaluate_example(
                        position, example, task, config, gateway_forward, gateway_final,
                    )
                records[position] = record
                appender.append(position, line)
                progress.update()

            try:
                async with asyncio.TaskGroup() as group:
                    for position, example in enumerate(examples):
                        group.create_task(work(position, example))
            finally:
                if gateway_forward is not None:
                    await gateway_forward.aclose()
                await gateway_final.aclose()

    return [record for record in records if record is not None]


def execute(run_config: RunConfig, dataset_path: Path, out_dir: Path, workers: int = 1) -> RunSummary:
    '''One complete run: records, manifest and the aggregate line under out_dir.'''
    task = resolve_task(run_config, dataset_path)
    examples = load_jsonl(dataset_path, task)
    if not examples:
        raise DatasetError(str(dataset_path), None, 'no examples')
    count, avg_words = summarize_examples(examples)
    logger.info(
        f'{task.name}: {count} examples, {avg_words:.0f} words on average '
        f'(reference: {task.reference_queries} queries, {task.reference_avg_words} words)'
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        config=run_config.to_mapping() | {'dataset': task.name},
        dataset=task.name,
        dataset_path=str(dataset_path.resolve()),
        backends=run_config.describe_backends(),
    )
    records = asyncio.run(run_dataset(run_config, task, examples, out_dir / RECORDS_NAME, workers))
    manifest.finish()
    manifest.write(out_dir)

    summary = RunSummary(
        dataset=task.name,
        mode=run_config.fb.mode.value,
        score=metrics.aggregate(records),
        mean_latency_s=sum(record.total_latency_s for record in records) / len(records),
    )
    (out_dir / AGGREGATE_NAME).write_text(summary.line() + '\n', encoding='utf-8')
    logger.info(f'{summary.line()} -> {out_dir}')
    return summary


def _guarded(action) -> int:
    try:
        action()
    except BaseException as e:
        error = _first_error(e)
        if not isinstance(error, Exception):
            raise
        if ALREADY_LOGGED_ERROR_NOTE not in getattr(error, '__notes__', []):
            logger.error(str(error))
        code = exit_code_for(error)
        print(colored(f'fbrag: {error}', 'red'), file=sys.stderr)
        return code
    return EXIT_OK


def cmd_run(
    config_path: Path | str,
    dataset_path: Path | str,
    out_dir: Path | str,
    mode: Optional[str] = None,
    workers: int = 1,
    forward_url: Optional[str] = None,
    final_url: Optional[str] = None,
) -> int:
    def action():
        run_config = load_run_config(config_path, mode=mode, forward_url=forward_url, final_url=final_url)
        execute(run_config, Path(dataset_path), Path(out_dir), workers)
    return _guarded(action)


def sweep_changes(config: FbConfig, axis: str, value: int) -> dict[str, int]:
    if axis == 'chunks':
        return {'stage2_budget_words': value * config.chunk_size_words}
    if axis == 'samples':
        return {'k': value}
    if axis == 'budget':
        return {'stage2_budget_words': value}
    raise ConfigError('axis', f'"{axis}" is not one of {list(SWEEP_AXES)}')


def cmd_sweep(
    config_path: Path | str,
    dataset_path: Path | str,
    out_dir: Path | str,
    axis: str,
    values: Sequence[int],
    mode: Optional[str] = None,
    workers: int = 1,
    forward_url: Optional[str] = None,
    final_url: Optional[str] = None,
) -> int:
    def action():
        if axis not in SWEEP_AXES:
            raise ConfigError('axis', f'"{axis}" is not one of {list(SWEEP_AXES)}')
        if not values:
            raise ConfigError('values', 'at least one sweep value is required')
        base = load_run_config(config_path, mode=mode, forward_url=forward_url, final_url=final_url)
        out = Path(out_dir)
        rows = []
        for value in values:
            run_config = base.with_fb(**sweep_changes(base.fb, axis, value))
            summary = execute(run_config, Path(dataset_path), out / f'{axis}_{value}', workers)
            rows.append((value, f'{summary.score:.2f}', f'{summary.mean_latency_s:.6f}'))

        out.mkdir(parents=True, exist_ok=True)
        with (out / f'sweep_{axis}.csv').open('w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(('value', 'score', 'latency_s'))
            writer.writerows(rows)
    return _guarded(action)


def cmd_rerun(manifest_path: Path | str, out_dir: Path | str, workers: int = 1) -> int:
    def action():
        manifest = RunManifest.read(manifest_path)
        run_config = RunConfig.from_mapping(manifest.config, base_dir=Path(manifest_path).parent)
        execute(run_config, Path(manifest.dataset_path), Path(out_dir), workers)
    return _guarded(action)


def parse_values(raw: Sequence[str]) -> list[int]:
    '''Accepts "1 5 10" as well as "1,5,10".'''
    values = []
    for item in raw:
        for part in item.split(','):
            if not part.strip():
                continue
            try:
                values.append(int(part))
            except ValueError:
                raise ConfigError('values', f'"{part}" is not an integer') from None
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='fbrag', description='Forward-backward RAG over long-context QA datasets')
    parser.add_argument('--debug', action='store_true', help='debug logging (also DEBUG=true)')
    commands = parser.add_subparsers(dest='command', required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument('--config', type=Path, required=True, help='TOML or JSON run config')
        sub.add_argument('--dataset', type=Path, required=True, help='JSONL dataset file')
        sub.add_argument('--out', type=Path, required=True, help='output directory')
        sub.add_argument('--mode', choices=['fb', 'vanilla', 'op', 'self_route', 'long_context'], help='overrides the config')
        sub.add_argument('--workers', type=int, default=1, help='examples evaluated concurrently')
        sub.add_argument('--backend-forward-url', help='OpenAI-compatible base URL for Stage II sampling')
        sub.add_argument('--backend-final-url', help='OpenAI-compatible base URL for answer generation')

    run = commands.add_parser('run', help='evaluate one configuration on a dataset')
    common(run)

    sweep = commands.add_parser('sweep', help='evaluate one run per value of a parameter')
    common(sweep)
    sweep.add_argument('--axis', choices=SWEEP_AXES, required=True)
    sweep.add_argument('--values', nargs='*', default=[], help='e.g. 1 5 10 or 1,5,10')

    rerun = commands.add_parser('rerun', help='repeat a run from its manifest')
    rerun.add_argument('manifest', type=Path, help='manifest.json or the run directory')
    rerun.add_argument('--out', type=Path, required=True)
    rerun.add_argument('--workers', type=int, default=1)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    setup_logging(args.debug)

    if getattr(args, 'workers', 1) < 1:
        logger.error('--workers must be at least 1')
        return EXIT_CONFIG

    if args.command == 'rerun':
        return cmd_rerun(args.manifest, args.out, args.workers)

    urls = {'forward_url': args.backend_forward_url, 'final_url': args.backend_final_url}
    if args.command == 'run':
        return cmd_run(args.config, args.dataset, args.out, args.mode, args.workers, **urls)

    try:
        values = parse_values(args.values)
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG
    return cmd_sweep(args.config, args.dataset, args.out, args.axis, values, args.mode, args.workers, **urls)


if __name__ == '__main__':
    sys.exit(main())
