import asyncio
import csv
import json
import tempfile
import time
import unittest
from pathlib import Path
from fbrag.harness import RunManifest, cmd_rerun, cmd_run, cmd_sweep, main
from fbrag.harness.appender import OrderedAppender

from utils import write_synthetic_run

MODES = ('fb', 'vanilla', 'op', 'self_route', 'long_context')


def read_lines(path):
    return path.read_text(encoding='utf-8').splitlines()


class TestOrderedAppender(unittest.IsolatedAsyncioTestCase):
    async def test_writes_in_position_order(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'out.jsonl'
            async with OrderedAppender(path) as appender:
                for position in (2, 0, 3, 1):
                    appender.append(position, {'position': position})
                    await asyncio.sleep(0)
            self.assertEqual([json.loads(line)['position'] for line in read_lines(path)], [0, 1, 2, 3])


class HarnessTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def aggregate(self, out):
        dataset, mode, score, latency = read_lines(out / 'aggregate.txt')[0].split()
        return dataset, mode, float(score), float(latency)


class TestRun(HarnessTestCase):
    def test_all_modes_are_reproducible(self):
        config, dataset = write_synthetic_run(self.dir / 'data')
        expected = {'fb': 100.0, 'vanilla': 0.0, 'op': 0.0, 'self_route': 100.0, 'long_context': 100.0}
        start = time.perf_counter()
        for mode in MODES:
            first, second = self.dir / f'{mode}_1', self.dir / f'{mode}_2'
            self.assertEqual(cmd_run(config, dataset, first, mode=mode), 0)
            self.assertEqual(cmd_run(config, dataset, second, mode=mode), 0)
            self.assertEqual((first / 'records.jsonl').read_bytes(), (second / 'records.jsonl').read_bytes())
            self.assertEqual((first / 'aggregate.txt').read_bytes(), (second / 'aggregate.txt').read_bytes())
            self.assertEqual(len(read_lines(first / 'records.jsonl')), 25)
            self.assertEqual(self.aggregate(first)[:3], ('hotpotqa', mode, expected[mode]))

            rerun = self.dir / f'{mode}_rerun'
            self.assertEqual(cmd_rerun(first / 'manifest.json', rerun), 0)
            self.assertEqual((rerun / 'records.jsonl').read_bytes(), (first / 'records.jsonl').read_bytes())
        self.assertLess(time.perf_counter() - start, 60)

    def test_workers_do_not_change_output(self):
        config, dataset = write_synthetic_run(self.dir / 'data', n_examples=12)
        self.assertEqual(cmd_run(config, dataset, self.dir / 'serial', workers=1), 0)
        self.assertEqual(cmd_run(config, dataset, self.dir / 'parallel', workers=4), 0)
        self.assertEqual((self.dir / 'serial' / 'records.jsonl').read_bytes(), (self.dir / 'parallel' / 'records.jsonl').read_bytes())

    def test_backward_only_fb_scores_like_vanilla(self):
        config, dataset = write_synthetic_run(self.dir / 'data', n_examples=10, extra={'eta_b': 1.0, 'eta_f': 0.0})
        self.assertEqual(cmd_run(config, dataset, self.dir / 'fb', mode='fb'), 0)
        self.assertEqual(cmd_run(config, dataset, self.dir / 'vanilla', mode='vanilla'), 0)
        fb = [json.loads(line)['score'] for line in read_lines(self.dir / 'fb' / 'records.jsonl')]
        vanilla = [json.loads(line)['score'] for line in read_lines(self.dir / 'vanilla' / 'records.jsonl')]
        self.assertEqual(fb, vanilla)

    def test_records_and_manifest(self):
        config, dataset = write_synthetic_run(self.dir / 'data', n_examples=3)
        out = self.dir / 'out'
        self.assertEqual(cmd_run(config, dataset, out), 0)
        record = json.loads(read_lines(out / 'records.jsonl')[0])
        self.assertEqual(record['example_id'], 'synthetic-0')
        self.assertEqual(record['metric'], 'qa_f1')
        self.assertEqual(set(record['stage_latencies_s']), {'stage1', 'stage2', 'stage3'})
        self.assertAlmostEqual(sum(record['stage_latencies_s'].values()), record['total_latency_s'], places=3)
        self.assertEqual(record['pipeline']['c2_ids'], sorted(record['pipeline']['c2_ids']))
        manifest = RunManifest.read(out)
        self.assertEqual(manifest.dataset, 'hotpotqa')
        self.assertEqual(manifest.config['mode'], 'fb')
        self.assertIsNotNone(manifest.finished_at)

    def test_missing_config_key_exits_2(self):
        config, dataset = write_synthetic_run(self.dir / 'data', n_examples=2)
        data = json.loads(config.read_text(encoding='utf-8'))
        del data['mode']
        config.write_text(json.dumps(data), encoding='utf-8')
        with self.assertLogs('fbrag', level='ERROR') as logs:
            self.assertEqual(cmd_run(config, dataset, self.dir / 'out'), 2)
        self.assertTrue(any('"mode"' in line for line in logs.output))

    def test_missing_dataset_exits_4(self):
        config, _ = write_synthetic_run(self.dir / 'data', n_examples=2)
        self.assertEqual(cmd_run(config, self.dir / 'hotpotqa.jsonl', self.dir / 'out'), 4)

    def test_undecodable_dataset_exits_4(self):
        config, dataset = write_synthetic_run(self.dir / 'data', n_examples=2)
        dataset.write_bytes(dataset.read_bytes() + b'\xff\xfe\n')
        self.assertEqual(cmd_run(config, dataset, self.dir / 'out'), 4)

    def test_backend_failure_exits_3(self):
        config, dataset = write_synthetic_run(
            self.dir / 'data', n_examples=2,
            extra={'final_backend': {'kind': 'mock', 'fixture': 'final.json', 'context_limit_words': 5}},
        )
        self.assertEqual(cmd_run(config, dataset, self.dir / 'out', mode='long_context'), 3)

    def test_main(self):
        config, dataset = write_synthetic_run(self.dir / 'data', n_examples=2)
        code = main(['run', '--config', str(config), '--dataset', str(dataset), '--out', str(self.dir / 'out'), '--mode', 'op'])
        self.assertEqual(code, 0)
        self.assertEqual(self.aggregate(self.dir / 'out')[1], 'op')
        self.assertEqual(main(['run', '--config', str(config)]), 2)


class TestSweep(HarnessTestCase):
    def rows(self, out, axis):
        with (out / f'sweep_{axis}.csv').open(encoding='utf-8', newline='') as f:
            return list(csv.DictReader(f))

    def test_samples_axis(self):
        config, dataset = write_synthetic_run(self.dir / 'data', n_examples=5)
        out = self.dir / 'sweep'
        self.assertEqual(cmd_sweep(config, dataset, out, 'samples', [1, 5]), 0)
        rows = self.rows(out, 'samples')
        self.assertEqual([row['value'] for row in rows], ['1', '5'])
        self.assertEqual(set(rows[0]), {'value', 'score', 'latency_s'})
        self.assertEqual(RunManifest.read(out / 'samples_1').config['k'], 1)

    def test_chunks_axis_maps_to_words(self):
        config, dataset = write_synthetic_run(self.dir / 'data', n_examples=3)
        out = self.dir / 'sweep'
        self.assertEqual(cmd_sweep(config, dataset, out, 'chunks', [1, 3]), 0)
        self.assertEqual(RunManifest.read(out / 'chunks_3').config['stage2_budget_words'], 3 * 20)

    def test_latency_grows_with_budget(self):
        config, dataset = write_synthetic_run(self.dir / 'data', n_examples=5)
        out = self.dir / 'sweep'
        self.assertEqual(cmd_sweep(config, dataset, out, 'budget', [20, 40, 80, 160], mode='op'), 0)
        latencies = [float(row['latency_s']) for row in self.rows(out, 'budget')]
        self.assertEqual(latencies, sorted(latencies))
        self.assertLess(latencies[0], latencies[-1])

    def test_empty_values_exit_2(self):
        config, dataset = write_synthetic_run(self.dir / 'data', n_examples=2)
        self.assertEqual(cmd_sweep(config, dataset, self.dir / 'sweep', 'samples', []), 2)
        self.assertEqual(main(['sweep', '--config', str(config), '--dataset', str(dataset), '--out', str(self.dir / 'x'),
                               '--axis', 'samples', '--values']), 2)
