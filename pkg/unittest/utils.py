import json
import math
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from fbrag.chunker import Chunk, chunk_document
from fbrag.llm.backends import MockBackend, MockRule
from fbrag.llm.gateway import LlmGateway
from fbrag.retrieval import tokenize


def brute_force_bm25(chunk_texts, query, k1=1.5, b=0.75):
    '''Textbook BM25, term by term, no shared code with the index.'''
    docs = [tokenize(text) for text in chunk_texts]
    n = len(docs)
    if n == 0:
        return []
    avg_len = sum(len(doc) for doc in docs) / n
    scores = []
    for doc in docs:
        tf = Counter(doc)
        total = 0.0
        for term in tokenize(query):
            if tf[term] == 0:
                continue
            df = sum(1 for other in docs if term in other)
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            ratio = len(doc) / avg_len if avg_len > 0 else 0.0
            total += idf * tf[term] * (k1 + 1) / (tf[term] + k1 * (1 - b + b * ratio))
        scores.append(total)
    return scores


def random_corpus(rng: random.Random, max_chunks=30, vocab=40, max_words=25):
    words = [f'tok{i}' for i in range(vocab)]
    n = rng.randint(1, max_chunks)
    texts = [' '.join(rng.choice(words) for _ in range(rng.randint(1, max_words))) for _ in range(n)]
    query = ' '.join(rng.choice(words) for _ in range(rng.randint(1, 20)))
    return texts, query


def make_chunks(texts):
    return [Chunk(i, text, len(text.split()), (0, len(text))) for i, text in enumerate(texts)]


@dataclass(frozen=True)
class PlantedExample:
    '''
    A haystack with one needle chunk. The query shares terms only with decoy chunks; the needle holds
    the bridge entity and the gold answer, which only a forward sample mentions.
    '''
    seed: int
    needle_chunk_id: int
    gold_answer: str
    gold_rationale: str
    haystack: str
    query: str
    chunk_size: int
    bridge: str

    def chunks(self) -> list[Chunk]:
        return chunk_document(self.haystack, self.chunk_size)

    def forward_responses(self, k=5) -> list[str]:
        '''Only one of the k samples finds the bridge.'''
        lost = 'Rationale: the document does not say. Answer: unsure'
        found = f'Rationale: {self.gold_rationale} Answer: {self.gold_answer}'
        responses = [lost] * k
        responses[self.seed % k] = found
        return responses


def plant_example(seed: int, n_chunks=10, chunk_size=20, n_decoys=3) -> PlantedExample:
    rng = random.Random(seed)
    needle = rng.randrange(n_chunks)
    decoys = rng.sample([i for i in range(n_chunks) if i != needle], n_decoys)
    query_terms = [f'q{seed}n{i}' for i in range(3)]
    bridge = [f'bridge{seed}e{i}' for i in range(2)]
    gold = f'gold{seed}'

    words = []
    for i in range(n_chunks):
        chunk_words = [f'w{rng.randrange(500)}' for _ in range(chunk_size)]
        if i == needle:
            planted = bridge + [gold]
        elif i in decoys:
            planted = query_terms
        else:
            planted = []
        for offset, word in enumerate(planted):
            chunk_words[offset * 3] = word
        words.extend(chunk_words)

    return PlantedExample(
        seed=seed,
        needle_chunk_id=needle,
        gold_answer=gold,
        gold_rationale=f'Following the trail leads to {" ".join(bridge)} and then on.',
        haystack=' '.join(words),
        query=f'What does {" ".join(query_terms)} refer to?',
        chunk_size=chunk_size,
        bridge=bridge[0],
    )


def planted_gateways(example: PlantedExample, k=5, **mock_options):
    '''Forward mock scripted with the example's samples; final mock answers gold iff the needle is in the prompt.'''
    forward = MockBackend(rules=[MockRule('', tuple(example.forward_responses(k)))], **mock_options)
    final = MockBackend(rules=[MockRule(example.bridge, (example.gold_answer,))], default='unanswerable', **mock_options)
    return LlmGateway(forward, name='forward'), LlmGateway(final, name='final')


def write_synthetic_run(directory: Path, n_examples=25, mode='fb', extra=None, dataset='hotpotqa'):
    '''
    Dataset, mock fixtures and a JSON run config for a mock-backed run. Returns (config path, dataset path).
    '''
    directory.mkdir(parents=True, exist_ok=True)
    examples = [plant_example(seed) for seed in range(n_examples)]

    dataset_path = directory / f'{dataset}.jsonl'
    with dataset_path.open('w', encoding='utf-8') as f:
        for example in examples:
            f.write(json.dumps({
                '_id': f'synthetic-{example.seed}',
                'input': example.query,
                'context': example.haystack,
                'answers': [example.gold_answer],
            }) + '\n')

    forward_rules = [
        {'pattern': f'q{example.seed}n0', 'responses': example.forward_responses()} for example in examples
    ]
    final_rules = [{'pattern': example.bridge, 'response': example.gold_answer} for example in examples]
    (directory / 'forward.json').write_text(json.dumps({'rules': forward_rules}), encoding='utf-8')
    (directory / 'final.json').write_text(json.dumps({'rules': final_rules, 'default': 'unanswerable'}), encoding='utf-8')

    delays = {'base_delay': 0.01, 'delay_per_prompt_word': 0.0001, 'delay_per_token': 0.001}
    config = {
        'mode': mode,
        'eta_b': 0.0,
        'eta_f': 1.0,
        'k': 5,
        'chunk_size_words': 20,
        'stage1_budget_words': 120,
        'stage2_budget_words': 40,
        'latency_clock': 'backend',
        'forward_backend': {'kind': 'mock', 'fixture': 'forward.json', **delays},
        'final_backend': {'kind': 'mock', 'fixture': 'final.json', **delays},
    }
    config.update(extra or {})
    config_path = directory / 'config.json'
    config_path.write_text(json.dumps(config, indent=2), encoding='utf-8')
    return config_path, dataset_path
