import asyncio
import json
import unittest
import httpx
from fbrag.errors import BackendUnavailableError, ProtocolError
from fbrag.llm import GenParams, HttpBackend, LlmEndpointConfig, LlmGateway, MockBackend, MockRule, PromptTemplate


def chat_response(texts, status=200):
    return httpx.Response(status, json={'choices': [{'message': {'content': text}} for text in texts]})


def endpoint(**changes):
    options = dict(base_url='http://llm.test/v1', model_name='test-model', backoff_s=0.0, retries=2)
    options.update(changes)
    return LlmEndpointConfig(**options)


class TestHttpBackend(unittest.IsolatedAsyncioTestCase):
    async def test_request_body(self):
        bodies = []

        def handler(request):
            bodies.append(json.loads(request.content))
            self.assertEqual(request.url.path, '/v1/chat/completions')
            self.assertTrue(request.headers['X-Request-Id'])
            return chat_response(['a', 'b', 'c'])

        gateway = LlmGateway(HttpBackend(endpoint(), httpx.MockTransport(handler)))
        texts = await gateway.generate('hello', GenParams(n_samples=3, max_new_tokens=32))
        await gateway.aclose()

        self.assertEqual(texts, ['a', 'b', 'c'])
        body = bodies[0]
        self.assertEqual(body['model'], 'test-model')
        self.assertEqual(body['messages'], [{'role': 'user', 'content': 'hello'}])
        self.assertEqual((body['top_p'], body['top_k'], body['temperature']), (0.9, 50, 1.0))
        self.assertEqual((body['n'], body['max_tokens']), (3, 32))

    async def test_top_k_can_be_omitted(self):
        bodies = []

        def handler(request):
            bodies.append(json.loads(request.content))
            return chat_response(['a'])

        backend = HttpBackend(endpoint(send_top_k=False), httpx.MockTransport(handler))
        await backend.complete('p', GenParams.greedy(), 'req_x')
        self.assertNotIn('top_k', bodies[0])

    async def test_parallel_samples(self):
        calls = []

        def handler(request):
            calls.append(json.loads(request.content)['n'])
            return chat_response([f'text{len(calls)}'])

        backend = HttpBackend(endpoint(parallel_samples=True), httpx.MockTransport(handler))
        completion = await backend.complete('p', GenParams(n_samples=4), 'req_x')
        self.assertEqual(calls, [1, 1, 1, 1])
        self.assertEqual(len(completion.texts), 4)

    async def test_client_error_is_not_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(400, text='context length exceeded')

        backend = HttpBackend(endpoint(), httpx.MockTransport(handler))
        with self.assertRaises(ProtocolError) as context:
            await backend.complete('p', GenParams.greedy(), 'req_x')
        self.assertEqual(context.exception.status, 400)
        self.assertEqual(context.exception.request_id, 'req_x')
        self.assertEqual(len(calls), 1)

    async def test_retries_then_gives_up(self):
        calls = []

        def handler(request):
            calls.append(1)
            raise httpx.ConnectError('refused', request=request)

        backend = HttpBackend(endpoint(retries=2), httpx.MockTransport(handler))
        with self.assertRaises(BackendUnavailableError):
            await backend.complete('p', GenParams.greedy(), 'req_x')
        self.assertEqual(len(calls), 3)

    async def test_server_error_recovers(self):
        statuses = iter([503, 429, 200])

        def handler(request):
            status = next(statuses)
            return chat_response(['ok']) if status == 200 else httpx.Response(status)

        backend = HttpBackend(endpoint(retries=3), httpx.MockTransport(handler))
        completion = await backend.complete('p', GenParams.greedy(), 'req_x')
        self.assertEqual(completion.texts, ['ok'])

    async def test_malformed_response(self):
        backend = HttpBackend(endpoint(), httpx.MockTransport(lambda request: httpx.Response(200, json={'nope': 1})))
        with self.assertRaises(ProtocolError):
            await backend.complete('p', GenParams.greedy(), 'req_x')

    async def test_wrong_choice_count(self):
        backend = HttpBackend(endpoint(), httpx.MockTransport(lambda request: chat_response(['one'])))
        with self.assertRaises(ProtocolError):
            await backend.complete('p', GenParams(n_samples=2), 'req_x')

    async def test_parallel_samples_count_against_the_cap(self):
        in_flight = []
        peak = []

        async def handler(request):
            in_flight.append(request)
            peak.append(len(in_flight))
            await asyncio.sleep(0.01)
            in_flight.remove(request)
            return chat_response(['t'])

        backend = HttpBackend(endpoint(parallel_samples=True), httpx.MockTransport(handler))
        gateway = LlmGateway(backend, max_concurrency=2)
        results = await asyncio.gather(*[gateway.generate('p', GenParams(n_samples=5)) for _ in range(2)])
        await gateway.aclose()
        self.assertEqual([len(texts) for texts in results], [5, 5])
        self.assertEqual(len(peak), 10)
        self.assertEqual(max(peak), 2)

    async def test_failed_sample_cancels_its_siblings(self):
        finished = []

        async def handler(request):
            if request.headers['X-Request-Id'].endswith('.0'):
                return httpx.Response(400, text='bad sample')
            await asyncio.sleep(0.2)
            finished.append(request)
            return chat_response(['t'])

        backend = HttpBackend(endpoint(parallel_samples=True), httpx.MockTransport(handler))
        with self.assertRaises(ProtocolError) as context:
            await backend.complete('p', GenParams(n_samples=4), 'req_x')
        self.assertEqual(context.exception.status, 400)
        await asyncio.sleep(0.3)
        self.assertEqual(finished, [])
        await backend.aclose()



class TestMockBackend(unittest.IsolatedAsyncioTestCase):
    async def test_echo_returns_question_line(self):
        gateway = LlmGateway(MockBackend())
        texts = await gateway.generate('Context here\n\nQuestion: who?\nAnswer:', GenParams.greedy())
        self.assertEqual(texts, ['Question: who?'])

    async def test_rules_cycle_over_samples(self):
        backend = MockBackend(rules=[MockRule('needle', ('x', 'y'))])
        completion = await backend.complete('a needle b', GenParams(n_samples=3), 'req_1')
        self.assertEqual(completion.texts, ['x', 'y', 'x'])

    async def test_first_matching_rule_wins(self):
        backend = MockBackend(rules=[MockRule('a', ('first',)), MockRule('b', ('second',))])
        self.assertEqual(backend.respond('b a', 0), 'first')

    async def test_truncates_to_max_new_tokens(self):
        backend = MockBackend(default='one two three four')
        completion = await backend.complete('p', GenParams.greedy().with_(max_new_tokens=2), 'req_1')
        self.assertEqual(completion.texts, ['one two'])

    async def test_deterministic_delay_model(self):
        backend = MockBackend(default='a b', base_delay=0.5, delay_per_prompt_word=0.1, delay_per_token=1.0)
        completion = await backend.complete('w1 w2 w3 w4', GenParams.greedy(), 'req_1')
        self.assertAlmostEqual(completion.elapsed_s, 0.5 + 0.4 + 2.0, places=9)
        self.assertEqual(completion.prompt_words, 4)

    async def test_context_limit(self):
        backend = MockBackend(context_limit_words=3)
        with self.assertRaises(ProtocolError):
            await backend.complete('w1 w2 w3 w4', GenParams.greedy(), 'req_1')

    async def test_sample_forward_adds_tokens_and_parses(self):
        seen = []

        class Recording(MockBackend):
            async def complete(self, prompt, params, request_id, limiter=None):
                seen.append(params)
                return await super().complete(prompt, params, request_id, limiter)

        gateway = LlmGateway(Recording(default='Rationale: r. Answer: a'))
        template = PromptTemplate('t', '{context}\nQuestion: {input}\nRationale:', 32)
        samples = await gateway.sample_forward('q', 'ctx', template, GenParams(n_samples=5))
        self.assertEqual(len(samples), 5)
        self.assertTrue(all(sample.answer == 'a' for sample in samples))
        self.assertEqual(seen[0].max_new_tokens, 96)

    async def test_same_output_twice(self):
        backend = MockBackend(rules=[MockRule('x', ('1', '2'))])
        first = await backend.complete('x', GenParams(n_samples=4), 'req_1')
        second = await backend.complete('x', GenParams(n_samples=4), 'req_2')
        self.assertEqual(first.texts, second.texts)
