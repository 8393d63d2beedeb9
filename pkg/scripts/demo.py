from fbrag import FbConfig, LlmGateway, run_fb_rag
from fbrag.llm import MockBackend, MockRule

import asyncio

story = (
    'The studio announced a remake in the spring. ' * 30
    + 'Breakfast at Tiffany\'s starred George Peppard opposite Audrey Hepburn. '
    + 'Filming moved to New York for the summer. ' * 30
)

forward = LlmGateway(MockBackend(rules=[MockRule('', (
    'Rationale: The male lead of the film was George Peppard. Answer: George Peppard',
    'Rationale: Not sure. Answer: unanswerable',
))]))
final = LlmGateway(MockBackend(rules=[MockRule('George Peppard', ('George Peppard',))], default='unanswerable'))

config = FbConfig.ours_f(k=2, chunk_size_words=20, stage1_budget_words=60, stage2_budget_words=40).for_task('hotpotqa')
result = asyncio.run(run_fb_rag(config, 'Who played the writer in the 1961 film?', story, forward, final))
print(result.answer, result.c2_ids)
