from .loader import Example, load_jsonl, summarize_examples
from .registry import TaskSpec, get_task, registry, template_by_id
