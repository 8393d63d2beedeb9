from .chunker import Chunk, chunk_document
from .llm.gateway import LlmGateway
from .llm.params import GenParams
from .pipeline.config import FbConfig, Mode
from .pipeline.runner import PipelineResult, run_baseline, run_fb_rag
from . import metrics
