from .config import FbConfig, LatencyClock, Mode, Normalization
from .runner import PipelineResult, run_baseline, run_fb_rag, run_pipeline
from .stages import (
    build_prompt,
    forward_score,
    minmax,
    select_context,
    stage1_recall,
    stage2_fb_scores,
    stage3_generate,
)
from .timing import StageTimer
