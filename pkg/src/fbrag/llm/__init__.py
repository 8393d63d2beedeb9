from .backends import Completion, HttpBackend, LlmBackend, MockBackend, MockRule
from .gateway import LlmGateway
from .params import GenParams, LlmEndpointConfig
from .parsing import ForwardSample, parse_forward_sample
from .templates import STAGE2_CUE, STAGE2_EXTRA_TOKENS, PromptTemplate
