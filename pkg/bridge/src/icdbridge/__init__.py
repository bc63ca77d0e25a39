"""Line-protocol probability server for externally hosted language models."""

from .models import GPT2_MODELS, ModelLoadError, NgramBackend, TransformersBackend, load_backend
from .quantize import CapacityError, min_f_bits, quantize_counts
from .server import BridgeServer, serve_stdio, serve_tcp

__version__ = "0.1.0"
