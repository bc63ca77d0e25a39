"""Separate source-channel coding lab with reliability-guided list decoding."""

from .blockcode import BlockPlan, LinearBlockCode, desegment, encode_block, load_code, segment, syndrome
from .bp import BlockDecodeResult, BPParams, decode_batch, decode_block, extract_info
from .bridge_client import BridgeError, BridgeModel
from .channel import SoftObservation, modulate_bpsk, sign_to_bin, snr_to_noise, transmit, unified_snr
from .coder import BitStream, CodecConfig, DecodeOutcome, DecodeStatus, decode, encode
from .icd import (
    Candidate,
    CandidatePool,
    ICDParams,
    ICDResult,
    SamplerParams,
    ScoredReconstruction,
    SubsetState,
    ccg_generate,
    clr_select,
    energy,
    exact_kernel,
    icd_decode,
    mh_sample,
    mh_step,
)
from .lm import (
    NGramModel,
    CapacityError,
    InvalidTokenError,
    StaticModel,
    TokenModel,
    UniformModel,
    Vocabulary,
    quantize_distribution,
    sequence_log_likelihood,
)
from .metrics import BleuScore, ConfidenceHistogram, bit_error_rate, bleu, confidence_histogram, word_error_rate

__version__ = "0.1.0"
