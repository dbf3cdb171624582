"""Non-linearity probes for ReLU networks via activation compression."""
from .nmf import NMFOptions, NMFResult, nmf_compress, nmf_factorize

__version__ = "0.1.0"

__all__ = ["NMFOptions", "NMFResult", "nmf_compress", "nmf_factorize", "__version__"]
