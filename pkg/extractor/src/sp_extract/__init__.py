from .extract import ExtractorConfig, ExtractorError, extract_directory, extract_image
from .network import DESCRIPTOR_DIM, SuperPointNet

__version__ = "0.1.0"

__all__ = [
    "DESCRIPTOR_DIM",
    "ExtractorConfig",
    "ExtractorError",
    "SuperPointNet",
    "extract_directory",
    "extract_image",
    "__version__",
]
