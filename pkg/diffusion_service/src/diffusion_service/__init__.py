"""HTTP inpainting service with a deterministic stand-in latent model."""

from .app import create_app
from .config import ServiceConfig
from .model import ToyLatentModel

__version__ = "0.1.0"
__all__ = ["ServiceConfig", "ToyLatentModel", "create_app", "__version__"]
