"""Convert trained generator checkpoints into the engine's .urw container."""

from .container import read_container, write_container
from .mapping import ArchSpec, ConversionError, convert_checkpoint, convert_state_dict, parse_arch
from .reference import ReferenceGenerator, random_reference

__version__ = "0.1.0"

__all__ = [
    "read_container",
    "write_container",
    "ArchSpec",
    "ConversionError",
    "convert_checkpoint",
    "convert_state_dict",
    "parse_arch",
    "ReferenceGenerator",
    "random_reference",
]
