"""Image enhancement with spatially fused banks of 3D colour lookup tables."""

from .errors import (BundleError, DataError, InvalidArgument, InvalidState, LutFuseError,
                     NumericError, PngDecodeError, PngError, PngUnsupportedError)
from .lut import (Lut3d, LutBank, WeightMap, apply_lowres, apply_spatial_aware, flatten_bank,
                  fuse_category, identity_lut, trilinear_sample)
from .model import Enhancer, set_threads

__version__ = "0.1.0"

__all__ = [
    "BundleError", "DataError", "InvalidArgument", "InvalidState", "LutFuseError", "NumericError",
    "PngDecodeError", "PngError", "PngUnsupportedError",
    "Lut3d", "LutBank", "WeightMap", "apply_lowres", "apply_spatial_aware", "flatten_bank",
    "fuse_category", "identity_lut", "trilinear_sample",
    "Enhancer", "set_threads",
]
