"""Python access to the native core."""

from ._th2 import (
    ConfigError,
    ContractError,
    DimensionError,
    InputError,
    ParseError,
    SampleTooLargeError,
    ValidationError,
    bubble_fraction,
    compress_ppm,
    compress_random,
    decode_box,
    encode_box,
    encode_box_digits,
    frontend_token_count,
    pack,
    partition,
    plan_crop,
    rearrange_permutation,
    spe_grid,
    spe_interpolate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
