"""Butterfly-arbitrage diagnostics and arbitrage-free calibration for SVI smiles."""

from .black_scholes import call_price, d1_d2, implied_total_vol, put_price, vega_total
from .calibration import CalibrationConfig, CalibrationResult, MarketSlice, calibrate
from .domain import (
    ArbitrageDiagnostic,
    BoxCoords,
    Status,
    box_to_params,
    check_no_arbitrage,
    g2_zeros,
    params_to_box,
    sigma_star,
)
from .errors import ButterfreeError, InvalidInput, NumericFailure
from .fukasawa import MuInterval, fukasawa_threshold, mu_interval
from .market_data import (
    ForwardDiscount,
    OptionChain,
    OptionQuote,
    build_vol_slice,
    infer_forward_discount,
    load_chain,
)
from .svi import NormalizedParams, SviParams, density, durrleman_g, normalize, svi

__version__ = "0.1.0"

__all__ = [
    "ArbitrageDiagnostic",
    "BoxCoords",
    "ButterfreeError",
    "CalibrationConfig",
    "CalibrationResult",
    "ForwardDiscount",
    "InvalidInput",
    "MarketSlice",
    "MuInterval",
    "NormalizedParams",
    "NumericFailure",
    "OptionChain",
    "OptionQuote",
    "Status",
    "SviParams",
    "box_to_params",
    "build_vol_slice",
    "calibrate",
    "call_price",
    "check_no_arbitrage",
    "d1_d2",
    "density",
    "durrleman_g",
    "fukasawa_threshold",
    "g2_zeros",
    "implied_total_vol",
    "infer_forward_discount",
    "load_chain",
    "mu_interval",
    "normalize",
    "params_to_box",
    "put_price",
    "sigma_star",
    "svi",
    "vega_total",
]
