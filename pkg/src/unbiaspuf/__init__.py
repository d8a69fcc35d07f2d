"""Desk-scale laboratory for the strong UNBIAS PUF."""
from unbiaspuf.errors import ConfigError, ContractError, NoFeasibleBitError, SaturationError, StrictOverflowError
from unbiaspuf.extraction import DifferenceValue, InspectionBit, Reducer, bin_index, extract_bit, extract_matrix
from unbiaspuf.metrics import estimate_sigma, inter_fhd, intra_fhd
from unbiaspuf.popmodel import ModelKind, PopulationConfig, StressConfig, generate_population, measure
from unbiaspuf.prediction import (
    BinModel,
    area_bin1,
    predict_inter_lb,
    predict_intra,
    ratio,
    select_inspection_bit,
    worst_case_epsilon,
)
from unbiaspuf.rtlgen import RtlParams, emit_rtl

__version__ = "0.1.0"
