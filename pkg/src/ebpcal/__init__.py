"""Background calibration of time-interleaved ADCs by error backpropagation.

The package simulates a dual-polarization QAM receiver whose four lanes are
digitized by M-way time-interleaved converters, equalized by a 4x4 MIMO
FFE, and calibrated in the background by correlating slicer errors
backpropagated through the FFE with the converter output.
"""
from .afe_model import ImpairmentSet, TiAdcModel, build_tiadc_model, digitize
from .compensation import ActuatorState, OffsetEstimate, PeriodicFir, ce_apply
from .config import ConfigError, ScenarioConfig, load_config
from .ebp_engine import (CalibrationResult, Calibrator, backpropagate, run_calibration,
                         sine_capture)
from .metrics import SndrReport, ber, histogram, sndr_sfdr
from .rx_dsp import DivergenceError, MimoFir, ffe_forward

__all__ = [
    "ActuatorState", "CalibrationResult", "Calibrator", "ConfigError", "DivergenceError",
    "ImpairmentSet", "MimoFir", "OffsetEstimate", "PeriodicFir", "ScenarioConfig", "SndrReport",
    "TiAdcModel", "backpropagate", "ber", "build_tiadc_model", "ce_apply", "digitize",
    "ffe_forward", "histogram", "load_config", "run_calibration", "sine_capture", "sndr_sfdr",
]
__version__ = "0.1.0"
