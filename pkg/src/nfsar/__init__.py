"""Near-field FMCW SAR simulation, Fourier-domain imaging and trigger synchronization."""

from .beatsim import (
    CalibrationResult,
    CaptureErrors,
    DualRadarLayout,
    apply_calibration,
    calibrate,
    merge_dual_band,
    simulate_beat,
    simulate_dual,
)
from .core import (
    C,
    Aperture,
    BeatCube,
    ChirpConfig,
    ImageVolume,
    Scatterer,
    Scene,
    max_range,
    range_resolution,
    validate_scene,
    wavenumber_axis,
)
from .reconstruct import (
    ALGORITHMS,
    ReconGrid,
    backprojection_oracle,
    find_peaks,
    normalized_correlation,
    reconstruct,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "Aperture",
    "BeatCube",
    "C",
    "CalibrationResult",
    "CaptureErrors",
    "ChirpConfig",
    "DualRadarLayout",
    "ImageVolume",
    "ReconGrid",
    "Scatterer",
    "Scene",
    "apply_calibration",
    "backprojection_oracle",
    "calibrate",
    "find_peaks",
    "max_range",
    "merge_dual_band",
    "normalized_correlation",
    "range_resolution",
    "reconstruct",
    "simulate_beat",
    "simulate_dual",
    "validate_scene",
    "wavenumber_axis",
]
