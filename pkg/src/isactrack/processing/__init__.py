"""CSI-to-detection processing chain."""

from .cfar import CACFARDetector, ca_cfar, cfar_mask, cfar_threshold_factor, local_peaks
from .clutter import ClutterBasis, CRAPRemover, ECACRemover, crap_acquire, crap_remove, eca_c_remove
from .gating import gate_detections
from .spectrum import Periodogram, extract_csi, impulsive_sidelobes, matched_filter, periodogram
from .tdd import TDDPeakDetector, naive_peak_detect, refine_peak, tdd_peak_detect

__all__ = [
    "CACFARDetector",
    "ClutterBasis",
    "CRAPRemover",
    "ECACRemover",
    "Periodogram",
    "TDDPeakDetector",
    "ca_cfar",
    "cfar_mask",
    "cfar_threshold_factor",
    "crap_acquire",
    "crap_remove",
    "eca_c_remove",
    "extract_csi",
    "gate_detections",
    "impulsive_sidelobes",
    "local_peaks",
    "matched_filter",
    "naive_peak_detect",
    "periodogram",
    "refine_peak",
    "tdd_peak_detect",
]
