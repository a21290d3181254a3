"""Sequential ray tracing of micromirror fluorescence through a relay lens."""
from .analysis import (PMT_QE, SpotReport, collection_efficiency, crosstalk_ratio,
                       efficiency_oracle, misalignment_scan, spot_vs_field_height)
from .design import RelayDesign, load_relay
from .rays import Micromirror, RayBundle, reflect_mirror, sample_emission
from .system import Detector, OpticalPrescription, OpticalSurface, trace

__all__ = ["PMT_QE", "SpotReport", "collection_efficiency", "crosstalk_ratio",
           "efficiency_oracle", "misalignment_scan", "spot_vs_field_height", "RelayDesign",
           "load_relay", "Micromirror", "RayBundle", "reflect_mirror", "sample_emission",
           "Detector", "OpticalPrescription", "OpticalSurface", "trace"]
