"""pscat: a phaseless scattering laboratory.

Synthesizes |u_sc| data for known media with a time-domain wave solver and
recovers the medium back from that data via minimum-phase retrieval,
first-arrival picking and travel-time tomography.
"""

__version__ = "0.1.0"

from .errors import NumericalError, PreconditionError, PscatError
from .grid import Grid3, read_grid, write_grid
from .medium import (
    AdmissibleClass,
    Geometry,
    MediumPhantom,
    Region,
    build_phantom,
    margin_rho,
    validate_admissible,
)
from .eikonal import (
    GeodesicPath,
    SpreadingAmplitude,
    TravelTimeField,
    check_regularity,
    solve_eikonal,
    spreading_amplitude,
    trace_geodesic,
)
from .wavefield import (
    ArrivalEstimate,
    PhaselessRecord,
    Spectrum,
    TimeTrace,
    Wavelet,
    extract_arrival,
    make_phaseless,
    solve_wave,
    spectrum_from_trace,
)
from .phaseless import (
    AsymptoticModel,
    ExponentialSum,
    InterferenceBounds,
    ZeroSet,
    band_extend,
    blaschke_normalize,
    blaschke_remainder_time,
    bound_values,
    detect_real_zeros,
    interference_bounds,
    minimum_phase_retrieve,
    prony_identify,
)
from .inversion import (
    SurfaceTravelTimes,
    TomographyResult,
    UniquenessReport,
    convolution_residual,
    retrieve_scattered_field,
    surface_travel_times,
    tomography_invert,
    uniqueness_experiment,
)
from .harness import ExperimentConfig, RunManifest, emit_plots, run, verify_run
