"""docisim: gated fluorescence-lifetime imaging simulator and processing toolkit.

Physics core (`lifetime`), synthetic scenes (`phantom`), the simulated
gated camera (`camera`), the ratio-map pipeline (`pipeline`), linear
discriminant margin evaluation (`classify`), calibration and resolution
procedures (`characterize`), the raster/stack file format (`stackio`), a
command-line interface (`cli`) and the instrument HTTP service
(`service`).
"""

from .camera import (
    AcquisitionConfig,
    ChannelStack,
    FilterChannel,
    FrameTriplet,
    NoiseConfig,
    acquire,
    default_acquisition,
    default_channels,
    expected_triplet,
)
from .characterize import (
    CalibrationFit,
    ResolutionReport,
    linearity_fit,
    measure_stack_std,
    spatial_resolution,
    temporal_resolution,
    tune_fall_tau,
)
from .classify import (
    BlockGrid,
    ConfusionCounts,
    FeatureMatrix,
    LdaModel,
    MetricsRow,
    blockify,
    channel_sweep,
    confusion,
    format_channels,
    metrics,
    predict_map,
    train_lda,
)
from .lifetime import (
    DociValue,
    EmissionCurve,
    Fluorophore,
    GateConfig,
    PumpPulse,
    doci_surface,
    doci_value,
    emission_response,
    gated_emission,
    gated_integral,
    pump_intensity,
)
from .phantom import (
    ClassSpec,
    IlluminationSpec,
    Phantom,
    Region,
    build_phantom,
    make_dye_drop_phantom,
    make_tissue_phantom,
    make_usaf_phantom,
)
from .pipeline import DociMap, RoiStats, compute_doci, default_floor, render_heatmap, roi_compare, roi_stats
from .specio import load_phantom_spec
from .stackio import raster_read, raster_write, read_stack, write_stack

__version__ = "0.1.0"
