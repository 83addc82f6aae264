"""Indoor air quality indices with fractional-order Kalman sensor fusion."""

from .core import (
    BreakpointBand,
    BreakpointTable,
    CANONICAL_UNITS,
    ChannelKind,
    DomainError,
    FormatError,
    HealthCategory,
    IaqError,
    NumericalError,
    Orientation,
    TimeSeries,
    UsageError,
    categorize,
    default_breakpoint_tables,
    load_breakpoint_tables,
)
from .fkalman import (
    FractionalStateModel,
    estimate_noise_variance,
    fuse_series,
    gl_weights,
    matern_model,
    run_filter,
    tune_process_noise,
)
from .indices import (
    EiaqiWeights,
    Humidex,
    HumidexRating,
    IndexValue,
    WeightageScheme,
    eiaqi,
    humidex,
    interpolate_index,
    interpolate_oxygen_index,
    overall_iaqi,
    subindex,
    weightage_label,
)
from .ingest import RawRecord, Scenario, default_scenario, generate, ground_truth, parse_csv, to_series, write_csv
from .metrics import MetricsReport, evaluate
from .sysid import FitReport, FractionalTransferFunction, identify, simulate_ftf

__version__ = "0.1.0"
