"""petkin: compartment-model kinetics toolkit for dynamic PET.

Forward modeling of the irreversible two-tissue compartment system, bounded
voxel-wise and region-wise least-squares fitting, Patlak graphical analysis,
synthetic phantom generation with known ground truth, evaluation metrics and
simple file formats with a CLI on top.
"""

from .dataio import (
    FormatError,
    read_idif,
    read_tac_csv,
    read_volume,
    write_idif,
    write_tac_csv,
    write_volume,
)
from .fitting import (
    PAPER_INITIAL,
    FitConfig,
    FitResult,
    PatlakResult,
    fit_tac,
    fit_voi,
    fit_voxelwise,
    patlak,
    patlak_map,
)
from .kinetics import (
    CLAMP_BOX,
    DomainError,
    ForwardModel,
    FrameSchedule,
    InputFunction,
    KineticParams,
    ParamBounds,
    frame_average,
    impulse_response,
    model_tac,
    multi_clamp,
    net_influx,
    wb_fdg_schedule,
)
from .metrics import (
    OrganReport,
    TacMetrics,
    ZeroNormError,
    normalized_max_deviation,
    organ_aggregate,
    per_slice_cs,
    tac_metrics,
)
from .ode import ode_tac
from .phantom import (
    InputFunctionModel,
    NoiseModel,
    OrganRegion,
    PhantomSpec,
    build_phantom,
    default_input_model,
    default_phantom_spec,
    synth_input,
)
from .reference import OrganReference, load_reference_params
from .volumes import DynamicVolume, LabelMap, ParametricVolume

__version__ = "0.1.0"
