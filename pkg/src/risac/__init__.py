"""RIS-aided sensing and ISAC beamforming simulator."""

from .arrays import SteeringVector, UlaGeometry, steering_derivative, steering_vector
from .channels import (
    ChannelSet,
    RisProfile,
    Scene,
    angles_from_geometry,
    build_channel_set,
    build_comms_channel,
    build_ris_dyads,
    build_sensing_channels,
    pathloss_amplitude,
)
from .dual_waveform import (
    BeampatternSpec,
    DualDesign,
    design_dual_waveform,
    make_beampattern_spec,
)
from .errors import (
    ConfigError,
    DegenerateChannelError,
    DegenerateGeometryError,
    InfeasibleRateError,
    InfeasibleSinrError,
)
from .isac import (
    IsacScenario,
    IsacSolution,
    achievable_rate,
    coupling_coefficient,
    crb_min_beamformer,
    isac_crb,
    make_coupled_channel,
    tradeoff_curve,
)
from .optim import SolverConfig, alternating_minimize, finite_difference_gradient, projected_gradient
from .ris_isac import (
    FimResult,
    RisIsacScenario,
    coupling_gradient,
    coupling_objective,
    fim_theta,
    optimize_ris_profile,
    rate_constrained_crb_beamformer,
    ris_isac_tradeoff,
)
from .sensing import (
    Beamformer,
    DetectionConfig,
    align_ris_phases,
    crb_angle,
    detection_probability,
    glrt_monte_carlo,
    illumination_power,
    isotropic_illumination,
    marcum_q1,
    matched_filter_beamformer,
    matched_filter_snr,
    maximize_illumination,
    trajectory_sweep,
)

__version__ = "0.1.0"
