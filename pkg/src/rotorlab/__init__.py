"""Random rotations of Wiener paths on a discretized Wiener space."""

from .grid_paths import (
    CMVector,
    DiscretePath,
    RngStream,
    TimeGrid,
    cm_inner,
    indicator_vector,
    sample_brownian,
    sample_brownian_batch,
    wiener_integral,
)
from .rotors import (
    AdaptedMatrixRotor,
    IdentityRotor,
    IidPhaseFamily,
    PhaseLaw,
    SignFamily,
    SignRotor,
    SpectralResolution,
    SpectralRotor,
    apply_rotor,
    make_sign_rotor,
    resolve_iid_phases,
    spectral_measure,
)
from .malliavin import (
    FDConfig,
    HValuedMap,
    gradient_direction,
    iterate_Q,
    iterate_T,
    ogawa_integral,
    phi_trace,
    skorohod,
    transform,
)

__version__ = "0.1.0"
