"""Phase-space observables, their Cartesian margins, and state reconstruction from margins."""

__version__ = "0.1.0"

from .hilbert import (
    Grid,
    GridFunction,
    HermiteState,
    Measure1D,
    MixedState,
    Wavefunction,
    default_grid,
    fourier_transform,
    hermite_function,
    inverse_fourier_transform,
    momentum_density,
    position_density,
)
from .phase_space import (
    MixtureOperator,
    WeylFieldOperator,
    convolving_measures,
    ft_convolver,
    margin_density,
    matrix_element,
    weyl_transform,
)
from .constructions import (
    convolved_operator,
    husimi_operator,
    prop1_mu_hat,
    prop1_operator,
    prop1_weyl,
    prop2_f,
    remark_f0,
    strip_g,
    strip_g_hat,
)
from .infocheck import completeness_verdict, margins_equivalence_verdict, regularity_check, zero_set_1d
from .reconstruct import (
    MomentSequence,
    convolve_moments,
    deconvolve_moments,
    density_from_moments,
    exp_bound_check,
    finite_moments,
    fourier_deconvolve,
    l1_distance,
    moments_of,
)
from .sampling import SampleSet, empirical_measure, empirical_moments, read_samples, sample_measure, write_samples
