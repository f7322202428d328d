"""Coherent backscattering spectra of driven degenerate atoms.

Double scattering of intense light between two atoms with a
Jg -> Jg + 1 transition: ladder and crossed spectra, elastic and
inelastic, and the backscattering enhancement factor.
"""

from .angular import (clebsch_gordan, configuration_average,
                      spherical_unit_vector, transverse_projector_element)
from .atoms import (DipoleComponents, LevelScheme, OperatorBasis,
                    dipole_components, level_scheme, operator_basis)
from .bloch import (BlochSystem, DriveParams, NumericalError, build_system,
                    elastic_amplitude, elastic_blocks, make_system,
                    resolvent_apply, steady_state)
from .diagrams import (INTENSITY_UNIT, ChannelConfig, DiagramContribution,
                       QuadratureConfig, SpectrumEngine, assemble_spectra,
                       channel_weight, elastic_line_weights,
                       enumerate_contributions, evaluate_contribution,
                       hh_channel, surviving_exchange_pairs)
from .observables import (SpectrumResult, default_frequency_grid,
                          dressed_resonances, elastic_peak_intensity,
                          enhancement_factor, find_peaks, integrate_spectrum,
                          saturation_parameter)
from .regression import (InelasticBlockRequest, inelastic_block,
                         regression_initials, structure_matrices)

__version__ = "0.1.0"
