"""Reaction-coordinate mapping combined with hierarchical equations of
motion for impurity and spin-boson models."""
from .baths import (BathSpec, ExponentSeries, FlatLorentzCutoff, Lorentzian, RCParameters,
                    SpectralDensity, UnderdampedBrownian, correlation_numeric,
                    decompose_bose, decompose_fermi, principal_value, rc_map,
                    residual_density)
from .aaa import BarycentricRational, aaa_fit
from .hierarchy import (Coupling, HeomLiouvillian, HierarchySpace, ado_count, assemble,
                        enumerate_ados)
from .models import SIAM, TIAM, ModelSpec, SpinBosonRWA, build, default_parameters
from .observables import (c_rev, interference_factor, l1_coherence, rc_resolved,
                          singlet_fraction)
from .solver import (AdoState, Trajectory, density_of_states, evolve, lindblad_rcme,
                     steady_state, two_time)

__version__ = "0.1.0"
