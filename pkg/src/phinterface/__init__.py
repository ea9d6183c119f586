"""Port-Hamiltonian systems of two 1-D conservation laws coupled by an interface."""

from .boundary import (BoundaryConditionSpec, Classification, OperatorSpec,
                       build_P, build_Rext, classify_conditions, factor_WB,
                       kernel_basis, transmission_line_WB)
from .fields import PiecewiseField
from .findim import (BondVector, IsoSystem, LinearSubspace, ResistiveRelation,
                     dirac_check, graph_dirac, iso_simulate, levitated_ball,
                     mass_spring, plus_pairing, resistive_check, separable_dirac)
from .interface_ops import (InterfacePorts, InterfaceSpec, apply_dl, apply_dl_star,
                            duality_residual, interface_ports, sample_domain_element,
                            skew_identity_residual)
from .profiles import CoefficientProfile, SideProfile
from .analytic import (FamilySpec, ResolventSolution, Spectrum, adjoint_apply,
                       characteristic_matrix, family_omega, interface_transfer,
                       resolve, spectrum_scan, transition_matrix)
from .discretize import (DiscreteGenerator, StaggeredGrid, assemble_generator,
                         build_grid, convergence_order, discrete_energy,
                         dissipativity_spectrum_check, energy_gradient)
from .simulate import (MovingPath, Scenario, TimeSeries, decay_fit, simulate_fixed,
                       simulate_moving, step_midpoint, subinterval_flux_residual)

__version__ = "0.1.0"
