"""peakonlab: a numerical laboratory for ordered antipeakon-peakon trains of
the Camassa-Holm equation.

The exact multipeakon class is evolved through its Hamiltonian ODE system;
conserved and localized energy functionals, modulation tracking, and the
orbital-stability and spectral-asymptotics statements are verified on top of
it at desk scale.
"""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    Grid,
    GridField,
    PeakonTrain,
    Scenario,
    build_perturbed_scenario,
    evaluate_train,
    evaluate_train_derivative,
    h1_inner_closed_form,
    reference_train,
    sample_on_grid,
)
from .dynamics import (  # noqa: F401
    SpectralData,
    Trajectory,
    asymptotic_matrix,
    eigenvalues_real,
    hamiltonian,
    integrate,
    ode_rhs,
)
from .functionals import (  # noqa: F401
    WeightProfile,
    energy_E,
    energy_F,
    helmholtz_inverse,
    make_weight_profile,
    sigma0,
)
from .harness import Report, run_experiment, sweep  # noqa: F401
