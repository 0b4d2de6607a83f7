"""Pseudo-spectral simulator for compressible Euler flow with singular
velocity alignment on the periodic torus, with structural diagnostics
(energy law, conservation, commutator cancellation) and decay-rate fitting.
"""

from .spectral import (
    Field,
    FractionalExponent,
    Grid,
    VectorField,
    dealiased_apply,
    dealiased_product,
    divergence,
    fractional_laplacian,
    gradient,
    holder_proxy,
    l2_norm,
    laplacian,
    sobolev_norm,
    spectral_power,
    sup_norm,
)
from .states import (
    ModelParams,
    PositivityError,
    PrimitiveState,
    SigmaState,
    make_perturbation_ic,
    rho_of_sigma,
    sigma_of_rho,
)
from .alignment import (
    KernelSpec,
    KernelTable,
    alignment_force_commutator,
    alignment_force_convolution,
    kernel_constant,
    periodized_kernel,
)
from .dynamics import (
    RhsEvaluation,
    cross_formulation_check,
    rhs_conservative_form,
    rhs_sigma_form,
)
from .integrate import (
    BlowupError,
    BlowupEvent,
    StepConfig,
    TrajectorySummary,
    adaptive_dt,
    run,
    step,
)
from .diagnostics import (
    DiagnosticsCollector,
    DiagnosticsRecord,
    energy_law_residual,
    fit_decay_rate,
    h_of_rho,
    smallness_monitor,
    stream_function,
    v_epsilon,
    w_epsilon,
)
from .oracles import (
    EnsembleConfig,
    lemma_constant_sampler,
    quadrature_fractional_laplacian,
    tiny_explicit_reference,
    verification_report,
)
from .io import (
    emit_timeseries,
    read_checkpoint,
    read_timeseries,
    write_checkpoint,
)
from .config import RunConfig, load_preset, parse_config, preset_names

__version__ = "0.1.0"
