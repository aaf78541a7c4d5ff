import importlib.metadata

import jax


# Phase-space distances at small ℏ are below single-precision resolution.
jax.config.update("jax_enable_x64", True)

from ._dynamics import (
    calibrate_time_step as calibrate_time_step,
    classical_convergence_order as classical_convergence_order,
    default_classical_solver as default_classical_solver,
    default_quantum_solver as default_quantum_solver,
    default_time_step as default_time_step,
    dense_propagator as dense_propagator,
    evolve_operator as evolve_operator,
    flow_lipschitz as flow_lipschitz,
    flow_map as flow_map,
    flow_point as flow_point,
    flow_trajectory as flow_trajectory,
    harmonic_fidelity_error as harmonic_fidelity_error,
    leapfrog_jacobian_determinant as leapfrog_jacobian_determinant,
    propagate_quantum as propagate_quantum,
    pushforward as pushforward,
    quantum_convergence_order as quantum_convergence_order,
)
from ._experiments import (
    fit_scaling as fit_scaling,
    observable as observable,
    operator_egorov_terms as operator_egorov_terms,
    preflight as preflight,
    run_egorov_sweep as run_egorov_sweep,
    run_local_unitary_check as run_local_unitary_check,
    run_localization_check as run_localization_check,
    run_meanfield_check as run_meanfield_check,
    run_operator_egorov_check as run_operator_egorov_check,
    run_scenario as run_scenario,
    ScalingFit as ScalingFit,
)
from ._grid import (
    make_grid as make_grid,
    PhaseSpaceGrid as PhaseSpaceGrid,
    symplectic_form as symplectic_form,
)
from ._hamiltonian import (
    AbstractHamiltonian as AbstractHamiltonian,
    AdmissibilityReport as AdmissibilityReport,
    anharmonic as anharmonic,
    estimate_lipschitz as estimate_lipschitz,
    free_particle as free_particle,
    GeneralSymbolHamiltonian as GeneralSymbolHamiltonian,
    harmonic_flow as harmonic_flow,
    harmonic_oscillator as harmonic_oscillator,
    linear_potential as linear_potential,
    model_from_name as model_from_name,
    model_names as model_names,
    nonseparable_example as nonseparable_example,
    pendulum as pendulum,
    quartic_window as quartic_window,
    sample_box as sample_box,
    SeparableHamiltonian as SeparableHamiltonian,
)
from ._io import (
    load_measure as load_measure,
    load_problem as load_problem,
    load_state as load_state,
    measure_to_csv as measure_to_csv,
    read_measure as read_measure,
    save_measure as save_measure,
    save_measure_json as save_measure_json,
    save_problem as save_problem,
    save_result as save_result,
    save_state as save_state,
)
from ._measure import (
    CenterLattice as CenterLattice,
    dirac as dirac,
    grid_measure as grid_measure,
    make_lattice as make_lattice,
    particle_measure as particle_measure,
    PhaseSpaceMeasure as PhaseSpaceMeasure,
)
from ._norms import (
    apply_centered_monomial as apply_centered_monomial,
    canonical_words as canonical_words,
    make_window as make_window,
    MonomialIndex as MonomialIndex,
    offdiagonal_decay_check as offdiagonal_decay_check,
    operator_norm as operator_norm,
    sample_pairs as sample_pairs,
    sobolev_norm as sobolev_norm,
    sobolev_shift_ratio as sobolev_shift_ratio,
    SpectralWindow as SpectralWindow,
    uncertainty_chain_check as uncertainty_chain_check,
    windowed_operator_norm as windowed_operator_norm,
    z_norm as z_norm,
)
from ._plotting import (
    plot_husimi as plot_husimi,
    plot_report as plot_report,
    plot_scaling as plot_scaling,
)
from ._progress_meter import (
    AbstractProgressMeter as AbstractProgressMeter,
    NoProgressMeter as NoProgressMeter,
    TextProgressMeter as TextProgressMeter,
    TqdmProgressMeter as TqdmProgressMeter,
)
from ._report import (
    CheckEntry as CheckEntry,
    CheckReport as CheckReport,
    Gate as Gate,
    SweepReport as SweepReport,
)
from ._scenario import (
    bundled_scenarios as bundled_scenarios,
    GridPolicy as GridPolicy,
    InitialState as InitialState,
    load_scenario as load_scenario,
    ModelSpec as ModelSpec,
    parse_scenario as parse_scenario,
    RunManifest as RunManifest,
    Scenario as Scenario,
    scenario_to_dict as scenario_to_dict,
    ScenarioError as ScenarioError,
    SolverPolicy as SolverPolicy,
)
from ._solution import (
    EgoraxError as EgoraxError,
    FlowSolution as FlowSolution,
    is_successful as is_successful,
    raise_if_failed as raise_if_failed,
    RESULTS as RESULTS,
)
from ._solver import (
    AbstractClassicalSolver as AbstractClassicalSolver,
    AbstractQuantumSolver as AbstractQuantumSolver,
    DenseEigen as DenseEigen,
    ImplicitMidpoint as ImplicitMidpoint,
    Leapfrog as Leapfrog,
    SplitStep as SplitStep,
)
from ._state import (
    boundary_mass as boundary_mass,
    cat_state as cat_state,
    check_boundary as check_boundary,
    coherent_state as coherent_state,
    coherent_wavefunction as coherent_wavefunction,
    expectation_momentum as expectation_momentum,
    expectation_position as expectation_position,
    gaussian_mixture_atoms as gaussian_mixture_atoms,
    hermite_state as hermite_state,
    make_state as make_state,
    mix_coherent as mix_coherent,
    overlap as overlap,
    phase_space_mean as phase_space_mean,
    pure_state as pure_state,
    QuantumState as QuantumState,
    random_low_rank_state as random_low_rank_state,
    squeezed_state as squeezed_state,
    translate as translate,
)
from ._transforms import (
    convolve_gaussian as convolve_gaussian,
    covering_lattice as covering_lattice,
    expectation as expectation,
    husimi as husimi,
    identity_operator as identity_operator,
    KernelConventions as KernelConventions,
    mollify_symbol as mollify_symbol,
    MollifiedSymbol as MollifiedSymbol,
    noising_channel as noising_channel,
    OperatorMatrix as OperatorMatrix,
    resolve_conventions as resolve_conventions,
    translation_mixture as translation_mixture,
    translation_operator as translation_operator,
    wavepacket_quantize as wavepacket_quantize,
    weyl_quantize as weyl_quantize,
    wigner as wigner,
    wigner_lattice as wigner_lattice,
)
from ._transport import (
    convexity_bound as convexity_bound,
    gaussian_smoothing_radius as gaussian_smoothing_radius,
    kantorovich_gap as kantorovich_gap,
    prune_support as prune_support,
    thin_support as thin_support,
    TransportProblem as TransportProblem,
    TransportResult as TransportResult,
    wasserstein as wasserstein,
    wasserstein_to_point as wasserstein_to_point,
)


__version__ = importlib.metadata.version("egorax")
