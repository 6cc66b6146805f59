//! Quantum rotor chains: DMRG, exact diagonalization and field-theory
//! predictions for Josephson-junction arrays.

pub mod dmrg;
pub mod ed;
pub mod error;
pub mod fit;
pub mod idmrg;
pub mod linalg;
pub mod local;
pub mod model;
pub mod mpo;
pub mod mps;
pub mod observables;
pub mod sparse;
pub mod tensor;
pub mod theory;

pub use dmrg::{
    energy_expectation, energy_variance, excited_in_sector, excited_state, ground_state, ground_state_from,
    ConvergenceReport, DmrgResult, DmrgSettings, SectorState,
};
pub use ed::{dense_hamiltonian, ed_expectation, lowest_k, ExactHamiltonian, Spectrum};
pub use error::{Error, Result};
pub use fit::{
    fit_casimir, fit_meson_scaling, fit_power_law, fit_string_tension, fit_vertex_scaling, linear_fit, FitResult,
};
pub use idmrg::{correlation_length, idmrg_fixed_point, CorrelationLength, IdmrgSettings, Twist, UniformMps};
pub use linalg::{truncated_svd, KrylovSettings, TruncatedSvd, TruncationSpec};
pub use local::{LocalBasis, LocalOperator};
pub use model::{Boundary, ModelParams};
pub use mpo::{build_global_parity, build_hamiltonian, build_soliton_pair, LorentzSpin, Mpo, ProductOperator};
pub use mps::Mps;
pub use observables::{
    connected_normalized, string_tension_curve, string_tension_on, two_point, two_point_series, uniform_correlator,
    vertex_expectation, CorrelatorSeries, StringTensionCurve,
};
pub use tensor::DenseTensor;
pub use theory::{
    airy_zero, beta_sq_from_k, breather_mass_ratio, eta_parameter, meson_mass_ni2p, nu_exponent, string_tension_lo,
    SgParameters,
};
