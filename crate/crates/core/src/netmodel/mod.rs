//! Network ingestion, Kron reduction, injection Jacobians and grid strength.

mod assumptions;
mod case;
mod jacobian;
mod kron;

pub use assumptions::{validate_assumptions, AssumptionReport};
pub use case::{
    load_case, load_case_file, Branch, Bus, GfmUnit, InternalState, Load, NetworkCase,
    OperatingPoint, SgUnit,
};
pub use jacobian::{build_jacobians, gamma_bounds, injections, GridStrength, JacobianSet};
pub use kron::{augmented_laplacian, kron_reduce, kron_reduce_matrix, ReducedNetwork};
