//! Numerical solver and verification suite for a mean-field optimal control
//! system on the flat torus: a backward Hamilton–Jacobi equation with a
//! nonlocal Hamiltonian coupled to a forward aggregation–diffusion
//! (Fokker–Planck) equation.
//!
//! ```text
//! -Φ_t + |∇Φ|²/2 + (∇W⋆ρ)·∇Φ + ∇W⋆(ρ∇φ) - U(x,ρ) = ΔΦ,   Φ(T) = φ_T
//!  ρ_t = div((∇W⋆ρ)ρ + ρ∇φ) + Δρ,                         ρ(0) = ρ₀
//! ```
//!
//! The pair is computed by damped Picard iteration on the map
//! `φ → ρ → Φ` and every a priori property of the continuous system
//! (mass, positivity, L² growth, Lipschitz envelope, adjoint-flow value
//! identities) is exposed as a runnable check.
//!
//! Module map:
//! - [`grid`]: torus grids, fields, spectral calculus, periodic convolution
//! - [`problem`]: potentials, couplings, boundary data, assumption checks
//! - [`fokker_planck`]: forward density solver and the frozen-drift map
//! - [`hjb`]: Hopf–Cole backward solver and the direct monotone oracle
//! - [`fixed_point`]: Lipschitz budget, outer iteration, certification
//! - [`particles`]: McKean–Vlasov simulation, adjoint flows, Wasserstein-1
//! - [`runner`]: configuration, cost diagnostics, persistence, CLI driver

// NaN must fail the parameter checks, hence `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

pub mod error;
pub mod fixed_point;
pub mod fokker_planck;
pub mod grid;
pub mod hjb;
pub mod particles;
pub mod problem;
pub mod runner;
pub mod snapshot;

pub use error::{Error, Result};
pub use grid::{ScalarField, TimeMesh, TorusGrid, VectorField};
