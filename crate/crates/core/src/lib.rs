//! Transient resistive-loss analysis for inverter microgrids under droop and
//! distributed-averaging PI (DAPI) frequency control.
//!
//! The crate is organised bottom-up:
//!
//! - [`network`]: Kron-reduced network graphs, their Laplacians and spectra.
//! - [`dynamics`]: linearised closed-loop state-space models and their
//!   per-eigenvalue modal subsystems.
//! - [`h2`]: squared H₂ norms by closed form, modal Lyapunov solves and a
//!   deflated full-system Gramian.
//! - [`tuning`]: loss-minimising communication gain and parameter sweeps.
//! - [`sim`]: Euler–Maruyama simulation of the stochastic closed loop.
//!
//! A squared H₂ norm here is the steady-state expected resistive power loss
//! (per unit) under unit-intensity white-noise power disturbances.
//!
//! ```
//! use lossgrid_core::{network, h2, dynamics::ControllerParams};
//!
//! let g = network::build_complete_graph(3, 1.0, 1.0).unwrap();
//! let spec = network::spectral_decomposition(&network::laplacians(&g, 1.0).susceptance).unwrap();
//! let p = ControllerParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
//! let dapi = h2::h2_dapi_closed_form(g.alpha(), &p, spec.eigenvalues().as_slice()).unwrap();
//! assert!((dapi.squared_norm - 15.0 / 19.0).abs() < 1e-12);
//! ```

pub mod dynamics;
pub mod error;
pub mod h2;
pub mod linalg;
pub mod network;
pub mod numfmt;
pub mod sim;
pub mod tuning;

pub use dynamics::{ControllerKind, ControllerParams, ModalSubsystem, StateSpace};
pub use error::{Error, Result};
pub use h2::{H2Method, H2Result};
pub use network::{Laplacian, LaplacianKind, Laplacians, NetworkGraph, Spectrum};
pub use sim::{SimConfig, Trajectory};
pub use tuning::{SweepCurve, SweepMetric, SweepParam, TuningResult};
