//! Simulation toolkit: integration, noise, decay fits, stability checks and
//! recording.

pub mod fit;
pub mod hurwitz;
pub mod ltv;
pub mod noise;
pub mod ode;
pub mod record;

pub use fit::{decay_rate_fit, DecayFit};
pub use hurwitz::{hurwitz_check, lyapunov_certificate, spectral_abscissa, HurwitzReport};
pub use ltv::{ltv_convergence_harness, random_instance, LtvInstance, LtvReport, ReferenceInput};
pub use noise::{NoiseChannel, NoiseKind, NoiseStream};
pub use ode::{grid_multiple, integrate, EventHook, IntegratorConfig, OdeSystem, Rk4};
pub use record::{fmt17, TimeSeries};
