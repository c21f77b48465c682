//! Symplectic autoencoders for model reduction of Hamiltonian systems,
//! trained with Adam-type optimizers on the compact Stiefel manifold.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`). The
//! `*64` aliases below fix the scalar to `f64`, which is what the file
//! formats and the command line tool use.

pub mod error;
pub mod homogeneous;
pub mod integrators;
pub mod linalg;
pub mod models;
pub mod network;
pub mod optimizers;
pub mod reduction;
pub mod scalar;
pub mod stiefel;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Real;
pub use stiefel::{
    cayley_factors, cayley_retract, metric_inner, project_tangent, random_stiefel,
    riemannian_gradient, transport_differential, transport_submanifold, Metric, StiefelPoint,
    TangentVector, Transport,
};

pub use homogeneous::{lift_to_global, retract_global, section_qr, HorizontalElement, OrthoSection};
pub use integrators::{implicit_midpoint, NewtonOptions, OdeSystem, Trajectory, VectorField};
pub use models::{sg_exact, SgCondition, SineGordonModel, WaveModel};
pub use network::{build_network, Activation, Layer, LossKind, Network};
pub use optimizers::{AdamHyper, ManifoldMethod, ManifoldOptimizer};
pub use reduction::{
    build_rom, projection_error, psd_cotangent_lift, reconstruct, reduction_error, solve_rom,
    Autoencoder, ErrorVariant, PsdMap, Rom, SnapshotSet,
};
pub use training::NetworkOptimizer;

pub type StiefelPoint64 = StiefelPoint<f64>;
pub type TangentVector64 = TangentVector<f64>;
pub type HorizontalElement64 = HorizontalElement<f64>;
pub type AdamHyper64 = AdamHyper<f64>;
pub type ManifoldOptimizer64 = ManifoldOptimizer<f64>;
pub type Network64 = Network<f64>;
pub type NetworkOptimizer64 = NetworkOptimizer<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type WaveModel64 = WaveModel<f64>;
pub type SineGordonModel64 = SineGordonModel<f64>;
pub type SnapshotSet64 = SnapshotSet<f64>;
pub type PsdMap64 = PsdMap<f64>;
