//! Matrix polynomials, right solvents and block partial fractions, applied
//! to multivariate CARMA processes: decomposition into complex
//! Ornstein–Uhlenbeck components, exact sampled VARMA(p, p−1) parameters,
//! autocovariances and exact simulation.
//!
//! ```
//! use mcarma_core::{analyze, Grouping, McarmaModel, RMat};
//!
//! let a1 = RMat::from_row_slice(2, 2, &[-11.0, 22.0, -12.0, 21.0]);
//! let a2 = RMat::from_row_slice(2, 2, &[-42.0, 52.0, -36.0, 44.0]);
//! let model = McarmaModel::from_real(&[a1, a2], &[RMat::identity(2, 2)], RMat::identity(2, 2)).unwrap();
//! let dec = analyze(&model, &Grouping::Auto, None).unwrap();
//! let gamma0 = &dec.stationary_acvf(&[0.0]).unwrap()[0];
//! assert!((gamma0 - gamma0.transpose()).amax() < 1e-10);
//! ```

pub mod error;
pub mod linalg;
pub mod matpoly;
pub mod mcarma;
pub mod rational;
pub mod sampling;
pub mod sim;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, RMat, C64};
pub use matpoly::{
    coeffs_from_solvents, latent_roots, linear_factorization, solvents_from_latents, vandermonde, Grouping,
    LambdaMatrix, LatentPair, Solvent, SolventSet,
};
pub use mcarma::{analyze, build_state_space, decompose, McarmaModel, OuComponent, OuDecomposition, StateSpace};
pub use rational::{check_irreducible, residues, IrreducibilityCertificate, PartialFraction, RationalLeftMatrix};
pub use sampling::{fit_ma, noise_acvf, sampled_varma, varma_ar, MaFit, SampledAr, SampledVarma};
pub use sim::{empirical_acvf, extract_noise, simulate, simulate_paths, DriverSpec, PathGrid, Simulator, Start};
