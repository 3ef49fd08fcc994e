//! # entroball
//!
//! Semi-discrete optimal transport to empirical measures, and minimum
//! cross-entropy densities inside Wasserstein balls.
//!
//! Given a strictly positive prior density `p` on a box `K`, an empirical
//! measure `mu = (1/N) sum_i delta(x_i)` and a radius `delta`, the crate
//! computes
//!
//! - the Wasserstein distance `W(q, mu)` and the optimal transport map of any
//!   density `q` (given as the ratio `q/p`), by supergradient ascent on the
//!   concave dual `Psi(lambda) = E_q[phi_lambda]` where
//!   `phi_lambda(x) = min_i { d(x, x_i) - lambda_i }`;
//! - the unique density of minimum relative entropy `H(q, p)` with
//!   `W(q, mu) <= delta`, which has the form
//!   `q*(x) = p(x) exp(-1 - v phi_{lambda*}(x) - u)`. The weight vector
//!   `lambda*` is found by a Chebyshev-center cutting-plane method and
//!   `(u, v)` by a two-dimensional concave Newton solve.
//!
//! Every integral is a sample average over one fixed [`SampleBatch`] drawn
//! from the prior, so each solver optimizes a deterministic function and the
//! whole pipeline is reproducible from a seed.
//!
//! ## Modules
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`domain`] | box domains, metrics, priors, empirical measures, sample batches |
//! | [`voronoi`] | `phi_lambda`, additively weighted Voronoi assignment, region masses, rasters |
//! | [`transport`] | `Psi`, supergradient ascent, transport map, ball membership |
//! | [`dual`] | the `(u, v)` entropy dual, `Gamma(lambda)`, cross-entropy |
//! | [`lp`] | dense two-phase simplex |
//! | [`cutting_plane`] | Chebyshev centers, cuts, the full minimum cross-entropy solver |
//!
//! The crate is `#![no_std]` and only needs `alloc`.
//!
//! ## Quick start
//!
//! ```
//! use entroball::{
//!     draw_batch, maximize_psi, AscentOptions, BoxDomain, EmpiricalMeasure, Metric, UniformPrior,
//! };
//!
//! let domain = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
//! let mu = EmpiricalMeasure::new(&domain, vec![vec![0.25], vec![0.75]]).unwrap();
//! let prior = UniformPrior::new(domain.clone());
//! let batch = draw_batch(&prior, 20_000, 7).unwrap();
//!
//! let sol = maximize_psi(&batch, &|_| 1.0, &mu, Metric::Euclidean, &AscentOptions::default())
//!     .unwrap();
//! assert!((sol.wasserstein - 0.125).abs() < 5e-3);
//! ```
#![no_std]
// `!(x > 0.0)` is how parameter checks reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cutting_plane;
pub mod demo;
pub mod domain;
pub mod dual;
mod error;
pub mod lp;
pub mod transport;
pub mod voronoi;

pub use cutting_plane::{
    chebyshev_center, generate_cut, solve_min_cross_entropy, CrossEntropyRun, CutPolytope,
    CutRecord, CuttingPlaneOptions, StopReason,
};
pub use domain::{
    draw_batch, make_truncated_gaussian_prior, make_uniform_prior, BoxDomain, EmpiricalMeasure,
    Metric, Prior, SampleBatch, TruncatedGaussianPrior, UniformPrior,
};
pub use dual::{
    cross_entropy, dual_gradient_hessian, dual_objective, gamma_value, solve_dual, Diagnostics,
    DualOptions, DualPair, DualSolution, EntropySolution, GammaValue, RatioFn,
};
pub use error::{Error, Result};
pub use lp::{lp_solve, LpError, LpSolution};
pub use transport::{
    ball_membership, maximize_psi, maximize_psi_stochastic, psi, transport_map, AscentOptions,
    Membership, MembershipReport, StepSchedule, TransportSolution,
};
pub use voronoi::{
    assign_region, phi_lambda, rasterize_regions, region_masses, Assignment, Grid,
    RegionMassReport, SiteDistances, WeightVector,
};
