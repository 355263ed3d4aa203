//! Exit-time moment spectra and first Dirichlet eigenvalues of geodesic balls
//! in rotationally symmetric model spaces.
//!
//! The crate is organised bottom-up:
//!
//! * [`quadrature`] radial grids, cumulative integration, monotone interpolation
//! * [`warping`] warping functions and the radial geometry of model spaces
//! * [`moments`] the moment hierarchy, the Green operator and the
//!   monotone lower/upper quotient sandwich for the first eigenvalue
//! * [`growth`] the power-series growth characterization of the eigenvalue
//! * [`comparison`] isoperimetric comparison spaces and balance conditions
//! * [`bounds`] closed-form eigenvalue bounds and comparison reports
//!
//! Batch workloads (radius sweeps, families of spaces) run through
//! [`Execution`], which uses rayon when the `parallel` feature is enabled and
//! degrades to a plain loop otherwise.

pub mod bounds;
pub mod comparison;
mod error;
pub mod growth;
pub mod moments;
mod par;
pub mod quadrature;
pub mod warping;

pub use error::{Error, Result};
pub use par::Execution;

pub use bounds::{BoundsReport, SweepRow};
pub use comparison::{BoundingFunctions, ComparisonSpaceResult, ComparisonSpaceSpec, RadialFunction};
pub use growth::{GrowthEstimate, Normalization, ReconciliationReport};
pub use moments::{EigenEstimate, MomentHierarchy, SandwichOptions};
pub use quadrature::{RadialGrid, RadialSamples};
pub use warping::{CurvatureConstant, ModelSpace, WarpingFunction};
