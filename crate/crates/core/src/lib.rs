//! Spatial point-pattern features for object centroids and a mass-univariate
//! association engine linking those features to a scalar phenotype.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`geometry`]: DBSCAN tissue clusters and their convex hulls define the
//!    observation window and its area.
//! 2. [`ppstats`] and [`features`]: K, L, g, G, F, J, ANN and global density
//!    with isotropic and Kaplan-Meier edge corrections, reduced to a named
//!    30-feature dictionary.
//! 3. [`assoc`]: subject-level aggregation, z-scoring, one OLS fit per
//!    feature, Bonferroni and Benjamini-Hochberg corrections.
//! 4. [`io`] and [`svg`]: delimited result files, plot-data JSON and
//!    deterministic SVG figures.
//!
//! [`simulate`] checks every estimator against complete spatial randomness
//! with Monte-Carlo envelopes.

pub mod assoc;
pub mod cli;
pub mod error;
pub mod features;
pub mod geometry;
pub mod io;
pub mod ppstats;
pub mod simulate;
pub mod svg;

pub use error::{Error, Result};
pub use geometry::{ObservationWindow, Point2D, PointPattern};
pub use ppstats::{CurveEstimate, DistanceGrid, EdgeCorrection, FunctionId};
