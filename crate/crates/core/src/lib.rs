//! Constructive homogenization of line-tension energies.
//!
//! The crate builds polyhedral, divergence-free matrix-valued line measures
//! (dislocation networks with vector multiplicities) that approximate a
//! piecewise-constant divergence-free field on a tetrahedral mesh, and
//! evaluates the line-tension energies `E_σ`, the auxiliary functional `F_∞`
//! and the effective energy `E_0` along such sequences.
//!
//! Module map:
//!
//! * [`geometry`]: tetrahedra, conforming triangulations, boundary
//!   subdivision and line/triangle incidence.
//! * [`currents`]: polyhedral currents, boundary ledgers, pairings, loop
//!   decomposition and lattice rounding.
//! * [`fields`]: piecewise-constant fields from vector potentials and their
//!   rank-one coordinate decompositions.
//! * [`densities`]: line-tension densities, recession functions and the
//!   convex envelope computed by linear programming.
//! * [`construction`]: the per-tetrahedron lattice-line construction and the
//!   gluing over a triangulation.
//! * [`energy`]: the energy functionals and upper/lower bound experiments.
//! * [`harness`]: configuration, runs, exports and the verification suite.

pub mod construction;
pub mod currents;
pub mod densities;
pub mod energy;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod numerics;

pub use geometry::Vec3;
