//! Hierarchical Poincaré–Steklov solver for the 2D Helmholtz impedance problem.

pub mod exec;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod merge;
pub mod planner;
pub mod problem;
pub mod solver;
pub mod spectral;
