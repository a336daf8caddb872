//! Meshfree deep-network least-squares solver for dynamic interface
//! problems: two-phase incompressible flow and fluid–structure interaction
//! on an immersed disk.
//!
//! The crate is organised bottom-up:
//!
//! - [`jet`] — second-order Taylor jets over `(x, y, t)`;
//! - [`tape`] — reverse accumulation over jet-valued nodes;
//! - [`network`] — fully connected tanh networks evaluated in jet arithmetic;
//! - [`geometry`] — the disk-in-box geometry and sampling-point sets;
//! - [`physics`] — residual operators and manufactured solutions;
//! - [`training`] — discrete least-squares loss and Adam;
//! - [`experiments`] — configuration, error evaluation, sweeps and plots.

pub mod experiments;
pub mod geometry;
pub mod jet;
pub mod network;
pub mod physics;
pub mod tape;
pub mod training;
