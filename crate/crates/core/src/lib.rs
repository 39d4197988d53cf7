//! Swarm-intelligence path planning in a 3D occupancy grid.
//!
//! The crate simulates a point robot flying through a voxel world with fixed
//! and randomly generated cuboid obstacles, moving point obstacles and three
//! kinds of goals. Candidate paths are searched with glowworm swarm
//! optimization ([`gso`]), invasive weed optimization ([`iwo`]) or
//! biogeography-based optimization ([`bbo`]), either directly on the full
//! resolution grid or coarse-to-fine over an occupancy pyramid
//! ([`hierarchy`]). [`planner`] runs the sense/plan/check/avoid/move loop and
//! [`harness`] drives whole experiment matrices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bbo;
pub mod cost_model;
pub mod error;
pub mod geom;
pub mod grid_world;
pub mod gso;
pub mod harness;
pub mod hierarchy;
pub mod iwo;
pub mod optim;
pub mod planner;
pub mod rng;
pub mod smoothing;
pub mod testfns;
pub mod trajectory;

pub use error::{Error, Result};
pub use geom::Vec3;
