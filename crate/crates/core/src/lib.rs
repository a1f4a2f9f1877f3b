//! Part-level manipulation planning.
//!
//! A scene of labeled part masks and RGB-D observations is turned into a
//! sequence of end-effector poses in two phases: a task-oriented grasp is
//! chosen from candidates that land on the grounded grasping part, then
//! textual spatial constraints over modeled parts (vectors and surfaces) are
//! solved for an SE(3) transform of the grasped object, and scripted
//! follow-up actions extend the solved pose into the full sequence.

pub mod constraint_lang;
pub mod fixtures;
pub mod geometry;
pub mod grasp;
pub mod io;
pub mod mask;
pub mod oracle;
pub mod part_model;
pub mod pipeline;
pub mod post_grasp;
pub mod solver;
