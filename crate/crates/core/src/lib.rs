//! Gesture teleoperation stack for a simulated soft growing manipulator.
//!
//! The pipeline runs from motion-capture markers to robot commands
//! ([`geometry`], [`calibration`], [`interpreter`]), through a
//! constant-curvature simulator ([`robot`]) into a pick-and-place task world
//! ([`task`]). [`engine`] binds them on the 66 Hz command grid and is shared
//! by offline replay ([`replay`]) and the live service ([`service`]).

pub mod calibration;
pub mod geometry;
pub mod interpreter;
pub mod robot;
pub mod task;
pub mod engine;
pub mod io;
pub mod replay;
pub mod synth;
pub mod service;
