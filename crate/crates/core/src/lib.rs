//! Multi-user visible-light links inside an aircraft cabin section: scene
//! construction, multipath channel tracing, link budgets and the assignment
//! of light units, receiver branches and wavelengths to passenger devices.

pub mod allocation;
pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod linkbudget;
pub mod radiometry;
pub mod raytrace;
pub mod receiver;
pub mod scenarios;

pub use error::{Error, Result};
