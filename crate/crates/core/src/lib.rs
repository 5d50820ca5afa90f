//! Hierarchy of pure states (HOPS) for open quantum system dynamics.

pub mod bcf;
pub mod config;
pub mod ensemble;
pub mod expfit;
pub mod hierarchy;
pub mod hops;
pub mod master_eq;
pub mod ode;
pub mod quad;
pub mod spin_boson;
pub mod spline;
pub mod stocproc;
pub mod thermal;
