//! Optimal transmission switching and busbar splitting for hybrid AC/DC
//! grids.

pub mod augment;
pub mod case_io;
pub mod feasibility;
pub mod formulation;
pub mod network;
pub mod state;
pub mod study;
