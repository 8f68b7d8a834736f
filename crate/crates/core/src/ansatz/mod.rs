//! Symmetry-reduced geometry on Hirzebruch surfaces.

mod forms;
mod grid;
mod scenario;

pub use forms::*;
pub use grid::*;
pub use scenario::*;
