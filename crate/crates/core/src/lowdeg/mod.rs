//! Low-degree machinery: LD and Franz–Parisi values, Fourier LDLR, cumulant and
//! advantage recursions over multigraphs.

mod advantage;
mod cumulant;
mod fourier;
mod multigraph;
mod overlap;

pub use advantage::*;
pub use cumulant::*;
pub use fourier::*;
pub use multigraph::*;
pub use overlap::*;
