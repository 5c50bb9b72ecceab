//! Surface-electrode ion trap toolkit.
//!
//! Models linear surface traps in the gapless-plane approximation,
//! characterizes area-normalized inner control-electrode shapes, and
//! synthesizes transport and shim voltage sets by L1-minimizing linear
//! programming.
//!
//! Module map:
//! * [`units`]: SI constants, species, RF drive, frequency/curvature conversions
//! * [`geometry`]: polygons, the shape catalog, strip tiling, trap layouts
//! * [`field`]: analytic potentials and derivatives, pseudopotential, RF null, modes
//! * [`solver`]: constraint assembly and the L1 linear program
//! * [`scenarios`]: unit-voltage sweeps, transport, trap depth, shims, summary table
//! * [`config`] / [`io`]: JSON configuration and CSV/JSON emission

pub mod config;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod scenarios;
pub mod solver;
pub mod units;

pub use error::{Error, Result};
pub use field::{FieldSample, Order};
pub use geometry::{
    build_layout, LayoutConfig, Orientation, PolygonElectrode, Role, ShapeKind, ShapeSpec,
    TrapLayout,
};
pub use units::{EvalPoint, IonSpecies, RfDrive};
