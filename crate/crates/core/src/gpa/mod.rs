//! Grid point approximation: fit exact estimates on a grid once, then
//! answer queries by interpolation.

pub mod grid;
pub mod interp;
pub mod io;
pub mod model;

pub use grid::{design_grid, Grid, MultiGrid, Support, SupportMode, MIN_SEGMENTS};
pub use interp::{find_simplex, lagrange_coeffs, nearest_window, Simplex};
pub use model::{fit_grid, select_order, Geometry, GpaModel, ModelMeta, OrderScore, OrderSelection, Prediction};
