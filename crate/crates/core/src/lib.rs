pub mod dynamics;
pub mod error;
pub mod fields;
pub mod jlm;
pub mod poisson;
pub mod sampling;
pub mod systems;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{CoordChart, ScalarField, State, VectorField};
