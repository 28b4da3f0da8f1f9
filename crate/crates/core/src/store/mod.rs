//! Dynamic `l2`-norm sampling storage for vectors and matrices.

mod io;
mod matrix;
mod vector;

pub use io::{parse_triples, read_snapshot, write_snapshot, SNAPSHOT_MAGIC};
pub use matrix::{RowView, SampleMatrix};
pub use vector::SampleVector;
