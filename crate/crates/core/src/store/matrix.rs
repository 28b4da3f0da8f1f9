use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::Rng;

use super::SampleVector;
use crate::error::{Error, Result};
use crate::linalg::{QueryAccess, SampleAccess};

/// A matrix stored as one [`SampleVector`] per row plus a [`SampleVector`]
/// of row norms.
///
/// Sampling the row-norm vector draws row `i` with probability
/// `||A_i||^2 / ||A||_F^2`; sampling inside a row draws a column from that
/// row's own `l2` distribution. Entry reads through [`SampleMatrix::get`]
/// are counted so callers can audit query complexity.
pub struct SampleMatrix {
    rows: Vec<SampleVector>,
    row_norms: SampleVector,
    cols: usize,
    queries: AtomicU64,
}

impl Clone for SampleMatrix {
    fn clone(&self) -> Self {
        Self {
            rows: self.rows.clone(),
            row_norms: self.row_norms.clone(),
            cols: self.cols,
            queries: AtomicU64::new(self.queries.load(Ordering::Relaxed)),
        }
    }
}

impl std::fmt::Debug for SampleMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SampleMatrix")
            .field("rows", &self.rows.len())
            .field("cols", &self.cols)
            .field("nnz", &self.nnz())
            .field("frob2", &self.frob2())
            .finish()
    }
}

impl SampleMatrix {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter {
                name: "shape",
                reason: format!("matrix dimensions must be positive, got {rows}x{cols}"),
            });
        }
        let row_vec = SampleVector::new(cols)?;
        Ok(Self { rows: vec![row_vec; rows], row_norms: SampleVector::new(rows)?, cols, queries: AtomicU64::new(0) })
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        let mut out = Self::new(a.nrows(), a.ncols())?;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let x = a[(i, j)];
                if x != 0.0 {
                    out.rows[i].set(j, x)?;
                }
            }
            out.row_norms.set(i, out.rows[i].norm())?;
        }
        Ok(out)
    }

    /// Loads zero-based `(row, col, value)` triples. Later duplicates overwrite
    /// earlier ones.
    pub fn from_triples(rows: usize, cols: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let mut out = Self::new(rows, cols)?;
        for &(i, j, x) in triples {
            out.set(i, j, x)?;
        }
        Ok(out)
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(SampleVector::nnz).sum()
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i >= self.rows.len() {
            Err(Error::IndexOutOfRange { index: i, len: self.rows.len() })
        } else {
            Ok(())
        }
    }

    /// Overwrites `A[i, j]` and refreshes the stored norm of row `i`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        self.check_row(i)?;
        self.rows[i].set(j, value)?;
        let norm = self.rows[i].norm();
        self.row_norms.set(i, norm)
    }

    pub fn add(&mut self, i: usize, j: usize, delta: f64) -> Result<()> {
        self.check_row(i)?;
        let current = self.rows[i].get(j)?;
        self.set(i, j, current + delta)
    }

    /// Reads `A[i, j]`; every call counts as one entry query.
    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        self.check_row(i)?;
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.rows[i].get(j)
    }

    /// `||A_i||`, read from the row-norm vector.
    pub fn row_norm(&self, i: usize) -> Result<f64> {
        self.check_row(i)?;
        Ok(self.row_norms.get(i)?.abs())
    }

    /// `||A||_F^2`, read from the root of the row-norm tree.
    pub fn frob2(&self) -> f64 {
        self.row_norms.norm2()
    }

    pub fn frob(&self) -> f64 {
        self.frob2().sqrt()
    }

    /// Draws a row index with probability `||A_i||^2 / ||A||_F^2`.
    pub fn sample_row<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        self.row_norms.sample(rng).map_err(|_| Error::UndefinedDistribution("sampling rows of the zero matrix"))
    }

    /// Draws a column of row `i` with probability `A_ij^2 / ||A_i||^2`.
    pub fn sample_in_row<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<usize> {
        self.check_row(i)?;
        self.rows[i].sample(rng).map_err(|_| Error::UndefinedDistribution("sampling from a zero row"))
    }

    pub fn row_vector(&self, i: usize) -> Result<&SampleVector> {
        self.check_row(i)?;
        Ok(&self.rows[i])
    }

    /// The vector of row norms.
    pub fn row_norm_vector(&self) -> &SampleVector {
        &self.row_norms
    }

    /// Query/sample view of row `i`, with queries routed through the counter.
    pub fn row(&self, i: usize) -> Result<RowView<'_>> {
        self.check_row(i)?;
        Ok(RowView { matrix: self, row: i, scale: 1.0 })
    }

    /// View of `scale * A_i`.
    pub fn scaled_row(&self, i: usize, scale: f64) -> Result<RowView<'_>> {
        self.check_row(i)?;
        Ok(RowView { matrix: self, row: i, scale })
    }

    pub fn entry_queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    /// Node touches summed over every row tree and the row-norm tree.
    pub fn node_touches(&self) -> u64 {
        self.rows.iter().map(SampleVector::node_touches).sum::<u64>() + self.row_norms.node_touches()
    }

    pub fn reset_counters(&self) {
        self.queries.store(0, Ordering::Relaxed);
        self.row_norms.reset_touches();
        for r in &self.rows {
            r.reset_touches();
        }
    }

    pub fn rebuild(&mut self) {
        for r in &mut self.rows {
            r.rebuild();
        }
        self.row_norms.rebuild();
    }

    /// Checks every row tree, the row-norm tree, and that each stored row norm
    /// squared matches its row's root weight.
    pub fn is_consistent(&self, rel_tol: f64) -> bool {
        if !self.row_norms.is_consistent(rel_tol) {
            return false;
        }
        let norms = self.row_norms.to_dense();
        self.rows.iter().zip(norms).all(|(r, stored)| {
            r.is_consistent(rel_tol)
                && (stored * stored - r.norm2()).abs() <= rel_tol * r.norm2().max(f64::MIN_POSITIVE)
        })
    }

    /// Nonzeros of row `i` in column order, without touching the counters.
    pub fn row_nonzeros(&self, i: usize) -> Result<Vec<(usize, f64)>> {
        self.check_row(i)?;
        Ok(self.rows[i].nonzeros())
    }

    /// All nonzeros as zero-based `(row, col, value)` triples.
    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        self.rows.iter().enumerate().flat_map(|(i, r)| r.nonzeros().into_iter().map(move |(j, x)| (i, j, x))).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows(), self.cols);
        for (i, j, x) in self.triples() {
            out[(i, j)] = x;
        }
        out
    }
}

/// Query and sample access to `scale * A_i`.
#[derive(Clone, Copy)]
pub struct RowView<'a> {
    matrix: &'a SampleMatrix,
    row: usize,
    scale: f64,
}

impl RowView<'_> {
    pub fn row_index(&self) -> usize {
        self.row
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl QueryAccess for RowView<'_> {
    fn len(&self) -> usize {
        self.matrix.cols
    }

    fn query(&self, i: usize) -> f64 {
        self.scale * self.matrix.get(self.row, i).expect("column index in range")
    }
}

impl SampleAccess for RowView<'_> {
    fn norm2(&self) -> f64 {
        self.scale * self.scale * self.matrix.rows[self.row].norm2()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        self.matrix.sample_in_row(self.row, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_two_by_two() {
        let mut a = SampleMatrix::new(2, 2).unwrap();
        a.set(0, 0, 1.0).unwrap();
        assert_eq!(a.frob2(), 1.0);
        assert_eq!(a.row_norm_vector().to_dense(), vec![1.0, 0.0]);
    }

    #[test]
    fn overwrite_semantics() {
        let mut a = SampleMatrix::new(2, 2).unwrap();
        a.set(1, 1, 3.0).unwrap();
        a.set(1, 1, 5.0).unwrap();
        assert_eq!(a.frob2(), 25.0);
        a.add(1, 1, 1.0).unwrap();
        assert_eq!(a.get(1, 1).unwrap(), 6.0);
    }

    #[test]
    fn row_norm_weighting() {
        let mut a = SampleMatrix::new(2, 3).unwrap();
        a.set(0, 0, 1.0).unwrap();
        a.set(1, 2, 2.0).unwrap();
        let p = a.row_norm_vector().walk_probability(1).unwrap();
        assert!((p - 0.8).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let hits = (0..n).filter(|_| a.sample_row(&mut rng).unwrap() == 1).count();
        assert!((hits as f64 / n as f64 - 0.8).abs() < 0.01);
    }

    #[test]
    fn zero_row_and_zero_matrix() {
        let mut a = SampleMatrix::new(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(a.sample_row(&mut rng), Err(Error::UndefinedDistribution(_))));
        a.set(0, 1, 1.0).unwrap();
        assert!(matches!(a.sample_in_row(2, &mut rng), Err(Error::UndefinedDistribution(_))));
        assert_eq!(a.sample_in_row(0, &mut rng).unwrap(), 1);
        assert!(a.set(3, 0, 1.0).is_err());
        assert!(a.get(0, 3).is_err());
    }

    #[test]
    fn query_counter() {
        let a = SampleMatrix::from_dense(&DMatrix::identity(4, 4)).unwrap();
        a.reset_counters();
        for i in 0..4 {
            a.get(i, i).unwrap();
        }
        let row = a.scaled_row(2, 2.0).unwrap();
        assert_eq!(row.query(2), 2.0);
        assert_eq!(row.norm2(), 4.0);
        assert_eq!(a.entry_queries(), 5);
    }
}
