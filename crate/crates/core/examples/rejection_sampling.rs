//! Samples from `D_{Vw}` given only sample access to the columns of `V`, and
//! shows how cancellation drives the iteration count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchrec::linalg::{empirical_distribution, l2_distribution, tv_distance, Combination};
use sketchrec::store::SampleVector;

fn run(label: &str, cols: &[Vec<f64>], w: &[f64]) -> sketchrec::Result<()> {
    let columns: Vec<SampleVector> = cols.iter().map(|c| SampleVector::from_slice(c)).collect::<Result<_, _>>()?;
    let combo = Combination::new(&columns, w)?;
    let n = cols[0].len();
    let vw: Vec<f64> = (0..n).map(|i| cols.iter().zip(w).map(|(c, x)| c[i] * x).sum()).collect();
    let norm2: f64 = vw.iter().map(|x| x * x).sum();
    let cancellation = combo.proposal_mass() / norm2;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = vec![0u64; n];
    let mut iterations = 0;
    let draws = 20_000;
    for _ in 0..draws {
        let d = combo.sample(&mut rng, 1_000_000)?;
        counts[d.index] += 1;
        iterations += d.iterations;
    }
    let tv = tv_distance(&empirical_distribution(&counts)?, &l2_distribution(&vw)?)?;
    println!(
        "{label}: C = {cancellation:.2}, k C = {:.2}, mean iterations {:.2}, TV {tv:.4}",
        combo.active_columns() as f64 * cancellation,
        iterations as f64 / draws as f64
    );
    Ok(())
}

fn main() -> sketchrec::Result<()> {
    let a = vec![1.0, 2.0, 0.0, 1.0, 3.0];
    let b = vec![0.0, 1.0, 2.0, 1.0, -1.0];
    run("orthogonal-ish", &[a.clone(), b.clone()], &[1.0, 1.0])?;
    let near: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + 0.05 * y).collect();
    run("heavy cancellation", &[a, near], &[1.0, -1.0])?;
    Ok(())
}
