//! Estimates `<x, y>` from `l2` samples of `x` and queries to `y`, and
//! reports how often the estimate lands within `eps ||x|| ||y||`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchrec::linalg::{estimate_inner, MedianOfMeans};
use sketchrec::store::SampleVector;

fn main() -> sketchrec::Result<()> {
    let (eps, delta, n, trials) = (0.1, 0.05, 5_000, 200);
    let schedule = MedianOfMeans::for_accuracy(eps, delta)?;
    println!("schedule {schedule:?}: {} draws per estimate", schedule.draws());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut hits = 0;
    for _ in 0..trials {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v + rng.random_range(-1.0..1.0)).collect();
        let sx = SampleVector::from_slice(&x)?;
        let exact: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let est = estimate_inner(&sx, &y, eps, delta, &mut rng)?;
        let tol = eps * sx.norm() * y.iter().map(|v| v * v).sum::<f64>().sqrt();
        hits += ((est - exact).abs() <= tol) as usize;
    }
    println!("within tolerance on {hits}/{trials} trials (target >= {:.0}%)", 100.0 * (1.0 - delta));
    Ok(())
}
