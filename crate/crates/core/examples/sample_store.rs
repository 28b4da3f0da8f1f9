//! Builds a sampling vector and matrix, updates them, and compares draws
//! against the exact `l2` distribution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchrec::linalg::{empirical_distribution, l2_distribution, tv_distance};
use sketchrec::store::{SampleMatrix, SampleVector};

fn main() -> sketchrec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let mut v = SampleVector::from_slice(&[3.0, 0.0, -4.0, 1.0, 0.0, 2.0])?;
    v.set(1, 1.5)?;
    v.add(2, 1.0)?;
    v.set(5, 0.0)?;
    let exact = l2_distribution(&v.to_dense())?;
    println!("v = {:?}, ||v||^2 = {}", v.to_dense(), v.norm2());

    let mut counts = vec![0u64; v.len()];
    for _ in 0..50_000 {
        counts[v.sample(&mut rng)?] += 1;
    }
    for i in 0..v.len() {
        println!(
            "  P[{i}] exact {:.4}  walk {:.4}  empirical {:.4}",
            exact[i],
            v.walk_probability(i)?,
            counts[i] as f64 / 50_000.0
        );
    }
    println!("TV(empirical, exact) = {:.4}", tv_distance(&empirical_distribution(&counts)?, &exact)?);

    v.reset_touches();
    v.sample(&mut rng)?;
    println!("one sample touched {} nodes (depth {})", v.node_touches(), v.depth());

    let mut a = SampleMatrix::from_triples(3, 1 << 20, &[(0, 7, 1.0), (0, 900_000, 2.0), (2, 12, -1.0)])?;
    a.set(1, 5, 3.0)?;
    println!("matrix: nnz {} ||A||_F^2 {}", a.nnz(), a.frob2());
    let i = a.sample_row(&mut rng)?;
    let j = a.sample_in_row(i, &mut rng)?;
    println!("sampled row {i}, then entry ({i}, {j}) = {}", a.get(i, j)?);
    Ok(())
}
