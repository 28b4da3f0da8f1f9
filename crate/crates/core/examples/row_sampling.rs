//! Draws recommendations for one row of the sketched matrix and compares them
//! with the exact distribution the rejection step targets.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchrec::linalg::{empirical_distribution, tv_distance};
use sketchrec::modfkv::{modfkv, ModFkvParams};
use sketchrec::sampler::{combination_distribution, estimate_cancellation, RowSampler, SamplerConfig};
use sketchrec::store::SampleMatrix;

fn main() -> sketchrec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (m, n) = (100, 40);
    let u = DMatrix::from_fn(m, 3, |_, _| rng.random_range(0.0..1.0));
    let v = DMatrix::from_fn(n, 3, |_, _| rng.random_range(0.0..1.0));
    let a = SampleMatrix::from_dense(&(u * v.transpose()))?;

    let desc = modfkv(&a, &ModFkvParams::new(0.2 * a.frob(), 0.2, 0.5).with_q(200).with_seed(1))?;
    let sampler = RowSampler::new(&desc, &a, SamplerConfig::new(0.2).with_delta(0.01))?;
    let user = 17;
    let prepared = sampler.prepare(user, &mut rng)?;
    println!(
        "row {user}: estimate error bound {:.3}, cancellation {:.2}, budget {}",
        prepared.estimate.error_bound,
        estimate_cancellation(&desc, &a, &prepared.weights)?,
        sampler.budget()
    );

    let target = combination_distribution(&desc, &a, &prepared.weights)?;
    let mut counts = vec![0u64; n];
    for rec in sampler.sample_many(user, 20_000, &mut rng)? {
        counts[rec.index] += 1;
    }
    println!("TV(empirical, target) = {:.4}", tv_distance(&empirical_distribution(&counts)?, &target)?);
    let mut top: Vec<usize> = (0..n).collect();
    top.sort_by(|&x, &y| counts[y].cmp(&counts[x]));
    println!("most recommended columns: {:?}", &top[..5]);
    Ok(())
}
