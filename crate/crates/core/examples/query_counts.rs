//! Counts entry queries per recommendation while the number of columns grows
//! and the nonzero pattern stays fixed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchrec::modfkv::{modfkv, ModFkvParams};
use sketchrec::sampler::{RowSampler, SamplerConfig};
use sketchrec::store::SampleMatrix;

fn main() -> sketchrec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let base: Vec<Vec<f64>> = (0..32)
        .map(|i| (0..32).map(|j| ((i % 4 == j % 4) as u8 as f64) + rng.random_range(0.0..0.1)).collect())
        .collect();
    for log_n in [8u32, 12, 16, 20] {
        let n = 1usize << log_n;
        let stride = n / 32;
        let triples: Vec<_> = (0..32)
            .flat_map(|i| (0..32).map(move |c| (i, c * stride, 0.0)))
            .map(|(i, j, _)| (i, j, base[i][j / stride]))
            .collect();
        let a = SampleMatrix::from_triples(32, n, &triples)?;
        let desc = modfkv(&a, &ModFkvParams::new(0.3 * a.frob(), 0.2, 0.5).with_q(64).with_seed(2))?;
        let sampler = RowSampler::new(&desc, &a, SamplerConfig::new(0.2))?;
        a.reset_counters();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pick = sampler.sample(0, &mut rng)?;
        println!(
            "n = 2^{log_n:<2}  entry queries {:>6}  tree nodes touched {:>7}  picked column {}",
            a.entry_queries(),
            a.node_touches(),
            pick.index
        );
    }
    Ok(())
}
