//! Sketches a planted low-rank matrix, inspects the description, and
//! round-trips it through the binary format.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchrec::modfkv::{densify_description, modfkv, LowRankDescription, ModFkvParams};
use sketchrec::store::SampleMatrix;

fn main() -> sketchrec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (m, n) = (80, 60);
    let u = DMatrix::from_fn(m, 2, |_, _| rng.random_range(-1.0..1.0));
    let v = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
    let dense = &u * v.transpose() + DMatrix::from_fn(m, n, |_, _| rng.random_range(-0.02..0.02));
    let a = SampleMatrix::from_dense(&dense)?;

    let params = ModFkvParams::new(0.3 * a.frob(), 0.2, 0.5).with_seed(9);
    match params.plan(a.frob()) {
        Ok(plan) => println!("default plan: q = {}", plan.q),
        Err(e) => println!("default plan rejected: {e}"),
    }
    let plan = params.clone().with_q(300).plan(a.frob())?;
    println!("override: q = {} (K = {:.1}, eps_bar = {:.3})", plan.q, plan.k_ratio, plan.eps_bar);
    for w in &plan.warnings {
        println!("  warning: {w}");
    }

    let desc = modfkv(&a, &params.with_q(300))?;
    println!("q = {}, kept k = {} directions, sigma_hat = {:?}", desc.q(), desc.k(), desc.sigma_hat);

    let d = densify_description(&desc, &dense)?;
    println!("||A - D||_F / ||A||_F = {:.4}", (&dense - &d).norm() / dense.norm());

    let mut blob = Vec::new();
    desc.write_to(&mut blob)?;
    let back = LowRankDescription::read_from(blob.as_slice())?;
    println!("serialized {} bytes, round trip equal: {}", blob.len(), back == desc);
    Ok(())
}
