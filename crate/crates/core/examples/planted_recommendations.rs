//! End to end: a planted block preference matrix is subsampled, sketched and
//! sampled for every user, then scored against the hidden matrix.

use sketchrec::modfkv::densify_description;
use sketchrec::recommender::{evaluate, EvalConfig, InstanceSpec, Pipeline, PipelineConfig, SampleLog};

fn main() -> sketchrec::Result<()> {
    let spec = InstanceSpec::parse("m = 128\nn = 128\nk = 4\np = 0.8\nseed = 3\n")?;
    let instance = spec.instance()?;
    let pipeline = Pipeline::build(&instance.a, instance.k, instance.p, &PipelineConfig::new(0.4, 3).with_q(200))?;
    let params = pipeline.parameters();
    println!("sigma = {:.3}, eta = {}, kept k = {}", params.sigma, params.eta, pipeline.description().k());
    for w in &params.warnings {
        println!("  warning: {w}");
    }

    let users: Vec<usize> = (0..instance.m()).collect();
    let reconstruction = densify_description(pipeline.description(), &instance.a.to_dense())?;
    let log = SampleLog { users: pipeline.sample_users(&users, 20, 3)?, reconstruction: Some(reconstruction) };
    let report = evaluate(&instance.t, &log, &EvalConfig::default())?;
    let s = &report.summary;
    println!("eps_eff = {:.3}", s.eps_eff.unwrap_or(f64::NAN));
    println!(
        "mean TV over typical users {:.4} <= {:.4}",
        s.mean_exact_tv_typical.unwrap_or(f64::NAN),
        s.avg_tv_bound.unwrap_or(f64::NAN)
    );
    println!("mean sampled bad rate {:.4}, bounds hold: {:?}", s.mean_bad_rate.unwrap_or(f64::NAN), s.bounds_hold);
    Ok(())
}
