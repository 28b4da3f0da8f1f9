//! Runs the dense reference checks on a small planted matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchrec_oracle::generators::{planted_spectrum, rotated_projector};
use sketchrec_oracle::{
    check_bound_transfer, check_near_projector, exact_ak, exact_svd, nearest_a_sigma_eta, BoundTransfer,
};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = planted_spectrum(20, 16, &[5.0, 3.0, 2.0, 0.5], &mut rng);
    let svd = exact_svd(&a);
    println!("singular values: {:.3?}", &svd.sigma[..5]);

    let fit = nearest_a_sigma_eta(&a, 2.5, 0.3, &exact_ak(&a, 3)).expect("family fit");
    println!("distance from A_3 to the sigma=2.5, eta=0.3 family: {:.3e}", fit.distance);

    let near = check_near_projector(&(svd.top_projector(2) * 1.02)).expect("symmetric");
    println!("near projector: distance {:.4} <= bound {:.4}", near.distance, near.bound);

    for theta in [0.0, 0.2, 0.5, 1.0] {
        let pi = rotated_projector(&svd, 2, theta);
        let eps = 0.2;
        match check_bound_transfer(&a, &pi, eps, 0.2).expect("bound") {
            BoundTransfer::Checked { lhs, rhs, .. } => println!("theta {theta}: {lhs:.4} <= {rhs:.4}"),
            BoundTransfer::Skipped(why) => println!("theta {theta}: skipped ({why})"),
        }
    }
}
