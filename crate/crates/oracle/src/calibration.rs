//! Constants fitted once on seeded calibration instances and then frozen.
//!
//! The calibration family is a planted spectrum `(1.0, 0.75, 0.55)` on a
//! random `m x n` matrix with `24 <= m, n <= 64`, plus Gaussian noise of
//! scale 0.01, sketched with `sigma = 0.4 ||A||_F`, `eps = 0.2`, `eta = 0.5`
//! and `q = 400` (seeds 1000..1040). Acceptance checks use disjoint seeds.

/// Family used to fit the constants below.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationFamily {
    pub spectrum: [f64; 3],
    pub noise: f64,
    pub sigma_rel: f64,
    pub eps: f64,
    pub eta: f64,
    pub q: usize,
}

pub const FAMILY: CalibrationFamily =
    CalibrationFamily { spectrum: [1.0, 0.75, 0.55], noise: 0.01, sigma_rel: 0.4, eps: 0.2, eta: 0.5, q: 400 };

pub const CALIBRATION_SEEDS: std::ops::Range<u64> = 1000..1040;

/// `||V^T V - I||_F <= C_ORTHO * eps_bar`. Largest observed ratio 8.96.
pub const C_ORTHO: f64 = 12.0;

/// Distance to the `A_{sigma,eta}` family `<= C_FAMILY * eps ||A||_F / sqrt(eta)`.
/// Largest observed ratio 0.352.
pub const C_FAMILY: f64 = 0.5;

/// Exact output TV `<= C_TV * eps ||A_i|| / ||D_i||`. Largest observed
/// ratio 0.043.
pub const C_TV: f64 = 0.1;
