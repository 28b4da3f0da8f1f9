//! Low-rank recommendation sampling in time independent of the matrix size.
//!
//! The pieces, bottom up:
//!
//! - [`store`]: vectors and matrices kept as trees of squared weights, giving
//!   `O(log n)` updates and `l2`-norm sampling of rows and entries.
//! - [`linalg`]: inner-product estimation from samples, rejection sampling from
//!   linear combinations, total variation distance.
//! - [`modfkv`]: a threshold-based FKV sketch whose output describes a low-rank
//!   `D` through `q` sampled rows and a small dense core.
//! - [`sampler`]: draws column indices from rows of `D`.
//! - [`recommender`]: subsampled preference matrices, parameter choice, batch
//!   recommendation and evaluation against a hidden matrix.
//! - [`cli`]: the `sketchrec` command-line driver.
//!
//! ```
//! use rand::SeedableRng;
//! use sketchrec::modfkv::{modfkv, ModFkvParams};
//! use sketchrec::sampler::{RowSampler, SamplerConfig};
//! use sketchrec::store::SampleMatrix;
//!
//! let a = SampleMatrix::from_triples(3, 3, &[(0, 0, 4.0), (1, 1, 3.0), (2, 2, 0.5)]).unwrap();
//! let desc = modfkv(&a, &ModFkvParams::new(2.0, 0.3, 1.0).with_q(32).with_seed(1)).unwrap();
//! let sampler = RowSampler::new(&desc, &a, SamplerConfig::new(0.3)).unwrap();
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let pick = sampler.sample(0, &mut rng).unwrap();
//! assert_eq!(pick.index, 0);
//! ```

pub mod cli;
pub mod error;
pub mod linalg;
pub mod modfkv;
pub mod recommender;
pub mod sampler;
pub mod store;

pub use error::{Error, Result};
