//! Dictionary learning with a group SCAD (GSCAD) penalty that prunes atoms
//! while it learns them.
//!
//! Each dictionary column `d` is penalized by `log(1 + sum_k psi(d_k))`,
//! where `psi` is the SCAD penalty. Columns driven exactly to zero by the
//! ADMM dictionary update are dropped, so the learned dictionary size is an
//! output rather than an input.
//!
//! | module | contents |
//! |---|---|
//! | [`penalty`] | SCAD, the GSCAD proximal operator, convexity check |
//! | [`coding`] | Lasso coordinate descent, OMP, chi-square error budgets |
//! | [`dictionary`] | atoms, initializations, pruning and deduplication |
//! | [`learner`] | the alternating coding / ADMM learning loop |
//! | [`synth`] | the 10-atom bar benchmark |
//! | [`image`] | PGM I/O, patches and the denoising pipeline |
//! | [`cli`] | the `gscad` command |
//!
//! Runnable examples live in `crates/core/examples/`:
//!
//! ```text
//! cargo run --release --example prox_threshold
//! cargo run --release --example sparse_coding
//! cargo run --release --example synthetic_recovery -- 20 4
//! cargo run --release --example denoise_image -- [input.pgm] [sigma]
//! cargo run --release --example train_from_csv
//! ```

pub mod cli;
pub mod coding;
pub mod dictionary;
pub mod error;
pub mod image;
pub mod learner;
pub mod penalty;
pub mod synth;

pub use error::{GscadError, Result};
