//! Exact stochastic neighbor embedding with a q-Gaussian low-dimensional kernel.
//!
//! The crate covers the whole SNE family under one optimizer:
//! classic (conditional) SNE, symmetric SNE, t-SNE and q-SNE, where the
//! low-dimensional similarity is a q-Gaussian with `q` in `[1, 3)`.
//! `q = 2` reproduces t-SNE and `q -> 1` approaches a Gaussian kernel.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below are what the CLI uses.
//!
//! ```
//! use qsne::{datakit, optimizer, PerplexityConfig, OptimizerConfig, Method};
//!
//! let data = datakit::make_swissroll::<f64>(120, 0.0, 7);
//! let perplexity = PerplexityConfig::new(10.0);
//! let mut opt = OptimizerConfig::default();
//! opt.iterations = 50;
//! opt.momentum_switch_iter = 25;
//! opt.exaggeration_iters = 25;
//! opt.method = Method::QSne { q: 1.5 };
//! let run = optimizer::embed(&data, &perplexity, &opt).unwrap();
//! assert_eq!(run.embedding.n_points(), 120);
//! ```

pub mod affinity;
pub mod data;
pub mod datakit;
pub mod error;
pub mod eval;
mod joint;
pub mod optimizer;
pub mod pca;
pub mod qkernel;
mod scalar;

pub use affinity::{
    calibrate_bandwidths, conditional_affinities, row_entropy, symmetrize, AffinityMatrix,
    BandwidthVector, Calibration, Normalization, PerplexityConfig,
};
pub use data::{DataMatrix, Embedding};
pub use error::{Error, Result};
pub use eval::{
    coranking, evaluate, knn_accuracy, q_local, CorankingMatrix, EvalReport, QualityCurve,
};
pub use optimizer::{
    embed, gradient, kl_divergence, step, EmbedRun, Method, OptimizerConfig, TrainingTrace,
};
pub use pca::{pca_fit, pca_transform, PcaModel};
pub use qkernel::{
    low_dim_affinities, q_from_dof, qgaussian_pdf, z_q, KernelFamily, QGaussianDensityParams,
    QKernelParams,
};
pub use scalar::Scalar;

/// Probability floor applied to every affinity entry before normalization.
pub const PROB_FLOOR: f64 = 1e-12;

pub type DataMatrix64 = DataMatrix<f64>;
pub type DataMatrix32 = DataMatrix<f32>;
pub type Embedding64 = Embedding<f64>;
pub type Embedding32 = Embedding<f32>;
pub type AffinityMatrix64 = AffinityMatrix<f64>;
pub type AffinityMatrix32 = AffinityMatrix<f32>;
pub type BandwidthVector64 = BandwidthVector<f64>;
pub type PcaModel64 = PcaModel<f64>;
pub type EmbedRun64 = EmbedRun<f64>;
