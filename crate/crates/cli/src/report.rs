use serde::{Deserialize, Serialize};

/// Bumped whenever a field is renamed, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub input: InputInfo,
    pub config: ConfigEcho,
    pub seed: u64,
    /// KL divergence against the unexaggerated affinities after each update.
    pub kl_trace: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    /// Rows whose bandwidth search stopped before reaching the entropy tolerance.
    pub unconverged_rows: Vec<usize>,
    pub timings: Timings,
    pub eval: EvalScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub path: String,
    pub n_samples: usize,
    /// Columns read from the file, excluding the label column.
    pub dim: usize,
    pub label_column: Option<usize>,
    pub pca_dims: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub method: String,
    pub q: f64,
    pub perplexity: f64,
    pub entropy_tolerance: f64,
    pub max_bisection_steps: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub momentum_early: f64,
    pub momentum_late: f64,
    pub momentum_switch_iter: usize,
    pub exaggeration_factor: f64,
    pub exaggeration_iters: usize,
    pub init_scale: f64,
    pub dims: usize,
    pub knn_k: usize,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load: f64,
    pub pca: f64,
    pub affinities: f64,
    pub optimize: f64,
    pub evaluate: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub knn_k: usize,
    /// Absent when the input has no labels.
    pub knn_accuracy: Option<f64>,
    pub q_local: f64,
    pub k_max: usize,
}
