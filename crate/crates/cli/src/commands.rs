use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qsne::datakit::{
    format_value, load_csv, load_embedding, make_gaussian_mixture, make_swissroll, save_csv,
    save_embedding, DatasetFile,
};
use qsne::optimizer::{initial_embedding, input_affinities, optimize};
use qsne::{
    evaluate, pca_fit, pca_transform, AffinityMatrix64, DataMatrix64, EvalReport, Method,
    OptimizerConfig, PerplexityConfig,
};
use rayon::prelude::*;

use crate::report::{
    ConfigEcho, EvalScores, InputInfo, RunReport, Timings, ToolInfo, SCHEMA_VERSION,
};
use crate::{
    svg, Dataset, EmbedArgs, EvalArgs, Failure, GenArgs, InputArgs, MethodArg, PlotArgs,
    ScheduleArgs, SweepArgs,
};

/// Tracks files written by a command. Unless [`Outputs::commit`] is called,
/// dropping it deletes them, plus the output directory if it was created here.
struct Outputs {
    created_dir: Option<PathBuf>,
    files: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new() -> Self {
        Self {
            created_dir: None,
            files: Vec::new(),
            committed: false,
        }
    }

    fn in_dir(dir: &Path) -> Result<Self, Failure> {
        let mut outputs = Self::new();
        if !dir.is_dir() {
            fs::create_dir_all(dir)
                .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
            outputs.created_dir = Some(dir.to_path_buf());
        }
        Ok(outputs)
    }

    fn write(
        &mut self,
        path: PathBuf,
        writer: impl FnOnce(&Path) -> Result<(), Failure>,
    ) -> Result<(), Failure> {
        self.files.push(path.clone());
        writer(&path)
    }

    fn write_text(&mut self, path: PathBuf, text: &str) -> Result<(), Failure> {
        self.write(path, |p| {
            fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
        })
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if let Some(dir) = &self.created_dir {
            let _ = fs::remove_dir(dir);
        }
    }
}

fn seconds(since: Instant) -> f64 {
    since.elapsed().as_secs_f64()
}

struct Loaded {
    data: DataMatrix64,
    info: InputInfo,
    load_s: f64,
    pca_s: f64,
}

/// Reads the input CSV and applies the optional PCA projection.
fn load_input(args: &InputArgs) -> Result<Loaded, Failure> {
    let start = Instant::now();
    let mut file = DatasetFile::new(&args.input).detect_header()?;
    file.label_column = args.label_column;
    let raw = load_csv::<f64>(&file)?;
    let load_s = seconds(start);

    let info = InputInfo {
        path: args.input.display().to_string(),
        n_samples: raw.n_samples(),
        dim: raw.dim(),
        label_column: args.label_column,
        pca_dims: args.pca_dims,
    };
    let start = Instant::now();
    let data = match args.pca_dims {
        Some(k) => pca_transform(&pca_fit(&raw, k)?, &raw)?,
        None => raw,
    };
    Ok(Loaded {
        data,
        info,
        load_s,
        pca_s: seconds(start),
    })
}

fn method_of(method: MethodArg, q: Option<f64>) -> Result<Method, Failure> {
    match (method, q) {
        (MethodArg::Qsne, q) => Ok(Method::QSne {
            q: q.unwrap_or(2.0),
        }),
        (_, Some(_)) => Err(Failure::Usage("--q only applies to --method qsne".into())),
        (MethodArg::Sne, None) => Ok(Method::Sne),
        (MethodArg::Ssne, None) => Ok(Method::SymmetricSne),
        (MethodArg::Tsne, None) => Ok(Method::TSne),
    }
}

fn optimizer_config(schedule: &ScheduleArgs, method: Method, seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        iterations: schedule.iters,
        learning_rate: schedule.lr,
        momentum_early: schedule.momentum_early,
        momentum_late: schedule.momentum_late,
        momentum_switch_iter: schedule.momentum_switch,
        exaggeration_factor: schedule.exaggeration,
        exaggeration_iters: schedule.exaggeration_iters,
        dims: schedule.dims,
        seed,
        method,
        ..OptimizerConfig::default()
    }
}

fn scores(eval: &EvalReport, knn_k: usize) -> EvalScores {
    EvalScores {
        knn_k,
        knn_accuracy: eval.knn_accuracy,
        q_local: eval.q_local,
        k_max: eval.k_max,
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Usage(format!("cannot serialize report: {e}")))
}

pub fn embed(args: &EmbedArgs) -> Result<(), Failure> {
    let total = Instant::now();
    let method = method_of(args.method, args.q)?;
    let config = optimizer_config(&args.schedule, method, args.seed);
    config.validate()?;
    if args.svg && config.dims != 2 {
        return Err(Failure::Usage(format!(
            "--svg needs --dims 2, got {}",
            config.dims
        )));
    }
    let perplexity = PerplexityConfig::new(args.perplexity);

    let Loaded {
        data,
        info,
        load_s,
        pca_s,
    } = load_input(&args.input)?;

    let start = Instant::now();
    let (p, unconverged) = input_affinities(&data, &perplexity, method)?;
    let affinities_s = seconds(start);

    let start = Instant::now();
    let init = initial_embedding::<f64>(data.n_samples(), &config)?;
    let run = optimize(&p, init, &config)?;
    let optimize_s = seconds(start);

    let start = Instant::now();
    let eval = evaluate(&data, &run.embedding, data.labels(), args.schedule.knn_k)?;
    let evaluate_s = seconds(start);

    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool: ToolInfo::current(),
        input: info,
        config: ConfigEcho {
            method: method.name().into(),
            q: method.q(),
            perplexity: perplexity.perplexity,
            entropy_tolerance: perplexity.entropy_tolerance,
            max_bisection_steps: perplexity.max_bisection_steps,
            iterations: config.iterations,
            learning_rate: config.learning_rate,
            momentum_early: config.momentum_early,
            momentum_late: config.momentum_late,
            momentum_switch_iter: config.momentum_switch_iter,
            exaggeration_factor: config.exaggeration_factor,
            exaggeration_iters: config.exaggeration_iters,
            init_scale: config.init_scale,
            dims: config.dims,
            knn_k: args.schedule.knn_k,
        },
        seed: config.seed,
        kl_trace: run.trace.kl_per_iteration.clone(),
        gradient_norms: run.trace.gradient_norms.clone(),
        unconverged_rows: unconverged,
        timings: Timings {
            load: load_s,
            pca: pca_s,
            affinities: affinities_s,
            optimize: optimize_s,
            evaluate: evaluate_s,
            total: seconds(total),
        },
        eval: scores(&eval, args.schedule.knn_k),
    };
    let json = to_json(&report)?;
    let plot = if args.svg {
        Some(svg::render(&run.embedding, data.labels()).map_err(Failure::Usage)?)
    } else {
        None
    };

    let mut outputs = Outputs::in_dir(&args.output_dir)?;
    outputs.write(args.output_dir.join("embedding.csv"), |path| {
        Ok(save_embedding(&run.embedding, data.labels(), path)?)
    })?;
    outputs.write_text(args.output_dir.join("report.json"), &json)?;
    if let Some(plot) = plot {
        outputs.write_text(args.output_dir.join("embedding.svg"), &plot)?;
    }
    outputs.commit();

    let kl = report.kl_trace.last().copied().unwrap_or(f64::NAN);
    match eval.knn_accuracy {
        Some(acc) => println!(
            "{}: KL {kl:.6}, {}-NN accuracy {acc:.4}, Q_local {:.4}",
            method.name(),
            args.schedule.knn_k,
            eval.q_local
        ),
        None => println!("{}: KL {kl:.6}, Q_local {:.4}", method.name(), eval.q_local),
    }
    Ok(())
}

/// Outcome of one sweep cell.
struct Cell {
    q: f64,
    perplexity: f64,
    seed: u64,
    result: Result<CellScores, String>,
}

struct CellScores {
    knn_accuracy: Option<f64>,
    q_local: f64,
    k_max: usize,
    final_kl: f64,
}

fn run_cell(
    data: &DataMatrix64,
    p: &Result<AffinityMatrix64, String>,
    schedule: &ScheduleArgs,
    q: f64,
    seed: u64,
) -> Result<CellScores, String> {
    let p = p.as_ref().map_err(Clone::clone)?;
    let config = optimizer_config(schedule, Method::QSne { q }, seed);
    let run = initial_embedding::<f64>(data.n_samples(), &config)
        .and_then(|init| optimize(p, init, &config))
        .map_err(|e| e.to_string())?;
    let eval =
        evaluate(data, &run.embedding, data.labels(), schedule.knn_k).map_err(|e| e.to_string())?;
    Ok(CellScores {
        knn_accuracy: eval.knn_accuracy,
        q_local: eval.q_local,
        k_max: eval.k_max,
        final_kl: run
            .trace
            .kl_per_iteration
            .last()
            .copied()
            .unwrap_or(f64::NAN),
    })
}

const SWEEP_HEADER: [&str; 10] = [
    "row_type",
    "q",
    "perplexity",
    "seed",
    "knn_accuracy",
    "q_local",
    "k_max",
    "final_kl",
    "n_runs",
    "error",
];

fn opt_value(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Rows for one `(q, perplexity)` group: each run, then the mean over its
/// successful runs.
fn group_rows(group: &[Cell]) -> Vec<[String; 10]> {
    let mut rows: Vec<[String; 10]> = group
        .iter()
        .map(|cell| {
            let base = |metrics: [String; 4], error: String| {
                let [knn, ql, k_max, kl] = metrics;
                [
                    "run".into(),
                    cell.q.to_string(),
                    cell.perplexity.to_string(),
                    cell.seed.to_string(),
                    knn,
                    ql,
                    k_max,
                    kl,
                    String::new(),
                    error,
                ]
            };
            match &cell.result {
                Ok(s) => base(
                    [
                        opt_value(s.knn_accuracy),
                        format_value(s.q_local),
                        s.k_max.to_string(),
                        format_value(s.final_kl),
                    ],
                    String::new(),
                ),
                Err(e) => base(Default::default(), e.clone()),
            }
        })
        .collect();

    let ok: Vec<&CellScores> = group
        .iter()
        .filter_map(|c| c.result.as_ref().ok())
        .collect();
    let knn = if ok.iter().all(|s| s.knn_accuracy.is_some()) {
        mean(ok.iter().filter_map(|s| s.knn_accuracy))
    } else {
        None
    };
    rows.push([
        "mean".into(),
        group[0].q.to_string(),
        group[0].perplexity.to_string(),
        String::new(),
        opt_value(knn),
        opt_value(mean(ok.iter().map(|s| s.q_local))),
        String::new(),
        opt_value(mean(ok.iter().map(|s| s.final_kl))),
        ok.len().to_string(),
        if ok.is_empty() {
            "no successful runs".into()
        } else {
            String::new()
        },
    ]);
    rows
}

pub fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    if args.q_grid.is_empty() || args.perplexity_grid.is_empty() || args.seeds.is_empty() {
        return Err(Failure::Usage(
            "--q-grid, --perplexity-grid and --seeds must be nonempty".into(),
        ));
    }
    if args.schedule.dims == 0 {
        return Err(Failure::Usage("--dims must be positive".into()));
    }
    let Loaded { data, .. } = load_input(&args.input)?;

    // every q-Gaussian run shares the symmetric affinities of its perplexity
    let affinities: Vec<Result<AffinityMatrix64, String>> = args
        .perplexity_grid
        .par_iter()
        .map(|&perp| {
            input_affinities(&data, &PerplexityConfig::new(perp), Method::TSne)
                .map(|(p, _)| p)
                .map_err(|e| e.to_string())
        })
        .collect();

    let grid: Vec<(f64, usize, u64)> = args
        .q_grid
        .iter()
        .flat_map(|&q| {
            (0..args.perplexity_grid.len())
                .flat_map(move |pi| args.seeds.iter().map(move |&s| (q, pi, s)))
        })
        .collect();
    let cells: Vec<Cell> = grid
        .par_iter()
        .map(|&(q, pi, seed)| Cell {
            q,
            perplexity: args.perplexity_grid[pi],
            seed,
            result: run_cell(&data, &affinities[pi], &args.schedule, q, seed),
        })
        .collect();

    let failed = cells.iter().filter(|c| c.result.is_err()).count();
    let mut outputs = Outputs::in_dir(&args.output_dir)?;
    let path = args.output_dir.join("sweep.csv");
    outputs.write(path.clone(), |path| {
        let csv_err = |e: csv::Error| Failure::Usage(format!("{}: {e}", path.display()));
        let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
        writer.write_record(SWEEP_HEADER).map_err(csv_err)?;
        for group in cells.chunks(args.seeds.len()) {
            for row in group_rows(group) {
                writer.write_record(&row).map_err(csv_err)?;
            }
        }
        writer
            .flush()
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    })?;
    outputs.commit();

    println!(
        "{} runs ({failed} failed) written to {}",
        cells.len(),
        path.display()
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), Failure> {
    let Loaded { data, .. } = load_input(&args.input)?;
    let (embedding, file_labels) = load_embedding::<f64>(&args.embedding)?;
    if embedding.n_points() != data.n_samples() {
        return Err(Failure::Usage(format!(
            "{} has {} points but {} has {} samples",
            args.embedding.display(),
            embedding.n_points(),
            args.input.input.display(),
            data.n_samples()
        )));
    }
    let labels = data.labels().or(file_labels.as_deref());
    let eval = evaluate(&data, &embedding, labels, args.knn_k)?;
    let json = to_json(&scores(&eval, args.knn_k))?;
    if let Some(dir) = &args.output_dir {
        let mut outputs = Outputs::in_dir(dir)?;
        outputs.write_text(dir.join("eval.json"), &json)?;
        outputs.commit();
    }
    print!("{json}");
    Ok(())
}

pub fn gen(args: &GenArgs) -> Result<(), Failure> {
    let (data, output) = match &args.dataset {
        Dataset::Swissroll {
            n,
            noise,
            seed,
            output,
        } => {
            if *n < 2 || !(*noise >= 0.0 && noise.is_finite()) {
                return Err(Failure::Usage(
                    "swissroll needs --n >= 2 and a finite --noise >= 0".into(),
                ));
            }
            (make_swissroll::<f64>(*n, *noise, *seed), output)
        }
        Dataset::Mixture {
            n_per_class,
            classes,
            dim,
            separation,
            seed,
            output,
        } => {
            if *n_per_class == 0
                || *classes == 0
                || *dim == 0
                || n_per_class * classes < 2
                || !(*separation >= 0.0 && separation.is_finite())
            {
                return Err(Failure::Usage(
                    "mixture needs positive counts, at least 2 samples and a finite --separation >= 0"
                        .into(),
                ));
            }
            (
                make_gaussian_mixture::<f64>(*n_per_class, *classes, *dim, *separation, *seed),
                output,
            )
        }
    };
    let mut outputs = Outputs::new();
    outputs.write(output.clone(), |path| Ok(save_csv(&data, path)?))?;
    outputs.commit();
    Ok(())
}

pub fn plot(args: &PlotArgs) -> Result<(), Failure> {
    let (embedding, labels) = load_embedding::<f64>(&args.input)?;
    let text = svg::render(&embedding, labels.as_deref()).map_err(Failure::Usage)?;
    let mut outputs = Outputs::new();
    outputs.write_text(args.output.clone(), &text)?;
    outputs.commit();
    Ok(())
}
