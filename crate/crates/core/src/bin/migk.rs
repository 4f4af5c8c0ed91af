use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use migraph::distance::InstanceMetric;
use migraph::eval::{compare, cross_validate, leave_one_out, RunResult};
use migraph::graph::EdgeFeature;
use migraph::io::config::{parse_list, parse_task};
use migraph::io::{convert_musk, load_bag_csv_with, load_schema, parse_bag_csv, ExperimentConfig, TrainedModel};
use migraph::kernel::{mean_sq_edge_distance, mean_sq_instance_distance, GramBatch, KernelConfig, KernelKind};
use migraph::model::{normalize_continuous, validate, Dataset, Label};
use migraph::parallel::init_thread_pool;
use migraph::Error;

#[derive(Parser)]
#[command(name = "migk", version, about = "Graph-structured bag kernels for multi-instance learning")]
struct Cli {
    /// Worker threads for Gram assembly and folds (falls back to MIGK_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// key=value experiment file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct DataArgs {
    /// Bag CSV file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Attribute schema file (needed for categorical attributes).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// classify, multiclass or regress (inferred from labels by default).
    #[arg(long)]
    task: Option<String>,
}

#[derive(Args, Default)]
struct SearchArgs {
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Width multipliers of 1/mean squared instance distance, comma separated.
    #[arg(long)]
    gamma_scales: Option<String>,
    /// Edge-width multipliers (MIGraph only).
    #[arg(long)]
    gamma_edge_scales: Option<String>,
    /// SVM C grid.
    #[arg(long)]
    c: Option<String>,
    /// Ridge λ grid.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    inner_folds: Option<usize>,
    #[arg(long)]
    epsilon_factor: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a Gram matrix over every bag of a dataset.
    Gram {
        #[arg(long)]
        kernel: Option<String>,
        #[command(flatten)]
        data: DataArgs,
        /// Node width; defaults to 1/mean squared instance distance.
        #[arg(long)]
        gamma: Option<f64>,
        /// Edge width (MIGraph); defaults to 1/mean squared edge-feature distance.
        #[arg(long)]
        gamma_edge: Option<f64>,
        #[arg(long)]
        epsilon_factor: Option<f64>,
        /// Output file; a .csv extension selects CSV, anything else the binary format.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on a whole dataset with inner-CV parameter selection.
    Train {
        #[arg(long)]
        kernel: Option<String>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        search: SearchArgs,
        /// Model output file.
        #[arg(long)]
        model: PathBuf,
    },
    /// Predict bags with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// The training bag CSV the model was fitted on.
        #[arg(long)]
        train: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Predictions CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated k-fold cross-validation.
    Cv {
        #[arg(long)]
        kernel: Option<String>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        search: SearchArgs,
        /// RunResult JSON; a CSV summary and timing file are written beside it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-out evaluation.
    Loo {
        #[arg(long)]
        kernel: Option<String>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two kernels on shared folds with a paired t-test.
    Compare {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Report JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert source files into a bag CSV.
    Convert {
        /// Source format.
        #[arg(long, default_value = "musk")]
        format: String,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a bag CSV and list every finding.
    Validate {
        file: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        task: Option<String>,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Usage(e.to_string())
        } else if let Error::FoldFailed { source, .. } = &e {
            if source.is_validation() {
                Failure::Usage(e.to_string())
            } else {
                Failure::Runtime(e.to_string())
            }
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn kernel_arg(s: &str) -> CliResult<KernelKind> {
    Ok(s.parse::<KernelKind>()?)
}

fn list_arg(s: &Option<String>) -> CliResult<Option<Vec<f64>>> {
    Ok(s.as_deref().map(parse_list).transpose()?)
}

fn flags_config(kernel: Option<&str>, data: &DataArgs, search: &SearchArgs) -> CliResult<ExperimentConfig> {
    Ok(ExperimentConfig {
        kernel: kernel.map(kernel_arg).transpose()?,
        task: data.task.as_deref().map(parse_task).transpose()?,
        folds: search.folds,
        repeats: search.repeats,
        seed: search.seed,
        data: data.data.clone(),
        schema: data.schema.clone(),
        output: None,
        gamma_scales: list_arg(&search.gamma_scales)?,
        gamma_edge_scales: list_arg(&search.gamma_edge_scales)?,
        c: list_arg(&search.c)?,
        lambda: list_arg(&search.lambda)?,
        inner_folds: search.inner_folds,
        epsilon_factor: search.epsilon_factor,
        threads: None,
    })
}

fn load_dataset(cfg: &ExperimentConfig) -> CliResult<Dataset> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| Failure::Usage("no dataset given (use --data or data = ... in --config)".into()))?;
    let schema = cfg.schema.as_ref().map(load_schema).transpose()?;
    let dataset = load_bag_csv_with(path, schema, cfg.task)?;
    if let (Some(task), Some(found)) = (cfg.task, dataset.task()) {
        if task != found {
            return Err(Failure::Usage(format!("task {task:?} does not match the labels ({found:?})")));
        }
    }
    Ok(dataset)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_run(result: &RunResult, out: &Path) -> CliResult {
    std::fs::write(out, result.to_json()? + "\n").map_err(Error::from)?;
    result.write_summary_csv(File::create(sidecar(out, ".csv")).map_err(Error::from)?)?;
    std::fs::write(sidecar(out, ".timing.json"), result.timing_json()? + "\n").map_err(Error::from)?;
    Ok(())
}

fn summary(result: &RunResult) -> String {
    format!(
        "{} {}: {:.4} ± {:.4} over {} folds (95% CI [{:.4}, {:.4}])",
        result.method,
        result.metric,
        result.mean,
        result.std,
        result.folds.len(),
        result.ci95.0,
        result.ci95.1
    )
}

fn run(cli: Cli) -> CliResult {
    let threads = cli.threads.or_else(|| std::env::var("MIGK_THREADS").ok().and_then(|v| v.parse().ok()));
    let file_cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    init_thread_pool(threads.or(file_cfg.threads));

    match cli.command {
        Command::Gram {
            kernel,
            data,
            gamma,
            gamma_edge,
            epsilon_factor,
            out,
        } => {
            let cfg = file_cfg.overlay(flags_config(kernel.as_deref(), &data, &SearchArgs::default())?);
            let kind = cfg.kernel.ok_or_else(|| Failure::Usage("no kernel given".into()))?;
            let out = out
                .or(cfg.output.clone())
                .ok_or_else(|| Failure::Usage("no output path given (--out)".into()))?;
            let dataset = load_dataset(&cfg)?;
            let (dataset, _) = normalize_continuous(&dataset)?;
            let metric = if dataset.schema.has_categorical() {
                InstanceMetric::fit(&dataset.schema, dataset.bags.iter())?
            } else {
                InstanceMetric::euclidean()
            };
            let refs: Vec<_> = dataset.bags.iter().collect();
            let mut config = KernelConfig {
                epsilon_factor: epsilon_factor.or(cfg.epsilon_factor).unwrap_or(1.0),
                ..KernelConfig::default()
            };
            config.gamma_node = gamma.unwrap_or_else(|| 1.0 / positive(mean_sq_instance_distance(&refs, &metric)));
            let mut batch = GramBatch::new(refs, &metric, Default::default());
            if kind == KernelKind::EpsilonGraph {
                batch = batch.with_graphs(config.epsilon_factor);
                let feats: Vec<&[EdgeFeature]> = (0..batch.len()).map(|i| batch.edge_features(i).unwrap_or(&[])).collect();
                config.gamma_edge = gamma_edge.unwrap_or_else(|| 1.0 / positive(mean_sq_edge_distance(&feats)));
            }
            let gram = batch
                .compute(kind, &config, &[config.gamma_node], &[config.gamma_edge])?
                .gram(0, 0);
            let file = BufWriter::new(File::create(&out).map_err(Error::from)?);
            if out.extension().is_some_and(|e| e == "csv") {
                gram.write_csv(file)?;
            } else {
                gram.write_binary(file)?;
            }
            let (lo, hi) = gram.eigen_range();
            println!(
                "{kind} gram {n}×{n} (γ = {:.6}, config {}) eigenvalues [{lo:.3e}, {hi:.3e}] → {}",
                config.gamma_node,
                &config.digest_hex()[..12],
                out.display(),
                n = gram.len()
            );
        }
        Command::Train {
            kernel,
            data,
            search,
            model,
        } => {
            let cfg = file_cfg.overlay(flags_config(kernel.as_deref(), &data, &search)?);
            let dataset = load_dataset(&cfg)?;
            let exp = cfg.experiment(None)?;
            let trained = TrainedModel::train(&dataset, &exp, cfg.plan().seed)?;
            trained.save(&model)?;
            println!(
                "trained {} on {} bags, selected {}; model digest {} → {}",
                exp.kind,
                dataset.len(),
                serde_json::to_string(&trained.meta.selection).map_err(Error::from)?,
                trained.model.digest(),
                model.display()
            );
        }
        Command::Predict { model, train, data, out } => {
            let trained = TrainedModel::load(&model)?;
            let train_set = load_bag_csv_with(&train, Some(trained.meta.schema.clone()), Some(trained.meta.task))?;
            let path = data
                .data
                .or(file_cfg.data)
                .ok_or_else(|| Failure::Usage("no query data given (--data)".into()))?;
            let query = load_bag_csv_with(&path, Some(train_set.schema.clone()), Some(trained.meta.task))?;
            let preds = trained.predict(&train_set, &query)?;
            let sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(BufWriter::new(File::create(p).map_err(Error::from)?)),
                None => Box::new(std::io::stdout().lock()),
            };
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(["bag_id", "label", "prediction"]).map_err(Error::from)?;
            for (bag, p) in query.bags.iter().zip(&preds) {
                let shown = match bag.label() {
                    Label::Binary(_) if *p > 0.0 => "+1".to_owned(),
                    Label::Binary(_) => "-1".to_owned(),
                    _ => p.to_string(),
                };
                w.write_record([bag.id().to_owned(), bag.label().to_string(), shown]).map_err(Error::from)?;
            }
            w.flush().map_err(Error::from)?;
        }
        Command::Cv {
            kernel,
            data,
            search,
            out,
        } => {
            let cfg = file_cfg.overlay(flags_config(kernel.as_deref(), &data, &search)?);
            let dataset = load_dataset(&cfg)?;
            let exp = cfg.experiment(None)?;
            let result = cross_validate(&dataset, &exp, &cfg.plan())?;
            let out = out.or(cfg.output).unwrap_or_else(|| PathBuf::from("cv_result.json"));
            write_run(&result, &out)?;
            println!("{}", summary(&result));
            println!("digest {} → {}", result.digest()?, out.display());
        }
        Command::Loo {
            kernel,
            data,
            search,
            out,
        } => {
            let cfg = file_cfg.overlay(flags_config(kernel.as_deref(), &data, &search)?);
            let dataset = load_dataset(&cfg)?;
            let exp = cfg.experiment(None)?;
            let result = leave_one_out(&dataset, &exp, cfg.plan().seed)?;
            let out = out.or(cfg.output).unwrap_or_else(|| PathBuf::from("loo_result.json"));
            write_run(&result, &out)?;
            println!("{}", summary(&result));
            println!("digest {} → {}", result.digest()?, out.display());
        }
        Command::Compare {
            a,
            b,
            data,
            search,
            alpha,
            out,
        } => {
            let cfg = file_cfg.overlay(flags_config(None, &data, &search)?);
            let dataset = load_dataset(&cfg)?;
            let exp_a = cfg.experiment(Some(kernel_arg(&a)?))?;
            let exp_b = cfg.experiment(Some(kernel_arg(&b)?))?;
            let report = compare(&dataset, &exp_a, &exp_b, &cfg.plan(), alpha)?;
            println!("{}", summary(&report.a));
            println!("{}", summary(&report.b));
            println!(
                "paired t-test ({} − {}): mean difference {:+.4}, t = {:.4}, df = {}, p = {:.4}, significant at {alpha}: {}",
                report.a.method,
                report.b.method,
                report.test.mean_difference,
                report.test.t,
                report.test.df,
                report.test.p_value,
                if report.test.significant { "yes" } else { "no" }
            );
            if let Some(out) = out.or(cfg.output) {
                let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
                std::fs::write(&out, json + "\n").map_err(Error::from)?;
            }
        }
        Command::Convert { format, inputs, out } => {
            if format != "musk" {
                return Err(Failure::Usage(format!("unknown source format {format:?} (supported: musk)")));
            }
            let report = convert_musk(&inputs, &out)?;
            println!("{report} → {}", out.display());
        }
        Command::Validate { file, schema, task } => {
            let schema = schema.map(load_schema).transpose()?;
            let task = task.as_deref().map(parse_task).transpose()?;
            let reader = File::open(&file).map_err(|e| Failure::Usage(format!("cannot open {}: {e}", file.display())))?;
            let dataset = parse_bag_csv(reader, &file, schema, task)?;
            let findings = validate(&dataset);
            if findings.is_empty() {
                println!(
                    "{}: ok ({} bags, {} instances)",
                    file.display(),
                    dataset.len(),
                    dataset.instance_count()
                );
            } else {
                for f in &findings {
                    println!("{f}");
                }
                return Err(Failure::Usage(format!("{} finding(s) in {}", findings.len(), file.display())));
            }
        }
    }
    Ok(())
}

fn positive(m: f64) -> f64 {
    if m.is_finite() && m > 0.0 {
        m
    } else {
        1.0
    }
}
