//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::data::{self, DataError, GeneratorConfig, Sample};
use crate::eval::{comparison_table, write_report_bundle, EvalError, ReportInput, Scale};
use crate::model::{load_checkpoint, postprocess_composition, save_checkpoint, CheckpointError, ModelArchitecture};
use crate::nn::NnError;
use crate::property::{ComponentLibrary, Composition, PropertyError, WatsonKConfig};
use crate::sim::{simulate_curve, simulated_watson_k, DistillationCurve, SimError, SimulatorConfig};
use crate::train::{self, CheckpointMeta, LossHistory, SimContext, TrainConfig, TrainError, TrainMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "naphtha", about = "Naphtha composition prediction from distillation curves", version)]
struct Cli {
    /// Worker threads for data generation and cross-validation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the component library as CSV (name,family,boiling_point_k,specific_gravity).
    Components,
    /// Generate a synthetic dataset CSV (sample_id,c_01..c_25,x_01..x_30,watson_k).
    Gen {
        #[arg(long, default_value_t = 254)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the distillation curve and Watson K of a composition.
    ///
    /// Input CSV has rows `name,wt_pct` (header optional) naming library
    /// components; missing components are zero and the total must be 100.
    /// Output rows are `recovery_fraction,temperature_k` followed by a
    /// `# watson_k=<value>` line.
    Simulate {
        #[arg(long)]
        composition: PathBuf,
    },
    /// Train with 5-fold cross-validation and write the best-fold checkpoint.
    ///
    /// The config file uses `key = value` lines; `--mode` and `--seed`
    /// override the file. A JSON training report is written next to the
    /// checkpoint as `<out>.report.json`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TrainMode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the test split and write the report bundle
    /// (metrics.csv, parity.csv, parity.svg, trend.csv, history.csv, report.txt).
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Second checkpoint whose cross-validation summary is tabulated alongside.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Predict composition and Watson K for one distillation curve.
    ///
    /// Input is 30 temperatures in K, one per line, or
    /// `recovery_fraction,temperature_k` rows on the default grid. Output is
    /// `name,wt_pct` rows (clamped at 0 and renormalized) and a
    /// `# watson_k=<value>` line.
    Predict {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Print the unconstrained head output instead of the post-processed composition.
        #[arg(long)]
        raw: bool,
    },
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    s.parse()
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Property(#[from] PropertyError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Sim(_) | CliError::Nn(_) => EXIT_NUMERICAL,
            CliError::Data(DataError::Sim(_)) => EXIT_NUMERICAL,
            CliError::Train(TrainError::Sim(_) | TrainError::Nn(_) | TrainError::NonFiniteLoss { .. }) => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Parses the CLI and executes one verb.
pub fn run<I, T>(args: I, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(rendered.as_bytes()) } else { stdout.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(cli.command, stdout, stderr)),
            Err(e) => {
                let _ = writeln!(stderr, "error: cannot build thread pool: {e}");
                return EXIT_USAGE;
            }
        },
        None => execute(cli.command, stdout, stderr),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn out_err(e: std::io::Error) -> CliError {
    CliError::Io { path: PathBuf::from("<stdout>"), source: e }
}

fn execute(command: Command, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let lib = ComponentLibrary::default();
    match command {
        Command::Components => stdout.write_all(lib.to_csv_string().as_bytes()).map_err(out_err),
        Command::Gen { n, seed, out } => {
            let cfg = GeneratorConfig { n_samples: n, seed, ..GeneratorConfig::default() };
            let samples = data::generate(&cfg, &lib)?;
            match out {
                Some(path) => {
                    data::save(&samples, &path)?;
                    let _ = writeln!(stderr, "wrote {} samples to {}", samples.len(), path.display());
                    Ok(())
                }
                None => stdout.write_all(data::to_csv_string(&samples).as_bytes()).map_err(out_err),
            }
        }
        Command::Simulate { composition } => {
            let c = read_composition(&composition, &lib)?;
            let sim = SimulatorConfig::default();
            let curve = simulate_curve(&c, &lib, &sim)?;
            let k = simulated_watson_k(&c, &lib, &sim, &WatsonKConfig::default())?;
            let mut s = String::from("recovery_fraction,temperature_k\n");
            for (p, t) in curve.recovery_fractions().iter().zip(curve.temperatures_k()) {
                let _ = writeln!(s, "{p},{t}");
            }
            let _ = writeln!(s, "# watson_k={}", k.k);
            stdout.write_all(s.as_bytes()).map_err(out_err)
        }
        Command::Train { data: data_path, config, mode, seed, epochs, out } => {
            let mut cfg = match &config {
                Some(p) => TrainConfig::parse(&read(p)?).map_err(|e| CliError::Input { path: p.clone(), message: e.to_string() })?,
                None => TrainConfig::default(),
            };
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            cfg.validate()?;
            let samples = data::load(&data_path, &lib)?;
            let split = data::split(&samples, cfg.split_seed)?;
            let arch = ModelArchitecture::default();
            let ctx = SimContext::default();
            let _ = writeln!(stderr, "training {} mode, seed {}, {} samples", cfg.mode.as_str(), cfg.seed, samples.len());
            let (model, report) = train::train(&arch, &samples, &split, &cfg, &ctx)?;
            let meta = CheckpointMeta { config: cfg.clone(), report: report.clone() };
            save_checkpoint(&model, &meta.to_json(), true, &out)?;
            let mut json = serde_json::to_value(&report).expect("report serializes");
            json["wall_clock_s"] = report.wall_clock_s.into();
            let report_path = PathBuf::from(format!("{}.report.json", out.display()));
            write(&report_path, serde_json::to_string_pretty(&json).expect("json").as_bytes())?;
            let _ = writeln!(stderr, "wrote {} and {} ({:.1} s)", out.display(), report_path.display(), report.wall_clock_s);
            let label = format!("{} test", cfg.mode.as_str());
            let mut s = String::new();
            for scale in [Scale::WtPct, Scale::Fraction] {
                let _ = writeln!(s, "5-fold cross-validation ({})", scale.as_str());
                s.push_str(&comparison_table(&[(&label, &report.test)], scale));
            }
            stdout.write_all(s.as_bytes()).map_err(out_err)
        }
        Command::Eval { data: data_path, ckpt, out, compare } => {
            let arch = ModelArchitecture::default();
            let (model, meta_text) = load_checkpoint(&ckpt, &arch)?;
            let meta = CheckpointMeta::from_json(&meta_text)
                .map_err(|e| CliError::Input { path: ckpt.clone(), message: format!("bad metadata: {e}") })?;
            let samples = data::load(&data_path, &lib)?;
            let split = data::split(&samples, meta.config.split_seed)?;
            let test: Vec<&Sample> = split.test_indices.iter().map(|&i| &samples[i]).collect();
            let curves: Vec<&DistillationCurve> = test.iter().map(|s| &s.curve).collect();
            let raw = model.predict_composition_batch(&curves)?;
            let predicted: Vec<Composition> = raw.iter().map(|r| postprocess_composition(r)).collect();
            let predicted_k = model.predict_watson_k_batch(&curves)?;

            let mode = meta.config.mode.as_str();
            let mut notes = String::new();
            let mut columns = vec![(format!("{mode} (this checkpoint)"), meta.report.test)];
            if let Some(other) = &compare {
                let (_, other_text) = load_checkpoint(other, &arch)?;
                let other_meta = CheckpointMeta::from_json(&other_text)
                    .map_err(|e| CliError::Input { path: other.clone(), message: format!("bad metadata: {e}") })?;
                columns.push((other_meta.config.mode.as_str().to_string(), other_meta.report.test));
                if other_meta.config.mode == TrainMode::Baseline {
                    columns.reverse();
                }
            }
            let refs: Vec<(&str, &_)> = columns.iter().map(|(l, s)| (l.as_str(), s)).collect();
            let _ = writeln!(notes, "Averaged test performance over 5 cross-validation folds");
            for scale in [Scale::Fraction, Scale::WtPct] {
                let _ = writeln!(notes, "scale: {}", scale.as_str());
                notes.push_str(&comparison_table(&refs, scale));
            }
            let best = &meta.report.folds[meta.report.best_fold];
            let _ = writeln!(notes);
            let _ = writeln!(
                notes,
                "Training history (fold {}, {} epochs, best epoch {})",
                best.fold, best.history.epochs(), best.best_epoch
            );
            notes.push_str(&history_summary(&best.history));
            fs::create_dir_all(&out).map_err(|source| CliError::Io { path: out.clone(), source })?;
            write(&out.join("history.csv"), history_csv(&best.history).as_bytes())?;
            let input = ReportInput {
                title: format!("Test-set evaluation, {mode} model"),
                lib: &lib,
                truth: test.iter().map(|s| s.composition.wt_pct().to_vec()).collect(),
                predicted_raw: raw,
                predicted,
                true_k: test.iter().map(|s| s.watson_k).collect(),
                predicted_k,
                notes,
            };
            write_report_bundle(&out, &input)?;
            let _ = writeln!(stderr, "wrote report bundle to {}", out.display());
            stdout.write_all(read(&out.join("report.txt"))?.as_bytes()).map_err(out_err)
        }
        Command::Predict { curve, ckpt, raw } => {
            let arch = ModelArchitecture::default();
            let (model, _) = load_checkpoint(&ckpt, &arch)?;
            let curve = read_curve(&curve)?;
            let out = model.predict_composition(&curve)?;
            let k = model.predict_watson_k(&curve)?;
            let values = if raw { out } else { postprocess_composition(&out).into_inner() };
            let mut s = String::from("name,wt_pct\n");
            for (e, v) in lib.entries().iter().zip(&values) {
                let _ = writeln!(s, "{},{v}", e.name);
            }
            let _ = writeln!(s, "# watson_k={k}");
            stdout.write_all(s.as_bytes()).map_err(out_err)
        }
    }
}

fn history_csv(h: &LossHistory) -> String {
    let mut s = String::from("epoch,loss_pred,l_comp,l_res");
    if h.l_sim.is_some() {
        s.push_str(",l_sim,l_k");
    }
    s.push_str(",val_loss_pred\n");
    for e in 0..h.epochs() {
        let _ = write!(s, "{e},{},{},{}", h.loss_pred[e], h.l_comp[e], h.l_res[e]);
        if let (Some(ls), Some(lk)) = (&h.l_sim, &h.l_k) {
            let _ = write!(s, ",{},{}", ls[e], lk[e]);
        }
        let _ = writeln!(s, ",{}", h.val_loss_pred[e]);
    }
    s
}

fn history_summary(h: &LossHistory) -> String {
    let mut s = String::new();
    let n = h.epochs();
    if n == 0 {
        return s;
    }
    let mut marks: Vec<usize> = (0..5).map(|i| i * (n - 1) / 4).collect();
    marks.dedup();
    let _ = write!(s, "  {:>6} {:>12} {:>12} {:>12}", "epoch", "loss_pred", "L_comp", "L_res");
    if h.l_sim.is_some() {
        let _ = write!(s, " {:>12} {:>12}", "L_sim", "L_K");
    }
    let _ = writeln!(s, " {:>12}", "val");
    for e in marks {
        let _ = write!(s, "  {:>6} {:>12.5} {:>12.5} {:>12.5}", e, h.loss_pred[e], h.l_comp[e], h.l_res[e]);
        if let (Some(ls), Some(lk)) = (&h.l_sim, &h.l_k) {
            let _ = write!(s, " {:>12.3e} {:>12.3e}", ls[e], lk[e]);
        }
        let _ = writeln!(s, " {:>12.5}", h.val_loss_pred[e]);
    }
    s
}

fn read_composition(path: &Path, lib: &ComponentLibrary) -> Result<Composition, CliError> {
    let text = read(path)?;
    let mut wt = vec![0.0; lib.len()];
    let bad = |line: usize, message: String| CliError::Input { path: path.to_path_buf(), message: format!("line {line}: {message}") };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("name,")) {
            continue;
        }
        let (name, value) = line
            .split_once(',')
            .ok_or_else(|| bad(i + 1, format!("expected `name,wt_pct`, found `{line}`")))?;
        let idx = lib
            .index_of(name.trim())
            .ok_or_else(|| bad(i + 1, format!("unknown component `{}`", name.trim())))?;
        wt[idx] = value.trim().parse().map_err(|_| bad(i + 1, format!("cannot parse `{}`", value.trim())))?;
    }
    Composition::from_wt_pct(wt).map_err(|e| CliError::Input { path: path.to_path_buf(), message: e.to_string() })
}

fn read_curve(path: &Path) -> Result<DistillationCurve, CliError> {
    let text = read(path)?;
    let bad = |message: String| CliError::Input { path: path.to_path_buf(), message };
    let mut temps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("recovery")) {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        temps.push(field.parse::<f64>().map_err(|_| bad(format!("line {}: cannot parse `{field}`", i + 1)))?);
    }
    DistillationCurve::on_default_grid(temps).map_err(|e| bad(e.to_string()))
}
