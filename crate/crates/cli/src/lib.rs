//! Batch commands: generate synthetic data, fit, rank, evaluate and sweep.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use causa::dataset::write_atomic;
use causa::eval::{evaluate_selection, EvaluationReport, DEFAULT_RESTARTS};
use causa::solver::{fit_problem, load_checkpoint, rank_features, save_checkpoint, select_top, FeatureScore, Problem};
use causa::synth::{generate, SynthSpec};
use causa::{load_dataset, save_dataset, standardize, Ablation, HyperParams, KernelKind, MultiViewDataset};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "causa", version, about = "Causal multi-view unsupervised feature selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the confounded synthetic benchmark.
    Synth(SynthArgs),
    /// Fit the model and write checkpoint, objective trace and ranking.
    Fit(FitArgs),
    /// Rank features from a checkpoint.
    Rank(RankArgs),
    /// Cluster the top-ranked features at several selection ratios.
    Eval(EvalArgs),
    /// Grid search over alpha, beta and lambda.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum AblationArg {
    Full,
    NoCausal,
    AllConfounders,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Full => Ablation::Full,
            AblationArg::NoCausal => Ablation::NoCausal,
            AblationArg::AllConfounders => Ablation::AllConfounders,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum KernelArg {
    Linear,
    Gaussian,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Linear => KernelKind::Linear,
            KernelArg::Gaussian => KernelKind::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Output directory for the manifest, view CSVs, labels and roles.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 1.5)]
    pub confound_strength: f64,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Embedding dimension; defaults to the label count, or 4 without labels.
    #[arg(long)]
    pub c: Option<usize>,
    #[arg(long, default_value_t = 15)]
    pub m: usize,
    #[arg(long, default_value_t = 5)]
    pub knn: usize,
    #[arg(long, default_value_t = 1e3)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-1)]
    pub varrho: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = AblationArg::Full)]
    pub ablation: AblationArg,
    #[arg(long, value_enum, default_value_t = KernelArg::Linear)]
    pub kernel: KernelArg,
    /// Stop refreshing prototypes after this many iterations.
    #[arg(long)]
    pub freeze_prototypes_after: Option<usize>,
    /// Use the views as given instead of z-scoring every feature.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ModelArgs {
    pub fn hyper_params(&self, ds: &MultiViewDataset) -> HyperParams {
        HyperParams {
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
            c: self.c.or(ds.n_classes()).unwrap_or(4),
            m: self.m,
            k_nn: self.knn,
            rho: self.rho,
            varrho: self.varrho,
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            tol: self.tol,
            ablation: self.ablation.into(),
            kernel: self.kernel.into(),
            freeze_prototypes_after: self.freeze_prototypes_after,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RankArgs {
    /// Directory holding a checkpoint written by `fit`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output ranking JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for the per-ratio CSV and the report JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = default_ratios())]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Roles CSV written by `synth`; enables causal precision and recall.
    #[arg(long)]
    pub roles: Option<PathBuf>,
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; `sweep.csv` there is resumed when present.
    #[arg(long)]
    pub out: PathBuf,
    /// Values tried for each of alpha, beta and lambda.
    #[arg(long, value_delimiter = ',', default_values_t = default_grid())]
    pub grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = default_ratios())]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Cells fitted concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub roles: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

pub fn default_ratios() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4, 0.5]
}

pub fn default_grid() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]
}

/// How a command finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// The solver spent its iteration budget without meeting the tolerance.
    MaxIterReached,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Done => 0,
            Outcome::MaxIterReached => 2,
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a).map(|_| Outcome::Done),
        Command::Fit(a) => cmd_fit(&a),
        Command::Rank(a) => cmd_rank(&a).map(|_| Outcome::Done),
        Command::Eval(a) => cmd_eval(&a).map(|_| Outcome::Done),
        Command::Sweep(a) => cmd_sweep(&a).map(|_| Outcome::Done),
    }
}

/// Provenance written at the top of every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
}

impl Provenance {
    /// `config` should exclude output locations so that identical runs into
    /// different directories share a hash.
    pub fn new<T: Serialize>(command: &str, config: &T) -> Self {
        let bytes = serde_json::to_vec(config).expect("configuration serializes");
        Self {
            command: command.into(),
            version: VERSION.into(),
            config_sha256: hex::encode(Sha256::digest(&bytes)),
        }
    }

    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("causa {} {}", self.version, self.command),
            format!("config sha256 {}", self.config_sha256),
        ]
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("provenance serializes")
    }

    fn csv_header(&self) -> String {
        self.lines().iter().map(|l| format!("# {l}\n")).collect()
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_atomic(path, &text)?;
    Ok(())
}

fn prepare(manifest: &Path, no_standardize: bool) -> Result<MultiViewDataset> {
    let ds = load_dataset(manifest).with_context(|| format!("loading {}", manifest.display()))?;
    if no_standardize {
        return Ok(ds);
    }
    let (ds, report) = standardize(&ds);
    for (v, rows) in report.zero_variance.iter().enumerate() {
        if !rows.is_empty() {
            log::warn!("view {v}: {} constant features were zeroed", rows.len());
        }
    }
    Ok(ds)
}

pub const ROLES_FILE: &str = "roles.csv";

pub fn cmd_synth(args: &SynthArgs) -> Result<PathBuf> {
    let spec = SynthSpec {
        n: args.n,
        classes: args.classes,
        confound_strength: args.confound_strength,
        seed: args.seed,
        ..Default::default()
    };
    let data = generate(&spec)?;
    let prov = Provenance::new("synth", &SynthArgs { out: PathBuf::new(), ..args.clone() });
    let manifest = save_dataset(&data.dataset, &args.out, &prov.lines())?;
    let mut roles = prov.csv_header();
    roles.push_str("feature_index,view,role\n");
    for (v, r) in data.roles.iter().enumerate() {
        for (i, role) in r.iter().enumerate() {
            roles.push_str(&format!("{i},{v},{}\n", role.as_str()));
        }
    }
    write_atomic(&args.out.join(ROLES_FILE), roles.as_bytes())?;
    Ok(manifest)
}

/// Per view, the indices of the features marked causal in a roles CSV.
pub fn read_causal_roles(path: &Path, n_views: usize) -> Result<Vec<Vec<usize>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut causal = vec![Vec::new(); n_views];
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).skip(1) {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 3 {
            bail!("malformed roles line {line:?}");
        }
        let (i, v): (usize, usize) = (cells[0].parse()?, cells[1].parse()?);
        if v >= n_views {
            bail!("roles file names view {v}, dataset has {n_views}");
        }
        if cells[2] == "causal" {
            causal[v].push(i);
        }
    }
    Ok(causal)
}

pub const TRACE_FILE: &str = "trace.csv";
pub const RANKING_FILE: &str = "ranking.json";
pub const CONFOUNDERS_FILE: &str = "confounders.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";

fn ranking_json(ranking: &[Vec<FeatureScore>], names: Option<&[Vec<String>]>, prov: &Provenance) -> serde_json::Value {
    let views: Vec<serde_json::Value> = ranking
        .iter()
        .enumerate()
        .map(|(v, r)| {
            let features: Vec<serde_json::Value> = r
                .iter()
                .map(|s| {
                    let mut item = json!({"index": s.index, "score": s.score});
                    if let Some(n) = names {
                        item["name"] = json!(n[v][s.index]);
                    }
                    item
                })
                .collect();
            json!({"view": v, "features": features})
        })
        .collect();
    json!({"meta": prov.json(), "views": views})
}

pub fn cmd_fit(args: &FitArgs) -> Result<Outcome> {
    let ds = prepare(&args.manifest, args.model.no_standardize)?;
    let params = args.model.hyper_params(&ds);
    let prov = Provenance::new("fit", &FitArgs { out: PathBuf::new(), ..args.clone() });
    let problem = Problem::new(ds, params.clone())?;
    let result = fit_problem(&problem, args.model.seed).map_err(|f| {
        if let Some(state) = &f.state {
            let dir = args.out.join(CHECKPOINT_DIR);
            if let Err(e) = save_checkpoint(&dir, state, &params, prov.json()) {
                log::error!("could not save the last consistent state: {e}");
            }
        }
        anyhow::Error::new(f.error)
    })?;
    let state = &result.state;
    std::fs::create_dir_all(&args.out)?;
    save_checkpoint(args.out.join(CHECKPOINT_DIR), state, &params, prov.json())?;

    let mut trace = prov.csv_header();
    trace.push_str("iteration,objective\n");
    for (t, v) in state.objective_trace.iter().enumerate() {
        trace.push_str(&format!("{t},{v:?}\n"));
    }
    write_atomic(&args.out.join(TRACE_FILE), trace.as_bytes())?;

    let ranking = rank_features(&state.w);
    write_json(
        &args.out.join(RANKING_FILE),
        &ranking_json(&ranking, problem.ds.feature_names(), &prov),
    )?;

    let confounders: Vec<serde_json::Value> = state
        .contexts
        .iter()
        .enumerate()
        .map(|(v, group)| {
            let protos: Vec<serde_json::Value> = group
                .iter()
                .map(|ctx| {
                    let found: Vec<serde_json::Value> = ctx
                        .reported_confounders()
                        .into_iter()
                        .map(|(i, e)| json!({"index": i, "weight": e}))
                        .collect();
                    json!({"prototype": ctx.prototype, "confounders": found})
                })
                .collect();
            json!({"view": v, "prototypes": protos})
        })
        .collect();
    write_json(
        &args.out.join(CONFOUNDERS_FILE),
        &json!({"meta": prov.json(), "views": confounders}),
    )?;

    log::info!(
        "{} after {} iterations, objective {:.6e}",
        if state.converged { "converged" } else { "stopped" },
        state.iteration,
        state.objective_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(if state.converged {
        Outcome::Done
    } else {
        Outcome::MaxIterReached
    })
}

pub fn cmd_rank(args: &RankArgs) -> Result<()> {
    let (state, _) = load_checkpoint(&args.checkpoint)?;
    let prov = Provenance::new("rank", &RankArgs { out: PathBuf::new(), ..args.clone() });
    write_json(&args.out, &ranking_json(&rank_features(&state.w), None, &prov))
}

fn check_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.is_empty() || ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        bail!("ratios must lie in (0, 1]");
    }
    Ok(())
}

pub const EVAL_CSV: &str = "eval.csv";
pub const EVAL_JSON: &str = "eval.json";

fn evaluate_ratios(
    ds: &MultiViewDataset,
    ranking: &[Vec<FeatureScore>],
    ratios: &[f64],
    restarts: usize,
    seed: u64,
    causal: Option<&[Vec<usize>]>,
) -> Result<Vec<(f64, EvaluationReport)>> {
    ratios
        .iter()
        .map(|&r| {
            let selected = select_top(ranking, r);
            Ok((r, evaluate_selection(ds, &selected, None, restarts, seed, causal)?))
        })
        .collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v:?}"))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Vec<(f64, EvaluationReport)>> {
    check_ratios(&args.ratios)?;
    let ds = prepare(&args.manifest, args.no_standardize)?;
    let (state, _) = load_checkpoint(&args.checkpoint)?;
    if state.w.iter().map(|w| w.nrows()).collect::<Vec<_>>() != ds.dims() {
        bail!("checkpoint does not match the dataset dimensions");
    }
    let causal = args.roles.as_deref().map(|p| read_causal_roles(p, ds.n_views())).transpose()?;
    let ranking = rank_features(&state.w);
    let rows = evaluate_ratios(&ds, &ranking, &args.ratios, args.restarts, args.seed, causal.as_deref())?;
    let prov = Provenance::new("eval", &EvalArgs { out: PathBuf::new(), ..args.clone() });
    let mut csv = prov.csv_header();
    csv.push_str("ratio,acc_mean,acc_std,nmi_mean,nmi_std,precision,recall\n");
    for (r, rep) in &rows {
        csv.push_str(&format!(
            "{r},{},{},{},{},{},{}\n",
            fmt_opt(rep.acc_mean),
            fmt_opt(rep.acc_std),
            fmt_opt(rep.nmi_mean),
            fmt_opt(rep.nmi_std),
            fmt_opt(rep.recovery.map(|x| x.precision)),
            fmt_opt(rep.recovery.map(|x| x.recall)),
        ));
    }
    std::fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join(EVAL_CSV), csv.as_bytes())?;
    let reports: Vec<serde_json::Value> = rows
        .iter()
        .map(|(r, rep)| json!({"ratio": r, "report": rep}))
        .collect();
    write_json(&args.out.join(EVAL_JSON), &json!({"meta": prov.json(), "ratios": reports}))?;
    Ok(rows)
}

pub const SWEEP_CSV: &str = "sweep.csv";
const SWEEP_COLUMNS: &str = "alpha,beta,lambda,iterations,converged,objective,acc_mean,nmi_mean,best_ratio,best_acc,best_nmi";

/// Cell key: the three weights formatted exactly.
type CellKey = (String, String, String);

fn cell_key(a: f64, b: f64, l: f64) -> CellKey {
    (format!("{a:?}"), format!("{b:?}"), format!("{l:?}"))
}

fn read_sweep_rows(path: &Path, prov: &Provenance) -> Result<BTreeMap<CellKey, String>> {
    let mut rows = BTreeMap::new();
    if !path.exists() {
        return Ok(rows);
    }
    let text = std::fs::read_to_string(path)?;
    let recorded = text
        .lines()
        .find_map(|l| l.strip_prefix("# config sha256 "))
        .map(str::trim);
    if let Some(hash) = recorded {
        if hash != prov.config_sha256 {
            bail!(
                "{} was written with a different configuration (sha256 {hash}); use a fresh output directory",
                path.display()
            );
        }
    }
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != SWEEP_COLUMNS.split(',').count() {
            log::warn!("dropping malformed sweep row {line:?}");
            continue;
        }
        let parse = |s: &str| s.parse::<f64>();
        let (Ok(a), Ok(b), Ok(l)) = (parse(cells[0]), parse(cells[1]), parse(cells[2])) else {
            log::warn!("dropping malformed sweep row {line:?}");
            continue;
        };
        rows.insert(cell_key(a, b, l), line.to_string());
    }
    Ok(rows)
}

fn sweep_cell(
    ds: &MultiViewDataset,
    base: &HyperParams,
    args: &SweepArgs,
    causal: Option<&[Vec<usize>]>,
    (a, b, l): (f64, f64, f64),
) -> Result<String> {
    let params = HyperParams {
        alpha: a,
        beta: b,
        lambda: l,
        ..base.clone()
    };
    let problem = Problem::new(ds.clone(), params)?;
    let result = fit_problem(&problem, args.model.seed).map_err(|f| f.error)?;
    let ranking = rank_features(&result.state.w);
    let rows = evaluate_ratios(ds, &ranking, &args.ratios, args.restarts, args.model.seed, causal)?;
    let accs: Vec<f64> = rows.iter().filter_map(|(_, r)| r.acc_mean).collect();
    let nmis: Vec<f64> = rows.iter().filter_map(|(_, r)| r.nmi_mean).collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let best = rows
        .iter()
        .filter(|(_, r)| r.acc_mean.is_some())
        .max_by(|x, y| x.1.acc_mean.partial_cmp(&y.1.acc_mean).unwrap());
    Ok(format!(
        "{a:?},{b:?},{l:?},{},{},{:?},{},{},{},{},{}",
        result.state.iteration,
        result.state.converged,
        result.state.objective_trace.last().copied().unwrap_or(f64::NAN),
        fmt_opt(mean(&accs)),
        fmt_opt(mean(&nmis)),
        best.map_or(String::new(), |(r, _)| format!("{r:?}")),
        fmt_opt(best.and_then(|(_, r)| r.acc_mean)),
        fmt_opt(best.and_then(|(_, r)| r.nmi_mean)),
    ))
}

/// Fit and evaluate every cell of the grid, appending one CSV row per cell.
/// Cells already present in the output file are skipped, so an interrupted
/// or extended grid resumes; a file from another configuration is refused.
/// Returns the number of cells fitted.
pub fn cmd_sweep(args: &SweepArgs) -> Result<usize> {
    check_ratios(&args.ratios)?;
    if args.grid.is_empty() {
        bail!("empty grid");
    }
    let ds = prepare(&args.manifest, args.model.no_standardize)?;
    let base = args.model.hyper_params(&ds);
    base.validate(&ds)?;
    let causal = args.roles.as_deref().map(|p| read_causal_roles(p, ds.n_views())).transpose()?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join(SWEEP_CSV);
    let mut resume_args = args.clone();
    resume_args.jobs = 0;
    resume_args.out = PathBuf::new();
    resume_args.grid = Vec::new();
    let prov = Provenance::new("sweep", &resume_args);
    let done = Mutex::new(read_sweep_rows(&path, &prov)?);

    let mut cells = Vec::new();
    for &a in &args.grid {
        for &b in &args.grid {
            for &l in &args.grid {
                cells.push((a, b, l));
            }
        }
    }
    let order: Vec<CellKey> = cells.iter().map(|&(a, b, l)| cell_key(a, b, l)).collect();
    let pending: Vec<(f64, f64, f64)> = {
        let done = done.lock().unwrap();
        cells
            .iter()
            .copied()
            .filter(|&(a, b, l)| !done.contains_key(&cell_key(a, b, l)))
            .collect()
    };
    let write = |rows: &BTreeMap<CellKey, String>| -> Result<()> {
        let mut text = prov.csv_header();
        text.push_str(SWEEP_COLUMNS);
        text.push('\n');
        for key in &order {
            if let Some(row) = rows.get(key) {
                text.push_str(row);
                text.push('\n');
            }
        }
        write_atomic(&path, text.as_bytes())?;
        Ok(())
    };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build()?;
    let computed = pending.len();
    pool.install(|| {
        pending.par_iter().try_for_each(|&cell| -> Result<()> {
            let row = sweep_cell(&ds, &base, args, causal.as_deref(), cell)
                .with_context(|| format!("cell alpha={} beta={} lambda={}", cell.0, cell.1, cell.2))?;
            let mut rows = done.lock().unwrap();
            rows.insert(cell_key(cell.0, cell.1, cell.2), row);
            write(&rows)
        })
    })?;
    write(&done.lock().unwrap())?;
    Ok(computed)
}
