//! Configuration-driven experiments and the file outputs behind the `bsurr`
//! subcommands.
//!
//! A config is a TOML document. Unknown keys are rejected and every value is
//! validated before anything is computed or written.
//!
//! ```toml
//! experiment = "gaussian-benchmark"   # or "energy-demo", "diffusion"
//! seed = 1
//! output_dir = "out/gauss"
//! prior_baseline = true
//!
//! [adaptive]
//! initial_points = 20
//! points_per_iteration = 10
//! alpha_tol = 1e-2
//! max_iterations = 13
//!
//! [estimator]
//! modes = ["gpmap1", "cgpmap2", "cfbgp"]
//! quantile = 0.9
//! n_theta = 10
//!
//! [smc]
//! n_particles = 2000
//! n_rejuvenation = 25
//!
//! [gaussian]
//! dimension = 10
//! variance = 1e-4
//! ```

use crate::adaptive::{run_adaptive, run_prior_baseline, AdaptiveConfig, RunRecord};
use crate::bounded::{EstimatorMode, FitConfig};
use crate::diagnostics::{gaussian_kl, kde_1d, marginal_cs, moments_from_ensemble, GaussianMoments, KDE_MAX_SAMPLES};
use crate::models::{
    diffusion_problem, energy_target, gaussian_benchmark, realize_field, write_grid_csv, DiffusionGrid,
    DiffusionModel, DiffusionSetup, InverseProblem,
};
use crate::smc::{run_smc, ParticleEnsemble, SmcConfig};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GaussianBenchmark,
    EnergyDemo,
    Diffusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveSection {
    pub initial_points: usize,
    pub points_per_iteration: usize,
    pub alpha_tol: f64,
    pub max_iterations: usize,
    pub bound_confidence: f64,
}

impl Default for AdaptiveSection {
    fn default() -> Self {
        let d = AdaptiveConfig::default();
        AdaptiveSection {
            initial_points: d.initial_points,
            points_per_iteration: d.points_per_iteration,
            alpha_tol: d.alpha_tol,
            max_iterations: d.max_iterations,
            bound_confidence: d.bound_confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub modes: Vec<String>,
    pub quantile: f64,
    pub n_theta: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            modes: vec!["cgpmap2".into()],
            quantile: 0.9,
            n_theta: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianSection {
    pub dimension: usize,
    pub variance: f64,
}

impl Default for GaussianSection {
    fn default() -> Self {
        GaussianSection {
            dimension: 10,
            variance: 1e-4,
        }
    }
}

/// SMC settings without the seed, which is derived from the experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmcSection {
    pub n_particles: usize,
    pub n_rejuvenation: usize,
    pub ess_threshold: f64,
    pub target_acceptance: f64,
    pub max_stages: usize,
}

impl Default for SmcSection {
    fn default() -> Self {
        let d = SmcConfig::default();
        SmcSection {
            n_particles: d.n_particles,
            n_rejuvenation: d.n_rejuvenation,
            ess_threshold: d.ess_threshold,
            target_acceptance: d.target_acceptance,
            max_stages: d.max_stages,
        }
    }
}

impl SmcSection {
    pub fn to_config(&self, seed: u64) -> SmcConfig {
        SmcConfig {
            n_particles: self.n_particles,
            n_rejuvenation: self.n_rejuvenation,
            ess_threshold: self.ess_threshold,
            target_acceptance: self.target_acceptance,
            seed,
            max_stages: self.max_stages,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Also run surrogate-free SMC and report the final divergence to it.
    #[serde(default)]
    pub reference: bool,
    /// Also train on prior draws only, at the same solver-call budgets.
    #[serde(default)]
    pub prior_baseline: bool,
    #[serde(default)]
    pub adaptive: AdaptiveSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub smc: SmcSection,
    /// SMC settings of the reference run; defaults to `[smc]`.
    #[serde(default)]
    pub reference_smc: Option<SmcSection>,
    #[serde(default)]
    pub hyper: FitConfig,
    #[serde(default)]
    pub gaussian: Option<GaussianSection>,
    #[serde(default)]
    pub diffusion: Option<DiffusionSetup>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn modes(&self) -> Result<Vec<EstimatorMode>> {
        let e = &self.estimator;
        if e.modes.is_empty() {
            return Err(Error::Config("estimator.modes must list at least one mode".into()));
        }
        let modes = e
            .modes
            .iter()
            .map(|m| EstimatorMode::from_name(m, e.quantile, e.n_theta))
            .collect::<Result<Vec<_>>>()?;
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].iter().any(|o| o.name() == m.name()) {
                return Err(Error::Config(format!("mode '{}' listed twice", m.name())));
            }
        }
        Ok(modes)
    }

    pub fn adaptive_config(&self, mode: EstimatorMode) -> AdaptiveConfig {
        let a = &self.adaptive;
        AdaptiveConfig {
            initial_points: a.initial_points,
            points_per_iteration: a.points_per_iteration,
            alpha_tol: a.alpha_tol,
            max_iterations: a.max_iterations,
            mode,
            bound_confidence: a.bound_confidence,
            smc: self.smc.to_config(0),
            fit: self.hyper.clone(),
            seed: self.seed,
        }
    }

    pub fn reference_smc(&self) -> SmcConfig {
        self.reference_smc
            .as_ref()
            .unwrap_or(&self.smc)
            .to_config(crate::rng::derive_seed(self.seed, &[0x5245_46]))
    }

    pub fn validate(&self) -> Result<()> {
        match self.experiment {
            ExperimentKind::GaussianBenchmark => {
                if self.diffusion.is_some() {
                    return Err(Error::Config("[diffusion] does not apply to gaussian-benchmark".into()));
                }
                let g = self.gaussian.clone().unwrap_or_default();
                if g.dimension == 0 || !(g.variance > 0.0) {
                    return Err(Error::Config("gaussian.dimension and gaussian.variance must be positive".into()));
                }
            }
            ExperimentKind::EnergyDemo => {
                if self.gaussian.is_some() || self.diffusion.is_some() {
                    return Err(Error::Config("energy-demo takes no problem section".into()));
                }
            }
            ExperimentKind::Diffusion => {
                if self.gaussian.is_some() {
                    return Err(Error::Config("[gaussian] does not apply to diffusion".into()));
                }
                let d = self.diffusion.clone().unwrap_or_default();
                if d.cells < 2 || !(d.lengthscale > 0.0) || !(d.noise_variance > 0.0) {
                    return Err(Error::Config(
                        "diffusion needs cells ≥ 2 and positive lengthscale and noise_variance".into(),
                    ));
                }
                if !(d.variance_target > 0.0 && d.variance_target <= 1.0) {
                    return Err(Error::Config("diffusion.variance_target must lie in (0,1]".into()));
                }
            }
        }
        for mode in self.modes()? {
            self.adaptive_config(mode).validate()?;
        }
        self.reference_smc().validate()
    }

    /// SHA-256 of the canonical serialization, after command-line overrides.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    fn header(&self) -> String {
        format!("# bayes-surrogate {VERSION} seed={} config_sha256={}\n", self.seed, self.hash())
    }
}

/// Built problem plus the pieces needed for problem-specific outputs.
pub struct BuiltProblem {
    pub problem: InverseProblem,
    pub diffusion: Option<Arc<DiffusionModel>>,
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<BuiltProblem> {
    Ok(match cfg.experiment {
        ExperimentKind::GaussianBenchmark => {
            let g = cfg.gaussian.clone().unwrap_or_default();
            BuiltProblem {
                problem: gaussian_benchmark(g.dimension, g.variance, cfg.seed)?,
                diffusion: None,
            }
        }
        ExperimentKind::EnergyDemo => BuiltProblem {
            problem: energy_target(),
            diffusion: None,
        },
        ExperimentKind::Diffusion => {
            let (problem, model) = diffusion_problem(&cfg.diffusion.clone().unwrap_or_default())?;
            BuiltProblem {
                problem,
                diffusion: Some(model),
            }
        }
    })
}

/// Failure of a subcommand, split by the exit code it maps to.
#[derive(Debug)]
pub enum CommandError {
    Config(String),
    Numerical(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 1,
            CommandError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CommandError::Config(m) => write!(f, "configuration error: {m}"),
            CommandError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CommandError {}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CommandError::Config(m),
            Error::Io(m) => CommandError::Config(m),
            other => CommandError::Numerical(other.to_string()),
        }
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_f)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Particle coordinates and weights as CSV.
pub fn particles_csv(header: &str, e: &ParticleEnsemble) -> String {
    let mut s = header.to_string();
    let cols: Vec<String> = (0..e.dim()).map(|k| format!("x{k}")).collect();
    let _ = writeln!(s, "{},weight", cols.join(","));
    for (p, w) in e.particles().zip(e.weights()) {
        let row: Vec<String> = p.iter().map(|v| fmt_f(*v)).collect();
        let _ = writeln!(s, "{},{}", row.join(","), fmt_f(*w));
    }
    s
}

/// Reads a particles CSV written by [`particles_csv`].
pub fn read_particles(path: &Path) -> Result<ParticleEnsemble> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Io(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.last() != Some(&"weight") || cols.len() < 2 {
        return Err(Error::Io(format!("{}: expected x0..,weight header", path.display())));
    }
    let dim = cols.len() - 1;
    let mut particles = Vec::new();
    let mut weights = Vec::new();
    for (n, line) in lines.enumerate() {
        let vals = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Io(format!("{}: row {}: {e}", path.display(), n + 1)))?;
        if vals.len() != dim + 1 {
            return Err(Error::Io(format!("{}: row {} has {} columns", path.display(), n + 1, vals.len())));
        }
        particles.extend_from_slice(&vals[..dim]);
        weights.push(vals[dim]);
    }
    ParticleEnsemble::new(dim, particles, weights)
}

/// Per-dimension KDE curves on a 200-point grid spanning the samples.
pub fn marginals_csv(header: &str, e: &ParticleEnsemble) -> Result<String> {
    let mut s = header.to_string();
    s.push_str("dim,x,density\n");
    for k in 0..e.dim() {
        let kde = kde_1d(&e.marginal(k), KDE_MAX_SAMPLES)?;
        let lo = kde.means()[0] - 3.0 * kde.bandwidth();
        let hi = kde.means()[kde.len() - 1] + 3.0 * kde.bandwidth();
        for i in 0..200 {
            let x = lo + (hi - lo) * i as f64 / 199.0;
            let _ = writeln!(s, "{k},{},{}", fmt_f(x), fmt_f(kde.density(x)));
        }
    }
    Ok(s)
}

fn metrics_csv(header: &str, r: &RunRecord) -> String {
    let mut s = header.to_string();
    let n_hyper = r.iterations.first().map_or(0, |i| i.map_log_hyper.len());
    let hyper_cols: Vec<String> = (0..n_hyper).map(|k| format!("map_log_theta{k}")).collect();
    let _ = writeln!(
        s,
        "iteration,solver_calls,training_size,upper_bound,cs_to_previous,kl_to_truth,smc_stages,surrogate_calls,hyper_acceptance{}{}",
        if n_hyper > 0 { "," } else { "" },
        hyper_cols.join(",")
    );
    for it in &r.iterations {
        let hyper: Vec<String> = it.map_log_hyper.iter().map(|v| fmt_f(*v)).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}{}{}",
            it.iteration,
            it.solver_calls,
            it.training_size,
            fmt_opt(it.upper_bound),
            fmt_opt(it.cs_to_previous),
            fmt_opt(it.kl_to_truth),
            it.smc_stages,
            it.surrogate_calls,
            fmt_opt(it.hyper_acceptance),
            if hyper.is_empty() { "" } else { "," },
            hyper.join(",")
        );
    }
    s
}

fn training_csv(header: &str, r: &RunRecord) -> String {
    let mut s = header.to_string();
    let d = r.training.dim();
    let cols: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    let _ = writeln!(s, "iteration,{},value", cols.join(","));
    let mut idx = 0;
    for it in &r.iterations {
        for p in &it.new_points {
            let row: Vec<String> = p.iter().map(|v| fmt_f(*v)).collect();
            let _ = writeln!(s, "{},{},{}", it.iteration, row.join(","), fmt_f(r.training.values()[idx]));
            idx += 1;
        }
    }
    s
}

fn kl_trace_csv(header: &str, rows: &[(usize, Option<f64>)]) -> String {
    let mut s = header.to_string();
    s.push_str("solver_calls,kl\n");
    for (calls, kl) in rows {
        let _ = writeln!(s, "{calls},{}", fmt_opt(*kl));
    }
    s
}

fn grid_csv(header: &str, nx: usize, ny: usize, spacing: (f64, f64), offset: (f64, f64), values: &[f64]) -> Result<String> {
    let mut buf = header.as_bytes().to_vec();
    write_grid_csv(&mut buf, nx, ny, spacing, offset, values)?;
    Ok(String::from_utf8(buf).expect("grid CSV is ASCII"))
}

fn write_diffusion_fields(dir: &Path, header: &str, model: &DiffusionModel, ensemble: Option<&ParticleEnsemble>) -> Result<()> {
    let kle = model.kle();
    let cells = (kle.points().len() as f64).sqrt().round() as usize - 1;
    let h = 1.0 / cells as f64;
    let truth = &model.observations().true_x;
    let uniform = DiffusionGrid::uniform(cells, cells, 1.0, 1.0, 1.0)?;
    let field = realize_field(kle, truth)?;
    write_file(&dir.join("true_field.csv"), &grid_csv(header, cells, cells, (h, h), (0.5 * h, 0.5 * h), &field)?)?;
    let u = uniform.full_nodes(&model.forward(truth)?)?;
    write_file(&dir.join("true_solution.csv"), &grid_csv(header, cells + 1, cells + 1, (h, h), (0.0, 0.0), &u)?)?;
    let obs = uniform.full_nodes(&model.observations().y)?;
    write_file(&dir.join("observations.csv"), &grid_csv(header, cells + 1, cells + 1, (h, h), (0.0, 0.0), &obs)?)?;
    if let Some(e) = ensemble {
        let mean = realize_field(kle, &e.mean())?;
        write_file(
            &dir.join("posterior_mean_field.csv"),
            &grid_csv(header, cells, cells, (h, h), (0.5 * h, 0.5 * h), &mean)?,
        )?;
    }
    Ok(())
}

fn kl_or_none(truth: Option<&GaussianMoments>, e: &ParticleEnsemble) -> Result<Option<f64>> {
    truth
        .map(|t| match moments_from_ensemble(e) {
            Ok(m) => gaussian_kl(t, &m),
            Err(_) => Ok(f64::INFINITY),
        })
        .transpose()
}

/// Surrogate-free SMC on the true likelihood.
pub fn reference_ensemble(problem: &InverseProblem, smc: &SmcConfig) -> Result<(ParticleEnsemble, usize)> {
    let out = run_smc(&problem.prior, |x| problem.log_likelihood(x), smc)?;
    Ok((out.ensemble, out.likelihood_calls))
}

/// Output directory after applying the `--out` override.
fn output_root(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf)
}

/// `run`: adaptive training for every configured mode.
pub fn cmd_run(cfg: &ExperimentConfig, out: Option<&Path>) -> std::result::Result<(), CommandError> {
    cfg.validate()?;
    let modes = cfg.modes()?;
    let built = build_problem(cfg)?;
    let problem = &built.problem;
    let root = output_root(cfg, out);
    create_dir(&root)?;
    let header = cfg.header();
    write_file(&root.join("config.toml"), &toml::to_string(cfg).unwrap_or_default())?;
    if let Some(model) = &built.diffusion {
        write_diffusion_fields(&root, &header, model, None)?;
    }
    let reference = if cfg.reference {
        let (e, _) = reference_ensemble(problem, &cfg.reference_smc())?;
        let dir = root.join("reference");
        create_dir(&dir)?;
        write_file(&dir.join("particles.csv"), &particles_csv(&header, &e))?;
        Some(e)
    } else {
        None
    };
    let mut first_failure: Option<CommandError> = None;
    let mut budgets = Vec::new();
    for mode in modes {
        let dir = root.join(mode.name());
        create_dir(&dir)?;
        let acfg = cfg.adaptive_config(mode);
        let start = Instant::now();
        let (record, failure) = match run_adaptive(problem, &acfg) {
            Ok(r) => (r, None),
            Err(f) => (f.record, Some(f.error)),
        };
        let wall = start.elapsed().as_secs_f64();
        write_file(&dir.join("metrics.csv"), &metrics_csv(&header, &record))?;
        write_file(&dir.join("training_points.csv"), &training_csv(&header, &record))?;
        if problem.analytic_posterior.is_some() {
            let rows: Vec<(usize, Option<f64>)> =
                record.iterations.iter().map(|i| (i.solver_calls, i.kl_to_truth)).collect();
            write_file(&dir.join("kl_trace.csv"), &kl_trace_csv(&header, &rows))?;
        }
        let mut cs_to_reference = None;
        if let Some(e) = &record.final_ensemble {
            write_file(&dir.join("particles.csv"), &particles_csv(&header, e))?;
            write_file(&dir.join("marginals.csv"), &marginals_csv(&header, e)?)?;
            if let Some(r) = &reference {
                cs_to_reference = Some(marginal_cs(e, r)?.into_iter().fold(0.0, f64::max));
            }
            if let Some(model) = &built.diffusion {
                write_diffusion_fields(&dir, &header, model, Some(e))?;
            }
        }
        budgets = budgets.into_iter().chain(record.iterations.iter().map(|i| i.solver_calls)).collect();
        let mut json = record.to_json();
        json["version"] = VERSION.into();
        json["config_sha256"] = cfg.hash().into();
        json["wall_seconds"] = wall.into();
        json["cs_to_reference"] = cs_to_reference.into();
        json["error"] = failure.as_ref().map(|e| e.to_string()).into();
        write_file(
            &dir.join("run_record.json"),
            &serde_json::to_string_pretty(&json).expect("run record serializes"),
        )?;
        if let Some(e) = failure {
            first_failure.get_or_insert(CommandError::from(e));
        }
    }
    if cfg.prior_baseline {
        budgets.sort_unstable();
        budgets.dedup();
        let dir = root.join("prior-baseline");
        create_dir(&dir)?;
        let acfg = cfg.adaptive_config(cfg.modes()?[0]);
        let points = run_prior_baseline(problem, &acfg, &budgets)?;
        let rows: Vec<(usize, Option<f64>)> = points.iter().map(|p| (p.solver_calls, p.kl_to_truth)).collect();
        write_file(&dir.join("kl_trace.csv"), &kl_trace_csv(&header, &rows))?;
        if let Some(last) = points.last() {
            write_file(&dir.join("particles.csv"), &particles_csv(&header, &last.ensemble))?;
        }
    }
    match first_failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// `reference`: SMC on the true likelihood.
pub fn cmd_reference(cfg: &ExperimentConfig, out: Option<&Path>) -> std::result::Result<(), CommandError> {
    cfg.validate()?;
    let built = build_problem(cfg)?;
    let smc = cfg.reference_smc();
    let start = Instant::now();
    let (e, calls) = reference_ensemble(&built.problem, &smc)?;
    let dir = output_root(cfg, out).join("reference");
    create_dir(&dir)?;
    let header = cfg.header();
    write_file(&dir.join("particles.csv"), &particles_csv(&header, &e))?;
    write_file(&dir.join("marginals.csv"), &marginals_csv(&header, &e)?)?;
    let kl = kl_or_none(built.problem.analytic_posterior.as_ref(), &e)?;
    let json = serde_json::json!({
        "problem": built.problem.name,
        "version": VERSION,
        "seed": cfg.seed,
        "config_sha256": cfg.hash(),
        "likelihood_calls": calls,
        "kl_to_truth": kl,
        "wall_seconds": start.elapsed().as_secs_f64(),
    });
    write_file(&dir.join("reference.json"), &serde_json::to_string_pretty(&json).expect("serializes"))?;
    Ok(())
}

/// Divergences between two particle files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub marginal_cs: Vec<f64>,
    pub max_marginal_cs: f64,
    pub kl_a: Option<f64>,
    pub kl_b: Option<f64>,
}

pub fn compare_files(a: &Path, b: &Path, cfg: Option<&ExperimentConfig>) -> std::result::Result<Comparison, CommandError> {
    let ea = read_particles(a).map_err(|e| CommandError::Config(e.to_string()))?;
    let eb = read_particles(b).map_err(|e| CommandError::Config(e.to_string()))?;
    if ea.dim() != eb.dim() {
        return Err(CommandError::Config(format!("dimension mismatch: {} vs {}", ea.dim(), eb.dim())));
    }
    let per = marginal_cs(&ea, &eb)?;
    let truth = match cfg {
        Some(c) => build_problem(c)?.problem.analytic_posterior,
        None => None,
    };
    if let Some(t) = &truth {
        if t.dim() != ea.dim() {
            return Err(CommandError::Config("config dimension differs from the particle files".into()));
        }
    }
    Ok(Comparison {
        max_marginal_cs: per.iter().copied().fold(0.0, f64::max),
        marginal_cs: per,
        kl_a: kl_or_none(truth.as_ref(), &ea)?,
        kl_b: kl_or_none(truth.as_ref(), &eb)?,
    })
}

/// `compare`: prints the comparison and writes `compare.json` under `out`.
pub fn cmd_compare(
    a: &Path,
    b: &Path,
    cfg: Option<&ExperimentConfig>,
    out: Option<&Path>,
) -> std::result::Result<Comparison, CommandError> {
    let c = compare_files(a, b, cfg)?;
    println!("max_marginal_cs = {:.16e}", c.max_marginal_cs);
    for (k, v) in c.marginal_cs.iter().enumerate() {
        println!("  dim {k}: {v:.16e}");
    }
    if let (Some(ka), Some(kb)) = (c.kl_a, c.kl_b) {
        println!("kl(truth || A) = {ka:.16e}");
        println!("kl(truth || B) = {kb:.16e}");
    }
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(&dir.join("compare.json"), &serde_json::to_string_pretty(&c).expect("serializes"))?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "gaussian-benchmark"
seed = 4
[gaussian]
dimension = 2
variance = 0.01
"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::GaussianBenchmark);
        assert_eq!(cfg.modes().unwrap(), vec![EstimatorMode::Cgpmap2 { quantile: 0.9 }]);
        assert_eq!(cfg.adaptive_config(cfg.modes().unwrap()[0]).smc.n_particles, 2000);
        assert_eq!(cfg.hash(), ExperimentConfig::from_toml(MINIMAL).unwrap().hash());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(
            ExperimentConfig::from_toml(&format!("{MINIMAL}\nbogus = 1\n")),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}[adaptive]\npoints_per_iteration = 0\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}[smc]\nn_particle = 10\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}[diffusion]\ncells = 4\n")).is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"lung\"").is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}[estimator]\nmodes = [\"cfbgp\", \"cfbgp\"]\n")).is_err());
    }

    #[test]
    fn particles_round_trip_exactly() {
        let e = ParticleEnsemble::new(2, vec![0.1, -1.0 / 3.0, 2.5e-17, 7.0], vec![0.3, 0.7]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        fs::write(&path, particles_csv("# h\n", &e)).unwrap();
        assert_eq!(read_particles(&path).unwrap(), e);
    }

    #[test]
    fn command_errors_map_to_exit_codes() {
        assert_eq!(CommandError::from(Error::Config("x".into())).exit_code(), 1);
        assert_eq!(CommandError::from(Error::DegenerateEnsemble("x".into())).exit_code(), 2);
    }
}
