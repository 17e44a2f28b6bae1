//! The `bnme` command line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::baseline::{fit_all_rotated, BaselineFit};
use crate::error::{BnmeError, Result};
use crate::io::{
    self, ConfigEcho, GridChoice, InputPaths, LoadedData, Manifest, Method, ResultsFile,
    SnpResult, TruthFile, SCHEMA_VERSION,
};
use crate::model::{edge_pairs, GenotypeVector, HyperParams, RotatedData};
use crate::projection::adjust_for_covariates;
use crate::sampler::SamplerConfig;
use crate::selection::{self, FitSummary, DEFAULT_LEVEL};
use crate::simgen::{generate_dataset, Scenario};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "BNME_THREADS";

#[derive(Debug, Parser)]
#[command(name = "bnme", version, about = "Whole-network association of a genetic variant with brain connectivity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known truth.
    Simulate(SimulateArgs),
    /// Fit the Bayesian model at one (H, nu).
    Fit(FitArgs),
    /// Fit every (H, nu) cell and keep the lowest BIC.
    Grid(FitArgs),
    /// Per-edge mixed model with Bonferroni control.
    Baseline(BaselineArgs),
    /// Plot-ready CSVs from a results file.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON scenario; flags below override its fields.
    #[arg(long = "scenario-config")]
    pub scenario_config: Option<PathBuf>,
    /// 1: one component; 2: weights 0.7, 0.3, 0.
    #[arg(long = "scenario-id", default_value_t = 1)]
    pub scenario_id: u8,
    #[arg(long = "scenario-n")]
    pub scenario_n: Option<usize>,
    #[arg(long = "scenario-nodes")]
    pub scenario_nodes: Option<usize>,
    /// Fraction of nodes outside each component's support.
    #[arg(long = "scenario-sparsity")]
    pub scenario_sparsity: Option<f64>,
    #[arg(long = "scenario-sigma-a")]
    pub scenario_sigma_a: Option<f64>,
    #[arg(long = "scenario-sigma-e")]
    pub scenario_sigma_e: Option<f64>,
    /// Use unrelated subjects.
    #[arg(long = "scenario-identity-kinship", action = ArgAction::SetTrue)]
    pub scenario_identity_kinship: bool,
    /// Leave covariate effects out of the phenotype.
    #[arg(long = "scenario-no-covariate-effects", action = ArgAction::SetTrue)]
    pub scenario_no_covariate_effects: bool,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub pheno: PathBuf,
    #[arg(long)]
    pub geno: PathBuf,
    #[arg(long)]
    pub kinship: PathBuf,
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Output directory for results.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict to these SNP IDs (comma list).
    #[arg(long, value_delimiter = ',')]
    pub snp: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Total sweeps, burn-in included.
    #[arg(long, default_value_t = 3000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Component count; a comma list in grid mode.
    #[arg(long = "H", value_delimiter = ',', default_value = "3")]
    pub h: Vec<usize>,
    /// Loading shrinkage; a comma list in grid mode.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub nu: Vec<f64>,
    #[arg(long = "adapt-mh", default_value_t = true, action = ArgAction::Set)]
    pub adapt_mh: bool,
    /// Credible level of the edge intervals.
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    pub level: f64,
    /// Also write every kept draw to chains.csv.
    #[arg(long = "write-chains", action = ArgAction::SetTrue)]
    pub write_chains: bool,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// SNP to report; defaults to the first.
    #[arg(long)]
    pub snp: Option<String>,
}

/// Parses `args`, runs the command and returns the process exit code.
/// Errors are printed to stderr as one JSON object.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            let body = serde_json::json!({"error": err.kind(), "message": err.to_string()});
            eprintln!("{body}");
            err.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a, false),
        Command::Grid(a) => cmd_fit(&a, true),
        Command::Baseline(a) => cmd_baseline(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| BnmeError::InvalidParameter(format!("{THREADS_ENV} must be a count, got `{raw}`")))?;
    // A second call in one process (tests) keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| BnmeError::io(path, e))
}

pub fn build_scenario(a: &SimulateArgs) -> Result<Scenario> {
    let mut s = match &a.scenario_config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| BnmeError::io(p, e))?;
            serde_json::from_str(&text)?
        }
        None => Scenario::numbered(a.scenario_id, 100, 0.5, 1)?,
    };
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if let Some(v) = a.scenario_n {
        s.n_subjects = v;
    }
    if let Some(v) = a.scenario_nodes {
        s.n_nodes = v;
    }
    if let Some(v) = a.scenario_sparsity {
        s.sparsity = v;
    }
    if let Some(v) = a.scenario_sigma_a {
        s.sigma_a = v;
    }
    if let Some(v) = a.scenario_sigma_e {
        s.sigma_e = v;
    }
    s.identity_kinship |= a.scenario_identity_kinship;
    if a.scenario_no_covariate_effects {
        s.covariate_effects = false;
    }
    s.validate()?;
    Ok(s)
}

/// File names written by `simulate`, in manifest order.
pub const SIMULATED_FILES: [&str; 5] = [
    "phenotype.tsv",
    "genotype.tsv",
    "kinship.csv",
    "covariates.tsv",
    "truth.json",
];

pub const SIMULATED_SNP: &str = "snp1";

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let scenario = build_scenario(a)?;
    let sim = generate_dataset(&scenario)?;
    create_dir(&a.out)?;
    let subjects = io::subject_ids(scenario.n_subjects);
    let truth = TruthFile::new(&scenario, &sim.truth);
    let mut truth_json = serde_json::to_string_pretty(&truth)?;
    truth_json.push('\n');
    let bodies = [
        io::format_phenotype(&subjects, &sim.phenotype),
        io::format_genotypes(&subjects, &[(SIMULATED_SNP.to_string(), sim.dosages.clone())]),
        io::format_kinship(&subjects, sim.kinship.matrix()),
        io::format_covariates(&subjects, &sim.covariates),
        truth_json,
    ];
    let mut manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        seed: scenario.seed,
        scenario: scenario.clone(),
        files: Default::default(),
    };
    for (name, body) in SIMULATED_FILES.iter().zip(&bodies) {
        let path = a.out.join(name);
        io::write_atomic(&path, body.as_bytes())?;
        manifest.files.insert(name.to_string(), io::sha256_file(&path)?);
    }
    io::write_json(&a.out.join("manifest.json"), &manifest)?;
    log::info!("wrote scenario to {}", a.out.display());
    Ok(())
}

fn load(input: &InputArgs) -> Result<LoadedData> {
    io::load_dataset(&InputPaths {
        phenotype: &input.pheno,
        genotype: &input.geno,
        kinship: &input.kinship,
        covariates: input.covariates.as_deref(),
    })
}

/// SNPs to analyze, in file order, after the `--snp` filter.
fn chosen_snps<'a>(data: &'a LoadedData, filter: &[String]) -> Result<Vec<&'a (String, Vec<f64>)>> {
    if let Some(missing) = filter.iter().find(|f| !data.genotypes.iter().any(|(id, _)| id == *f)) {
        return Err(BnmeError::Data(format!("SNP {missing} not found in genotype file")));
    }
    Ok(data
        .genotypes
        .iter()
        .filter(|(id, _)| filter.is_empty() || filter.contains(id))
        .collect())
}

fn rotated_for(data: &LoadedData, snp_id: &str, dosages: &[f64]) -> Result<RotatedData> {
    let genotype = GenotypeVector::standardize(snp_id, dosages)?;
    let dataset = adjust_for_covariates(
        &data.covariates,
        &data.phenotype,
        &genotype,
        &data.kinship,
    )?;
    Ok(RotatedData::new(&dataset))
}

pub fn sampler_config(a: &FitArgs, grid: bool) -> Result<SamplerConfig> {
    if !grid && (a.h.len() != 1 || a.nu.len() != 1) {
        return Err(BnmeError::InvalidParameter(
            "fit takes a single --H and --nu; use grid for lists".into(),
        ));
    }
    let hyper = HyperParams {
        nu: a.nu[0],
        ..HyperParams::default()
    };
    let config = SamplerConfig {
        n_iterations: a.iters,
        burn_in: a.burnin,
        thinning: a.thin,
        n_chains: a.chains,
        n_components: a.h[0],
        seed: a.seed,
        hyper,
        adapt_mh: a.adapt_mh,
    };
    config.validate()?;
    for &nu in &a.nu {
        HyperParams { nu, ..config.hyper }.validate()?;
    }
    if a.h.contains(&0) {
        return Err(BnmeError::InvalidParameter("--H values must be at least 1".into()));
    }
    Ok(config)
}

fn results_file(
    method: Method,
    config: ConfigEcho,
    seed: u64,
    data: &LoadedData,
    results: Vec<SnpResult>,
    started: Instant,
) -> ResultsFile {
    ResultsFile {
        schema_version: SCHEMA_VERSION,
        method,
        config,
        seed,
        dataset_hash: data.content_hash(),
        n_subjects: data.subjects.len(),
        n_covariates: data.covariates.n_covariates(),
        n_nodes: data.phenotype.n_nodes(),
        results,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    }
}

fn cmd_fit(a: &FitArgs, grid: bool) -> Result<()> {
    let started = Instant::now();
    let config = sampler_config(a, grid)?;
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(BnmeError::InvalidParameter(format!(
            "--level must lie in (0, 1), got {}",
            a.level
        )));
    }
    let data = load(&a.input)?;
    create_dir(&a.input.out)?;
    let mut results = Vec::new();
    let mut chains = String::new();
    for (snp_id, dosages) in chosen_snps(&data, &a.input.snp)? {
        log::info!("fitting {snp_id}");
        let rotated = rotated_for(&data, snp_id, dosages)?;
        let (out, choice) = if grid {
            let g = selection::grid_search_rotated(&rotated, &a.h, &a.nu, &config, a.level)?;
            let choice = GridChoice {
                n_components: g.best_components,
                nu: g.best_nu,
                cells: g.cells,
            };
            (g.fit, Some(choice))
        } else {
            (selection::fit_rotated(&rotated, &config, a.level)?, None)
        };
        if a.write_chains {
            chains.push_str(&io::format_chains(snp_id, &out.samples, chains.is_empty()));
        }
        results.push(SnpResult {
            snp_id: snp_id.clone(),
            fit: Some(out.summary),
            grid: choice,
            baseline: None,
        });
    }
    let echo = ConfigEcho {
        mode: if grid { "grid" } else { "fit" }.into(),
        sampler: Some(config.clone()),
        credible_level: a.level,
        h_grid: if grid { a.h.clone() } else { Vec::new() },
        nu_grid: if grid { a.nu.clone() } else { Vec::new() },
    };
    if a.write_chains {
        io::write_atomic(&a.input.out.join("chains.csv"), chains.as_bytes())?;
    }
    let file = results_file(Method::Bnme, echo, config.seed, &data, results, started);
    io::write_json(&a.input.out.join("results.json"), &file)
}

fn cmd_baseline(a: &BaselineArgs) -> Result<()> {
    let started = Instant::now();
    let data = load(&a.input)?;
    create_dir(&a.input.out)?;
    let mut results = Vec::new();
    for (snp_id, dosages) in chosen_snps(&data, &a.input.snp)? {
        let rotated = rotated_for(&data, snp_id, dosages)?;
        results.push(SnpResult {
            snp_id: snp_id.clone(),
            fit: None,
            grid: None,
            baseline: Some(fit_all_rotated(&rotated)),
        });
    }
    let echo = ConfigEcho {
        mode: "baseline".into(),
        sampler: None,
        credible_level: 1.0 - crate::baseline::FAMILY_ALPHA,
        h_grid: Vec::new(),
        nu_grid: Vec::new(),
    };
    let file = results_file(Method::Lmm, echo, 0, &data, results, started);
    io::write_json(&a.input.out.join("results.json"), &file)
}

/// File names written by `report`.
pub const REPORT_FILES: [&str; 4] = [
    "theta_mean.csv",
    "edge_significance.csv",
    "tau_summary.csv",
    "diagnostics.csv",
];

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let results = io::read_results(&a.results)?;
    let entry = match &a.snp {
        Some(id) => results
            .results
            .iter()
            .find(|r| &r.snp_id == id)
            .ok_or_else(|| BnmeError::Data(format!("SNP {id} not in {}", a.results.display())))?,
        None => results
            .results
            .first()
            .ok_or_else(|| BnmeError::Data(format!("{} holds no results", a.results.display())))?,
    };
    let v = results.n_nodes;
    let bodies = if let Some(fit) = &entry.fit {
        fit.check_invariants()?;
        report_bnme(fit, v)
    } else if let Some(base) = &entry.baseline {
        report_baseline(base, v)
    } else {
        return Err(BnmeError::Data(format!("SNP {} has no fit", entry.snp_id)));
    };
    create_dir(&a.out)?;
    for (name, body) in REPORT_FILES.iter().zip(bodies) {
        io::write_atomic(&a.out.join(name), body.as_bytes())?;
    }
    Ok(())
}

fn matrix_csv(values: &[f64], v: usize) -> String {
    let mut m = vec![0.0; v * v];
    for (e, (k, l)) in edge_pairs(v).into_iter().enumerate() {
        m[k * v + l] = values[e];
        m[l * v + k] = values[e];
    }
    let mut s = String::new();
    for row in m.chunks(v) {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn edge_csv(mean: &[f64], lower: &[f64], upper: &[f64], significant: &[usize], v: usize) -> String {
    let mut flag = vec![false; mean.len()];
    for &e in significant {
        flag[e] = true;
    }
    let mut s = String::from("k,l,mean,lo,hi,significant\n");
    for (e, (k, l)) in edge_pairs(v).into_iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            k + 1,
            l + 1,
            mean[e],
            lower[e],
            upper[e],
            u8::from(flag[e])
        );
    }
    s
}

fn report_bnme(fit: &FitSummary, v: usize) -> [String; 4] {
    let mut tau = String::from("component,tau_mean,eta_mean,eta_sd,selected\n");
    for h in 0..fit.n_components {
        let _ = writeln!(
            tau,
            "{},{},{},{},{}",
            h + 1,
            fit.tau_mean[h],
            fit.eta_mean[h],
            fit.eta_sd[h],
            u8::from(fit.selected.contains(&h))
        );
    }
    let mut diag = String::from("name,value,flag\n");
    for r in &fit.rhat {
        let _ = writeln!(diag, "rhat:{},{},{}", r.name, r.value, if r.constant { "constant" } else { "" });
    }
    for (c, x) in fit.acceptance_a.iter().enumerate() {
        let _ = writeln!(diag, "acceptance_sigma_a:chain{},{x},", c + 1);
    }
    for (c, x) in fit.acceptance_e.iter().enumerate() {
        let _ = writeln!(diag, "acceptance_sigma_e:chain{},{x},", c + 1);
    }
    let _ = writeln!(diag, "bic,{},", fit.bic);
    let _ = writeln!(diag, "variant,{},", if fit.selected.is_empty() { "null" } else { "risk" });
    [
        matrix_csv(&fit.theta_mean, v),
        edge_csv(&fit.theta_mean, &fit.theta_lower, &fit.theta_upper, &fit.significant, v),
        tau,
        diag,
    ]
}

/// Baseline intervals are Wald intervals at the Bonferroni level, so they
/// exclude zero exactly for the significant edges.
fn report_baseline(base: &BaselineFit, v: usize) -> [String; 4] {
    let z = Normal::standard().inverse_cdf(1.0 - base.threshold / 2.0);
    let mean = base.estimates();
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    for f in &base.edges {
        let (lo, hi) = f.map_or((0.0, 0.0), |f| (f.beta - z * f.std_error, f.beta + z * f.std_error));
        lower.push(lo);
        upper.push(hi);
    }
    // Boundary cases follow the p-value decision.
    let mut flags = vec![false; mean.len()];
    for &e in &base.significant {
        flags[e] = true;
    }
    for e in 0..mean.len() {
        let excludes = lower[e] > 0.0 || upper[e] < 0.0;
        if excludes != flags[e] {
            if flags[e] {
                let m = mean[e].signum() * f64::MIN_POSITIVE;
                if mean[e] > 0.0 { lower[e] = m } else { upper[e] = m }
            } else if mean[e] > 0.0 {
                lower[e] = 0.0;
            } else {
                upper[e] = 0.0;
            }
        }
    }
    let mut diag = String::from("name,value,flag\n");
    let _ = writeln!(diag, "bonferroni_threshold,{},", base.threshold);
    let _ = writeln!(diag, "skipped_edges,{},", base.skipped.len());
    let _ = writeln!(diag, "significant_edges,{},", base.significant.len());
    [
        matrix_csv(&mean, v),
        edge_csv(&mean, &lower, &upper, &base.significant, v),
        String::from("component,tau_mean,eta_mean,eta_sd,selected\n"),
        diag,
    ]
}
