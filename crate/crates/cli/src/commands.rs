use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use outbreak_core::data::{load_edge_list, load_surveillance, write_counts, write_edge_list, write_labeled_matrix, write_populations, SurveillanceData};
use outbreak_core::eval::{posterior_outbreak_probabilities, posterior_predictive, roc_auc, OutbreakReplication};
use outbreak_core::evidence::{log_marginal_likelihood, posterior_model_probs, DEFAULT_DRAWS};
use outbreak_core::model::{ModelSpec, Parameters, SurveillanceModel, Variant};
use outbreak_core::sampler::{run_chains, PosteriorSamples, SamplerConfig};
use outbreak_core::simulator::{nine_city_adjacency, nine_city_labels, simulate_dataset, SimulationConfig, SimulationTruth};

use crate::error::CliError;

pub const COUNTS_FILE: &str = "counts.csv";
pub const POPULATIONS_FILE: &str = "populations.csv";
pub const ADJACENCY_FILE: &str = "adjacency.edges";
pub const TRUTH_FILE: &str = "truth.json";
pub const FIT_CONFIG_FILE: &str = "fit.conf";
pub const PROBABILITIES_FILE: &str = "outbreak_probabilities.csv";

/// What a command produced, for the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub config: String,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    /// File names inside the output directory.
    pub outputs: Vec<String>,
    /// Set when the run completed but failed the convergence gate.
    pub gate_failure: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Plain-text key=value configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides any seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

impl Common {
    fn config_text(&self) -> Result<String, CliError> {
        match &self.config {
            Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e)),
            None => Ok(String::new()),
        }
    }

    fn config_inputs(&self) -> Vec<PathBuf> {
        self.config.iter().cloned().collect()
    }
}

fn write_text(out: &Path, name: &str, text: &str) -> Result<String, CliError> {
    let path = out.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(name.to_owned())
}

fn data_files(dir: &Path) -> [PathBuf; 3] {
    [dir.join(COUNTS_FILE), dir.join(POPULATIONS_FILE), dir.join(ADJACENCY_FILE)]
}

fn load_data(dir: &Path) -> Result<SurveillanceData, CliError> {
    let [c, p, a] = data_files(dir);
    Ok(load_surveillance(c, p, a)?)
}

/// A fit directory: its configuration and retained draws.
struct Fitted {
    spec: ModelSpec,
    samples: PosteriorSamples,
    files: Vec<PathBuf>,
}

fn load_fit(dir: &Path, data: &SurveillanceData) -> Result<Fitted, CliError> {
    let conf = dir.join(FIT_CONFIG_FILE);
    let text = std::fs::read_to_string(&conf).map_err(|e| CliError::io(&conf, e))?;
    let spec = ModelSpec::from_config(&text)?;
    let sampler = SamplerConfig::from_config(&text)?;
    let chains: Vec<PathBuf> = (1..=sampler.n_chains).map(|c| dir.join(format!("chain{c}.csv"))).collect();
    let samples = PosteriorSamples::read_csv(spec, data.num_times(), data.num_locations(), &chains)?;
    let mut files = vec![conf];
    files.extend(chains);
    Ok(Fitted { spec, samples, files })
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Edge list over the configured location labels; defaults to the
    /// nine-city grid when the labels match it.
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome, CliError> {
    let mut config = SimulationConfig::from_config(&args.common.config_text()?)?;
    if let Some(seed) = args.common.seed {
        config.seed = seed;
    }
    let mut inputs = args.common.config_inputs();
    let adjacency = match &args.adjacency {
        Some(p) => {
            inputs.push(p.clone());
            load_edge_list(p, &config.location_labels)?
        }
        None if config.location_labels == nine_city_labels() => nine_city_adjacency(),
        None => return Err(CliError::Validation("--adjacency is required unless the locations are the nine-city grid".into())),
    };
    let (data, truth) = simulate_dataset(&config, &adjacency)?;
    let out = &args.common.out;
    write_counts(out.join(COUNTS_FILE), &data)?;
    write_populations(out.join(POPULATIONS_FILE), &data)?;
    write_edge_list(out.join(ADJACENCY_FILE), data.adjacency(), data.location_labels())?;
    truth.write_json(out.join(TRUTH_FILE))?;
    let conf = write_text(out, "simulation.conf", &config.to_config())?;
    if truth.outbreaks_inert {
        eprintln!("note: model 0 has no outbreak term; the outbreak paths in {TRUTH_FILE} did not affect the counts");
    }
    Ok(Outcome {
        config: config.to_config(),
        seed: Some(config.seed),
        inputs,
        outputs: vec![COUNTS_FILE.into(), POPULATIONS_FILE.into(), ADJACENCY_FILE.into(), TRUTH_FILE.into(), conf],
        gate_failure: None,
    })
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory with counts.csv, populations.csv and adjacency.edges.
    #[arg(long)]
    pub data: PathBuf,
    /// Overrides the configured model variant (0, I, ..., VII).
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Starting parameters as JSON.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Largest acceptable R-hat.
    #[arg(long, default_value_t = 1.05)]
    pub rhat_gate: f64,
}

pub fn fit(args: &FitArgs) -> Result<Outcome, CliError> {
    let mut text = args.common.config_text()?;
    if let Some(v) = args.variant {
        text.push_str(&format!("\nvariant={v}\n"));
    }
    let spec = ModelSpec::from_config(&text)?;
    let mut sampler = SamplerConfig::from_config(&text)?;
    if let Some(seed) = args.common.seed {
        sampler.seed = seed;
    }
    let data = load_data(&args.data)?;
    let mut inputs = args.common.config_inputs();
    inputs.extend(data_files(&args.data));
    let model = SurveillanceModel::new(data, spec)?;
    let init = match &args.init {
        Some(p) => {
            inputs.push(p.clone());
            let raw = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let init: Parameters =
                serde_json::from_str(&raw).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            init.check_dims(model.data(), &spec)?;
            if !init.in_support() {
                return Err(CliError::Validation(format!("{}: starting parameters are outside the support", p.display())));
            }
            init
        }
        None => model.initial_parameters(),
    };
    let samples = run_chains(&model, &sampler, &init)?;

    let out = &args.common.out;
    let config = format!("{}{}", spec.to_config(), sampler.to_config());
    let mut outputs = vec![write_text(out, FIT_CONFIG_FILE, &config)?];
    for p in samples.write_csv(out, "chain")? {
        outputs.push(p.file_name().unwrap().to_string_lossy().into_owned());
    }
    let mut acc = String::from("chain,block,rate\n");
    for (c, rates) in samples.acceptance_rates.iter().enumerate() {
        for (block, rate) in rates {
            writeln!(acc, "{},{block},{rate}", c + 1).unwrap();
        }
    }
    outputs.push(write_text(out, "acceptance.csv", &acc)?);

    let mut gate_failure = None;
    if samples.num_chains() < 2 {
        eprintln!("warning: R-hat needs at least two chains; convergence gate skipped");
    } else {
        let report = samples.rhat()?;
        let mut table = String::from("parameter,rhat,degenerate\n");
        for e in &report.entries {
            writeln!(table, "{},{},{}", e.name, e.value, e.degenerate).unwrap();
        }
        outputs.push(write_text(out, "rhat.csv", &table)?);
        if let Some(worst) = report.worst() {
            eprintln!("max R-hat {:.4} ({})", worst.value, worst.name);
            if !(worst.value <= args.rhat_gate) {
                gate_failure = Some(format!("R-hat {:.4} for {} exceeds {}", worst.value, worst.name, args.rhat_gate));
            }
        }
    }
    Ok(Outcome {
        config,
        seed: Some(sampler.seed),
        inputs,
        outputs,
        gate_failure,
    })
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory of `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Average over at most this many evenly spaced draws.
    #[arg(long)]
    pub max_draws: Option<usize>,
}

pub fn detect(args: &DetectArgs) -> Result<Outcome, CliError> {
    let data = load_data(&args.data)?;
    let fitted = load_fit(&args.fit, &data)?;
    let mut inputs = data_files(&args.data).to_vec();
    inputs.extend(fitted.files);
    let model = SurveillanceModel::new(data, fitted.spec)?;
    let probs = posterior_outbreak_probabilities(&model, &fitted.samples, args.max_draws)?;
    let d = model.data();
    write_labeled_matrix(args.common.out.join(PROBABILITIES_FILE), "time", d.time_labels(), d.location_labels(), |t, i| {
        probs[i][t].to_string()
    })?;
    Ok(Outcome {
        config: format!("max_draws={}\n", args.max_draws.map_or("all".into(), |n| n.to_string())),
        seed: None,
        inputs,
        outputs: vec![PROBABILITIES_FILE.into()],
        gate_failure: None,
    })
}

#[derive(Debug, Clone, Args)]
pub struct EvidenceArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directories of `fit`, one per candidate model.
    #[arg(long = "fit", required = true)]
    pub fits: Vec<PathBuf>,
    /// Importance draws per model.
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    pub draws: usize,
    /// Prior model weights, comma separated; uniform by default.
    #[arg(long, value_delimiter = ',')]
    pub prior_weights: Option<Vec<f64>>,
}

pub fn evidence(args: &EvidenceArgs) -> Result<Outcome, CliError> {
    let seed = args.common.seed.unwrap_or(1);
    let data = load_data(&args.data)?;
    let mut inputs = data_files(&args.data).to_vec();
    let weights = args.prior_weights.clone().unwrap_or_else(|| vec![1.0; args.fits.len()]);
    let mut rows = Vec::new();
    for (k, dir) in args.fits.iter().enumerate() {
        let fitted = load_fit(dir, &data)?;
        inputs.extend(fitted.files.iter().cloned());
        let model = SurveillanceModel::new(data.clone(), fitted.spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(outbreak_core::math::derive_seed(seed, k as u64));
        let est = log_marginal_likelihood(&model, &fitted.samples, args.draws, &mut rng)?;
        eprintln!("model {}: log evidence {:.2} (MC s.e. {:.3})", fitted.spec.variant, est.log_marginal, est.mc_standard_error);
        rows.push((fitted.spec.variant, dir.display().to_string(), est));
    }
    let logs: Vec<f64> = rows.iter().map(|r| r.2.log_marginal).collect();
    let probs = posterior_model_probs(&logs, &weights)?;
    let mut table = String::from("model,fit,log_evidence,mc_standard_error,effective_sample_size,probability\n");
    for ((variant, dir, est), p) in rows.iter().zip(&probs) {
        writeln!(
            table,
            "{variant},{dir},{},{},{},{p}",
            est.log_marginal, est.mc_standard_error, est.effective_sample_size
        )
        .unwrap();
    }
    let name = write_text(&args.common.out, "evidence.csv", &table)?;
    let weights_text: Vec<String> = weights.iter().map(|w| w.to_string()).collect();
    Ok(Outcome {
        config: format!("draws={}\nprior_weights={}\n", args.draws, weights_text.join(",")),
        seed: Some(seed),
        inputs,
        outputs: vec![name],
        gate_failure: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Fresh,
    Smoothed,
}

#[derive(Debug, Clone, Args)]
pub struct PpcArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub fit: PathBuf,
    /// How replicate outbreak indicators are drawn.
    #[arg(long, value_enum, default_value_t = Mode::Fresh)]
    pub mode: Mode,
}

pub fn ppc(args: &PpcArgs) -> Result<Outcome, CliError> {
    let seed = args.common.seed.unwrap_or(1);
    let data = load_data(&args.data)?;
    let fitted = load_fit(&args.fit, &data)?;
    let mut inputs = data_files(&args.data).to_vec();
    inputs.extend(fitted.files);
    let model = SurveillanceModel::new(data, fitted.spec)?;
    let mode = match args.mode {
        Mode::Fresh => OutbreakReplication::FreshPath,
        Mode::Smoothed => OutbreakReplication::Smoothed,
    };
    let band = posterior_predictive(&model, &fitted.samples, mode, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut table = String::from("time,observed,lower,mean,upper\n");
    for (t, label) in model.data().time_labels().iter().enumerate() {
        let obs = band.observed[t].map_or("NA".to_owned(), |v| v.to_string());
        writeln!(table, "{label},{obs},{},{},{}", band.lower[t], band.mean[t], band.upper[t]).unwrap();
    }
    let name = write_text(&args.common.out, "ppc.csv", &table)?;
    eprintln!("{:.1}% of observed totals inside the 95% band", 100.0 * band.coverage_fraction);
    let summary = serde_json::json!({ "mode": format!("{mode:?}"), "coverage_fraction": band.coverage_fraction });
    let summary_name = write_text(&args.common.out, "ppc_summary.json", &format!("{summary:#}\n"))?;
    Ok(Outcome {
        config: format!("mode={mode:?}\n"),
        seed: Some(seed),
        inputs,
        outputs: vec![name, summary_name],
        gate_failure: None,
    })
}

#[derive(Debug, Clone, Args)]
pub struct RocArgs {
    #[command(flatten)]
    pub common: Common,
    /// `truth.json` from `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Probability matrix from `detect`.
    #[arg(long)]
    pub probabilities: PathBuf,
    /// Named location subset, `NAME=LABEL,LABEL,...`; repeatable. The
    /// subset `all` is always reported.
    #[arg(long = "subset")]
    pub subsets: Vec<String>,
}

/// Reads a time × location matrix and returns it as `[i][t]` in the order
/// of `labels`.
fn read_probabilities(path: &Path, labels: &[String]) -> Result<Vec<Vec<f64>>, CliError> {
    let bad = |m: String| CliError::Validation(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = rdr.headers().map_err(|e| bad(e.to_string()))?.iter().skip(1).map(|s| s.trim().to_owned()).collect();
    let columns: Vec<usize> = labels
        .iter()
        .map(|l| header.iter().position(|h| h == l).ok_or_else(|| bad(format!("no column for location `{l}`"))))
        .collect::<Result<_, _>>()?;
    let mut out = vec![Vec::new(); labels.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for (i, &c) in columns.iter().enumerate() {
            let cell = rec.get(c + 1).unwrap_or("").trim();
            out[i].push(cell.parse::<f64>().map_err(|_| bad(format!("bad probability `{cell}`")))?);
        }
    }
    Ok(out)
}

pub fn roc(args: &RocArgs) -> Result<Outcome, CliError> {
    let truth = SimulationTruth::read_json(&args.truth)?;
    if truth.outbreaks_inert {
        return Err(CliError::Validation("model 0 truth has no outbreaks that affected the counts".into()));
    }
    let labels = &truth.location_labels;
    let scores = read_probabilities(&args.probabilities, labels)?;
    let mut subsets: Vec<(String, Option<Vec<usize>>)> = vec![("all".into(), None)];
    for s in &args.subsets {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("subset `{s}` is not NAME=LABEL,...")))?;
        let idx = list
            .split(',')
            .map(|l| {
                labels
                    .iter()
                    .position(|x| x == l.trim())
                    .ok_or_else(|| CliError::Validation(format!("unknown location `{}` in subset {name}", l.trim())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        subsets.push((name.trim().to_owned(), Some(idx)));
    }
    let mut curve = String::from("subset,fpr,tpr\n");
    let mut auc = String::from("subset,auc\n");
    for (name, idx) in &subsets {
        let r = roc_auc(&truth.outbreaks, &scores, idx.as_deref())?;
        for (x, y) in &r.points {
            writeln!(curve, "{name},{x},{y}").unwrap();
        }
        writeln!(auc, "{name},{}", r.auc).unwrap();
        eprintln!("AUC {name}: {:.3}", r.auc);
    }
    let out = &args.common.out;
    Ok(Outcome {
        config: args.subsets.iter().map(|s| format!("subset={s}\n")).collect(),
        seed: None,
        inputs: vec![args.truth.clone(), args.probabilities.clone()],
        outputs: vec![write_text(out, "roc.csv", &curve)?, write_text(out, "auc.csv", &auc)?],
        gate_failure: None,
    })
}
