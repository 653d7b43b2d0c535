//! `xprtool` subcommands.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use xpr_core::detect::{
    delay_profile, detect_mpcs, mpcs_to_string, read_mpc_file, DetectionConfig, LinkMpcs,
};
use xpr_core::estimate::{
    campaign_table, fit_campaign, fit_model2, observation_from_mpc, CampaignRow, FitOptions,
    ModelSelection, ObservationKind, Type3Mode,
};
use xpr_core::fsutil::write_atomic;
use xpr_core::gscm::{matrices_to_string, sample_matrix};
use xpr_core::models::{mean_xpr, XprModel};
use xpr_core::padp::{read_padp, write_padp_pair};
use xpr_core::synthgen::{generate_campaign, truth_to_string, ExcessLossDist, GenConfig, PathCount};
use xpr_core::validate::{error_metric, validation_report, ValidationRow, DEFAULT_REALIZATIONS};

#[derive(Debug, Parser)]
#[command(name = "xprtool", version, about = "Dual-polarized multipath XPR processing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic campaign with ground truth.
    Gen(GenArgs),
    /// Detect multipath components in PADP files.
    Detect(DetectArgs),
    /// Fit the XPR models to detected components.
    Fit(FitArgs),
    /// Compare the models through total cross-polarization power.
    Validate(ValidateArgs),
    /// Sample polarization matrices.
    Sample(SampleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with defaults; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub campaign_id: Option<String>,
    #[arg(long)]
    pub links: Option<usize>,
    /// Planted paths per link.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Noise threshold, dB.
    #[arg(long, allow_hyphen_values = true)]
    pub noise_threshold: Option<f64>,
    /// Truth model parameter file.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory holding `<stem>.main.padp` / `<stem>.cross.padp` pairs.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub window_half_width: Option<usize>,
    #[arg(long)]
    pub removal_half_extent: Option<usize>,
    #[arg(long)]
    pub pairing_tolerance: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
    #[value(name = "2")]
    #[serde(rename = "2")]
    Two,
    Both,
}

impl From<ModelArg> for ModelSelection {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::One => ModelSelection::Model1,
            ModelArg::Two => ModelSelection::Model2,
            ModelArg::Both => ModelSelection::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Type3Arg {
    Bound,
    Drop,
}

impl From<Type3Arg> for Type3Mode {
    fn from(m: Type3Arg) -> Self {
        match m {
            Type3Arg::Bound => Type3Mode::Bound,
            Type3Arg::Drop => Type3Mode::Drop,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory holding `.mpc.csv` files.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, value_enum)]
    pub type3_mode: Option<Type3Arg>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory holding `.mpc.csv` files.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Synthesized totals per link.
    #[arg(long)]
    pub realizations: Option<usize>,
    #[arg(long, value_enum)]
    pub type3_mode: Option<Type3Arg>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of matrices.
    #[arg(long)]
    pub count: Option<usize>,
    /// Excess loss, dB; with `--l-ex-max`, the lower end of a uniform range.
    #[arg(long)]
    pub l_ex: Option<f64>,
    #[arg(long)]
    pub l_ex_max: Option<f64>,
    /// Model parameter file; defaults to the average model 2.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

/// Settings read from `--config`. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub campaign_id: Option<String>,
    pub links: Option<usize>,
    pub paths: Option<usize>,
    pub paths_mean: Option<f64>,
    pub min_separation: Option<usize>,
    pub l_ex_mean: Option<f64>,
    pub l_ex_cap: Option<f64>,
    pub noise_threshold_db: Option<f64>,
    pub noise_floor_db: Option<f64>,
    pub n_delay: Option<usize>,
    pub delta_tau_ns: Option<f64>,
    pub n_angle: Option<usize>,
    pub delta_phi_deg: Option<f64>,
    pub frequency_ghz: Option<f64>,
    pub bandwidth_ghz: Option<f64>,
    pub bs_height: Option<f64>,
    pub ms_height: Option<f64>,
    pub d_min: Option<f64>,
    pub d_max: Option<f64>,
    pub window_half_width: Option<usize>,
    pub removal_half_extent: Option<usize>,
    pub pairing_tolerance: Option<usize>,
    pub model: Option<ModelArg>,
    pub type3_mode: Option<Type3Arg>,
    pub realizations: Option<usize>,
    pub count: Option<usize>,
    pub l_ex: Option<f64>,
    pub l_ex_max: Option<f64>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| anyhow!("missing --{name} (flag or config key)"))
}

fn out_dir(common: &CommonArgs, cfg: &FileConfig) -> Result<PathBuf> {
    let dir = required(common.out.clone(), cfg.out.clone(), "out")?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).map_err(Into::into)
}

/// Files in `dir` whose names end with `suffix`, sorted by name.
fn files_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let is_match = path.is_file()
            && path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(suffix) && !n.starts_with('.'));
        if is_match {
            found.push(path);
        }
    }
    found.sort();
    Ok(found)
}

fn stem_of(path: &Path, suffix: &str) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    name.strip_suffix(suffix).unwrap_or(name).to_string()
}

fn read_model(path: &Path) -> Result<XprModel> {
    XprModel::read(path).with_context(|| format!("reading parameters {}", path.display()))
}

/// Parse arguments and run; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("xprtool: error: {e:#}");
            1
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Sample(a) => cmd_sample(a),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let seed = required(args.common.seed, cfg.seed, "seed")?;
    let out = out_dir(&args.common, &cfg)?;
    let d = GenConfig::default();

    let truth_model = match args.params.as_ref().or(cfg.params.as_ref()) {
        Some(p) => read_model(p)?,
        None => d.truth_model,
    };
    let paths_per_link = match (args.paths.or(cfg.paths), cfg.paths_mean) {
        (Some(n), _) => PathCount::Fixed(n),
        (None, Some(mean)) => PathCount::Poisson { mean },
        (None, None) => d.paths_per_link,
    };
    let excess_loss = match (cfg.l_ex_mean, cfg.l_ex_cap) {
        (None, None) => d.excess_loss,
        (mean, cap) => ExcessLossDist::Exponential {
            mean: mean.unwrap_or(15.0),
            cap: cap.unwrap_or(60.0),
        },
    };
    let noise_threshold_db = args
        .noise_threshold
        .or(cfg.noise_threshold_db)
        .unwrap_or(d.noise_threshold_db);
    let config = GenConfig {
        campaign_id: args
            .campaign_id
            .clone()
            .or(cfg.campaign_id.clone())
            .unwrap_or(d.campaign_id),
        truth_model,
        n_links: args.links.or(cfg.links).unwrap_or(d.n_links),
        paths_per_link,
        min_separation: cfg.min_separation.unwrap_or(d.min_separation),
        excess_loss,
        noise_floor_db: cfg
            .noise_floor_db
            .unwrap_or(noise_threshold_db + (d.noise_floor_db - d.noise_threshold_db)),
        noise_threshold_db,
        delta_tau: cfg.delta_tau_ns.map_or(d.delta_tau, |v| v * 1e-9),
        n_delay: cfg.n_delay.unwrap_or(d.n_delay),
        delta_phi: cfg.delta_phi_deg.unwrap_or(d.delta_phi),
        n_angle: cfg.n_angle.unwrap_or(d.n_angle),
        center_frequency: cfg.frequency_ghz.map_or(d.center_frequency, |v| v * 1e9),
        bandwidth: cfg.bandwidth_ghz.map_or(d.bandwidth, |v| v * 1e9),
        bs_height: cfg.bs_height.unwrap_or(d.bs_height),
        ms_height: cfg.ms_height.unwrap_or(d.ms_height),
        distance_range: (
            cfg.d_min.unwrap_or(d.distance_range.0),
            cfg.d_max.unwrap_or(d.distance_range.1),
        ),
        seed,
    };

    let campaign = generate_campaign(&config)?;
    let truth_dir = out.join("truth");
    fs::create_dir_all(&truth_dir)
        .with_context(|| format!("creating {}", truth_dir.display()))?;
    for link in &campaign.links {
        let id = &link.padp.meta().link_id;
        write_padp_pair(&link.padp, &out, id)?;
        write(
            &truth_dir.join(format!("{id}.mpc.csv")),
            &mpcs_to_string(&link.truth_mpcs()?),
        )?;
    }
    write(&out.join("truth.txt"), &truth_to_string(&campaign))?;
    Ok(())
}

fn scatter_and_band(links: &[LinkMpcs]) -> Result<(String, Option<String>)> {
    let mut scatter = String::from("# l_ex_db xpr_db type (1 measured, 2 lower bound, 3 upper bound)\n");
    let mut observations = Vec::new();
    for link in links {
        for m in &link.mpcs {
            let o = observation_from_mpc(m, &link.meta)?;
            let value = match o.kind {
                ObservationKind::Exact(v)
                | ObservationKind::RightCensored(v)
                | ObservationKind::LeftCensored(v) => v,
            };
            let l = o.l_ex.unwrap_or(f64::NAN);
            let _ = writeln!(scatter, "{l:.4} {value:.4} {}", m.mpc_type.code());
            observations.push(o);
        }
    }
    let band = match fit_model2(&observations, &FitOptions::default()) {
        Ok(fit) => {
            let sigma = fit.model.sigma();
            let l_max = observations
                .iter()
                .filter_map(|o| o.l_ex)
                .fold(0.0f64, f64::max)
                .ceil();
            let mut band = String::from("# l_ex_db mu_db mu_minus_2sigma_db mu_plus_2sigma_db\n");
            let steps = (l_max / 0.5) as usize;
            for k in 0..=steps {
                let l = k as f64 * 0.5;
                let mu = mean_xpr(&fit.model, l);
                let _ = writeln!(
                    band,
                    "{l:.1} {mu:.4} {:.4} {:.4}",
                    mu - 2.0 * sigma,
                    mu + 2.0 * sigma
                );
            }
            Some(band)
        }
        Err(e) => {
            eprintln!("xprtool: note: no model 2 band written: {e}");
            None
        }
    };
    Ok((scatter, band))
}

pub fn cmd_detect(args: &DetectArgs) -> Result<()> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let input = required(args.input.clone(), cfg.input.clone(), "input")?;
    let out = out_dir(&args.common, &cfg)?;
    let inputs = files_with_suffix(&input, ".main.padp")?;
    if inputs.is_empty() {
        bail!("no .main.padp files in {}", input.display());
    }
    let mut links = Vec::new();
    for path in &inputs {
        let stem = stem_of(path, ".main.padp");
        let padp = read_padp(path)?;
        let d = DetectionConfig::for_link(padp.meta());
        let config = DetectionConfig {
            window_half_width: args
                .window_half_width
                .or(cfg.window_half_width)
                .unwrap_or(d.window_half_width),
            removal_half_extent: args
                .removal_half_extent
                .or(cfg.removal_half_extent)
                .unwrap_or(d.removal_half_extent),
            pairing_tolerance: args
                .pairing_tolerance
                .or(cfg.pairing_tolerance)
                .unwrap_or(d.pairing_tolerance),
            ..d
        };
        let mpcs = detect_mpcs(&padp, &config).map_err(|e| e.in_file(path))?;
        let link = LinkMpcs {
            meta: padp.meta().clone(),
            mpcs,
        };
        write(&out.join(format!("{stem}.mpc.csv")), &mpcs_to_string(&link))?;

        let mut profile = String::from("# tau_ns profile_db\n");
        for (tau, p) in padp.delays().iter().zip(delay_profile(&padp)) {
            let _ = writeln!(profile, "{:.4} {p:.4}", tau * 1e9);
        }
        write(&out.join(format!("{stem}.profile.dat")), &profile)?;

        let mut markers = String::from("# tau_ns phi_deg type p_main_db p_cross_db\n");
        for m in &link.mpcs {
            let db = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                markers,
                "{:.4} {:.4} {} {} {}",
                m.tau * 1e9,
                m.phi,
                m.mpc_type.code(),
                db(m.p_main),
                db(m.p_cross)
            );
        }
        write(&out.join(format!("{stem}.markers.dat")), &markers)?;
        links.push(link);
    }
    let (scatter, band) = scatter_and_band(&links)?;
    write(&out.join("xpr_scatter.dat"), &scatter)?;
    if let Some(band) = band {
        write(&out.join("xpr_band.dat"), &band)?;
    }
    Ok(())
}

/// MPC files of `dir` grouped by campaign id.
fn load_campaigns(dir: &Path) -> Result<BTreeMap<String, Vec<LinkMpcs>>> {
    let files = files_with_suffix(dir, ".mpc.csv")?;
    if files.is_empty() {
        bail!("no .mpc.csv files in {}", dir.display());
    }
    let mut campaigns: BTreeMap<String, Vec<LinkMpcs>> = BTreeMap::new();
    for path in files {
        let link = read_mpc_file(&path).map_err(|e| e.in_file(&path))?;
        if link.mpcs.is_empty() {
            bail!("{}: no MPC records", path.display());
        }
        campaigns
            .entry(link.meta.campaign_id.clone())
            .or_default()
            .push(link);
    }
    Ok(campaigns)
}

fn fit_options(seed: Option<u64>, type3: Option<Type3Arg>) -> FitOptions {
    let d = FitOptions::default();
    FitOptions {
        seed: seed.unwrap_or(d.seed),
        type3_mode: type3.map_or(d.type3_mode, Into::into),
        ..d
    }
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let input = required(args.input.clone(), cfg.input.clone(), "input")?;
    let out = out_dir(&args.common, &cfg)?;
    let which: ModelSelection = args.model.or(cfg.model).unwrap_or(ModelArg::Both).into();
    let opts = fit_options(
        args.common.seed.or(cfg.seed),
        args.type3_mode.or(cfg.type3_mode),
    );
    let mut rows = Vec::new();
    for (id, links) in load_campaigns(&input)? {
        let row = fit_campaign(&links, which, &opts)
            .with_context(|| format!("fitting campaign {id}"))?;
        write(&out.join(format!("fit_{}.toml", file_safe(&id))), &row.fit_blocks())?;
        rows.push(row);
    }
    write(&out.join("fit_table.csv"), &campaign_table(&rows))
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let input = required(args.input.clone(), cfg.input.clone(), "input")?;
    let seed = required(args.common.seed, cfg.seed, "seed")?;
    let out = out_dir(&args.common, &cfg)?;
    let n = args
        .realizations
        .or(cfg.realizations)
        .unwrap_or(DEFAULT_REALIZATIONS);
    let opts = fit_options(None, args.type3_mode.or(cfg.type3_mode));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Vec::new();
    let mut rows: Vec<CampaignRow> = Vec::new();
    for (id, links) in load_campaigns(&input)? {
        let mut row = fit_campaign(&links, ModelSelection::Both, &opts)
            .with_context(|| format!("fitting campaign {id}"))?;
        for number in [1u8, 2] {
            let fit = if number == 1 { &row.model1 } else { &row.model2 };
            let model = fit.as_ref().expect("both models fitted").model;
            let metric = error_metric(&links, &model, n, &mut rng)
                .with_context(|| format!("validating model {number} on campaign {id}"))?;
            if number == 1 {
                row.mu_eps1 = Some(metric.mu_eps);
            } else {
                row.mu_eps2 = Some(metric.mu_eps);
            }
            report.push(ValidationRow {
                campaign_id: id.clone(),
                model: number,
                metric,
            });
        }
        rows.push(row);
    }
    write(&out.join("validation.csv"), &validation_report(&report))?;
    write(&out.join("campaign_table.csv"), &campaign_table(&rows))
}

pub fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let seed = required(args.common.seed, cfg.seed, "seed")?;
    let out = out_dir(&args.common, &cfg)?;
    let model = match args.params.as_ref().or(cfg.params.as_ref()) {
        Some(p) => read_model(p)?,
        None => XprModel::AVERAGE,
    };
    let count = args.count.or(cfg.count).unwrap_or(1000);
    let lo = args.l_ex.or(cfg.l_ex).unwrap_or(0.0);
    let hi = args.l_ex_max.or(cfg.l_ex_max);
    if let Some(hi) = hi {
        if !(hi >= lo) {
            bail!("--l-ex-max {hi} is below --l-ex {lo}");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch: Vec<_> = (0..count)
        .map(|_| {
            let l = match hi {
                Some(hi) if hi > lo => rng.random_range(lo..hi),
                _ => lo,
            };
            (l, sample_matrix(&model, l, &mut rng))
        })
        .collect();
    write(&out.join("matrices.csv"), &matrices_to_string(&batch))
}
