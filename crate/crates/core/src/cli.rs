//! Batch front end: experiment configuration files and the `psd`, `bep`,
//! `sim` and `validate` commands.
//!
//! Configurations are TOML (format version 1). Every output file starts with
//! `#`-prefixed lines that embed the fully resolved configuration and seed, so
//! a result can always be traced back to the run that produced it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    bep_multi, bep_single, mai_variance_classical, mai_variance_multi, noise_variance, BepEnsemble,
};
use crate::channel::{sample_channel, ChannelParams};
use crate::error::{Error, Result};
use crate::link::{draw_realization, CombinerSpec, LinkSetup};
use crate::montecarlo::{
    estimate_mai_variance, estimate_noise_variance_with_std, run_ber_sweep, BerEstimate, StopRule, TrialPlan,
};
use crate::pulses::{make_mhp, Pulse};
use crate::rng::{stream, StreamRole};
use crate::signal::Sampled;
use crate::spectral::{analytic_psd, empirical_psd, psd_mismatch};
use crate::transceiver::{
    generate_codes, noise_sigma_for_ebn0_db, random_bits, transmit_block, CombiningScheme, PathSelection,
    SystemConfig,
};

pub const CONFIG_VERSION: u32 = 1;

const NS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub system: SystemSection,
    pub channel: ChannelSection,
    #[serde(default)]
    pub combiner: CombinerSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub trials: TrialSection,
    #[serde(default)]
    pub theory: TheorySection,
    #[serde(default)]
    pub psd: PsdSection,
    #[serde(default)]
    pub validate: ValidateSection,
    pub plans: Vec<PulsePlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub users: usize,
    pub frames_per_symbol: usize,
    pub chips_per_frame: usize,
    pub th_alphabet: usize,
    pub chip_time_ns: f64,
    #[serde(default = "default_sample_time_ns")]
    pub sample_time_ns: f64,
    #[serde(default = "default_interferer_power")]
    pub interferer_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub paths: usize,
    pub decay: f64,
    pub lognormal_sigma2: f64,
    pub mean_arrival_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombinerSection {
    /// `"mrc"` or `"egc"`.
    pub scheme: String,
    /// `"all"`, `"partial:M"` or `"selective:M"`.
    pub selection: String,
}

impl Default for CombinerSection {
    fn default() -> Self {
        Self {
            scheme: "mrc".into(),
            selection: "all".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub ebn0_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSection {
    pub realizations: usize,
    pub bits_per_realization: usize,
    pub min_errors: u64,
    pub max_bits: u64,
}

impl Default for TrialSection {
    fn default() -> Self {
        Self {
            realizations: 200,
            bits_per_realization: 500,
            min_errors: 50,
            max_bits: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySection {
    pub realizations: usize,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self { realizations: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdSection {
    pub symbols: usize,
    pub segment_symbols: usize,
}

impl Default for PsdSection {
    fn default() -> Self {
        Self {
            symbols: 2000,
            segment_symbols: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub channel_draws: usize,
    pub mai_pairs: usize,
    pub mai_draws: usize,
    pub noise_trials: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            channel_draws: 100_000,
            mai_pairs: 3,
            mai_draws: 1_000_000,
            noise_trials: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulsePlan {
    pub name: String,
    pub pulses: Vec<PulseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    #[serde(default = "default_shape")]
    pub shape: String,
    pub order: u32,
    #[serde(default = "default_tau_p_ns")]
    pub tau_p_ns: f64,
}

// The library defaults, in the file's nanosecond units.
const DEFAULT_SAMPLE_TIME_NS: f64 = 0.02;
const DEFAULT_TAU_P_NS: f64 = 0.05;

fn default_sample_time_ns() -> f64 {
    DEFAULT_SAMPLE_TIME_NS
}

fn default_interferer_power() -> f64 {
    5.0
}

fn default_shape() -> String {
    "mhp".into()
}

fn default_tau_p_ns() -> f64 {
    DEFAULT_TAU_P_NS
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config {
            path: PathBuf::from("<inline>"),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    /// Checks every module invariant that can be checked before a run.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.plans.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one pulse plan is required".into(),
            ));
        }
        for (i, p) in self.plans.iter().enumerate() {
            if p.name.is_empty()
                || !p
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::InvalidParameter(format!(
                    "plan name '{}' must be non-empty and use only [A-Za-z0-9_-]",
                    p.name
                )));
            }
            if self.plans[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate plan name '{}'",
                    p.name
                )));
            }
            self.setup(p)?;
        }
        if self.sweep.ebn0_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("Eb/N0 values must be finite".into()));
        }
        self.trial_plan()?;
        if self.theory.realizations == 0 {
            return Err(Error::InvalidParameter(
                "theory.realizations must be at least 1".into(),
            ));
        }
        if self.psd.segment_symbols == 0 || self.psd.symbols < self.psd.segment_symbols {
            return Err(Error::InvalidParameter(
                "psd needs at least one whole segment".into(),
            ));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.system.sample_time_ns * NS
    }

    pub fn system_config(&self, pulse_types: usize) -> Result<SystemConfig> {
        let s = &self.system;
        Ok(SystemConfig::new(
            s.users,
            s.frames_per_symbol,
            s.chips_per_frame,
            s.th_alphabet,
            pulse_types,
            s.chip_time_ns * NS,
        )?
        .with_interferer_power(s.interferer_power))
    }

    pub fn channel_params(&self) -> Result<ChannelParams> {
        let c = &self.channel;
        ChannelParams::new(c.paths, c.decay, c.lognormal_sigma2, c.mean_arrival_ns * NS)
    }

    pub fn combiner_spec(&self) -> Result<CombinerSpec> {
        let scheme = match self.combiner.scheme.as_str() {
            "mrc" => CombiningScheme::Mrc,
            "egc" => CombiningScheme::Egc,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown combining scheme '{other}'"
                )));
            }
        };
        let sel = self.combiner.selection.as_str();
        let count = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::InvalidParameter(format!("bad path count in selection '{sel}'")))
        };
        let selection = if sel == "all" {
            PathSelection::All
        } else if let Some(m) = sel.strip_prefix("partial:") {
            PathSelection::Partial(count(m)?)
        } else if let Some(m) = sel.strip_prefix("selective:") {
            PathSelection::Selective(count(m)?)
        } else {
            return Err(Error::InvalidParameter(format!("unknown path selection '{sel}'")));
        };
        if let PathSelection::Partial(m) | PathSelection::Selective(m) = selection {
            if m == 0 || m > self.channel.paths {
                return Err(Error::InvalidParameter(format!(
                    "cannot combine {m} of {} paths",
                    self.channel.paths
                )));
            }
        }
        Ok(CombinerSpec { scheme, selection })
    }

    pub fn pulses(&self, plan: &PulsePlan) -> Result<Vec<Pulse>> {
        if plan.pulses.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "plan '{}' has no pulses",
                plan.name
            )));
        }
        plan.pulses
            .iter()
            .map(|p| match p.shape.as_str() {
                "mhp" => make_mhp(p.order, p.tau_p_ns * NS, self.dt()),
                other => Err(Error::InvalidParameter(format!("unknown pulse shape '{other}'"))),
            })
            .collect()
    }

    pub fn setup(&self, plan: &PulsePlan) -> Result<LinkSetup> {
        let pulses = self.pulses(plan)?;
        let config = self.system_config(pulses.len())?;
        LinkSetup::new(config, pulses, self.channel_params()?, self.combiner_spec()?)
    }

    pub fn trial_plan(&self) -> Result<TrialPlan> {
        let t = &self.trials;
        TrialPlan::new(
            self.seed,
            t.realizations,
            t.bits_per_realization,
            StopRule {
                max_bits: t.max_bits,
                min_errors: t.min_errors,
            },
        )
    }

    fn sweep(&self) -> Result<&[f64]> {
        if self.sweep.ebn0_db.is_empty() {
            return Err(Error::Usage("the sweep.ebn0_db list is empty".into()));
        }
        Ok(&self.sweep.ebn0_db)
    }
}

fn header(command: &str, cfg: &ExperimentConfig, plan: &str, extra: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# ir-uwb {command}");
    let _ = writeln!(s, "# plan = {plan}");
    let _ = writeln!(s, "# seed = {}", cfg.seed);
    for line in extra {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "# resolved configuration:");
    for line in cfg.to_toml().lines() {
        let _ = writeln!(s, "#   {line}");
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Analytic and empirical PSD of one plan with their mismatch.
#[derive(Debug, Clone)]
pub struct PsdOutcome {
    pub plan: String,
    pub mismatch: f64,
    pub band: (f64, f64),
    pub path: PathBuf,
}

/// Analytic and empirical PSDs of one plan and their relative L2 mismatch
/// over the band holding 99% of the analytic power.
pub fn psd_comparison(
    cfg: &ExperimentConfig,
    plan: &PulsePlan,
) -> Result<(
    crate::spectral::SpectralDensity,
    crate::spectral::SpectralDensity,
    (f64, f64),
    f64,
)> {
    let setup = cfg.setup(plan)?;
    let sys = &setup.config;
    let grid = sys.check_pulses(&setup.pulses)?;
    let n_sym = cfg.psd.symbols;
    let seg = cfg.psd.segment_symbols * grid.symbol;
    let n_seg = n_sym / cfg.psd.segment_symbols;
    let bits = random_bits(n_sym, &mut stream(cfg.seed, 0, StreamRole::Bits(0)));
    let codes = generate_codes(
        sys,
        n_sym * sys.frames_per_symbol,
        &mut stream(cfg.seed, 0, StreamRole::Codes(0)),
    );
    let tx = transmit_block(sys, &setup.pulses, &bits, &codes)?;
    let empirical = empirical_psd(&tx, seg, n_seg, grid.symbol)?;
    let analytic = analytic_psd(&setup.pulses, sys, seg)?;
    let band = analytic.power_band(0.99);
    let mismatch = psd_mismatch(&analytic, &empirical, band)?;
    Ok((analytic, empirical, band, mismatch))
}

pub fn cmd_psd(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PsdOutcome>> {
    let mut outcomes = Vec::new();
    for plan in &cfg.plans {
        let (analytic, empirical, band, mismatch) = psd_comparison(cfg, plan)?;
        let (freqs, a1) = analytic.one_sided();
        let (_, e1) = empirical.one_sided();
        let mut text = header(
            "psd",
            cfg,
            &plan.name,
            &[
                format!("mismatch = {mismatch:.6e}"),
                format!("band_99pct_GHz = [{:.6}, {:.6}]", band.0 / 1e9, band.1 / 1e9),
                "psd in W/Hz, one-sided (f > 0 bins carry both halves)".into(),
            ],
        );
        text.push_str("freq_GHz,psd_analytic,psd_empirical\n");
        for ((f, a), e) in freqs.iter().zip(&a1).zip(&e1) {
            let _ = writeln!(text, "{:.6},{a:.9e},{e:.9e}", f / 1e9);
        }
        let path = out.join(&plan.name).join("psd.csv");
        write_file(&path, &text)?;
        outcomes.push(PsdOutcome {
            plan: plan.name.clone(),
            mismatch,
            band,
            path,
        });
    }
    Ok(outcomes)
}

#[derive(Debug, Clone)]
pub struct BepOutcome {
    pub plan: String,
    /// `(ebn0_db, pe, stderr)` per sweep point.
    pub rows: Vec<(f64, f64, f64)>,
    pub mean_mai_variance: f64,
    pub path: PathBuf,
}

pub fn cmd_bep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<BepOutcome>> {
    let sweep = cfg.sweep()?;
    let mut outcomes = Vec::new();
    for plan in &cfg.plans {
        let setup = cfg.setup(plan)?;
        let ens = BepEnsemble::draw(&setup, cfg.theory.realizations, cfg.seed)?;
        let mut rows = Vec::with_capacity(sweep.len());
        for &eb in sweep {
            let avg = ens.average(noise_sigma_for_ebn0_db(eb))?;
            rows.push((eb, avg.mean.pe, avg.stderr));
        }
        let mai = ens.mean_mai_decision_variance();
        let mut text = header(
            "bep",
            cfg,
            &plan.name,
            &[
                format!("channel_realizations = {}", cfg.theory.realizations),
                format!("mean_mai_decision_variance = {mai:.9e}"),
                "Eb/N0 convention: Eb = 1, N0 = 2 sigma_n^2".into(),
            ],
        );
        text.push_str("ebn0_db,pe_theory,stderr\n");
        for (eb, pe, se) in &rows {
            let _ = writeln!(text, "{eb},{pe:.9e},{se:.9e}");
        }
        let path = out.join(&plan.name).join("bep.csv");
        write_file(&path, &text)?;
        outcomes.push(BepOutcome {
            plan: plan.name.clone(),
            rows,
            mean_mai_variance: mai,
            path,
        });
    }
    Ok(outcomes)
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub plan: String,
    pub points: Vec<(f64, BerEstimate)>,
    pub path: PathBuf,
}

pub fn cmd_sim(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SimOutcome>> {
    let sweep = cfg.sweep()?;
    let plan_t = cfg.trial_plan()?;
    let sigmas: Vec<f64> = sweep.iter().map(|&e| noise_sigma_for_ebn0_db(e)).collect();
    let mut outcomes = Vec::new();
    for plan in &cfg.plans {
        let setup = cfg.setup(plan)?;
        let est = run_ber_sweep(&setup, &plan_t, &sigmas)?;
        let capped: Vec<String> = sweep
            .iter()
            .zip(&est)
            .filter(|(_, e)| e.capped)
            .map(|(eb, _)| eb.to_string())
            .collect();
        let mut text = header(
            "sim",
            cfg,
            &plan.name,
            &[
                format!("capped_points_ebn0_db = [{}]", capped.join(", ")),
                "ci95_halfwidth: 95% Wilson score interval".into(),
                "Eb/N0 convention: Eb = 1, N0 = 2 sigma_n^2".into(),
            ],
        );
        text.push_str("ebn0_db,ber,ci95_halfwidth,bits,errors\n");
        for (eb, e) in sweep.iter().zip(&est) {
            let _ = writeln!(text, "{eb},{:.9e},{:.9e},{},{}", e.ber, e.ci95, e.bits, e.errors);
        }
        let path = out.join(&plan.name).join("ber.csv");
        write_file(&path, &text)?;
        outcomes.push(SimOutcome {
            plan: plan.name.clone(),
            points: sweep.iter().copied().zip(est).collect(),
            path,
        });
    }
    Ok(outcomes)
}

/// How the oracle suite discretizes receiver noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseConvention {
    /// Sample standard deviation `sigma_n / sqrt(dt)`.
    #[default]
    WhiteNoisePsd,
    /// Sample standard deviation `sigma_n`, ignoring the sample interval.
    PerSample,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    pub noise_convention: NoiseConvention,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub limit: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{}  {:<40} measured = {:.6e}  limit: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.limit
            );
        }
        let _ = writeln!(
            s,
            "{} of {} checks passed",
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len()
        );
        s
    }

    fn push(&mut self, name: impl Into<String>, measured: f64, limit: impl Into<String>, passed: bool) {
        self.checks.push(Check {
            name: name.into(),
            measured,
            limit: limit.into(),
            passed,
        });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

pub fn cmd_validate(cfg: &ExperimentConfig, opts: ValidateOptions) -> Result<ValidationReport> {
    let v = &cfg.validate;
    let mut report = ValidationReport::default();

    // channel normalization, desired and interferer power
    let base = cfg.channel_params()?;
    let sys = cfg.system_config(1)?;
    for (label, scale, lo, hi) in [
        ("", 1.0, 0.98, 1.02),
        ("_interferer", sys.interferer_power, 0.98, 1.02),
    ] {
        let params = base.with_power_scale(scale);
        let mut rng = stream(cfg.seed, 0, StreamRole::Aux(1 + (scale != 1.0) as u32));
        let mut total = 0.0;
        for _ in 0..v.channel_draws {
            total += sample_channel(&params, &sys, &mut rng)?.energy();
        }
        let mean = total / v.channel_draws.max(1) as f64;
        report.push(
            format!("channel_energy{label}"),
            mean,
            format!("[{}, {}]", lo * scale, hi * scale),
            mean >= lo * scale && mean <= hi * scale,
        );
    }

    for plan in &cfg.plans {
        let name = &plan.name;
        let (_, _, _, mismatch) = psd_comparison(cfg, plan)?;
        report.push(
            format!("{name}/psd_mismatch"),
            mismatch,
            "<= 0.05",
            mismatch <= 0.05,
        );

        let setup = cfg.setup(plan)?;
        let sys = &setup.config;
        let nh2 = (sys.th_alphabet * sys.th_alphabet) as f64;
        let mut worst_mai: f64 = 0.0;
        for i in 0..v.mai_pairs.min(sys.users.saturating_sub(1).max(1) * v.mai_pairs) {
            if sys.users < 2 {
                break;
            }
            let link = draw_realization(&setup, cfg.seed, i as u64)?;
            let one = sys.clone();
            let mai = mai_variance_multi(&link.u[1..], &link.v, &one)?;
            for j in 0..sys.pulse_types {
                let analytic = mai.per_frame[0][j] / nh2;
                let mut rng = stream(cfg.seed, i as u64, StreamRole::Aux(100 + j as u32));
                let mc = estimate_mai_variance(sys, &link.v, &link.u[1], j, v.mai_draws, &mut rng)?;
                worst_mai = worst_mai.max(rel(mc, analytic));
            }
        }
        if sys.users >= 2 && v.mai_pairs > 0 {
            report.push(
                format!("{name}/mai_variance_rel_error"),
                worst_mai,
                "<= 0.03",
                worst_mai <= 0.03,
            );
        }

        let link = draw_realization(&setup, cfg.seed, 0)?;
        let noisy = sys.clone().with_noise_sigma(1.0);
        let analytic = noise_variance(&link.v, &noisy);
        let dt = link.v[0].dt();
        let std = match opts.noise_convention {
            NoiseConvention::WhiteNoisePsd => noisy.noise_sigma / dt.sqrt(),
            NoiseConvention::PerSample => noisy.noise_sigma,
        };
        let mut rng = stream(cfg.seed, 0, StreamRole::Aux(200));
        let mc = estimate_noise_variance_with_std(&noisy, &link.v, v.noise_trials, &mut rng, std)?;
        let e = rel(mc, analytic);
        report.push(
            format!("{name}/noise_variance_rel_error"),
            e,
            "<= 0.02",
            e <= 0.02,
        );

        // single-type reduction on the first pulse of the plan
        let single = sys.clone().with_pulse_types(1).with_noise_sigma(1.0);
        let u1: Vec<Vec<_>> = link.u[1..].iter().map(|u| vec![u[0].clone()]).collect();
        let multi = bep_multi(
            &link.u[0][..1],
            &link.v[..1],
            &mai_variance_multi(&u1, &link.v[..1], &single)?,
            &single,
        )?;
        let classical = link.u[1..]
            .iter()
            .map(|u| mai_variance_classical(&u[0], &link.v[0], &single))
            .collect::<Result<Vec<_>>>()?;
        let reduced = bep_single(&link.u[0][0], &link.v[0], &classical, &single)?;
        let e = rel(multi.pe, reduced.pe);
        report.push(format!("{name}/single_type_reduction"), e, "<= 1e-12", e <= 1e-12);
    }
    Ok(report)
}
