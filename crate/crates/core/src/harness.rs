//! Experiment harness: seeded Monte Carlo trials of the full identification
//! pipeline for the three system variants, training-data generation and
//! network training, parameter sweeps with CSV emission, and a library-level
//! self test.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    apply_flat, apply_selective_ofdm, FlatChannel, ImpairmentSpec, NoiseModel, SelectiveChannel,
};
use crate::classifier::{self, Decision, FeatureVector, ScoreReport};
use crate::error::{invalid, Error, Result};
use crate::fnn::{self, NetworkModel, TrainingReport, TrainingSet};
use crate::schemes::{self, SchemeId, ALL_SCHEMES};
use crate::subspace::{
    combine_detectors, estimate_covariance, gerschgorin_radii, group_stbc_ofdm,
    received_covariance_from_transmit, sfbc_detector_covariance, sfbc_window_starts,
    FeatureFamily, RadiiVector, WindowKind,
};
use crate::txchain::{self, ModulationSpec, SystemVariant};

/// All simulation parameters of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub system: SystemVariant,
    pub n_r: usize,
    /// Processed slots L (single-carrier path).
    pub samples: usize,
    /// Subcarriers N (OFDM paths).
    pub n_sub: usize,
    /// Cyclic prefix length nu.
    pub cp_len: usize,
    /// Observed OFDM symbols N_b.
    pub n_sym: usize,
    /// Combined detectors N_d.
    pub n_det: usize,
    pub modulation: ModulationSpec,
    /// Schemes simulated; the decision metric always ranks all 17.
    pub pool: Vec<SchemeId>,
    pub snr_grid_db: Vec<f64>,
    pub impairments: ImpairmentSpec,
    /// Monte Carlo trials per scheme per grid point.
    pub trials: usize,
    pub seed: u64,
    pub model_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::default_single_carrier()
    }
}

impl ExperimentConfig {
    /// Single-carrier simulation defaults.
    pub fn default_single_carrier() -> Self {
        Self {
            system: SystemVariant::SingleCarrier,
            n_r: 8,
            samples: 256,
            n_sub: 256,
            cp_len: 10,
            n_sym: 100,
            n_det: 32,
            modulation: ModulationSpec::QPSK,
            pool: ALL_SCHEMES.to_vec(),
            snr_grid_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            impairments: ImpairmentSpec::default(),
            trials: 200,
            seed: 1,
            model_dir: PathBuf::from("models"),
        }
    }

    /// OFDM simulation defaults.
    pub fn default_ofdm(variant: SystemVariant) -> Self {
        Self { system: variant, ..Self::default_single_carrier() }
    }

    /// The same experiment with the larger training-side sample sizes
    /// (longer observations, more detectors).
    pub fn training_profile(&self) -> Self {
        let mut cfg = self.clone();
        match self.system {
            SystemVariant::SingleCarrier => cfg.samples = 2048,
            SystemVariant::StbcOfdm | SystemVariant::SfbcOfdm => {
                cfg.n_sym = 500;
                cfg.n_det = (cfg.n_sub / 4).min(64);
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r < 5 {
            return Err(Error::Config(
                "n_r must exceed the largest antenna count (need at least 5)".into(),
            ));
        }
        if self.pool.is_empty() {
            return Err(Error::Config("empty scheme pool".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("empty SNR grid".into()));
        }
        self.impairments.validate().map_err(|e| Error::Config(e.to_string()))?;
        match self.system {
            SystemVariant::SingleCarrier => {
                if self.samples < 8 {
                    return Err(Error::Config("samples must be at least 8".into()));
                }
            }
            SystemVariant::StbcOfdm => {
                if self.n_sub % 4 != 0 || self.n_sub < 8 {
                    return Err(Error::Config("n_sub must be a multiple of 4 and at least 8".into()));
                }
                if self.n_sym % 4 != 0 {
                    return Err(Error::Config(
                        "n_sym must be a multiple of 4 so window offsets stay aligned across grouped subcarriers"
                            .into(),
                    ));
                }
                if self.n_det == 0 || self.n_det > self.n_sub / 4 {
                    return Err(Error::Config(format!(
                        "n_det must lie in 1..={}",
                        self.n_sub / 4
                    )));
                }
                if self.cp_len >= self.n_sub {
                    return Err(Error::Config("cp_len must be below n_sub".into()));
                }
            }
            SystemVariant::SfbcOfdm => {
                if self.n_sub < 8 {
                    return Err(Error::Config("n_sub must be at least 8".into()));
                }
                if self.n_sym == 0 {
                    return Err(Error::Config("n_sym must be positive".into()));
                }
                if self.n_det == 0 || self.n_det > self.n_sub / 4 {
                    return Err(Error::Config(format!(
                        "n_det must lie in 1..={}",
                        self.n_sub / 4
                    )));
                }
                if self.cp_len >= self.n_sub {
                    return Err(Error::Config("cp_len must be below n_sub".into()));
                }
            }
        }
        Ok(())
    }

    /// Canonical serialized form used for hashing and config echo.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with context tags into an independent stream seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix(master ^ 0xA5A5_5A5A_DEAD_BEEF);
    for &t in tags {
        state = splitmix(state ^ t);
    }
    state
}

/// Independent per-trial random streams. Bits, channel draws and noise come
/// from separate lanes so that sweeps over one impairment keep every other
/// draw identical (common random numbers across grid points).
pub struct TrialRngs {
    pub signal: ChaCha12Rng,
    pub channel: ChaCha12Rng,
    pub noise: ChaCha12Rng,
}

pub fn trial_rngs(seed: u64, scheme_idx: usize, trial: usize) -> TrialRngs {
    let base = [scheme_idx as u64, trial as u64];
    TrialRngs {
        signal: ChaCha12Rng::seed_from_u64(derive_seed(seed, &[1, base[0], base[1]])),
        channel: ChaCha12Rng::seed_from_u64(derive_seed(seed, &[2, base[0], base[1]])),
        noise: ChaCha12Rng::seed_from_u64(derive_seed(seed, &[3, base[0], base[1]])),
    }
}

fn random_bits(count: usize, rng: &mut impl Rng) -> Vec<u8> {
    (0..count).map(|_| rng.random_range(0..=1u8)).collect()
}

/// Combined compressed-radii vectors for one trial, indexed like
/// `WindowKind::ALL`.
pub fn compute_trial_radii(
    cfg: &ExperimentConfig,
    scheme: SchemeId,
    snr_db: f64,
    rngs: &mut TrialRngs,
) -> Result<[RadiiVector; 6]> {
    match cfg.system {
        SystemVariant::SingleCarrier => {
            let n_syms = txchain::stream_symbol_count(scheme, cfg.samples);
            let bits =
                random_bits(n_syms * cfg.modulation.bits_per_symbol(), &mut rngs.signal);
            let syms = txchain::modulate(&bits, cfg.modulation)?;
            let frame = txchain::frame_single_carrier(scheme, &syms, cfg.samples)?;
            let desc = schemes::descriptor(scheme);
            let ch = FlatChannel::random(cfg.n_r, desc.n_t, &mut rngs.channel);
            let y = apply_flat(&ch, &frame.samples, &cfg.impairments, snr_db, &mut rngs.noise)?;
            let mut out = Vec::with_capacity(6);
            for kind in WindowKind::ALL {
                out.push(gerschgorin_radii(&estimate_covariance(&y, kind)?)?);
            }
            Ok(out.try_into().expect("six kinds"))
        }
        SystemVariant::StbcOfdm | SystemVariant::SfbcOfdm => {
            let n_syms =
                txchain::frame_symbol_count(cfg.system, scheme, cfg.n_sub, cfg.n_sym);
            let bits =
                random_bits(n_syms * cfg.modulation.bits_per_symbol(), &mut rngs.signal);
            let syms = txchain::modulate(&bits, cfg.modulation)?;
            let frame = txchain::frame_ofdm(
                cfg.system,
                scheme,
                &syms,
                cfg.n_sub,
                cfg.cp_len,
                cfg.n_sym,
            )?;
            let desc = schemes::descriptor(scheme);
            let ch = SelectiveChannel::random(cfg.n_r, desc.n_t, 4, &mut rngs.channel);
            let obs =
                apply_selective_ofdm(&ch, &frame, &cfg.impairments, snr_db, &mut rngs.noise)?;
            let mut out = Vec::with_capacity(6);
            if cfg.system == SystemVariant::StbcOfdm {
                let blocks = group_stbc_ofdm(&obs)?;
                let used = &blocks[..cfg.n_det.min(blocks.len())];
                for kind in WindowKind::ALL {
                    let per: Vec<RadiiVector> = used
                        .iter()
                        .map(|b| gerschgorin_radii(&estimate_covariance(b, kind)?))
                        .collect::<Result<_>>()?;
                    out.push(combine_detectors(&per)?);
                }
            } else {
                for kind in WindowKind::ALL {
                    let starts = sfbc_window_starts(kind, cfg.n_sub);
                    if starts.len() < cfg.n_det {
                        return Err(invalid(format!(
                            "{kind}: only {} detectors available for n_det {}",
                            starts.len(),
                            cfg.n_det
                        )));
                    }
                    let per: Vec<RadiiVector> = starts[..cfg.n_det]
                        .iter()
                        .map(|&l| gerschgorin_radii(&sfbc_detector_covariance(&obs, kind, l)?))
                        .collect::<Result<_>>()?;
                    out.push(combine_detectors(&per)?);
                }
            }
            Ok(out.try_into().expect("six kinds"))
        }
    }
}

/// The three trained regression networks of one system profile.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub alpha: NetworkModel,
    pub beta: NetworkModel,
    pub gamma: NetworkModel,
}

impl ModelSet {
    pub fn model_for(&self, family: FeatureFamily) -> &NetworkModel {
        match family {
            FeatureFamily::Alpha => &self.alpha,
            FeatureFamily::Beta => &self.beta,
            FeatureFamily::Gamma => &self.gamma,
        }
    }

    pub fn file_names() -> [&'static str; 3] {
        ["alpha.fnn", "beta.fnn", "gamma.fnn"]
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        fnn::save_model_file(&self.alpha, &dir.join("alpha.fnn"))?;
        fnn::save_model_file(&self.beta, &dir.join("beta.fnn"))?;
        fnn::save_model_file(&self.gamma, &dir.join("gamma.fnn"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let load = |name: &str| -> Result<NetworkModel> {
            let path = dir.join(name);
            fnn::load_model_file(&path).map_err(|e| {
                Error::Config(format!("model file {}: {e}", path.display()))
            })
        };
        Ok(Self { alpha: load("alpha.fnn")?, beta: load("beta.fnn")?, gamma: load("gamma.fnn")? })
    }

    /// Checks the input arities against a receive-antenna count.
    pub fn check_dims(&self, n_r: usize) -> Result<()> {
        let expect = [(n_r - 1, &self.alpha), (2 * n_r - 1, &self.beta), (4 * n_r - 1, &self.gamma)];
        for (want, model) in expect {
            if model.input_dim != want {
                return Err(Error::Config(format!(
                    "model expects {} inputs where the configuration needs {want}; retrain for n_r = {n_r}",
                    model.input_dim
                )));
            }
        }
        Ok(())
    }

    /// FNV-1a content hash over the three model files.
    pub fn content_hash(dir: &Path) -> Result<u64> {
        let mut h = 0xCBF2_9CE4_8422_2325u64;
        for name in Self::file_names() {
            let bytes = std::fs::read(dir.join(name))?;
            for b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        }
        Ok(h)
    }
}

/// Six feature estimates from combined radii.
pub fn features_from_radii(models: &ModelSet, radii: &[RadiiVector; 6]) -> Result<FeatureVector> {
    let value = |kind_idx: usize| -> Result<f64> {
        let r = &radii[kind_idx];
        fnn::forward(models.model_for(r.kind.family()), &r.compressed)
    };
    Ok(FeatureVector {
        alpha: value(0)?,
        beta: [value(1)?, value(2)?, value(3)?],
        gamma: [value(4)?, value(5)?],
    })
}

/// One end-to-end Monte Carlo trial.
pub fn run_trial(
    cfg: &ExperimentConfig,
    scheme: SchemeId,
    snr_db: f64,
    rngs: &mut TrialRngs,
    models: &ModelSet,
) -> Result<Decision> {
    let radii = compute_trial_radii(cfg, scheme, snr_db, rngs)?;
    let features = features_from_radii(models, &radii)?;
    classifier::decide(&features)
}

/// Test hook: decision from exact expectation covariances instead of
/// estimated ones (the infinite-sample limit of the pipeline).
pub fn decide_from_exact_covariances(
    scheme: SchemeId,
    h: &FlatChannel,
    sigma_w2: f64,
    models: &ModelSet,
) -> Result<Decision> {
    let mut radii = Vec::with_capacity(6);
    for kind in WindowKind::ALL {
        let tx = schemes::exact_transmit_covariance(scheme, kind, 1.0)?;
        let rx = received_covariance_from_transmit(&tx, &h.h, sigma_w2)?;
        radii.push(gerschgorin_radii(&rx)?);
    }
    let radii: [RadiiVector; 6] = radii.try_into().expect("six kinds");
    let features = features_from_radii(models, &radii)?;
    classifier::decide(&features)
}

/// Runs `cfg.trials` trials per pool scheme at one SNR and scores them.
/// Trials are independent and order-insensitive; the per-trial streams
/// depend on (seed, scheme, trial) only, so grid points share their draws.
pub fn run_point(
    cfg: &ExperimentConfig,
    snr_db: f64,
    models: &ModelSet,
) -> Result<ScoreReport> {
    cfg.validate()?;
    models.check_dims(cfg.n_r)?;
    let tasks: Vec<(usize, SchemeId, usize)> = cfg
        .pool
        .iter()
        .flat_map(|&s| (0..cfg.trials).map(move |t| (s.index(), s, t)))
        .collect();
    let outcomes: Vec<Result<(SchemeId, SchemeId)>> = tasks
        .par_iter()
        .map(|&(si, scheme, trial)| {
            let mut rngs = trial_rngs(cfg.seed, si, trial);
            let decision = run_trial(cfg, scheme, snr_db, &mut rngs, models)?;
            Ok((scheme, decision.scheme))
        })
        .collect();
    let mut trials = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        trials.push(o?);
    }
    classifier::score(&trials)
}

// --- Training-data generation -------------------------------------------------

/// Three pooled training sets (alpha / beta / gamma families) generated with
/// the §-protocol: every pool scheme at every grid SNR, `cfg.trials`
/// Monte Carlo repetitions, inputs max-normalized, targets from the
/// signature table.
pub fn gen_training(cfg: &ExperimentConfig) -> Result<[TrainingSet; 3]> {
    cfg.validate()?;
    let mut alpha = TrainingSet::new(FeatureFamily::Alpha, cfg.n_r - 1);
    let mut beta = TrainingSet::new(FeatureFamily::Beta, 2 * cfg.n_r - 1);
    let mut gamma = TrainingSet::new(FeatureFamily::Gamma, 4 * cfg.n_r - 1);

    let mut tasks = Vec::new();
    for (si, &scheme) in cfg.pool.iter().enumerate() {
        for (pi, &snr) in cfg.snr_grid_db.iter().enumerate() {
            for trial in 0..cfg.trials {
                tasks.push((si, scheme, pi, snr, trial));
            }
        }
    }
    let rows: Vec<Result<([RadiiVector; 6], SchemeId)>> = tasks
        .par_iter()
        .map(|&(si, scheme, pi, snr, trial)| {
            // Training draws include the grid-point tag: the dataset wants
            // diversity, not common random numbers.
            let seed = derive_seed(cfg.seed, &[0x7261_696E, si as u64, pi as u64]);
            let mut rngs = trial_rngs(seed, si, trial);
            let radii = compute_trial_radii(cfg, scheme, snr, &mut rngs)?;
            Ok((radii, scheme))
        })
        .collect();

    for row in rows {
        let (radii, scheme) = row?;
        let sig = schemes::signature(scheme);
        alpha.push(&fnn::normalize_radii(&radii[0].compressed), f64::from(sig.alpha));
        for (i, r) in radii[1..4].iter().enumerate() {
            beta.push(&fnn::normalize_radii(&r.compressed), f64::from(sig.beta[i]));
        }
        for (i, r) in radii[4..6].iter().enumerate() {
            gamma.push(&fnn::normalize_radii(&r.compressed), f64::from(sig.gamma[i]));
        }
    }
    Ok([alpha, beta, gamma])
}

/// Writes one training set as CSV (`r1..rK,target`).
pub fn write_training_csv(set: &TrainingSet, w: &mut impl std::io::Write) -> Result<()> {
    let cols: Vec<String> = (1..=set.input_dim).map(|i| format!("r{i}")).collect();
    writeln!(w, "{},target", cols.join(","))?;
    for i in 0..set.len() {
        let vals: Vec<String> = set.input(i).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{},{}", vals.join(","), set.target(i))?;
    }
    Ok(())
}

/// Trainer defaults for the three families.
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub hidden_dim: usize,
    pub max_epochs: usize,
    pub tol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { hidden_dim: 16, max_epochs: 50, tol: 1e-8 }
    }
}

/// Initialization restarts per family; the weights with the best
/// validation loss win. Deterministic: the restart seeds derive from the
/// experiment seed.
const TRAIN_RESTARTS: u64 = 2;

fn train_family(
    cfg: &ExperimentConfig,
    set: &TrainingSet,
    tag: u64,
    opts: TrainOptions,
) -> Result<(NetworkModel, TrainingReport)> {
    let mut best: Option<(NetworkModel, TrainingReport, f64)> = None;
    for restart in 0..TRAIN_RESTARTS {
        let seed = derive_seed(cfg.seed, &[0xF17, tag, restart]);
        let (model, report) =
            fnn::train_lm(set, opts.hidden_dim, seed, opts.max_epochs, opts.tol)?;
        let score = report.best_validation_mse.unwrap_or(report.final_train_mse);
        if best.as_ref().is_none_or(|(_, _, s)| score < *s) {
            best = Some((model, report, score));
        }
    }
    let (model, report, _) = best.expect("at least one restart");
    Ok((model, report))
}

/// Generates training data and trains the three family networks.
pub fn train_models(
    cfg: &ExperimentConfig,
    opts: TrainOptions,
) -> Result<(ModelSet, [TrainingReport; 3])> {
    let [alpha, beta, gamma] = gen_training(cfg)?;
    let (ra, (rb, rg)) = rayon::join(
        || train_family(cfg, &alpha, 1, opts),
        || {
            rayon::join(
                || train_family(cfg, &beta, 2, opts),
                || train_family(cfg, &gamma, 3, opts),
            )
        },
    );
    let (ma, ta) = ra?;
    let (mb, tb) = rb?;
    let (mg, tg) = rg?;
    Ok((ModelSet { alpha: ma, beta: mb, gamma: mg }, [ta, tb, tg]))
}

// --- Sweeps -------------------------------------------------------------------

/// The swept parameter of a Monte Carlo series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Snr,
    Samples,
    NR,
    ND,
    Modulation,
    Zeta,
    DeltaF,
    FD,
    Epsilon,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Snr => "snr",
            SweepVariable::Samples => "samples",
            SweepVariable::NR => "n_r",
            SweepVariable::ND => "n_d",
            SweepVariable::Modulation => "modulation",
            SweepVariable::Zeta => "zeta",
            SweepVariable::DeltaF => "delta_f",
            SweepVariable::FD => "f_d",
            SweepVariable::Epsilon => "epsilon",
        }
    }
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "snr" => Ok(SweepVariable::Snr),
            "samples" | "l" => Ok(SweepVariable::Samples),
            "nr" | "n_r" => Ok(SweepVariable::NR),
            "nd" | "n_d" => Ok(SweepVariable::ND),
            "modulation" => Ok(SweepVariable::Modulation),
            "zeta" => Ok(SweepVariable::Zeta),
            "delta_f" | "deltaf" => Ok(SweepVariable::DeltaF),
            "f_d" | "fd" => Ok(SweepVariable::FD),
            "epsilon" => Ok(SweepVariable::Epsilon),
            other => Err(invalid(format!("unknown sweep variable `{other}`"))),
        }
    }
}

/// One scored grid point.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub report: ScoreReport,
    pub wall_ms: u128,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub variable: SweepVariable,
    pub rows: Vec<SweepRow>,
    pub seed: u64,
    pub config_hash: u64,
    pub config_echo: String,
    pub model_hash: Option<u64>,
}

/// Applies one sweep value to a configuration. The evaluation SNR of
/// non-SNR sweeps is the first grid entry.
pub fn apply_sweep_value(
    cfg: &ExperimentConfig,
    variable: SweepVariable,
    value: &str,
) -> Result<(ExperimentConfig, f64)> {
    let mut point = cfg.clone();
    let snr = *cfg.snr_grid_db.first().expect("validated non-empty grid");
    let parse_f64 = |v: &str| -> Result<f64> {
        v.parse::<f64>().map_err(|_| invalid(format!("bad numeric sweep value `{v}`")))
    };
    let snr = match variable {
        SweepVariable::Snr => parse_f64(value)?,
        SweepVariable::Samples => {
            point.samples = parse_f64(value)? as usize;
            snr
        }
        SweepVariable::NR => {
            point.n_r = parse_f64(value)? as usize;
            snr
        }
        SweepVariable::ND => {
            point.n_det = parse_f64(value)? as usize;
            snr
        }
        SweepVariable::Modulation => {
            point.modulation = value.parse()?;
            snr
        }
        SweepVariable::Zeta => {
            point.impairments.zeta = parse_f64(value)?;
            snr
        }
        SweepVariable::DeltaF => {
            point.impairments.delta_f = parse_f64(value)?;
            snr
        }
        SweepVariable::FD => {
            point.impairments.f_d = parse_f64(value)?;
            snr
        }
        SweepVariable::Epsilon => {
            let epsilon = parse_f64(value)?;
            let eta = match point.impairments.noise {
                NoiseModel::Mixture { eta, .. } => eta,
                NoiseModel::Gaussian => 10.0,
            };
            point.impairments.noise =
                if epsilon == 0.0 { NoiseModel::Gaussian } else { NoiseModel::Mixture { epsilon, eta } };
            snr
        }
    };
    Ok((point, snr))
}

fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Model directory for one sweep point: receive-antenna sweeps expect
/// per-arity subdirectories (`<model_dir>/nr<value>`), everything else uses
/// the configured directory.
pub fn point_model_dir(cfg: &ExperimentConfig, variable: SweepVariable, value: &str) -> PathBuf {
    if variable == SweepVariable::NR {
        cfg.model_dir.join(format!("nr{value}"))
    } else {
        cfg.model_dir.clone()
    }
}

/// Runs a sweep, loading models from the configured directory.
pub fn sweep(
    cfg: &ExperimentConfig,
    variable: SweepVariable,
    values: &[String],
) -> Result<SweepTable> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(Error::Config("sweep: no grid values".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    let mut model_hash = None;
    for value in values {
        let (point, snr) = apply_sweep_value(cfg, variable, value)?;
        let dir = point_model_dir(cfg, variable, value);
        let models = ModelSet::load(&dir)?;
        if model_hash.is_none() {
            model_hash = Some(ModelSet::content_hash(&dir)?);
        }
        let started = std::time::Instant::now();
        let report = run_point(&point, snr, &models)?;
        rows.push(SweepRow {
            value: value.clone(),
            report,
            wall_ms: started.elapsed().as_millis(),
        });
    }
    let echo = cfg.canonical_toml();
    let config_hash = fnv64(echo.as_bytes()) ^ model_hash.unwrap_or(0);
    Ok(SweepTable {
        variable,
        rows,
        seed: cfg.seed,
        config_hash,
        config_echo: echo,
        model_hash,
    })
}

/// CSV emission: `# `-prefixed metadata (config echo, model hash), a header
/// row, one row per grid point. The wall-clock column is last so
/// reproducibility checks can strip it.
pub fn write_sweep_csv(table: &SweepTable, w: &mut impl std::io::Write) -> Result<()> {
    for line in table.config_echo.lines() {
        writeln!(w, "# config: {line}")?;
    }
    if let Some(h) = table.model_hash {
        writeln!(w, "# models: {h:016x}")?;
    }
    let scheme_cols: Vec<String> =
        ALL_SCHEMES.iter().map(|s| format!("acc_{}", s.name())).collect();
    writeln!(w, "{},pr1,pr2,{},seed,config_hash,wall_ms", table.variable.name(), scheme_cols.join(","))?;
    for row in &table.rows {
        let accs: Vec<String> = row
            .report
            .per_scheme
            .iter()
            .map(|a| if a.is_nan() { String::new() } else { format!("{a}") })
            .collect();
        writeln!(
            w,
            "{},{},{},{},{},{:016x},{}",
            row.value,
            row.report.pr1,
            row.report.pr2,
            accs.join(","),
            table.seed,
            table.config_hash,
            row.wall_ms
        )?;
    }
    Ok(())
}

// --- Self test ------------------------------------------------------------

/// Library self-checks that need no trained models: signature recovery,
/// noise-floor propositions on exact covariances, and classifier
/// separability. Returns one line per check.
pub fn selftest() -> Result<Vec<String>> {
    let mut lines = Vec::new();

    for id in ALL_SCHEMES {
        let derived = schemes::verify_signature(id, 1.0)?;
        if derived != schemes::signature(id) {
            return Err(Error::Degenerate(format!(
                "{id}: derived signature {derived:?} != table {:?}",
                schemes::signature(id)
            )));
        }
    }
    lines.push("PASS signature table recovered from exact covariances (17 schemes)".into());

    let n_r = 8;
    let sigma_w2 = 0.1;
    let mut rng = ChaCha12Rng::seed_from_u64(0x5EED);
    for id in ALL_SCHEMES {
        let desc = schemes::descriptor(id);
        let h = FlatChannel::random(n_r, desc.n_t, &mut rng);
        let sig = schemes::signature(id);
        let expect = [
            (WindowKind::Alpha, n_r - desc.n_t, 2.0 * sigma_w2),
            (WindowKind::Beta1, 2 * n_r - sig.beta[0] as usize, sigma_w2),
            (WindowKind::Beta2, 2 * n_r - sig.beta[1] as usize, sigma_w2),
            (WindowKind::Beta3, 2 * n_r - sig.beta[2] as usize, sigma_w2),
            (WindowKind::Gamma1, 4 * n_r - sig.gamma[0] as usize, sigma_w2 / 2.0),
            (WindowKind::Gamma2, 4 * n_r - sig.gamma[1] as usize, sigma_w2 / 2.0),
        ];
        for (kind, noise_count, floor) in expect {
            let tx = schemes::exact_transmit_covariance(id, kind, 1.0)?;
            let rx = received_covariance_from_transmit(&tx, &h.h, sigma_w2)?;
            let values = match &rx.data {
                crate::subspace::CovarianceData::Hermitian(m) => crate::mat::eigh(m)?.values,
                crate::subspace::CovarianceData::Symmetric(m) => crate::mat::eigh_sym(m)?.values,
            };
            let j = values.len();
            for &v in &values[j - noise_count..] {
                if (v - floor).abs() > 1e-9 {
                    return Err(Error::Degenerate(format!(
                        "{id}/{kind}: noise eigenvalue {v} differs from {floor}"
                    )));
                }
            }
            if noise_count < j && values[j - noise_count - 1] <= floor * (1.0 + 1e-6) {
                return Err(Error::Degenerate(format!(
                    "{id}/{kind}: signal eigenvalue does not clear the noise floor"
                )));
            }
        }
    }
    lines.push(format!(
        "PASS noise-floor propositions on exact covariances (n_r = {n_r}, sigma_w2 = {sigma_w2})"
    ));

    let (d, a, b) = classifier::min_pairwise_distance();
    if d <= 0.0 {
        return Err(Error::Degenerate(format!("signature rows {a} and {b} collide")));
    }
    lines.push(format!("PASS signature separability (min pairwise distance {d} from {a} vs {b})"));
    let w = classifier::weights();
    lines.push(format!("PASS decision weights derived as ({}, {}, {})", w.0, w.1, w.2));
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ExperimentConfig {
        ExperimentConfig {
            pool: vec![SchemeId::Al, SchemeId::Sm2],
            samples: 64,
            snr_grid_db: vec![10.0],
            trials: 2,
            seed: 7,
            ..ExperimentConfig::default_single_carrier()
        }
    }

    fn tiny_models(n_r: usize) -> ModelSet {
        let mk = |dim: usize| NetworkModel {
            input_dim: dim,
            hidden_dim: 4,
            w1: crate::mat::RealMatrix::zeros(4, dim),
            b1: vec![0.0; 4],
            w2: vec![0.0; 4],
            b2: 2.0,
            input_norm: fnn::InputNorm::LogMaxRadius,
        };
        ModelSet { alpha: mk(n_r - 1), beta: mk(2 * n_r - 1), gamma: mk(4 * n_r - 1) }
    }

    #[test]
    fn defaults_match_the_documented_profile() {
        let sc = ExperimentConfig::default_single_carrier();
        assert_eq!(sc.n_r, 8);
        assert_eq!(sc.samples, 256);
        assert_eq!(sc.modulation, ModulationSpec::QPSK);
        assert_eq!(sc.pool.len(), 17);
        let ofdm = ExperimentConfig::default_ofdm(SystemVariant::StbcOfdm);
        assert_eq!(ofdm.n_sub, 256);
        assert_eq!(ofdm.n_sym, 100);
        assert_eq!(ofdm.n_det, 32);
        assert_eq!(ofdm.cp_len, 10);
        let train = sc.training_profile();
        assert_eq!(train.samples, 2048);
        let train_ofdm = ofdm.training_profile();
        assert_eq!(train_ofdm.n_sym, 500);
        assert_eq!(train_ofdm.n_det, 64);
    }

    #[test]
    fn config_validation_catches_bad_geometry() {
        let mut cfg = ExperimentConfig::default_ofdm(SystemVariant::StbcOfdm);
        cfg.n_sym = 50; // not a multiple of 4
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::default_ofdm(SystemVariant::SfbcOfdm);
        cfg.n_det = 65;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn trial_radii_are_deterministic() {
        let cfg = tiny_cfg();
        let mut a = trial_rngs(cfg.seed, 1, 0);
        let mut b = trial_rngs(cfg.seed, 1, 0);
        let ra = compute_trial_radii(&cfg, SchemeId::Al, 10.0, &mut a).unwrap();
        let rb = compute_trial_radii(&cfg, SchemeId::Al, 10.0, &mut b).unwrap();
        for (x, y) in ra.iter().zip(rb.iter()) {
            assert_eq!(x.compressed, y.compressed);
        }
    }

    #[test]
    fn signal_draws_are_shared_across_snr_points() {
        // Common random numbers: the same (seed, scheme, trial) produces the
        // same bits and channel regardless of the evaluated SNR.
        let cfg = tiny_cfg();
        let mut a = trial_rngs(cfg.seed, 0, 3);
        let mut b = trial_rngs(cfg.seed, 0, 3);
        let xa: Vec<u8> = random_bits(16, &mut a.signal);
        let xb: Vec<u8> = random_bits(16, &mut b.signal);
        assert_eq!(xa, xb);
    }

    #[test]
    fn stbc_single_detector_equals_single_carrier_on_grouped_block() {
        let mut cfg = ExperimentConfig::default_ofdm(SystemVariant::StbcOfdm);
        cfg.n_sub = 16;
        cfg.n_sym = 8;
        cfg.n_det = 1;
        cfg.pool = vec![SchemeId::Al];
        let scheme = SchemeId::Al;
        let n_syms = txchain::frame_symbol_count(cfg.system, scheme, cfg.n_sub, cfg.n_sym);
        let mut rngs = trial_rngs(3, 0, 0);
        let bits = random_bits(n_syms * 2, &mut rngs.signal);
        let syms = txchain::modulate(&bits, cfg.modulation).unwrap();
        let frame =
            txchain::frame_ofdm(cfg.system, scheme, &syms, cfg.n_sub, cfg.cp_len, cfg.n_sym)
                .unwrap();
        let ch = SelectiveChannel::random(cfg.n_r, 2, 4, &mut rngs.channel);
        let obs =
            apply_selective_ofdm(&ch, &frame, &cfg.impairments, 15.0, &mut rngs.noise).unwrap();
        let blocks = group_stbc_ofdm(&obs).unwrap();
        for kind in WindowKind::ALL {
            // single-carrier pipeline applied directly to the grouped block
            let direct =
                gerschgorin_radii(&estimate_covariance(&blocks[0], kind).unwrap()).unwrap();
            // the detector path with N_d = 1
            let combined = combine_detectors(&[direct.clone()]).unwrap();
            for (x, y) in direct.compressed.iter().zip(&combined.compressed) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn run_trial_is_reproducible() {
        let cfg = tiny_cfg();
        let models = tiny_models(cfg.n_r);
        let d1 = run_trial(&cfg, SchemeId::Al, 10.0, &mut trial_rngs(cfg.seed, 1, 0), &models)
            .unwrap();
        let d2 = run_trial(&cfg, SchemeId::Al, 10.0, &mut trial_rngs(cfg.seed, 1, 0), &models)
            .unwrap();
        assert_eq!(d1.scheme, d2.scheme);
        assert_eq!(d1.distance, d2.distance);
    }

    #[test]
    fn gen_training_shapes_and_targets() {
        let cfg = tiny_cfg();
        let [alpha, beta, gamma] = gen_training(&cfg).unwrap();
        let rows = cfg.pool.len() * cfg.snr_grid_db.len() * cfg.trials;
        assert_eq!(alpha.len(), rows);
        assert_eq!(beta.len(), 3 * rows);
        assert_eq!(gamma.len(), 2 * rows);
        assert_eq!(alpha.input_dim, cfg.n_r - 1);
        assert_eq!(beta.input_dim, 2 * cfg.n_r - 1);
        assert_eq!(gamma.input_dim, 4 * cfg.n_r - 1);
        for i in 0..alpha.len() {
            let t = alpha.target(i);
            assert!((1.0..=4.0).contains(&t) && t.fract() == 0.0, "alpha target {t}");
            // normalized rows peak at 1
            let max = alpha.input(i).iter().fold(0.0f64, |a, &b| a.max(b));
            assert!((max - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gen_training_is_byte_deterministic() {
        let cfg = tiny_cfg();
        let a = gen_training(&cfg).unwrap();
        let b = gen_training(&cfg).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            let mut ba = Vec::new();
            let mut bb = Vec::new();
            write_training_csv(x, &mut ba).unwrap();
            write_training_csv(y, &mut bb).unwrap();
            assert_eq!(ba, bb);
        }
    }

    #[test]
    fn model_set_roundtrip_and_hash() {
        let dir = std::env::temp_dir().join(format!("mimo-ident-test-{}", std::process::id()));
        let models = tiny_models(8);
        models.save(&dir).unwrap();
        let back = ModelSet::load(&dir).unwrap();
        assert_eq!(back.alpha, models.alpha);
        let h1 = ModelSet::content_hash(&dir).unwrap();
        let h2 = ModelSet::content_hash(&dir).unwrap();
        assert_eq!(h1, h2);
        back.check_dims(8).unwrap();
        assert!(back.check_dims(6).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn exact_covariance_bypass_runs() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let models = tiny_models(8);
        let h = FlatChannel::random(8, 2, &mut rng);
        // constant-output models give a fixed feature vector; the decision
        // machinery still runs end to end.
        let d = decide_from_exact_covariances(SchemeId::Al, &h, 0.01, &models).unwrap();
        assert_eq!(d.ranking.len(), 17);
    }

    #[test]
    fn sweep_value_application() {
        let cfg = ExperimentConfig::default_single_carrier();
        let (p, snr) = apply_sweep_value(&cfg, SweepVariable::Snr, "12.5").unwrap();
        assert_eq!(snr, 12.5);
        assert_eq!(p.samples, cfg.samples);
        let (p, _) = apply_sweep_value(&cfg, SweepVariable::Samples, "512").unwrap();
        assert_eq!(p.samples, 512);
        let (p, _) = apply_sweep_value(&cfg, SweepVariable::Epsilon, "0.01").unwrap();
        assert_eq!(p.impairments.noise, NoiseModel::Mixture { epsilon: 0.01, eta: 10.0 });
        let (p, _) = apply_sweep_value(&cfg, SweepVariable::Modulation, "16qam").unwrap();
        assert_eq!(p.modulation.name(), "16qam");
        assert!(apply_sweep_value(&cfg, SweepVariable::Zeta, "abc").is_err());
    }

    #[test]
    fn selftest_passes() {
        let lines = selftest().unwrap();
        assert!(lines.iter().all(|l| l.starts_with("PASS")), "{lines:?}");
        assert!(lines.len() >= 4);
    }
}
