//! Command-line harness: scheme registry inspection, frame generation,
//! feature dumps, network training, classification and Monte Carlo sweeps.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on runtime errors.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use mimo_ident::channel::{
    apply_flat, apply_selective_ofdm, FlatChannel, NoiseModel, SelectiveChannel,
};
use mimo_ident::harness::{
    self, trial_rngs, ExperimentConfig, ModelSet, SweepVariable, TrainOptions,
};
use mimo_ident::schemes::{self, SchemeId, ALL_SCHEMES};
use mimo_ident::subspace::{
    combine_detectors, estimate_covariance, gerschgorin_radii, group_stbc_ofdm,
    sfbc_detector_covariance, sfbc_window_starts, RadiiVector, WindowKind,
};
use mimo_ident::txchain::{self, SystemVariant};
use mimo_ident::Error;

#[derive(Parser)]
#[command(
    name = "mimo-ident",
    about = "Joint blind identification of MIMO transmit-antenna count and coding scheme",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration file plus the flag overrides shared by most subcommands.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// System variant: single-carrier | stbc-ofdm | sfbc-ofdm.
    #[arg(long)]
    system: Option<String>,
    /// Evaluation SNR in dB (replaces the config grid with one point).
    #[arg(long)]
    snr: Option<f64>,
    /// Receive antennas.
    #[arg(long)]
    nr: Option<usize>,
    /// Processed slots L (single-carrier).
    #[arg(long)]
    samples: Option<usize>,
    /// Combined detectors N_d (OFDM).
    #[arg(long)]
    nd: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per scheme per point.
    #[arg(long)]
    trials: Option<usize>,
    /// Modulation: 4psk | 8psk | 16qam | 64qam.
    #[arg(long)]
    modulation: Option<String>,
    /// Directory holding alpha.fnn / beta.fnn / gamma.fnn.
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Normalized timing offset in [0, 1).
    #[arg(long)]
    zeta: Option<f64>,
    /// Normalized carrier frequency offset.
    #[arg(long)]
    delta_f: Option<f64>,
    /// Normalized maximum Doppler frequency.
    #[arg(long)]
    f_d: Option<f64>,
    /// Impulse probability of the Gaussian-mixture noise (0 = pure Gaussian).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Impulse variance ratio of the mixture noise.
    #[arg(long)]
    eta: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                toml::from_str::<ExperimentConfig>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::default_single_carrier(),
        };
        if let Some(system) = &self.system {
            cfg.system = system.parse()?;
        }
        if let Some(snr) = self.snr {
            cfg.snr_grid_db = vec![snr];
        }
        if let Some(nr) = self.nr {
            cfg.n_r = nr;
        }
        if let Some(samples) = self.samples {
            cfg.samples = samples;
        }
        if let Some(nd) = self.nd {
            cfg.n_det = nd;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(m) = &self.modulation {
            cfg.modulation = m.parse()?;
        }
        if let Some(dir) = &self.model_dir {
            cfg.model_dir = dir.clone();
        }
        if let Some(zeta) = self.zeta {
            cfg.impairments.zeta = zeta;
        }
        if let Some(delta_f) = self.delta_f {
            cfg.impairments.delta_f = delta_f;
        }
        if let Some(f_d) = self.f_d {
            cfg.impairments.f_d = f_d;
        }
        if self.epsilon.is_some() || self.eta.is_some() {
            let (old_eps, old_eta) = match cfg.impairments.noise {
                NoiseModel::Mixture { epsilon, eta } => (epsilon, eta),
                NoiseModel::Gaussian => (0.0, 10.0),
            };
            let epsilon = self.epsilon.unwrap_or(old_eps);
            let eta = self.eta.unwrap_or(old_eta);
            cfg.impairments.noise = if epsilon == 0.0 {
                NoiseModel::Gaussian
            } else {
                NoiseModel::Mixture { epsilon, eta }
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Scheme registry operations.
    Schemes {
        #[command(subcommand)]
        action: SchemesAction,
    },
    /// Generates a transmit frame and dumps it as a binary file.
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
        /// Scheme to encode (e.g. AL, SM2, QOSBC4).
        #[arg(long)]
        scheme: String,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs one trial and dumps per-window eigenvalues and radii as CSV.
    Features {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        scheme: String,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generates training data and trains the three feature networks.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Hidden-layer width.
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        /// Maximum accepted optimizer steps.
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        /// Gradient stopping tolerance.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Use the simulation-sized observation length instead of the
        /// training profile (L=2048 / N_b=500, N_d=64).
        #[arg(long)]
        no_training_profile: bool,
        /// Also write the three training-set CSV files.
        #[arg(long)]
        emit_data: bool,
    },
    /// Classifies a generated frame file (or a live-simulated trial).
    Classify {
        #[command(flatten)]
        config: ConfigArgs,
        /// Frame file produced by `gen`.
        #[arg(long, conflicts_with = "simulate")]
        frame: Option<PathBuf>,
        /// Simulate a fresh trial of this scheme instead of reading a file.
        #[arg(long)]
        simulate: Option<String>,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo sweep over one variable; emits a CSV table.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Swept variable: snr | samples | nr | nd | modulation | zeta |
        /// delta_f | f_d | epsilon.
        #[arg(long)]
        variable: String,
        /// Comma-separated grid values.
        #[arg(long)]
        values: String,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Library self-checks (signature table, noise-floor propositions,
    /// classifier separability).
    Selftest,
}

#[derive(Subcommand)]
enum SchemesAction {
    /// Prints the registry: id, antennas, block length, symbols, rate and
    /// the feature signature of every scheme.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Schemes { action: SchemesAction::List } => schemes_list(),
        Command::Gen { config, scheme, out } => gen_frame(&config, &scheme, &out),
        Command::Features { config, scheme, out } => features(&config, &scheme, out.as_deref()),
        Command::Train { config, hidden, epochs, tol, no_training_profile, emit_data } => {
            train(&config, hidden, epochs, tol, no_training_profile, emit_data)
        }
        Command::Classify { config, frame, simulate, out } => {
            classify(&config, frame.as_deref(), simulate.as_deref(), out.as_deref())
        }
        Command::Sweep { config, variable, values, out } => sweep(&config, &variable, &values, &out),
        Command::Selftest => selftest(),
    }
}

fn schemes_list() -> Result<(), Error> {
    println!(
        "{:<14} {:>3} {:>3} {:>3} {:>5}  {:<22} {:>8}",
        "scheme", "n_t", "T", "N_s", "rate", "signature (a,b1..b3,g1,g2)", "E[TrCC^H]"
    );
    for id in ALL_SCHEMES {
        let d = schemes::descriptor(id);
        let s = d.signature;
        println!(
            "{:<14} {:>3} {:>3} {:>3} {:>5}  ({},{},{},{},{},{})          {:>8.3}",
            id.name(),
            d.n_t,
            d.block_len,
            d.symbols_per_block,
            d.rate_string(),
            s.alpha,
            s.beta[0],
            s.beta[1],
            s.beta[2],
            s.gamma[0],
            s.gamma[1],
            d.codeword_power,
        );
    }
    Ok(())
}

fn parse_scheme(name: &str) -> Result<SchemeId, Error> {
    name.parse()
}

fn gen_frame(config: &ConfigArgs, scheme: &str, out: &std::path::Path) -> Result<(), Error> {
    let cfg = config.resolve()?;
    let scheme = parse_scheme(scheme)?;
    let mut rngs = trial_rngs(cfg.seed, scheme.index(), 0);
    let frame = match cfg.system {
        SystemVariant::SingleCarrier => {
            let count = txchain::stream_symbol_count(scheme, cfg.samples);
            let bits: Vec<u8> = (0..count * cfg.modulation.bits_per_symbol())
                .map(|_| rand::Rng::random_range(&mut rngs.signal, 0..=1u8))
                .collect();
            let syms = txchain::modulate(&bits, cfg.modulation)?;
            txchain::frame_single_carrier(scheme, &syms, cfg.samples)?
        }
        variant => {
            let count = txchain::frame_symbol_count(variant, scheme, cfg.n_sub, cfg.n_sym);
            let bits: Vec<u8> = (0..count * cfg.modulation.bits_per_symbol())
                .map(|_| rand::Rng::random_range(&mut rngs.signal, 0..=1u8))
                .collect();
            let syms = txchain::modulate(&bits, cfg.modulation)?;
            txchain::frame_ofdm(variant, scheme, &syms, cfg.n_sub, cfg.cp_len, cfg.n_sym)?
        }
    };
    let mut file = std::fs::File::create(out)?;
    txchain::write_frame(&frame, &mut file)?;
    eprintln!(
        "wrote {} frame: {} antennas x {} samples -> {}",
        cfg.system,
        frame.samples.rows(),
        frame.samples.cols(),
        out.display()
    );
    Ok(())
}

fn radii_rows(cfg: &ExperimentConfig, scheme: SchemeId, snr: f64) -> Result<Vec<(WindowKind, usize, RadiiVector)>, Error> {
    let mut rngs = trial_rngs(cfg.seed, scheme.index(), 0);
    let mut rows = Vec::new();
    match cfg.system {
        SystemVariant::SingleCarrier => {
            if cfg.samples % 4 != 0 {
                eprintln!(
                    "note: {} slots truncated to {} (multiple of 4)",
                    cfg.samples,
                    cfg.samples & !3
                );
            }
            let count = txchain::stream_symbol_count(scheme, cfg.samples);
            let bits: Vec<u8> = (0..count * cfg.modulation.bits_per_symbol())
                .map(|_| rand::Rng::random_range(&mut rngs.signal, 0..=1u8))
                .collect();
            let syms = txchain::modulate(&bits, cfg.modulation)?;
            let frame = txchain::frame_single_carrier(scheme, &syms, cfg.samples)?;
            let desc = schemes::descriptor(scheme);
            let ch = FlatChannel::random(cfg.n_r, desc.n_t, &mut rngs.channel);
            let y = apply_flat(&ch, &frame.samples, &cfg.impairments, snr, &mut rngs.noise)?;
            for kind in WindowKind::ALL {
                rows.push((kind, 0, gerschgorin_radii(&estimate_covariance(&y, kind)?)?));
            }
        }
        variant => {
            let count = txchain::frame_symbol_count(variant, scheme, cfg.n_sub, cfg.n_sym);
            let bits: Vec<u8> = (0..count * cfg.modulation.bits_per_symbol())
                .map(|_| rand::Rng::random_range(&mut rngs.signal, 0..=1u8))
                .collect();
            let syms = txchain::modulate(&bits, cfg.modulation)?;
            let frame =
                txchain::frame_ofdm(variant, scheme, &syms, cfg.n_sub, cfg.cp_len, cfg.n_sym)?;
            let desc = schemes::descriptor(scheme);
            let ch = SelectiveChannel::random(cfg.n_r, desc.n_t, 4, &mut rngs.channel);
            let obs = apply_selective_ofdm(&ch, &frame, &cfg.impairments, snr, &mut rngs.noise)?;
            if obs.cp_warning {
                eprintln!("warning: cyclic prefix shorter than channel memory");
            }
            if variant == SystemVariant::StbcOfdm {
                let blocks = group_stbc_ofdm(&obs)?;
                for kind in WindowKind::ALL {
                    for (det, block) in blocks.iter().take(cfg.n_det).enumerate() {
                        rows.push((
                            kind,
                            det,
                            gerschgorin_radii(&estimate_covariance(block, kind)?)?,
                        ));
                    }
                }
            } else {
                for kind in WindowKind::ALL {
                    let starts = sfbc_window_starts(kind, cfg.n_sub);
                    for (det, &l) in starts.iter().take(cfg.n_det).enumerate() {
                        rows.push((
                            kind,
                            det,
                            gerschgorin_radii(&sfbc_detector_covariance(&obs, kind, l)?)?,
                        ));
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn features(config: &ConfigArgs, scheme: &str, out: Option<&std::path::Path>) -> Result<(), Error> {
    let cfg = config.resolve()?;
    let scheme = parse_scheme(scheme)?;
    let snr = cfg.snr_grid_db[0];
    let rows = radii_rows(&cfg, scheme, snr)?;
    let mut buf = Vec::new();
    writeln!(buf, "kind,detector,mu,r,R")?;
    let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
    for (kind, det, radii) in rows {
        writeln!(
            buf,
            "{},{},{},{},{}",
            kind,
            det,
            join(&radii.mu),
            join(&radii.raw),
            join(&radii.compressed)
        )?;
    }
    emit(out, &buf)
}

fn train(
    config: &ConfigArgs,
    hidden: usize,
    epochs: usize,
    tol: f64,
    no_training_profile: bool,
    emit_data: bool,
) -> Result<(), Error> {
    let cfg = config.resolve()?;
    let cfg = if no_training_profile { cfg } else { cfg.training_profile() };
    cfg.validate()?;
    let opts = TrainOptions { hidden_dim: hidden, max_epochs: epochs, tol };
    if emit_data {
        let sets = harness::gen_training(&cfg)?;
        std::fs::create_dir_all(&cfg.model_dir)?;
        for (set, name) in sets.iter().zip(["alpha", "beta", "gamma"]) {
            let mut f = std::fs::File::create(cfg.model_dir.join(format!("{name}_train.csv")))?;
            harness::write_training_csv(set, &mut f)?;
        }
    }
    let started = std::time::Instant::now();
    let (models, reports) = harness::train_models(&cfg, opts)?;
    models.save(&cfg.model_dir)?;
    let mut report_csv = std::fs::File::create(cfg.model_dir.join("training_report.csv"))?;
    for line in cfg.canonical_toml().lines() {
        writeln!(report_csv, "# config: {line}")?;
    }
    writeln!(report_csv, "# models: {:016x}", ModelSet::content_hash(&cfg.model_dir)?)?;
    writeln!(report_csv, "family,epoch,mse,lambda")?;
    for (report, name) in reports.iter().zip(["alpha", "beta", "gamma"]) {
        for e in &report.epochs {
            writeln!(report_csv, "{name},{},{},{}", e.epoch, e.train_mse, e.lambda)?;
        }
    }
    for (report, name) in reports.iter().zip(["alpha", "beta", "gamma"]) {
        eprintln!(
            "{name}: {} accepted steps, train mse {:.4e}, validation mse {:?}{}",
            report.epochs.len(),
            report.final_train_mse,
            report.best_validation_mse,
            if report.sample_warning { " (few samples for the parameter count)" } else { "" }
        );
    }
    eprintln!(
        "trained 3 networks in {:.1} s -> {}",
        started.elapsed().as_secs_f64(),
        cfg.model_dir.display()
    );
    Ok(())
}

fn classify(
    config: &ConfigArgs,
    frame_path: Option<&std::path::Path>,
    simulate: Option<&str>,
    out: Option<&std::path::Path>,
) -> Result<(), Error> {
    let cfg = config.resolve()?;
    let models = ModelSet::load(&cfg.model_dir)?;
    models.check_dims(cfg.n_r)?;
    let snr = cfg.snr_grid_db[0];

    let decision = match (frame_path, simulate) {
        (Some(path), None) => {
            let mut file = std::fs::File::open(path)?;
            let frame = txchain::read_frame(&mut file)?;
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            let radii: Vec<RadiiVector> = match frame.variant {
                SystemVariant::SingleCarrier => {
                    let ch = FlatChannel::random(cfg.n_r, frame.samples.rows(), &mut rng);
                    let y = apply_flat(&ch, &frame.samples, &cfg.impairments, snr, &mut rng)?;
                    WindowKind::ALL
                        .iter()
                        .map(|&kind| gerschgorin_radii(&estimate_covariance(&y, kind)?))
                        .collect::<Result<_, _>>()?
                }
                variant => {
                    let ch =
                        SelectiveChannel::random(cfg.n_r, frame.samples.rows(), 4, &mut rng);
                    let obs = apply_selective_ofdm(&ch, &frame, &cfg.impairments, snr, &mut rng)?;
                    if variant == SystemVariant::StbcOfdm {
                        let blocks = group_stbc_ofdm(&obs)?;
                        let used = &blocks[..cfg.n_det.min(blocks.len())];
                        WindowKind::ALL
                            .iter()
                            .map(|&kind| {
                                let per: Vec<RadiiVector> = used
                                    .iter()
                                    .map(|b| gerschgorin_radii(&estimate_covariance(b, kind)?))
                                    .collect::<Result<_, _>>()?;
                                combine_detectors(&per)
                            })
                            .collect::<Result<_, _>>()?
                    } else {
                        WindowKind::ALL
                            .iter()
                            .map(|&kind| {
                                let starts = sfbc_window_starts(kind, obs.n_sub);
                                let per: Vec<RadiiVector> = starts
                                    .iter()
                                    .take(cfg.n_det)
                                    .map(|&l| {
                                        gerschgorin_radii(&sfbc_detector_covariance(
                                            &obs, kind, l,
                                        )?)
                                    })
                                    .collect::<Result<_, _>>()?;
                                combine_detectors(&per)
                            })
                            .collect::<Result<_, _>>()?
                    }
                }
            };
            let radii: [RadiiVector; 6] =
                radii.try_into().map_err(|_| Error::Degenerate("expected six kinds".into()))?;
            let features = harness::features_from_radii(&models, &radii)?;
            mimo_ident::classifier::decide(&features)?
        }
        (None, Some(name)) => {
            let scheme = parse_scheme(name)?;
            let mut rngs = trial_rngs(cfg.seed, scheme.index(), 0);
            harness::run_trial(&cfg, scheme, snr, &mut rngs, &models)?
        }
        _ => {
            return Err(Error::Config(
                "classify needs exactly one of --frame or --simulate".into(),
            ))
        }
    };

    let mut buf = Vec::new();
    writeln!(buf, "rank,scheme,n_t,distance")?;
    for (rank, (id, d)) in decision.ranking.iter().enumerate() {
        writeln!(buf, "{},{},{},{}", rank + 1, id.name(), schemes::descriptor(*id).n_t, d)?;
    }
    eprintln!(
        "decision: {} (n_t = {}, distance {:.4}{})",
        decision.scheme,
        decision.n_t,
        decision.distance,
        if decision.tied { ", tie broken by registry order" } else { "" }
    );
    emit(out, &buf)
}

fn sweep(
    config: &ConfigArgs,
    variable: &str,
    values: &str,
    out: &std::path::Path,
) -> Result<(), Error> {
    let cfg = config.resolve()?;
    let variable: SweepVariable = variable.parse()?;
    let values: Vec<String> = values.split(',').map(|s| s.trim().to_string()).collect();
    let table = harness::sweep(&cfg, variable, &values)?;
    let mut file = std::fs::File::create(out)?;
    harness::write_sweep_csv(&table, &mut file)?;
    for row in &table.rows {
        eprintln!(
            "{} = {:>8}: Pr1 {:.4} Pr2 {:.4} ({} ms)",
            variable.name(),
            row.value,
            row.report.pr1,
            row.report.pr2,
            row.wall_ms
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn selftest() -> Result<(), Error> {
    for line in harness::selftest()? {
        println!("{line}");
    }
    Ok(())
}

fn emit(out: Option<&std::path::Path>, buf: &[u8]) -> Result<(), Error> {
    match out {
        Some(path) => {
            std::fs::write(path, buf)?;
            eprintln!("wrote {}", path.display());
        }
        None => std::io::stdout().write_all(buf)?,
    }
    Ok(())
}
