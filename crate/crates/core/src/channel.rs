//! Channel and impairment simulation: flat Rayleigh MIMO channels,
//! frequency-selective tap channels with exponential power delay profile,
//! Gaussian and Gaussian-mixture noise, timing offset (two-path model),
//! carrier frequency offset and Jakes-spectrum Doppler fading, plus the OFDM
//! receiver front-end (CP removal + FFT) that produces per-subcarrier
//! observations.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mat::{eigh, ComplexMatrix};
use crate::txchain::{fft_unitary, TxFrame};

/// Flat Rayleigh fading channel: i.i.d. unit-variance circular complex
/// Gaussian entries, full column rank.
#[derive(Debug, Clone)]
pub struct FlatChannel {
    pub h: ComplexMatrix,
}

fn complex_normal(rng: &mut impl Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    Complex64::new(
        s * rng.sample::<f64, _>(StandardNormal),
        s * rng.sample::<f64, _>(StandardNormal),
    )
}

impl FlatChannel {
    /// Draws a channel, regenerating in the (measure-zero) event of column
    /// rank deficiency at relative tolerance 1e-12.
    pub fn random(n_r: usize, n_t: usize, rng: &mut impl Rng) -> Self {
        assert!(n_r >= n_t, "need at least as many receive as transmit antennas");
        loop {
            let h = ComplexMatrix::from_fn(n_r, n_t, |_, _| complex_normal(rng, 1.0));
            let gram = h.hermitian().mul(&h);
            let eig = eigh(&gram).expect("gram matrix is square");
            let max = eig.values.first().copied().unwrap_or(0.0);
            let min = eig.values.last().copied().unwrap_or(0.0);
            if min > (1e-12f64).powi(2) * max && min > 0.0 {
                return Self { h };
            }
        }
    }

    pub fn n_r(&self) -> usize {
        self.h.rows()
    }

    pub fn n_t(&self) -> usize {
        self.h.cols()
    }
}

/// Jakes-spectrum sum-of-sinusoids fading process: every coefficient is an
/// independent unit-variance complex Gaussian process with autocorrelation
/// J0(2 pi f_d dn).
#[derive(Debug, Clone)]
pub struct DopplerFading {
    n_r: usize,
    n_t: usize,
    omega: f64,
    // Per coefficient: arrival angles and phases of the two quadrature sums.
    cos_freq: Vec<f64>,
    sin_freq: Vec<f64>,
    phi: Vec<f64>,
    psi: Vec<f64>,
}

const DOPPLER_SINUSOIDS: usize = 16;

impl DopplerFading {
    pub fn new(n_r: usize, n_t: usize, f_d: f64, rng: &mut impl Rng) -> Self {
        assert!(f_d > 0.0, "use the static channel for f_d = 0");
        let m = DOPPLER_SINUSOIDS;
        let entries = n_r * n_t;
        let mut cos_freq = Vec::with_capacity(entries * m);
        let mut sin_freq = Vec::with_capacity(entries * m);
        let mut phi = Vec::with_capacity(entries * m);
        let mut psi = Vec::with_capacity(entries * m);
        for _ in 0..entries {
            let theta: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            for k in 1..=m {
                let alpha = (2.0 * std::f64::consts::PI * k as f64 - std::f64::consts::PI
                    + theta)
                    / (4.0 * m as f64);
                cos_freq.push(alpha.cos());
                sin_freq.push(alpha.sin());
                phi.push(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
                psi.push(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
            }
        }
        Self { n_r, n_t, omega: std::f64::consts::TAU * f_d, cos_freq, sin_freq, phi, psi }
    }

    /// Channel matrix at (0-based) slot `n`.
    pub fn at(&self, n: usize) -> ComplexMatrix {
        let m = DOPPLER_SINUSOIDS;
        let amp = (1.0 / m as f64).sqrt();
        let t = n as f64;
        ComplexMatrix::from_fn(self.n_r, self.n_t, |r, c| {
            let base = (r * self.n_t + c) * m;
            let mut re = 0.0;
            let mut im = 0.0;
            for k in 0..m {
                re += (self.omega * t * self.cos_freq[base + k] + self.phi[base + k]).cos();
                im += (self.omega * t * self.sin_freq[base + k] + self.psi[base + k]).cos();
            }
            Complex64::new(amp * re, amp * im)
        })
    }
}

/// Channel state at slot `n`: a fixed draw when there is no Doppler, a
/// sum-of-sinusoids process otherwise.
pub fn doppler_evolve(
    h0: &FlatChannel,
    f_d: f64,
    n: usize,
    rng: &mut impl Rng,
) -> FlatChannel {
    if f_d <= 0.0 {
        return h0.clone();
    }
    let fading = DopplerFading::new(h0.n_r(), h0.n_t(), f_d, rng);
    FlatChannel { h: fading.at(n) }
}

/// Frequency-selective channel: independent complex Gaussian tap matrices
/// with exponential power delay profile, total tap power normalized to 1.
#[derive(Debug, Clone)]
pub struct SelectiveChannel {
    pub taps: Vec<ComplexMatrix>,
}

impl SelectiveChannel {
    pub fn random(n_r: usize, n_t: usize, n_taps: usize, rng: &mut impl Rng) -> Self {
        assert!(n_taps >= 1);
        let raw: Vec<f64> = (0..n_taps).map(|t| (-(t as f64) / 5.0).exp()).collect();
        let total: f64 = raw.iter().sum();
        let taps = raw
            .iter()
            .map(|&p| {
                let var = p / total;
                ComplexMatrix::from_fn(n_r, n_t, |_, _| complex_normal(rng, var))
            })
            .collect();
        Self { taps }
    }

    pub fn n_r(&self) -> usize {
        self.taps[0].rows()
    }

    pub fn n_t(&self) -> usize {
        self.taps[0].cols()
    }

    /// Effective subchannel matrix at FFT bin `k` (0-based):
    /// `H_k = sum_t taps[t] e^{-j 2 pi k t / N}`.
    pub fn frequency_response(&self, k: usize, n_sub: usize) -> ComplexMatrix {
        let mut h = ComplexMatrix::zeros(self.n_r(), self.n_t());
        for (t, tap) in self.taps.iter().enumerate() {
            let w = Complex64::from_polar(
                1.0,
                -std::f64::consts::TAU * (k as f64) * (t as f64) / n_sub as f64,
            );
            for i in 0..h.rows() {
                for j in 0..h.cols() {
                    h[(i, j)] += tap[(i, j)] * w;
                }
            }
        }
        h
    }
}

/// Additive noise model. The base variance comes from the configured SNR;
/// the mixture replaces a fraction `epsilon` of samples with impulsive
/// samples of `eta` times that variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseModel {
    Gaussian,
    Mixture { epsilon: f64, eta: f64 },
}

impl NoiseModel {
    pub fn total_variance(&self, sigma2: f64) -> f64 {
        match self {
            NoiseModel::Gaussian => sigma2,
            NoiseModel::Mixture { epsilon, eta } => {
                (1.0 - epsilon) * sigma2 + epsilon * eta * sigma2
            }
        }
    }

    fn sample(&self, sigma2: f64, rng: &mut impl Rng) -> Complex64 {
        let var = match self {
            NoiseModel::Gaussian => sigma2,
            NoiseModel::Mixture { epsilon, eta } => {
                if rng.random::<f64>() < *epsilon {
                    eta * sigma2
                } else {
                    sigma2
                }
            }
        };
        complex_normal(rng, var)
    }
}

/// Receiver-side impairments applied by the channel operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentSpec {
    /// Normalized timing offset in [0, 1): the sampling error acts as the
    /// two-path filter [1 - zeta, zeta] along slots.
    pub zeta: f64,
    /// Carrier frequency offset normalized to the signal bandwidth.
    pub delta_f: f64,
    /// Maximum Doppler frequency normalized to the signal bandwidth.
    pub f_d: f64,
    pub noise: NoiseModel,
}

impl Default for ImpairmentSpec {
    fn default() -> Self {
        Self { zeta: 0.0, delta_f: 0.0, f_d: 0.0, noise: NoiseModel::Gaussian }
    }
}

impl ImpairmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.zeta) {
            return Err(invalid(format!("zeta {} outside [0, 1)", self.zeta)));
        }
        if self.f_d < 0.0 {
            return Err(invalid("f_d must be nonnegative"));
        }
        if let NoiseModel::Mixture { epsilon, eta } = self.noise {
            if !(0.0..=1.0).contains(&epsilon) {
                return Err(invalid(format!("mixture epsilon {epsilon} outside [0, 1]")));
            }
            if epsilon > 0.0 && eta <= 1.0 {
                return Err(invalid("mixture eta must exceed 1 for the impulsive component"));
            }
        }
        Ok(())
    }
}

/// Noise variance for a configured SNR, assuming the encoders' unit per-slot
/// total transmit power: SNR = 10 log10(P / sigma_n^2) with P = 1.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// Two-path timing-offset filter along columns: `s'(n) = (1 - zeta) s(n) +
/// zeta s(n - 1)`.
fn two_path(tx: &ComplexMatrix, zeta: f64) -> ComplexMatrix {
    if zeta == 0.0 {
        return tx.clone();
    }
    ComplexMatrix::from_fn(tx.rows(), tx.cols(), |a, n| {
        let prev = if n == 0 { Complex64::ZERO } else { tx[(a, n - 1)] };
        (1.0 - zeta) * tx[(a, n)] + zeta * prev
    })
}

/// Flat-fading channel application with impairments: timing-offset filtering
/// of the transmit stream, per-slot channel (time-varying when `f_d > 0`),
/// receiver frequency-offset rotation and additive noise with variance set
/// by `snr_db`.
pub fn apply_flat(
    ch: &FlatChannel,
    tx: &ComplexMatrix,
    imp: &ImpairmentSpec,
    snr_db: f64,
    rng: &mut impl Rng,
) -> Result<ComplexMatrix> {
    imp.validate()?;
    if tx.cols() == 0 {
        return Err(invalid("apply_flat: empty transmit stream"));
    }
    if tx.rows() != ch.n_t() {
        return Err(invalid(format!(
            "apply_flat: {} transmit rows vs {} channel columns",
            tx.rows(),
            ch.n_t()
        )));
    }
    let sigma2 = noise_variance(snr_db);
    let filtered = two_path(tx, imp.zeta);
    let fading = if imp.f_d > 0.0 {
        Some(DopplerFading::new(ch.n_r(), ch.n_t(), imp.f_d, rng))
    } else {
        None
    };

    let n_r = ch.n_r();
    let mut y = ComplexMatrix::zeros(n_r, tx.cols());
    let mut h_slot;
    for n in 0..tx.cols() {
        let h = match &fading {
            Some(f) => {
                h_slot = f.at(n);
                &h_slot
            }
            None => &ch.h,
        };
        let rot = if imp.delta_f != 0.0 {
            Complex64::from_polar(1.0, std::f64::consts::TAU * imp.delta_f * (n + 1) as f64)
        } else {
            Complex64::ONE
        };
        for r in 0..n_r {
            let mut acc = Complex64::ZERO;
            for t in 0..ch.n_t() {
                acc += h[(r, t)] * filtered[(t, n)];
            }
            acc *= rot;
            if sigma2 > 0.0 {
                acc += imp.noise.sample(sigma2, rng);
            }
            y[(r, n)] = acc;
        }
    }
    Ok(y)
}

/// Per-subcarrier observations after the OFDM receiver front-end.
/// `vector(k, n)` is the length-`n_r` observation at subcarrier `k` and OFDM
/// symbol `n` (both 0-based).
#[derive(Debug, Clone)]
pub struct OfdmObservations {
    pub n_r: usize,
    pub n_sub: usize,
    pub n_sym: usize,
    /// Set when the cyclic prefix is shorter than the channel memory and
    /// inter-symbol interference leaks into the observations.
    pub cp_warning: bool,
    data: Vec<Complex64>,
}

impl OfdmObservations {
    pub fn new(n_r: usize, n_sub: usize, n_sym: usize) -> Self {
        Self { n_r, n_sub, n_sym, cp_warning: false, data: vec![Complex64::ZERO; n_r * n_sub * n_sym] }
    }

    #[inline]
    pub fn vector(&self, k: usize, n: usize) -> &[Complex64] {
        let base = (n * self.n_sub + k) * self.n_r;
        &self.data[base..base + self.n_r]
    }

    #[inline]
    pub fn vector_mut(&mut self, k: usize, n: usize) -> &mut [Complex64] {
        let base = (n * self.n_sub + k) * self.n_r;
        &mut self.data[base..base + self.n_r]
    }
}

/// Frequency-selective channel application for an OFDM frame: time-domain
/// tap convolution (taps evolving per OFDM symbol when `f_d > 0`), timing
/// offset, frequency offset, time-domain noise, then CP removal and forward
/// FFT into per-subcarrier observations.
pub fn apply_selective_ofdm(
    ch: &SelectiveChannel,
    frame: &TxFrame,
    imp: &ImpairmentSpec,
    snr_db: f64,
    rng: &mut impl Rng,
) -> Result<OfdmObservations> {
    imp.validate()?;
    let meta = frame
        .meta
        .ok_or_else(|| invalid("apply_selective_ofdm: frame has no OFDM geometry"))?;
    if frame.samples.rows() != ch.n_t() {
        return Err(invalid(format!(
            "apply_selective_ofdm: {} transmit rows vs {} channel columns",
            frame.samples.rows(),
            ch.n_t()
        )));
    }
    let n_taps = ch.taps.len();
    let cp_warning = meta.cp_len + 1 < n_taps;
    let sigma2 = noise_variance(snr_db);
    let sym_len = meta.n_sub + meta.cp_len;
    let total = frame.samples.cols();
    if total != meta.n_sym * sym_len {
        return Err(invalid("apply_selective_ofdm: frame length does not match geometry"));
    }

    let filtered = two_path(&frame.samples, imp.zeta);
    let n_r = ch.n_r();
    let n_t = ch.n_t();

    // Per-symbol tap realizations under Doppler; block-constant inside one
    // OFDM symbol.
    let fading: Option<Vec<DopplerFading>> = if imp.f_d > 0.0 {
        Some((0..n_taps).map(|_| DopplerFading::new(n_r, n_t, imp.f_d, rng)).collect())
    } else {
        None
    };
    let tap_power: Vec<f64> = {
        let raw: Vec<f64> = (0..n_taps).map(|t| (-(t as f64) / 5.0).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|p| p / total).collect()
    };

    let taps_at = |sym: usize| -> Vec<ComplexMatrix> {
        match &fading {
            None => ch.taps.clone(),
            Some(procs) => procs
                .iter()
                .enumerate()
                .map(|(t, p)| p.at(sym).scale(tap_power[t].sqrt()))
                .collect(),
        }
    };

    let mut rx = ComplexMatrix::zeros(n_r, total);
    let mut current_taps = taps_at(0);
    let mut current_sym = 0usize;
    for n in 0..total {
        let sym = n / sym_len;
        if fading.is_some() && sym != current_sym {
            current_taps = taps_at(sym);
            current_sym = sym;
        }
        let rot = if imp.delta_f != 0.0 {
            Complex64::from_polar(1.0, std::f64::consts::TAU * imp.delta_f * (n + 1) as f64)
        } else {
            Complex64::ONE
        };
        for r in 0..n_r {
            let mut acc = Complex64::ZERO;
            for (t, tap) in current_taps.iter().enumerate() {
                if n < t {
                    break;
                }
                for a in 0..n_t {
                    acc += tap[(r, a)] * filtered[(a, n - t)];
                }
            }
            acc *= rot;
            if sigma2 > 0.0 {
                acc += imp.noise.sample(sigma2, rng);
            }
            rx[(r, n)] = acc;
        }
    }

    let mut obs = OfdmObservations::new(n_r, meta.n_sub, meta.n_sym);
    obs.cp_warning = cp_warning;
    let mut buf = vec![Complex64::ZERO; meta.n_sub];
    for s in 0..meta.n_sym {
        for r in 0..n_r {
            for i in 0..meta.n_sub {
                buf[i] = rx[(r, s * sym_len + meta.cp_len + i)];
            }
            fft_unitary(&mut buf, false);
            for k in 0..meta.n_sub {
                obs.vector_mut(k, s)[r] = buf[k];
            }
        }
    }
    Ok(obs)
}
