//! Subspace feature front-end: sliding-window covariance estimators over
//! received baseband slots, the Gerschgorin similarity transform with radius
//! compression, and the OFDM detector grouping/combining paths.

use num_complex::Complex64;

use crate::channel::OfdmObservations;
use crate::error::{invalid, Error, Result};
use crate::mat::{eigh, eigh_sym, ComplexMatrix, RealMatrix};

/// The six window restructurings. `Alpha` observes the received block
/// `Y(l) = [y(l), y(l+1)]` at even start slots; the `Beta*` kinds observe
/// the vectorized block at start slots 4m-3 / 4m-2 / 4m-1; the `Gamma*`
/// kinds observe the real-stacked block at start slots 4m-3 / 4m-1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowKind {
    Alpha,
    Beta1,
    Beta2,
    Beta3,
    Gamma1,
    Gamma2,
}

/// Which of the three regression networks consumes a window kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureFamily {
    Alpha,
    Beta,
    Gamma,
}

impl WindowKind {
    pub const ALL: [WindowKind; 6] = [
        WindowKind::Alpha,
        WindowKind::Beta1,
        WindowKind::Beta2,
        WindowKind::Beta3,
        WindowKind::Gamma1,
        WindowKind::Gamma2,
    ];

    pub fn family(self) -> FeatureFamily {
        match self {
            WindowKind::Alpha => FeatureFamily::Alpha,
            WindowKind::Beta1 | WindowKind::Beta2 | WindowKind::Beta3 => FeatureFamily::Beta,
            WindowKind::Gamma1 | WindowKind::Gamma2 => FeatureFamily::Gamma,
        }
    }

    /// Covariance dimension J for `n_r` receive antennas.
    pub fn covariance_dim(self, n_r: usize) -> usize {
        match self.family() {
            FeatureFamily::Alpha => n_r,
            FeatureFamily::Beta => 2 * n_r,
            FeatureFamily::Gamma => 4 * n_r,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Alpha => "alpha",
            WindowKind::Beta1 => "beta1",
            WindowKind::Beta2 => "beta2",
            WindowKind::Beta3 => "beta3",
            WindowKind::Gamma1 => "gamma1",
            WindowKind::Gamma2 => "gamma2",
        }
    }

    /// 0-based window start columns visited by the sliding estimator over
    /// `len` columns (window covers `c` and `c+1`).
    pub fn window_starts(self, len: usize) -> Vec<usize> {
        match self {
            // l = 2m, m = 1..L/2-1: the last slot pair is deliberately
            // dropped, matching the estimator definition.
            WindowKind::Alpha => {
                let m_max = (len / 2).saturating_sub(1);
                (1..=m_max).map(|m| 2 * m - 1).collect()
            }
            WindowKind::Beta1 | WindowKind::Gamma1 => {
                (1..=len / 4).map(|m| 4 * m - 4).collect()
            }
            WindowKind::Beta2 => (1..=len / 4).map(|m| 4 * m - 3).collect(),
            WindowKind::Beta3 | WindowKind::Gamma2 => {
                (1..=len / 4).map(|m| 4 * m - 2).collect()
            }
        }
    }
}

impl std::fmt::Display for WindowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A window covariance: Hermitian for the complex kinds, symmetric for the
/// real-stacked kinds.
#[derive(Debug, Clone)]
pub enum CovarianceData {
    Hermitian(ComplexMatrix),
    Symmetric(RealMatrix),
}

#[derive(Debug, Clone)]
pub struct Covariance {
    pub kind: WindowKind,
    pub data: CovarianceData,
}

impl Covariance {
    pub fn dim(&self) -> usize {
        match &self.data {
            CovarianceData::Hermitian(m) => m.rows(),
            CovarianceData::Symmetric(m) => m.rows(),
        }
    }

    /// Wraps an externally built Hermitian matrix.
    pub fn hermitian(kind: WindowKind, m: ComplexMatrix) -> Self {
        Self { kind, data: CovarianceData::Hermitian(m) }
    }

    pub fn symmetric(kind: WindowKind, m: RealMatrix) -> Self {
        Self { kind, data: CovarianceData::Symmetric(m) }
    }

    pub fn scale(&self, s: f64) -> Self {
        let data = match &self.data {
            CovarianceData::Hermitian(m) => CovarianceData::Hermitian(m.scale(s)),
            CovarianceData::Symmetric(m) => CovarianceData::Symmetric(m.scale(s)),
        };
        Self { kind: self.kind, data }
    }
}

/// Gerschgorin radii of one covariance after the similarity transform:
/// `mu` are the reduced-matrix eigenvalues (descending), `raw` the circle
/// radii `r_i = |q_i^H a|` and `compressed` the squeezed radii
/// `R_i = |mu_i / mu_mean| r_i`.
#[derive(Debug, Clone)]
pub struct RadiiVector {
    pub kind: WindowKind,
    pub mu: Vec<f64>,
    pub raw: Vec<f64>,
    pub compressed: Vec<f64>,
}

impl RadiiVector {
    pub fn len(&self) -> usize {
        self.compressed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compressed.is_empty()
    }
}

fn stack_window_complex(y: &ComplexMatrix, c: usize, buf: &mut Vec<Complex64>) {
    let n_r = y.rows();
    buf.clear();
    for r in 0..n_r {
        buf.push(y[(r, c)]);
    }
    for r in 0..n_r {
        buf.push(y[(r, c + 1)]);
    }
}

fn stack_window_real(y: &ComplexMatrix, c: usize, buf: &mut Vec<f64>) {
    let n_r = y.rows();
    buf.clear();
    for r in 0..n_r {
        buf.push(y[(r, c)].re);
    }
    for r in 0..n_r {
        buf.push(y[(r, c)].im);
    }
    for r in 0..n_r {
        buf.push(y[(r, c + 1)].re);
    }
    for r in 0..n_r {
        buf.push(y[(r, c + 1)].im);
    }
}

/// Sliding-window covariance estimate over received slots (`n_r x L`).
/// `L` is truncated down to a multiple of 4; at least one window per offset
/// class must remain.
pub fn estimate_covariance(y: &ComplexMatrix, kind: WindowKind) -> Result<Covariance> {
    let n_r = y.rows();
    let len = y.cols() & !3;
    if len < 4 {
        return Err(invalid(format!(
            "estimate_covariance: {} usable slots of {} are too few",
            len,
            y.cols()
        )));
    }
    let starts = kind.window_starts(len);
    let weight = 1.0 / starts.len() as f64;
    let data = match kind.family() {
        FeatureFamily::Alpha => {
            let mut acc = ComplexMatrix::zeros(n_r, n_r);
            for &c in &starts {
                acc.add_outer(&y.column(c), 1.0);
                acc.add_outer(&y.column(c + 1), 1.0);
            }
            CovarianceData::Hermitian(acc.scale(weight))
        }
        FeatureFamily::Beta => {
            let mut acc = ComplexMatrix::zeros(2 * n_r, 2 * n_r);
            let mut buf = Vec::with_capacity(2 * n_r);
            for &c in &starts {
                stack_window_complex(y, c, &mut buf);
                acc.add_outer(&buf, 1.0);
            }
            CovarianceData::Hermitian(acc.scale(weight))
        }
        FeatureFamily::Gamma => {
            let mut acc = RealMatrix::zeros(4 * n_r, 4 * n_r);
            let mut buf = Vec::with_capacity(4 * n_r);
            for &c in &starts {
                stack_window_real(y, c, &mut buf);
                acc.add_outer(&buf, 1.0);
            }
            CovarianceData::Symmetric(acc.scale(weight))
        }
    };
    Ok(Covariance { kind, data })
}

/// Gerschgorin radii of a covariance after the unitary similarity transform
/// built from the leading principal submatrix, with the compression that
/// shrinks noise-subspace circles.
pub fn gerschgorin_radii(cov: &Covariance) -> Result<RadiiVector> {
    let j = cov.dim();
    if j < 2 {
        return Err(invalid("gerschgorin_radii: covariance must be at least 2x2"));
    }
    match &cov.data {
        CovarianceData::Hermitian(m) => {
            if m.rows() != m.cols() {
                return Err(invalid("gerschgorin_radii: matrix not square"));
            }
            let scale = m.data().iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
            if m.hermitian_defect() > 1e-8 * scale {
                return Err(invalid("gerschgorin_radii: input is not Hermitian"));
            }
            let reduced = ComplexMatrix::from_fn(j - 1, j - 1, |r, c| m[(r, c)]);
            let eig = eigh(&reduced)?;
            let corner: Vec<Complex64> = (0..j - 1).map(|r| m[(r, j - 1)]).collect();
            let raw: Vec<f64> = (0..j - 1)
                .map(|i| {
                    let rho: Complex64 = (0..j - 1)
                        .map(|k| eig.vectors[(k, i)].conj() * corner[k])
                        .sum();
                    rho.norm()
                })
                .collect();
            finish_radii(cov.kind, eig.values, raw)
        }
        CovarianceData::Symmetric(m) => {
            if m.rows() != m.cols() {
                return Err(invalid("gerschgorin_radii: matrix not square"));
            }
            let scale = m.data().iter().map(|x| x.abs()).fold(0.0f64, f64::max).max(1.0);
            if m.symmetry_defect() > 1e-8 * scale {
                return Err(invalid("gerschgorin_radii: input is not symmetric"));
            }
            let reduced = RealMatrix::from_fn(j - 1, j - 1, |r, c| m[(r, c)]);
            let eig = eigh_sym(&reduced)?;
            let corner: Vec<f64> = (0..j - 1).map(|r| m[(r, j - 1)]).collect();
            let raw: Vec<f64> = (0..j - 1)
                .map(|i| {
                    let rho: f64 = (0..j - 1).map(|k| eig.vectors[(k, i)] * corner[k]).sum();
                    rho.abs()
                })
                .collect();
            finish_radii(cov.kind, eig.values, raw)
        }
    }
}

fn finish_radii(kind: WindowKind, mu: Vec<f64>, raw: Vec<f64>) -> Result<RadiiVector> {
    let mean = mu.iter().sum::<f64>() / mu.len() as f64;
    if mean.abs() < 1e-300 {
        return Err(Error::Degenerate(
            "gerschgorin_radii: eigenvalue mean vanishes (all-zero covariance?)".into(),
        ));
    }
    let compressed: Vec<f64> =
        mu.iter().zip(&raw).map(|(&m, &r)| (m / mean).abs() * r).collect();
    Ok(RadiiVector { kind, mu, raw, compressed })
}

/// Element-wise mean of per-detector radii. All inputs must share the kind
/// and length; a single detector passes through unchanged.
pub fn combine_detectors(radii: &[RadiiVector]) -> Result<RadiiVector> {
    let first = radii.first().ok_or_else(|| invalid("combine_detectors: no detectors"))?;
    let kind = first.kind;
    let len = first.len();
    for r in radii {
        if r.kind != kind {
            return Err(invalid(format!(
                "combine_detectors: mixed kinds {} and {}",
                kind, r.kind
            )));
        }
        if r.len() != len {
            return Err(invalid("combine_detectors: mixed radii lengths"));
        }
    }
    let scale = 1.0 / radii.len() as f64;
    let mean_of = |f: fn(&RadiiVector) -> &Vec<f64>| -> Vec<f64> {
        let mut acc = vec![0.0; len];
        for r in radii {
            for (a, v) in acc.iter_mut().zip(f(r)) {
                *a += v;
            }
        }
        acc.iter().map(|v| v * scale).collect()
    };
    Ok(RadiiVector {
        kind,
        mu: mean_of(|r| &r.mu),
        raw: mean_of(|r| &r.raw),
        compressed: mean_of(|r| &r.compressed),
    })
}

/// Serially incorporates each group of four consecutive subcarriers into one
/// data block of `4 * n_sym` columns (`[y_k(1..N_b), y_{k+1}(1..N_b), ...]`).
/// Returns the `n_sub / 4` blocks in subcarrier order.
pub fn group_stbc_ofdm(obs: &OfdmObservations) -> Result<Vec<ComplexMatrix>> {
    if obs.n_sub % 4 != 0 {
        return Err(invalid(format!(
            "group_stbc_ofdm: {} subcarriers not divisible by 4",
            obs.n_sub
        )));
    }
    if obs.n_sym == 0 {
        return Err(invalid("group_stbc_ofdm: no OFDM symbols"));
    }
    let mut blocks = Vec::with_capacity(obs.n_sub / 4);
    for p in 0..obs.n_sub / 4 {
        let mut block = ComplexMatrix::zeros(obs.n_r, 4 * obs.n_sym);
        for j in 0..4 {
            let k = 4 * p + j;
            for n in 0..obs.n_sym {
                let v = obs.vector(k, n);
                let col = j * obs.n_sym + n;
                for r in 0..obs.n_r {
                    block[(r, col)] = v[r];
                }
            }
        }
        blocks.push(block);
    }
    Ok(blocks)
}

/// 0-based subcarrier window starts usable as SFBC detectors of `kind`.
pub fn sfbc_window_starts(kind: WindowKind, n_sub: usize) -> Vec<usize> {
    kind.window_starts(n_sub)
}

/// Per-subcarrier-window covariance for the SFBC path: the window at start
/// subcarrier `l` (0-based) is averaged over the OFDM symbols.
pub fn sfbc_detector_covariance(
    obs: &OfdmObservations,
    kind: WindowKind,
    l: usize,
) -> Result<Covariance> {
    if obs.n_sym == 0 {
        return Err(invalid("sfbc_detector_covariance: no OFDM symbols"));
    }
    if l + 1 >= obs.n_sub {
        return Err(invalid(format!(
            "sfbc_detector_covariance: window at {} exceeds {} subcarriers",
            l, obs.n_sub
        )));
    }
    let n_r = obs.n_r;
    let weight = 1.0 / obs.n_sym as f64;
    let data = match kind.family() {
        FeatureFamily::Alpha => {
            let mut acc = ComplexMatrix::zeros(n_r, n_r);
            for n in 0..obs.n_sym {
                acc.add_outer(obs.vector(l, n), 1.0);
                acc.add_outer(obs.vector(l + 1, n), 1.0);
            }
            CovarianceData::Hermitian(acc.scale(weight))
        }
        FeatureFamily::Beta => {
            let mut acc = ComplexMatrix::zeros(2 * n_r, 2 * n_r);
            let mut buf = Vec::with_capacity(2 * n_r);
            for n in 0..obs.n_sym {
                buf.clear();
                buf.extend_from_slice(obs.vector(l, n));
                buf.extend_from_slice(obs.vector(l + 1, n));
                acc.add_outer(&buf, 1.0);
            }
            CovarianceData::Hermitian(acc.scale(weight))
        }
        FeatureFamily::Gamma => {
            let mut acc = RealMatrix::zeros(4 * n_r, 4 * n_r);
            let mut buf = Vec::with_capacity(4 * n_r);
            for n in 0..obs.n_sym {
                buf.clear();
                let a = obs.vector(l, n);
                let b = obs.vector(l + 1, n);
                buf.extend(a.iter().map(|z| z.re));
                buf.extend(a.iter().map(|z| z.im));
                buf.extend(b.iter().map(|z| z.re));
                buf.extend(b.iter().map(|z| z.im));
                acc.add_outer(&buf, 1.0);
            }
            CovarianceData::Symmetric(acc.scale(weight))
        }
    };
    Ok(Covariance { kind, data })
}

/// Exact received-window covariance from an exact transmitted-window
/// covariance: the channel sandwich plus the kind's noise floor
/// (2 sigma_w^2, sigma_w^2 or sigma_w^2 / 2 on the diagonal).
pub fn received_covariance_from_transmit(
    tx_cov: &Covariance,
    h: &ComplexMatrix,
    noise_var: f64,
) -> Result<Covariance> {
    let n_r = h.rows();
    let n_t = h.cols();
    let kind = tx_cov.kind;
    match (&tx_cov.data, kind.family()) {
        (CovarianceData::Hermitian(s), FeatureFamily::Alpha) => {
            if s.rows() != n_t {
                return Err(invalid("alpha transmit covariance must be n_t x n_t"));
            }
            let mut rx = h.mul(s).mul(&h.hermitian());
            for i in 0..n_r {
                rx[(i, i)] += 2.0 * noise_var;
            }
            Ok(Covariance::hermitian(kind, rx))
        }
        (CovarianceData::Hermitian(s), FeatureFamily::Beta) => {
            if s.rows() != 2 * n_t {
                return Err(invalid("beta transmit covariance must be 2n_t x 2n_t"));
            }
            let hbar = block_diag_c(h, 2);
            let mut rx = hbar.mul(s).mul(&hbar.hermitian());
            for i in 0..2 * n_r {
                rx[(i, i)] += noise_var;
            }
            Ok(Covariance::hermitian(kind, rx))
        }
        (CovarianceData::Symmetric(s), FeatureFamily::Gamma) => {
            if s.rows() != 4 * n_t {
                return Err(invalid("gamma transmit covariance must be 4n_t x 4n_t"));
            }
            let htilde = realified(h);
            let g = block_diag_r(&htilde, 2);
            let mut rx = real_sandwich(&g, s);
            for i in 0..4 * n_r {
                rx[(i, i)] += noise_var / 2.0;
            }
            Ok(Covariance::symmetric(kind, rx))
        }
        _ => Err(invalid("transmit covariance flavor does not match its kind")),
    }
}

/// `[Re H, -Im H; Im H, Re H]`, the real operator of `s -> H s`.
fn realified(h: &ComplexMatrix) -> RealMatrix {
    let (r, c) = (h.rows(), h.cols());
    RealMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = h[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
            (false, false) => z.re,
        }
    })
}

fn block_diag_c(m: &ComplexMatrix, copies: usize) -> ComplexMatrix {
    let (r, c) = (m.rows(), m.cols());
    ComplexMatrix::from_fn(copies * r, copies * c, |i, j| {
        if i / r == j / c {
            m[(i % r, j % c)]
        } else {
            Complex64::ZERO
        }
    })
}

fn block_diag_r(m: &RealMatrix, copies: usize) -> RealMatrix {
    let (r, c) = (m.rows(), m.cols());
    RealMatrix::from_fn(copies * r, copies * c, |i, j| {
        if i / r == j / c {
            m[(i % r, j % c)]
        } else {
            0.0
        }
    })
}

/// G S G^T for real matrices.
fn real_sandwich(g: &RealMatrix, s: &RealMatrix) -> RealMatrix {
    let tmp = {
        let mut out = RealMatrix::zeros(g.rows(), s.cols());
        for i in 0..g.rows() {
            for k in 0..g.cols() {
                let a = g[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..s.cols() {
                    out[(i, j)] += a * s[(k, j)];
                }
            }
        }
        out
    };
    let mut out = RealMatrix::zeros(g.rows(), g.rows());
    for i in 0..g.rows() {
        for j in 0..g.rows() {
            let mut acc = 0.0;
            for k in 0..g.cols() {
                acc += tmp[(i, k)] * g[(j, k)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::{self, SchemeId};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn one_window_average_is_identity() {
        // Columns 1 and 2 (0-based) form the only alpha window at L = 4.
        let mut y = ComplexMatrix::zeros(2, 4);
        y[(0, 1)] = cx(1.0, 0.0);
        y[(1, 2)] = cx(1.0, 0.0);
        let cov = estimate_covariance(&y, WindowKind::Alpha).unwrap();
        let CovarianceData::Hermitian(m) = &cov.data else { panic!() };
        let defect = m.sub(&ComplexMatrix::identity(2)).frobenius_norm();
        assert!(defect < 1e-14);
    }

    #[test]
    fn too_few_slots_is_an_error() {
        let y = ComplexMatrix::zeros(2, 3);
        assert!(estimate_covariance(&y, WindowKind::Alpha).is_err());
    }

    #[test]
    fn window_starts_match_offset_classes() {
        assert_eq!(WindowKind::Alpha.window_starts(12), vec![1, 3, 5, 7, 9]);
        assert_eq!(WindowKind::Beta1.window_starts(12), vec![0, 4, 8]);
        assert_eq!(WindowKind::Beta2.window_starts(12), vec![1, 5, 9]);
        assert_eq!(WindowKind::Beta3.window_starts(12), vec![2, 6, 10]);
        assert_eq!(WindowKind::Gamma2.window_starts(12), vec![2, 6, 10]);
        // N = 8 SFBC: beta1 detectors at 1-based subcarriers {1, 5}.
        assert_eq!(sfbc_window_starts(WindowKind::Beta1, 8), vec![0, 4]);
    }

    #[test]
    fn noise_only_alpha_eigenvalues_near_twice_noise_var() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let n_r = 4;
        let l = 4096;
        let sigma_w2: f64 = 0.3;
        let s = (sigma_w2 / 2.0).sqrt();
        let y = ComplexMatrix::from_fn(n_r, l, |_, _| {
            cx(
                s * rng.sample::<f64, _>(rand_distr::StandardNormal),
                s * rng.sample::<f64, _>(rand_distr::StandardNormal),
            )
        });
        let cov = estimate_covariance(&y, WindowKind::Alpha).unwrap();
        let CovarianceData::Hermitian(m) = &cov.data else { panic!() };
        let eig = crate::mat::eigh(m).unwrap();
        for v in eig.values {
            assert!(
                (v - 2.0 * sigma_w2).abs() < 0.1 * 2.0 * sigma_w2,
                "eigenvalue {v} vs {}",
                2.0 * sigma_w2
            );
        }
    }

    #[test]
    fn gerschgorin_hand_example() {
        let m = ComplexMatrix::from_rows(&[
            vec![cx(2.0, 0.0), cx(1.0, 0.0)],
            vec![cx(1.0, 0.0), cx(2.0, 0.0)],
        ]);
        let radii = gerschgorin_radii(&Covariance::hermitian(WindowKind::Alpha, m)).unwrap();
        assert_eq!(radii.mu, vec![2.0]);
        assert!((radii.raw[0] - 1.0).abs() < 1e-15);
        assert!((radii.compressed[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_covariance_has_zero_radii() {
        let mut m = ComplexMatrix::zeros(5, 5);
        for i in 0..5 {
            m[(i, i)] = cx(1.0 + i as f64, 0.0);
        }
        let radii = gerschgorin_radii(&Covariance::hermitian(WindowKind::Alpha, m)).unwrap();
        assert!(radii.raw.iter().all(|&r| r == 0.0));
        assert!(radii.compressed.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let m = ComplexMatrix::from_rows(&[
            vec![cx(1.0, 0.0), cx(1.0, 0.0)],
            vec![cx(0.5, 0.0), cx(1.0, 0.0)],
        ]);
        assert!(gerschgorin_radii(&Covariance::hermitian(WindowKind::Alpha, m)).is_err());
    }

    #[test]
    fn zero_covariance_is_degenerate() {
        let m = ComplexMatrix::zeros(3, 3);
        assert!(matches!(
            gerschgorin_radii(&Covariance::hermitian(WindowKind::Alpha, m)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn radii_are_homogeneous_in_the_covariance_scale() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let j = 8;
        let mut m = ComplexMatrix::zeros(j, j);
        for _ in 0..j {
            let v: Vec<Complex64> = (0..j)
                .map(|_| cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            m.add_outer(&v, 1.0);
        }
        let base = gerschgorin_radii(&Covariance::hermitian(WindowKind::Alpha, m.clone())).unwrap();
        let scaled =
            gerschgorin_radii(&Covariance::hermitian(WindowKind::Alpha, m.scale(7.5))).unwrap();
        for (b, s) in base.compressed.iter().zip(&scaled.compressed) {
            assert!((7.5 * b - s).abs() < 1e-9 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn combine_detectors_means_and_identity() {
        let mk = |vals: &[f64]| RadiiVector {
            kind: WindowKind::Beta1,
            mu: vals.to_vec(),
            raw: vals.to_vec(),
            compressed: vals.to_vec(),
        };
        let combined = combine_detectors(&[mk(&[1.0, 2.0]), mk(&[3.0, 4.0])]).unwrap();
        assert_eq!(combined.compressed, vec![2.0, 3.0]);
        let single = combine_detectors(&[mk(&[1.0, 2.0])]).unwrap();
        assert_eq!(single.compressed, vec![1.0, 2.0]);
        let mixed = combine_detectors(&[
            mk(&[1.0, 2.0]),
            RadiiVector {
                kind: WindowKind::Beta2,
                mu: vec![0.0; 2],
                raw: vec![0.0; 2],
                compressed: vec![0.0; 2],
            },
        ]);
        assert!(mixed.is_err());
    }

    #[test]
    fn combined_variance_shrinks_like_one_over_n() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let n_det = 16;
        let trials = 400;
        let mut single_sq = 0.0;
        let mut combined_sq = 0.0;
        for _ in 0..trials {
            let dets: Vec<RadiiVector> = (0..n_det)
                .map(|_| {
                    let v = rng.random_range(-1.0..1.0);
                    RadiiVector {
                        kind: WindowKind::Alpha,
                        mu: vec![v],
                        raw: vec![v],
                        compressed: vec![v],
                    }
                })
                .collect();
            single_sq += dets[0].compressed[0].powi(2);
            combined_sq += combine_detectors(&dets).unwrap().compressed[0].powi(2);
        }
        let ratio = combined_sq / single_sq;
        assert!(
            (ratio - 1.0 / n_det as f64).abs() < 0.5 / n_det as f64,
            "variance ratio {ratio}"
        );
    }

    #[test]
    fn sfbc_window_stacking_matches_manual_concatenation() {
        let (n_r, n_sub, n_sym) = (2usize, 8usize, 3usize);
        let mut obs = crate::channel::OfdmObservations::new(n_r, n_sub, n_sym);
        let mut val = 0.0;
        for n in 0..n_sym {
            for k in 0..n_sub {
                for r in 0..n_r {
                    val += 1.0;
                    obs.vector_mut(k, n)[r] = cx(val, -0.5 * val);
                }
            }
        }
        let l = 4;
        let cov = sfbc_detector_covariance(&obs, WindowKind::Beta1, l).unwrap();
        let CovarianceData::Hermitian(m) = &cov.data else { panic!() };
        let mut manual = ComplexMatrix::zeros(2 * n_r, 2 * n_r);
        for n in 0..n_sym {
            let mut stacked = obs.vector(l, n).to_vec();
            stacked.extend_from_slice(obs.vector(l + 1, n));
            manual.add_outer(&stacked, 1.0 / n_sym as f64);
        }
        assert!(m.sub(&manual).frobenius_norm() < 1e-12 * manual.frobenius_norm());
    }

    #[test]
    fn sfbc_alamouti_noiseless_covariance_has_rank_four() {
        use crate::channel::{apply_selective_ofdm, ImpairmentSpec, SelectiveChannel};
        use crate::txchain::{self, SystemVariant};
        let mut rng = ChaCha12Rng::seed_from_u64(404);
        let (n_r, n_sub, n_sym) = (4usize, 8usize, 400usize);
        let count =
            txchain::frame_symbol_count(SystemVariant::SfbcOfdm, SchemeId::Al, n_sub, n_sym);
        let bits: Vec<u8> = (0..2 * count).map(|_| rng.random_range(0..=1) as u8).collect();
        let syms = txchain::modulate(&bits, txchain::ModulationSpec::QPSK).unwrap();
        let frame =
            txchain::frame_ofdm(SystemVariant::SfbcOfdm, SchemeId::Al, &syms, n_sub, 2, n_sym)
                .unwrap();
        let ch = SelectiveChannel::random(n_r, 2, 1, &mut rng);
        let obs =
            apply_selective_ofdm(&ch, &frame, &ImpairmentSpec::default(), f64::INFINITY, &mut rng)
                .unwrap();
        let cov = sfbc_detector_covariance(&obs, WindowKind::Beta1, 0).unwrap();
        let CovarianceData::Hermitian(m) = &cov.data else { panic!() };
        let eig = eigh(m).unwrap();
        // noiseless samples live in the 4-dimensional symbol span
        assert!(eig.values[3] > 1e-3, "fourth eigenvalue {}", eig.values[3]);
        for &v in &eig.values[4..] {
            assert!(v.abs() < 1e-12 * eig.values[0], "rank exceeds 4: {v}");
        }
    }

    #[test]
    fn proposition_suite_for_alamouti() {
        // Received covariances built from the exact transmitted covariances
        // carry flat noise floors of 2s, s and s/2 with the expected
        // multiplicities.
        let n_r = 8;
        let sigma_w2 = 0.1;
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let h = ComplexMatrix::from_fn(n_r, 2, |_, _| {
            cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let sig = schemes::signature(SchemeId::Al);
        let cases = [
            (WindowKind::Alpha, n_r - 2, 2.0 * sigma_w2),
            (WindowKind::Beta1, 2 * n_r - sig.beta[0] as usize, sigma_w2),
            (WindowKind::Gamma1, 4 * n_r - sig.gamma[0] as usize, sigma_w2 / 2.0),
        ];
        for (kind, noise_count, floor) in cases {
            let tx = schemes::exact_transmit_covariance(SchemeId::Al, kind, 1.0).unwrap();
            let rx = received_covariance_from_transmit(&tx, &h, sigma_w2).unwrap();
            let values = match &rx.data {
                CovarianceData::Hermitian(m) => eigh(m).unwrap().values,
                CovarianceData::Symmetric(m) => eigh_sym(m).unwrap().values,
            };
            let j = values.len();
            for &v in &values[j - noise_count..] {
                assert!((v - floor).abs() < 1e-9, "{kind}: noise eigenvalue {v} vs {floor}");
            }
            assert!(values[j - noise_count - 1] > floor * (1.0 + 1e-6), "{kind}: subspace gap");
        }
    }
}
