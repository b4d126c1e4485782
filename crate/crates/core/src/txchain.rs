//! Transmitter simulation: bit-to-symbol mapping, TD/SM stream encoding and
//! OFDM framing (unitary IFFT plus cyclic prefix) for the three system
//! variants, together with a little-endian binary frame format for dumping
//! generated frames to disk.

use std::cell::RefCell;
use std::io::{Read, Write};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mat::ComplexMatrix;
use crate::schemes::{self, SchemeId};

/// Constellation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModFamily {
    Psk,
    Qam,
}

/// Modulation: 4/8-PSK or 16/64-QAM, Gray labeled, unit average power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModulationSpec {
    pub family: ModFamily,
    pub order: usize,
}

impl ModulationSpec {
    pub const QPSK: ModulationSpec = ModulationSpec { family: ModFamily::Psk, order: 4 };

    pub fn new(family: ModFamily, order: usize) -> Result<Self> {
        let ok = match family {
            ModFamily::Psk => matches!(order, 4 | 8),
            ModFamily::Qam => matches!(order, 16 | 64),
        };
        if !ok {
            return Err(invalid(format!("unsupported modulation order {order} for {family:?}")));
        }
        Ok(Self { family, order })
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    pub fn name(&self) -> String {
        match self.family {
            ModFamily::Psk => format!("{}psk", self.order),
            ModFamily::Qam => format!("{}qam", self.order),
        }
    }
}

impl std::str::FromStr for ModulationSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "4psk" | "qpsk" | "4-psk" => ModulationSpec::new(ModFamily::Psk, 4),
            "8psk" | "8-psk" => ModulationSpec::new(ModFamily::Psk, 8),
            "16qam" | "16-qam" => ModulationSpec::new(ModFamily::Qam, 16),
            "64qam" | "64-qam" => ModulationSpec::new(ModFamily::Qam, 64),
            other => Err(invalid(format!("unknown modulation `{other}`"))),
        }
    }
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = g;
    while g > 1 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Index of the constellation point labeled by the Gray code `v`.
fn gray_position(v: usize) -> usize {
    gray_to_binary(v)
}

/// Maps a 0/1 bit sequence onto Gray-labeled unit-average-power symbols.
pub fn modulate(bits: &[u8], spec: ModulationSpec) -> Result<Vec<Complex64>> {
    let m = spec.bits_per_symbol();
    if bits.len() % m != 0 {
        return Err(invalid(format!(
            "bit count {} is not divisible by bits/symbol {m}",
            bits.len()
        )));
    }
    let mut out = Vec::with_capacity(bits.len() / m);
    for chunk in bits.chunks(m) {
        let v = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
        out.push(map_symbol(v, spec));
    }
    Ok(out)
}

fn map_symbol(v: usize, spec: ModulationSpec) -> Complex64 {
    match spec.family {
        ModFamily::Psk => {
            let p = gray_position(v);
            let phase = std::f64::consts::TAU * p as f64 / spec.order as f64
                + std::f64::consts::PI / spec.order as f64;
            Complex64::from_polar(1.0, phase)
        }
        ModFamily::Qam => {
            // Independent Gray labeling per axis, levels +-1, +-3, ...
            let half = spec.bits_per_symbol() / 2;
            let side = 1usize << half;
            let vi = v >> half;
            let vq = v & (side - 1);
            let level = |g: usize| (2 * gray_position(g)) as f64 - (side as f64 - 1.0);
            // E[a^2] per axis for levels {+-1, +-3, ..} is (side^2 - 1) / 3.
            let norm = (2.0 * (side as f64 * side as f64 - 1.0) / 3.0).sqrt();
            Complex64::new(level(vi), level(vq)) / norm
        }
    }
}

/// Concatenates codeword matrices over a symbol stream: `n_t x slots`, slot 0
/// is a code-block boundary. No power scaling is applied here.
pub fn encode_stream(id: SchemeId, symbols: &[Complex64]) -> Result<ComplexMatrix> {
    let desc = schemes::descriptor(id);
    let n_s = desc.symbols_per_block;
    if symbols.is_empty() || symbols.len() % n_s != 0 {
        return Err(invalid(format!(
            "{id}: symbol count {} is not a positive multiple of {n_s}",
            symbols.len()
        )));
    }
    let blocks = symbols.len() / n_s;
    let mut out = ComplexMatrix::zeros(desc.n_t, blocks * desc.block_len);
    for b in 0..blocks {
        let cw = schemes::codeword(id, &symbols[b * n_s..(b + 1) * n_s])?;
        for a in 0..desc.n_t {
            for t in 0..desc.block_len {
                out[(a, b * desc.block_len + t)] = cw[(a, t)];
            }
        }
    }
    Ok(out)
}

/// System variant: which axis the codeword time dimension spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemVariant {
    #[serde(rename = "single-carrier")]
    SingleCarrier,
    #[serde(rename = "stbc-ofdm")]
    StbcOfdm,
    #[serde(rename = "sfbc-ofdm")]
    SfbcOfdm,
}

impl SystemVariant {
    pub fn name(self) -> &'static str {
        match self {
            SystemVariant::SingleCarrier => "single-carrier",
            SystemVariant::StbcOfdm => "stbc-ofdm",
            SystemVariant::SfbcOfdm => "sfbc-ofdm",
        }
    }

    fn tag(self) -> u32 {
        match self {
            SystemVariant::SingleCarrier => 0,
            SystemVariant::StbcOfdm => 1,
            SystemVariant::SfbcOfdm => 2,
        }
    }

    fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(SystemVariant::SingleCarrier),
            1 => Ok(SystemVariant::StbcOfdm),
            2 => Ok(SystemVariant::SfbcOfdm),
            other => Err(Error::Format(format!("unknown frame variant tag {other}"))),
        }
    }
}

impl std::str::FromStr for SystemVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single-carrier" | "single_carrier" | "sc" => Ok(SystemVariant::SingleCarrier),
            "stbc-ofdm" | "stbc_ofdm" | "stbc" => Ok(SystemVariant::StbcOfdm),
            "sfbc-ofdm" | "sfbc_ofdm" | "sfbc" => Ok(SystemVariant::SfbcOfdm),
            other => Err(invalid(format!("unknown system variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for SystemVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// OFDM geometry of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfdmMeta {
    pub n_sub: usize,
    pub cp_len: usize,
    pub n_sym: usize,
}

/// One generated transmit frame: per-antenna baseband samples, power-scaled
/// so the total transmit power per slot is 1.
#[derive(Debug, Clone)]
pub struct TxFrame {
    pub variant: SystemVariant,
    pub samples: ComplexMatrix,
    pub meta: Option<OfdmMeta>,
}

/// Symbols consumed by a single-carrier stream covering at least `min_slots`
/// slots.
pub fn stream_symbol_count(id: SchemeId, min_slots: usize) -> usize {
    let desc = schemes::descriptor(id);
    min_slots.div_ceil(desc.block_len) * desc.symbols_per_block
}

/// Symbols consumed by an OFDM frame of the given geometry.
pub fn frame_symbol_count(
    variant: SystemVariant,
    id: SchemeId,
    n_sub: usize,
    n_sym: usize,
) -> usize {
    let desc = schemes::descriptor(id);
    match variant {
        SystemVariant::SingleCarrier => stream_symbol_count(id, n_sym),
        SystemVariant::StbcOfdm => {
            n_sym.div_ceil(desc.block_len) * n_sub * desc.symbols_per_block
        }
        SystemVariant::SfbcOfdm => n_sym * (n_sub / desc.block_len) * desc.symbols_per_block,
    }
}

/// Power-scaled single-carrier frame of exactly `slots` slots.
pub fn frame_single_carrier(id: SchemeId, symbols: &[Complex64], slots: usize) -> Result<TxFrame> {
    let stream = encode_stream(id, symbols)?;
    if stream.cols() < slots {
        return Err(invalid(format!(
            "{id}: {} encoded slots cannot cover {slots}",
            stream.cols()
        )));
    }
    let scale = schemes::descriptor(id).transmit_scale();
    let samples = ComplexMatrix::from_fn(stream.rows(), slots, |a, t| stream[(a, t)] * scale);
    Ok(TxFrame { variant: SystemVariant::SingleCarrier, samples, meta: None })
}

/// Frequency-domain resource grid, indexed (antenna, subcarrier, symbol).
#[derive(Debug, Clone)]
pub struct OfdmGrid {
    pub n_t: usize,
    pub n_sub: usize,
    pub n_sym: usize,
    data: Vec<Complex64>,
}

impl OfdmGrid {
    fn zeros(n_t: usize, n_sub: usize, n_sym: usize) -> Self {
        Self { n_t, n_sub, n_sym, data: vec![Complex64::ZERO; n_t * n_sub * n_sym] }
    }

    #[inline]
    fn idx(&self, a: usize, k: usize, n: usize) -> usize {
        (a * self.n_sym + n) * self.n_sub + k
    }

    pub fn get(&self, a: usize, k: usize, n: usize) -> Complex64 {
        self.data[self.idx(a, k, n)]
    }

    pub fn set(&mut self, a: usize, k: usize, n: usize, v: Complex64) {
        let i = self.idx(a, k, n);
        self.data[i] = v;
    }

    /// Subcarrier vector of one antenna/OFDM-symbol pair.
    pub fn symbol_slice(&self, a: usize, n: usize) -> &[Complex64] {
        let start = (a * self.n_sym + n) * self.n_sub;
        &self.data[start..start + self.n_sub]
    }
}

/// Maps an encoded symbol stream onto the OFDM grid. STBC-OFDM spans the
/// codeword time axis over consecutive OFDM symbols at a fixed subcarrier;
/// SFBC-OFDM spans it over consecutive subcarriers inside one OFDM symbol.
/// Power scaling is applied here.
pub fn encode_ofdm_grid(
    variant: SystemVariant,
    id: SchemeId,
    symbols: &[Complex64],
    n_sub: usize,
    n_sym: usize,
) -> Result<OfdmGrid> {
    let desc = schemes::descriptor(id);
    let t = desc.block_len;
    let n_s = desc.symbols_per_block;
    let scale = desc.transmit_scale();
    if n_sub == 0 || n_sym == 0 {
        return Err(invalid("encode_ofdm_grid: empty grid"));
    }
    let needed = frame_symbol_count(variant, id, n_sub, n_sym);
    if symbols.len() < needed {
        return Err(invalid(format!(
            "{id}: got {} symbols, need {needed} for an {n_sub}x{n_sym} grid",
            symbols.len()
        )));
    }
    let mut grid = OfdmGrid::zeros(desc.n_t, n_sub, n_sym);
    let mut next = 0usize;
    match variant {
        SystemVariant::StbcOfdm => {
            for round in 0..n_sym.div_ceil(t) {
                for k in 0..n_sub {
                    let cw = schemes::codeword(id, &symbols[next..next + n_s])?;
                    next += n_s;
                    for tau in 0..t {
                        let n = round * t + tau;
                        if n >= n_sym {
                            break;
                        }
                        for a in 0..desc.n_t {
                            grid.set(a, k, n, cw[(a, tau)] * scale);
                        }
                    }
                }
            }
        }
        SystemVariant::SfbcOfdm => {
            if n_sub % t != 0 {
                return Err(invalid(format!(
                    "{id}: {n_sub} subcarriers not divisible by codeword span {t}"
                )));
            }
            for n in 0..n_sym {
                for g in 0..n_sub / t {
                    let cw = schemes::codeword(id, &symbols[next..next + n_s])?;
                    next += n_s;
                    for tau in 0..t {
                        for a in 0..desc.n_t {
                            grid.set(a, g * t + tau, n, cw[(a, tau)] * scale);
                        }
                    }
                }
            }
        }
        SystemVariant::SingleCarrier => {
            return Err(invalid("encode_ofdm_grid: single-carrier has no grid"));
        }
    }
    Ok(grid)
}

thread_local! {
    static FFT_PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unitary FFT (forward: receiver direction) in place.
pub fn fft_unitary(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    FFT_PLANNER.with(|p| {
        let fft = if inverse {
            p.borrow_mut().plan_fft_inverse(n)
        } else {
            p.borrow_mut().plan_fft_forward(n)
        };
        fft.process(buf);
    });
    let s = 1.0 / (n as f64).sqrt();
    for v in buf {
        *v *= s;
    }
}

/// Per-antenna time-domain signal of a grid: unitary IFFT of each OFDM
/// symbol with the last `cp_len` samples prefixed.
pub fn ofdm_modulate(grid: &OfdmGrid, cp_len: usize) -> Result<TxFrame> {
    let n = grid.n_sub;
    if cp_len >= n {
        return Err(invalid(format!("cyclic prefix {cp_len} must be shorter than {n}")));
    }
    let sym_len = n + cp_len;
    let mut samples = ComplexMatrix::zeros(grid.n_t, grid.n_sym * sym_len);
    let mut buf = vec![Complex64::ZERO; n];
    for a in 0..grid.n_t {
        for s in 0..grid.n_sym {
            buf.copy_from_slice(grid.symbol_slice(a, s));
            fft_unitary(&mut buf, true);
            let base = s * sym_len;
            for (i, v) in buf[n - cp_len..].iter().enumerate() {
                samples[(a, base + i)] = *v;
            }
            for (i, v) in buf.iter().enumerate() {
                samples[(a, base + cp_len + i)] = *v;
            }
        }
    }
    Ok(TxFrame {
        variant: SystemVariant::StbcOfdm,
        samples,
        meta: Some(OfdmMeta { n_sub: n, cp_len, n_sym: grid.n_sym }),
    })
}

/// Full OFDM transmit chain: grid mapping plus OFDM modulation.
pub fn frame_ofdm(
    variant: SystemVariant,
    id: SchemeId,
    symbols: &[Complex64],
    n_sub: usize,
    cp_len: usize,
    n_sym: usize,
) -> Result<TxFrame> {
    let grid = encode_ofdm_grid(variant, id, symbols, n_sub, n_sym)?;
    let mut frame = ofdm_modulate(&grid, cp_len)?;
    frame.variant = variant;
    Ok(frame)
}

const FRAME_MAGIC: &[u8; 8] = b"MIMOFRM1";

/// Writes a frame: 32-byte header (magic, variant, n_t, columns, N, nu, N_b
/// as little-endian u32 after the 8-byte magic) followed by row-major
/// (antenna-major) interleaved re/im f64 samples.
pub fn write_frame(frame: &TxFrame, w: &mut impl Write) -> Result<()> {
    let meta = frame.meta.unwrap_or(OfdmMeta { n_sub: 0, cp_len: 0, n_sym: 0 });
    w.write_all(FRAME_MAGIC)?;
    for v in [
        frame.variant.tag(),
        frame.samples.rows() as u32,
        frame.samples.cols() as u32,
        meta.n_sub as u32,
        meta.cp_len as u32,
        meta.n_sym as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for a in 0..frame.samples.rows() {
        for z in frame.samples.row(a) {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_frame(r: &mut impl Read) -> Result<TxFrame> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| Error::Format(format!("frame header: {e}")))?;
    if &magic != FRAME_MAGIC {
        return Err(Error::Format("bad frame magic".into()));
    }
    let mut word = [0u8; 4];
    let mut fields = [0u32; 6];
    for f in &mut fields {
        r.read_exact(&mut word).map_err(|e| Error::Format(format!("frame header: {e}")))?;
        *f = u32::from_le_bytes(word);
    }
    let variant = SystemVariant::from_tag(fields[0])?;
    let (n_t, cols) = (fields[1] as usize, fields[2] as usize);
    if n_t == 0 || n_t > 4 || cols == 0 {
        return Err(Error::Format(format!("implausible frame geometry {n_t}x{cols}")));
    }
    let mut samples = ComplexMatrix::zeros(n_t, cols);
    let mut val = [0u8; 8];
    for a in 0..n_t {
        for t in 0..cols {
            r.read_exact(&mut val).map_err(|e| Error::Format(format!("frame body: {e}")))?;
            let re = f64::from_le_bytes(val);
            r.read_exact(&mut val).map_err(|e| Error::Format(format!("frame body: {e}")))?;
            let im = f64::from_le_bytes(val);
            samples[(a, t)] = Complex64::new(re, im);
        }
    }
    let meta = if variant == SystemVariant::SingleCarrier {
        None
    } else {
        Some(OfdmMeta {
            n_sub: fields[3] as usize,
            cp_len: fields[4] as usize,
            n_sym: fields[5] as usize,
        })
    };
    Ok(TxFrame { variant, samples, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn qpsk_gray_mapping_first_point() {
        let s = modulate(&[0, 0], ModulationSpec::QPSK).unwrap();
        let expect = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s[0] - cx(expect, expect)).norm() < 1e-15);
    }

    #[test]
    fn constellations_have_unit_average_power() {
        for spec in [
            ModulationSpec::QPSK,
            ModulationSpec::new(ModFamily::Psk, 8).unwrap(),
            ModulationSpec::new(ModFamily::Qam, 16).unwrap(),
            ModulationSpec::new(ModFamily::Qam, 64).unwrap(),
        ] {
            let m = spec.bits_per_symbol();
            let mut total = 0.0;
            for v in 0..spec.order {
                let bits: Vec<u8> = (0..m).map(|i| ((v >> (m - 1 - i)) & 1) as u8).collect();
                total += modulate(&bits, spec).unwrap()[0].norm_sqr();
            }
            let avg = total / spec.order as f64;
            assert!((avg - 1.0).abs() < 1e-12, "{}: avg power {avg}", spec.name());
        }
    }

    #[test]
    fn gray_labels_differ_by_one_bit_around_psk_circle() {
        let spec = ModulationSpec::new(ModFamily::Psk, 8).unwrap();
        // Position p carries label gray(p); adjacent positions differ in one bit.
        let labels: Vec<usize> = (0..8).map(|p| p ^ (p >> 1)).collect();
        for p in 0..8 {
            let diff = labels[p] ^ labels[(p + 1) % 8];
            assert_eq!(diff.count_ones(), 1);
        }
        // and the mapping inverts the labeling
        for v in 0..8usize {
            assert_eq!(labels[gray_position(v)], v);
        }
        let _ = spec;
    }

    #[test]
    fn random_qpsk_power_law_of_large_numbers() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let bits: Vec<u8> = (0..20_000).map(|_| rng.random_range(0..=1) as u8).collect();
        let syms = modulate(&bits, ModulationSpec::QPSK).unwrap();
        let p: f64 = syms.iter().map(|s| s.norm_sqr()).sum::<f64>() / syms.len() as f64;
        assert!((p - 1.0).abs() < 0.02);
    }

    #[test]
    fn modulate_rejects_bad_length() {
        assert!(modulate(&[0, 1, 0], ModulationSpec::new(ModFamily::Qam, 16).unwrap()).is_err());
    }

    #[test]
    fn encode_stream_concatenates_codewords() {
        let syms = [cx(1.0, 0.0), cx(0.0, 1.0), cx(-1.0, 0.0), cx(0.0, -1.0)];
        let m = encode_stream(SchemeId::Al, &syms).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 4));
        let c1 = schemes::codeword(SchemeId::Al, &syms[0..2]).unwrap();
        let c2 = schemes::codeword(SchemeId::Al, &syms[2..4]).unwrap();
        for a in 0..2 {
            for t in 0..2 {
                assert_eq!(m[(a, t)], c1[(a, t)]);
                assert_eq!(m[(a, t + 2)], c2[(a, t)]);
            }
        }
    }

    #[test]
    fn encode_stream_single_antenna_is_row() {
        let syms: Vec<Complex64> = (0..5).map(|i| cx(i as f64, 0.0)).collect();
        let m = encode_stream(SchemeId::SingleAntenna, &syms).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 5));
        assert_eq!(m.row(0), &syms[..]);
    }

    #[test]
    fn fstd_stream_keeps_antennas_3_4_silent_on_first_half() {
        let syms: Vec<Complex64> = (0..8).map(|i| cx(1.0 + i as f64, 0.0)).collect();
        let m = encode_stream(SchemeId::Fstd, &syms).unwrap();
        assert_eq!((m.rows(), m.cols()), (4, 8));
        // 0-based slots 0,1,4,5 idle on antennas 2,3 (1-based slots 1,2,5,6).
        for &t in &[0usize, 1, 4, 5] {
            assert_eq!(m[(1, t)], cx(0.0, 0.0));
            assert_eq!(m[(3, t)], cx(0.0, 0.0));
        }
    }

    #[test]
    fn encode_stream_rejects_partial_blocks() {
        let syms = [cx(1.0, 0.0); 3];
        assert!(encode_stream(SchemeId::Al, &syms).is_err());
    }

    #[test]
    fn ofdm_delta_subcarrier_and_cp() {
        // One antenna, N=4, all energy on the first subcarrier: time signal
        // is the unitary IFFT of a delta, CP copies the last sample.
        let mut grid = OfdmGrid::zeros(1, 4, 1);
        grid.set(0, 0, 0, cx(1.0, 0.0));
        let frame = ofdm_modulate(&grid, 1).unwrap();
        assert_eq!(frame.samples.cols(), 5);
        for t in 1..5 {
            assert!((frame.samples[(0, t)] - cx(0.5, 0.0)).norm() < 1e-12);
        }
        assert!((frame.samples[(0, 0)] - frame.samples[(0, 4)]).norm() < 1e-15);
    }

    #[test]
    fn sfbc_alamouti_subcarrier_mapping() {
        let syms = [cx(0.3, 0.1), cx(-0.2, 0.7), cx(0.9, -0.4), cx(0.1, 0.2)];
        let grid = encode_ofdm_grid(SystemVariant::SfbcOfdm, SchemeId::Al, &syms, 4, 1).unwrap();
        let scale = schemes::descriptor(SchemeId::Al).transmit_scale();
        assert!((grid.get(0, 0, 0) - syms[0] * scale).norm() < 1e-15);
        assert!((grid.get(0, 1, 0) - (-syms[1].conj() * scale)).norm() < 1e-15);
        assert!((grid.get(1, 0, 0) - syms[1] * scale).norm() < 1e-15);
        assert!((grid.get(1, 1, 0) - syms[0].conj() * scale).norm() < 1e-15);
    }

    #[test]
    fn stbc_alamouti_spans_ofdm_symbols() {
        let n_sub = 4;
        let syms: Vec<Complex64> =
            (0..2 * n_sub).map(|i| cx(i as f64 + 0.5, -(i as f64))).collect();
        let grid =
            encode_ofdm_grid(SystemVariant::StbcOfdm, SchemeId::Al, &syms, n_sub, 2).unwrap();
        let scale = schemes::descriptor(SchemeId::Al).transmit_scale();
        for k in 0..n_sub {
            let x0 = syms[2 * k];
            let x1 = syms[2 * k + 1];
            assert!((grid.get(0, k, 0) - x0 * scale).norm() < 1e-15);
            assert!((grid.get(0, k, 1) - (-x1.conj() * scale)).norm() < 1e-15);
            assert!((grid.get(1, k, 0) - x1 * scale).norm() < 1e-15);
            assert!((grid.get(1, k, 1) - x0.conj() * scale).norm() < 1e-15);
        }
    }

    #[test]
    fn sfbc_requires_divisible_subcarriers() {
        let syms = vec![cx(1.0, 0.0); 64];
        assert!(
            encode_ofdm_grid(SystemVariant::SfbcOfdm, SchemeId::Osbc31, &syms, 12, 1).is_err()
        );
    }

    #[test]
    fn ofdm_roundtrip_recovers_grid() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let (n_sub, cp, n_sym) = (16, 3, 4);
        let syms: Vec<Complex64> = (0..frame_symbol_count(
            SystemVariant::SfbcOfdm,
            SchemeId::Al,
            n_sub,
            n_sym,
        ))
            .map(|_| cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let grid =
            encode_ofdm_grid(SystemVariant::SfbcOfdm, SchemeId::Al, &syms, n_sub, n_sym).unwrap();
        let frame = ofdm_modulate(&grid, cp).unwrap();
        let sym_len = n_sub + cp;
        let mut buf = vec![Complex64::ZERO; n_sub];
        for a in 0..2 {
            for s in 0..n_sym {
                for i in 0..n_sub {
                    buf[i] = frame.samples[(a, s * sym_len + cp + i)];
                }
                fft_unitary(&mut buf, false);
                for k in 0..n_sub {
                    let err = (buf[k] - grid.get(a, k, s)).norm();
                    assert!(err < 1e-10 * (1.0 + grid.get(a, k, s).norm()));
                }
            }
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let syms = [cx(0.2, -0.4), cx(0.6, 0.1), cx(-0.3, 0.3), cx(0.5, 0.5)];
        let a = encode_stream(SchemeId::Qosbc4, &syms).unwrap();
        let b = encode_stream(SchemeId::Qosbc4, &syms).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frame_io_roundtrip_and_truncation() {
        let syms = [cx(1.0, 2.0), cx(3.0, -1.0)];
        let frame = frame_single_carrier(SchemeId::Sm2, &syms, 1).unwrap();
        let mut bytes = Vec::new();
        write_frame(&frame, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 32 + 2 * 1 * 16);
        let back = read_frame(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.variant, SystemVariant::SingleCarrier);
        assert_eq!(back.samples, frame.samples);

        let truncated = &bytes[..bytes.len() - 5];
        assert!(matches!(read_frame(&mut &truncated[..]), Err(Error::Format(_))));
    }
}
