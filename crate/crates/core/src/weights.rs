//! Truncated weight enumerators of punctured terminated component trellises
//! and parity-check layers, their ensemble averages, and the `alpha`-fraction
//! minimum-distance bound.
//!
//! Counts are kept as natural logarithms (`-inf` for an empty weight class).
//! The same dynamic programs also run over exact big integers, which the
//! tests use as an oracle on small instances.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::ensemble::{Component, EnsembleSpec};
use crate::exec::Execution;
use crate::trellis::{GeneratorSpec, Trellis};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("weight cap {cap} exceeds the code length {n}")]
    CapExceedsLength { cap: usize, n: usize },
    #[error("index caps exceeded: input cap {inputs} must be at least the parity cap {parity}")]
    IndexCaps { inputs: usize, parity: usize },
    #[error("spectra have different trellis lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("number of trellis segments N must be positive")]
    EmptyTrellis,
    #[error("alpha = {0} must lie in (0, 1)")]
    Alpha(f64),
    #[error("minimum-distance curves need an uncoupled ensemble")]
    Coupled,
}

/// Semiring used by the counting dynamic programs.
pub trait Count: Clone {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn from_u64(v: u64) -> Self;
    fn is_zero(&self) -> bool;
}

/// A nonnegative count stored as its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogCount(pub f64);

impl Count for LogCount {
    fn zero() -> Self {
        LogCount(f64::NEG_INFINITY)
    }

    fn one() -> Self {
        LogCount(0.0)
    }

    fn add(&self, other: &Self) -> Self {
        LogCount(log_add(self.0, other.0))
    }

    fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        LogCount(self.0 + other.0)
    }

    fn from_u64(v: u64) -> Self {
        LogCount((v as f64).ln())
    }

    fn is_zero(&self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl Count for BigUint {
    fn zero() -> Self {
        Zero::zero()
    }

    fn one() -> Self {
        One::one()
    }

    fn add(&self, other: &Self) -> Self {
        self + other
    }

    fn mul(&self, other: &Self) -> Self {
        self * other
    }

    fn from_u64(v: u64) -> Self {
        BigUint::from(v)
    }

    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
}

/// `ln(e^a + e^b)`.
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln C(n, k)`, summed term by term (exact to rounding for the small `k`
/// used here, unlike differences of log-gamma values at large `n`).
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// Log-domain truncated weight spectrum of a length-`n` code.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpectrum {
    n: usize,
    log_counts: Vec<f64>,
}

impl WeightSpectrum {
    pub fn new(n: usize, log_counts: Vec<f64>) -> Self {
        assert!(!log_counts.is_empty() && log_counts.len() <= n + 1);
        WeightSpectrum { n, log_counts }
    }

    pub fn block_length(&self) -> usize {
        self.n
    }

    /// Largest weight covered.
    pub fn cap(&self) -> usize {
        self.log_counts.len() - 1
    }

    pub fn log_counts(&self) -> &[f64] {
        &self.log_counts
    }

    pub fn log_count(&self, w: usize) -> f64 {
        self.log_counts[w]
    }

    pub fn count(&self, w: usize) -> f64 {
        self.log_counts[w].exp()
    }
}

/// Exact counterpart of [`WeightSpectrum`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactSpectrum {
    pub n: usize,
    pub counts: Vec<BigUint>,
}

impl ExactSpectrum {
    pub fn to_log(&self) -> WeightSpectrum {
        WeightSpectrum::new(self.n, self.counts.iter().map(ln_biguint).collect())
    }
}

/// Natural log of a big integer (`-inf` for zero).
pub fn ln_biguint(x: &BigUint) -> f64 {
    if Zero::is_zero(x) {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 64 {
        return (x.to_u64().unwrap() as f64).ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().unwrap() as f64;
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Which parity bit survives in each segment of `period = d_c - 1` sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PuncturePattern {
    period: usize,
    kept: usize,
}

impl PuncturePattern {
    /// Keeps the first parity of each segment.
    pub fn for_check_degree(dc: u32) -> Self {
        assert!(dc >= 2);
        PuncturePattern { period: dc as usize - 1, kept: 0 }
    }

    pub fn with_kept(period: usize, kept: usize) -> Self {
        assert!(period >= 1 && kept < period);
        PuncturePattern { period, kept }
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn keeps(&self, section: usize) -> bool {
        section % self.period == self.kept
    }
}

/// Code length of the punctured zero-tail terminated trellis with `segments`
/// segments: systematic bits of every section (tail included) plus the
/// surviving parity bits.
pub fn conv_block_length(memory: usize, segments: usize, pattern: &PuncturePattern) -> usize {
    let sections = pattern.period() * segments + memory;
    sections + (0..sections).filter(|&k| pattern.keeps(k)).count()
}

fn conv_dp<C: Count>(trellis: &Trellis, segments: usize, pattern: &PuncturePattern, cap: usize) -> Vec<C> {
    let states = trellis.num_states();
    let info = pattern.period() * segments;
    let sections = info + trellis.memory() as usize;
    let mut cur = vec![vec![C::zero(); cap + 1]; states];
    cur[0][0] = C::one();
    let mut next = cur.clone();
    for k in 0..sections {
        next.iter_mut().flatten().for_each(|c| *c = C::zero());
        let keep = pattern.keeps(k) as usize;
        for s in 0..states {
            if cur[s].iter().all(Count::is_zero) {
                continue;
            }
            let tail = [trellis.termination_input(s)];
            let inputs: &[u8] = if k < info { &[0, 1] } else { &tail };
            for &u in inputs {
                let b = trellis.step(s, u);
                let dw = b.input as usize + keep * b.parity as usize;
                for w in 0..=cap.saturating_sub(dw) {
                    if !cur[s][w].is_zero() {
                        next[b.to][w + dw] = next[b.to][w + dw].add(&cur[s][w]);
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur.swap_remove(0)
}

fn check_cap(cap: usize, n: usize) -> Result<(), WeightError> {
    if cap > n {
        Err(WeightError::CapExceedsLength { cap, n })
    } else {
        Ok(())
    }
}

/// Weight spectrum up to `cap` of the punctured, zero-tail terminated trellis
/// with `(d_c - 1) * segments` information sections.
pub fn component_spectrum_conv(
    trellis: &Trellis,
    segments: usize,
    pattern: &PuncturePattern,
    cap: usize,
) -> Result<WeightSpectrum, WeightError> {
    if segments == 0 {
        return Err(WeightError::EmptyTrellis);
    }
    let n = conv_block_length(trellis.memory() as usize, segments, pattern);
    check_cap(cap, n)?;
    let counts: Vec<LogCount> = conv_dp(trellis, segments, pattern, cap);
    Ok(WeightSpectrum::new(n, counts.into_iter().map(|c| c.0).collect()))
}

/// Exact-integer version of [`component_spectrum_conv`].
pub fn component_spectrum_conv_exact(
    trellis: &Trellis,
    segments: usize,
    pattern: &PuncturePattern,
    cap: usize,
) -> Result<ExactSpectrum, WeightError> {
    if segments == 0 {
        return Err(WeightError::EmptyTrellis);
    }
    let n = conv_block_length(trellis.memory() as usize, segments, pattern);
    check_cap(cap, n)?;
    Ok(ExactSpectrum { n, counts: conv_dp(trellis, segments, pattern, cap) })
}

fn ldpc_poly<C: Count>(segments: usize, dc: u32, cap: usize) -> Vec<C> {
    // one check: ((1 + x)^dc + (1 - x)^dc) / 2 = sum of even binomials
    let base: Vec<(usize, C)> = (0..=dc as usize)
        .step_by(2)
        .filter(|&j| j <= cap)
        .map(|j| (j, C::from_u64(binomial_u64(dc as u64, j as u64))))
        .collect();
    let mut acc = vec![C::zero(); cap + 1];
    acc[0] = C::one();
    for _ in 0..segments {
        let mut out = vec![C::zero(); cap + 1];
        for (w, a) in acc.iter().enumerate().filter(|(_, a)| !a.is_zero()) {
            for (j, c) in &base {
                if w + j <= cap {
                    out[w + j] = out[w + j].add(&a.mul(c));
                }
            }
        }
        acc = out;
    }
    acc
}

fn binomial_u64(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Spectrum of `segments` disjoint length-`d_c` parity checks (block length `d_c * segments`).
pub fn component_spectrum_ldpc(segments: usize, dc: u32, cap: usize) -> Result<WeightSpectrum, WeightError> {
    if segments == 0 {
        return Err(WeightError::EmptyTrellis);
    }
    let n = dc as usize * segments;
    check_cap(cap, n)?;
    let counts: Vec<LogCount> = ldpc_poly(segments, dc, cap);
    Ok(WeightSpectrum::new(n, counts.into_iter().map(|c| c.0).collect()))
}

pub fn component_spectrum_ldpc_exact(segments: usize, dc: u32, cap: usize) -> Result<ExactSpectrum, WeightError> {
    if segments == 0 {
        return Err(WeightError::EmptyTrellis);
    }
    let n = dc as usize * segments;
    check_cap(cap, n)?;
    Ok(ExactSpectrum { n, counts: ldpc_poly(segments, dc, cap) })
}

/// Component spectrum of one constraint node of `spec` with `segments` segments.
pub fn component_spectrum(spec: &EnsembleSpec, segments: usize, cap: usize) -> Result<WeightSpectrum, WeightError> {
    match spec.component {
        Component::Spc => component_spectrum_ldpc(segments, spec.dc, cap),
        Component::Conv(g) => component_spectrum_conv(
            &Trellis::build(&g),
            segments,
            &PuncturePattern::for_check_degree(spec.dc),
            cap,
        ),
    }
}

/// Block length of one constraint-node code of `spec`.
pub fn component_block_length(spec: &EnsembleSpec, segments: usize) -> usize {
    match spec.component {
        Component::Spc => spec.dc as usize * segments,
        Component::Conv(g) => {
            conv_block_length(g.memory() as usize, segments, &PuncturePattern::for_check_degree(spec.dc))
        }
    }
}

/// Single-edge-type ensemble average `A_w^{d_v} / C(n, w)^{d_v - 1}`.
pub fn ensemble_avg_single_edge(spectrum: &WeightSpectrum, dv: u32) -> WeightSpectrum {
    let n = spectrum.block_length();
    let dv = dv as f64;
    let log_counts = spectrum
        .log_counts()
        .iter()
        .enumerate()
        .map(|(w, &a)| match w {
            0 => 0.0,
            _ if a == f64::NEG_INFINITY => a,
            _ => dv * a - (dv - 1.0) * ln_binomial(n, w),
        })
        .collect();
    WeightSpectrum::new(n, log_counts)
}

/// Input-output spectrum `A_{i1, i2, p}` of a two-input rate-2/3 component of
/// a braided ensemble, built from the rate-1/2 trellis over `2N` sections with
/// every second parity punctured. Codewords are trellis paths that start and
/// end in state 0 within the `2N` sections.
#[derive(Debug, Clone, PartialEq)]
pub struct IOWeightSpectrum3 {
    segments: usize,
    input_cap: usize,
    parity_cap: usize,
    log_counts: Vec<f64>,
}

impl IOWeightSpectrum3 {
    fn idx(&self, i1: usize, i2: usize, p: usize) -> usize {
        (i1 * (self.input_cap + 1) + i2) * (self.parity_cap + 1) + p
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn caps(&self) -> (usize, usize) {
        (self.input_cap, self.parity_cap)
    }

    /// `ln A_{i1,i2,p}`; `-inf` when outside the caps or empty.
    pub fn log_count(&self, i1: usize, i2: usize, p: usize) -> f64 {
        if i1 > self.input_cap || i2 > self.input_cap || p > self.parity_cap {
            return f64::NEG_INFINITY;
        }
        self.log_counts[self.idx(i1, i2, p)]
    }
}

fn bcc_dp<C: Count>(trellis: &Trellis, segments: usize, input_cap: usize, parity_cap: usize) -> Vec<C> {
    let states = trellis.num_states();
    let (ni, np) = (input_cap + 1, parity_cap + 1);
    let size = ni * ni * np;
    let mut cur = vec![vec![C::zero(); size]; states];
    cur[0][0] = C::one();
    let mut next = cur.clone();
    for k in 0..2 * segments {
        next.iter_mut().flatten().for_each(|c| *c = C::zero());
        let first = k % 2 == 0;
        for s in 0..states {
            for u in 0..2u8 {
                let b = trellis.step(s, u);
                let (d1, d2) = if first { (u as usize, 0) } else { (0, u as usize) };
                let dp = if first { b.parity as usize } else { 0 };
                for i1 in 0..ni - d1 {
                    for i2 in 0..ni - d2 {
                        let base = (i1 * ni + i2) * np;
                        let shifted = ((i1 + d1) * ni + i2 + d2) * np;
                        for p in 0..np - dp {
                            let c = &cur[s][base + p];
                            if !c.is_zero() {
                                next[b.to][shifted + p + dp] = next[b.to][shifted + p + dp].add(c);
                            }
                        }
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur.swap_remove(0)
}

pub fn bcc_component_spectrum(
    trellis: &Trellis,
    segments: usize,
    input_cap: usize,
    parity_cap: usize,
) -> Result<IOWeightSpectrum3, WeightError> {
    if segments == 0 {
        return Err(WeightError::EmptyTrellis);
    }
    let (input_cap, parity_cap) = (input_cap.min(segments), parity_cap.min(segments));
    let counts: Vec<LogCount> = bcc_dp(trellis, segments, input_cap, parity_cap);
    Ok(IOWeightSpectrum3 { segments, input_cap, parity_cap, log_counts: counts.into_iter().map(|c| c.0).collect() })
}

/// Exact `A_{i1,i2,p}` as a dense `(I+1) x (I+1) x (P+1)` array, row-major.
pub fn bcc_component_spectrum_exact(trellis: &Trellis, segments: usize, input_cap: usize, parity_cap: usize) -> Vec<BigUint> {
    bcc_dp(trellis, segments, input_cap.min(segments), parity_cap.min(segments))
}

/// Two-index average `A_{i,p}` of the uncoupled braided ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct BccAverage {
    pub segments: usize,
    pub input_cap: usize,
    pub parity_cap: usize,
    /// `log_counts[i][p]`.
    pub log_counts: Vec<Vec<f64>>,
}

impl BccAverage {
    /// Average spectrum by total weight `w = i + p` on the `3N` code bits,
    /// complete up to `min(I, P)`.
    pub fn total_weight(&self) -> WeightSpectrum {
        let cap = self.input_cap.min(self.parity_cap);
        let log_counts = (0..=cap)
            .map(|w| {
                (0..=w)
                    .map(|i| self.log_counts[i][w - i])
                    .fold(f64::NEG_INFINITY, log_add)
            })
            .collect();
        WeightSpectrum::new(3 * self.segments, log_counts)
    }
}

/// `sum_{p1} A1_{i,p1,p-p1} A2_{i,p-p1,p1} / (C(N,i) C(N,p1) C(N,p-p1))`.
pub fn ensemble_avg_bcc(a1: &IOWeightSpectrum3, a2: &IOWeightSpectrum3) -> Result<BccAverage, WeightError> {
    if a1.segments != a2.segments {
        return Err(WeightError::LengthMismatch(a1.segments, a2.segments));
    }
    let (input_cap, parity_cap) = (a1.input_cap.min(a2.input_cap), a1.parity_cap.min(a2.parity_cap));
    if input_cap < parity_cap {
        return Err(WeightError::IndexCaps { inputs: input_cap, parity: parity_cap });
    }
    let n = a1.segments;
    let log_counts = (0..=input_cap)
        .map(|i| {
            (0..=parity_cap)
                .map(|p| {
                    (0..=p)
                        .map(|p1| {
                            a1.log_count(i, p1, p - p1) + a2.log_count(i, p - p1, p1)
                                - ln_binomial(n, i)
                                - ln_binomial(n, p1)
                                - ln_binomial(n, p - p1)
                        })
                        .filter(|x| !x.is_nan())
                        .fold(f64::NEG_INFINITY, log_add)
                })
                .collect()
        })
        .collect();
    Ok(BccAverage { segments: n, input_cap, parity_cap, log_counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DminBound {
    pub d_hat: usize,
    /// The inequality still held at the weight cap, so `d_hat` is only a lower bound.
    pub truncated: bool,
}

/// Largest `d` with `sum_{w=1}^{d-1} A_w < 1 - alpha`, at most `cap + 1`.
pub fn dmin_bound(avg: &WeightSpectrum, alpha: f64) -> Result<DminBound, WeightError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(WeightError::Alpha(alpha));
    }
    let budget = 1.0 - alpha;
    let mut acc = 0.0;
    for w in 1..=avg.cap() {
        acc += avg.count(w);
        if acc >= budget {
            return Ok(DminBound { d_hat: w, truncated: false });
        }
    }
    Ok(DminBound { d_hat: avg.cap() + 1, truncated: true })
}

/// How the weight cap of a minimum-distance computation is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapPolicy {
    Fixed(usize),
    /// Start at the given cap and double while the bound is truncated.
    Doubling(usize),
}

impl Default for CapPolicy {
    fn default() -> Self {
        CapPolicy::Doubling(32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DminPoint {
    /// Segments per constraint node (lifting factor `N`).
    pub segments: usize,
    /// `d_c * N`.
    pub n: usize,
    pub d_hat: usize,
    pub truncated: bool,
    pub cap: usize,
}

/// Minimum-distance bound of a single-edge-type ensemble at one `N`.
pub fn dmin_point(spec: &EnsembleSpec, alpha: f64, segments: usize, cap: CapPolicy) -> Result<DminPoint, WeightError> {
    if spec.is_coupled() {
        return Err(WeightError::Coupled);
    }
    let len = component_block_length(spec, segments);
    let (mut w, grow) = match cap {
        CapPolicy::Fixed(w) => (w.min(len), false),
        CapPolicy::Doubling(w) => (w.clamp(1, len), true),
    };
    loop {
        let avg = ensemble_avg_single_edge(&component_spectrum(spec, segments, w)?, spec.dv);
        let bound = dmin_bound(&avg, alpha)?;
        if !bound.truncated || !grow || w >= len {
            return Ok(DminPoint {
                segments,
                n: spec.dc as usize * segments,
                d_hat: bound.d_hat,
                truncated: bound.truncated,
                cap: w,
            });
        }
        w = (2 * w).min(len);
    }
}

/// `(n, d_hat)` pairs for each `N` in `segments`, in the given order.
pub fn dmin_curve(
    spec: &EnsembleSpec,
    alpha: f64,
    segments: &[usize],
    cap: CapPolicy,
    exec: Execution,
) -> Result<Vec<DminPoint>, WeightError> {
    exec.map(segments, |&n| dmin_point(spec, alpha, n, cap)).into_iter().collect()
}

/// Minimum-distance bound of the structured `(2,3)` braided ensemble at one `N`.
pub fn dmin_point_bcc(generator: &GeneratorSpec, alpha: f64, segments: usize, cap: CapPolicy) -> Result<DminPoint, WeightError> {
    let trellis = Trellis::build(generator);
    let (mut w, grow) = match cap {
        CapPolicy::Fixed(w) => (w.min(segments), false),
        CapPolicy::Doubling(w) => (w.clamp(1, segments), true),
    };
    loop {
        let a = bcc_component_spectrum(&trellis, segments, w, w)?;
        let bound = dmin_bound(&ensemble_avg_bcc(&a, &a)?.total_weight(), alpha)?;
        if !bound.truncated || !grow || w >= segments {
            return Ok(DminPoint { segments, n: 3 * segments, d_hat: bound.d_hat, truncated: bound.truncated, cap: w });
        }
        w = (2 * w).min(segments);
    }
}
