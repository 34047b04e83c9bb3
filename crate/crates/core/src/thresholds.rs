//! BP thresholds by bisection, extrinsic EXIT curves, and MAP thresholds
//! from the area theorem.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::de::{DeConfig, DeError, DeOutcome, Ensemble};
use crate::ensemble::Coupling;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error(transparent)]
    De(#[from] DeError),
    #[error("resolution {0} is below the supported minimum of 1e-6")]
    Resolution(f64),
    #[error("convergence predicate is not monotone: converges at {converges} but not at {fails}")]
    NonMonotone { converges: f64, fails: f64 },
    #[error("area above the BP threshold falls short of the rate by {residual:e}, beyond discretisation error")]
    MapBelowBp { residual: f64 },
    #[error("MAP thresholds are only computed for uncoupled ensembles")]
    Coupled,
    #[error("coupled threshold did not stabilise up to chain length {length}")]
    Unstable { length: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdKind {
    Bp,
    Map,
}

impl std::fmt::Display for ThresholdKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ThresholdKind::Bp => "bp",
            ThresholdKind::Map => "map",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostics {
    Bisection {
        /// Largest channel value known to converge.
        lo: f64,
        /// Smallest channel value known to fail.
        hi: f64,
        steps: usize,
        /// DE runs that hit the iteration budget (counted as failures).
        exhausted: usize,
        /// Chain length the coupled result was accepted at.
        chain_length: Option<usize>,
    },
    Integration {
        bp_threshold: f64,
        grid_points: usize,
        step: f64,
        /// `int_{eps_BP}^1 p_e - R`, the slack the MAP solution was found in.
        area_margin: f64,
        /// EXIT samples known only as upper bounds.
        bounded_samples: usize,
        /// Width of the interval the bounded samples leave for the solution.
        bound_gap: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub kind: ThresholdKind,
    pub value: f64,
    pub resolution: f64,
    pub diagnostics: Diagnostics,
}

/// Stability tolerance between successive chain lengths of a coupled threshold.
pub const CHAIN_STABILITY_TOL: f64 = 1e-5;
const MAX_CHAIN_LENGTH: usize = 3200;

/// BP threshold by bisection on "DE from `q = eps` converges".
///
/// Coupled ensembles start at their own chain length and double it until two
/// successive thresholds agree to within `max(1e-5, resolution)`.
pub fn bp_threshold(ens: &Ensemble, cfg: &DeConfig, resolution: f64) -> Result<ThresholdResult, ThresholdError> {
    if !(resolution >= 1e-6) {
        return Err(ThresholdError::Resolution(resolution));
    }
    match ens.spec().coupling {
        Coupling::Uncoupled => bisect(ens, cfg, 0.0, resolution, None),
        Coupling::Coupled { memory, length } => {
            // coupling never hurts: the uncoupled threshold is a valid lower end
            let floor = bisect(&ens.with_coupling(Coupling::Uncoupled)?, &DeConfig::uncoupled(), 0.0, resolution, None)?;
            let floor = match floor.diagnostics {
                Diagnostics::Bisection { lo, .. } => lo,
                _ => unreachable!(),
            };
            let tol = CHAIN_STABILITY_TOL.max(resolution);
            let mut length = length;
            let mut prev = bisect(&ens.with_coupling(Coupling::Coupled { memory, length })?, cfg, floor, resolution, Some(length))?;
            loop {
                let next_len = 2 * length;
                if next_len > MAX_CHAIN_LENGTH {
                    return Err(ThresholdError::Unstable { length });
                }
                let next = bisect(&ens.with_coupling(Coupling::Coupled { memory, length: next_len })?, cfg, floor, resolution, Some(next_len))?;
                if (next.value - prev.value).abs() <= tol {
                    return Ok(prev);
                }
                prev = next;
                length = next_len;
            }
        }
    }
}

fn converges(ens: &Ensemble, eps: f64, cfg: &DeConfig, exhausted: &mut usize) -> Result<bool, ThresholdError> {
    let r = ens.run(eps, cfg)?;
    if r.outcome == DeOutcome::BudgetExhausted {
        *exhausted += 1;
    }
    Ok(r.converged())
}

fn bisect(
    ens: &Ensemble,
    cfg: &DeConfig,
    floor: f64,
    resolution: f64,
    chain_length: Option<usize>,
) -> Result<ThresholdResult, ThresholdError> {
    let mut exhausted = 0;
    let mut lo = floor;
    let mut hi = (1.0 - ens.spec().design_rate() + 0.05).min(1.0);
    if converges(ens, hi, cfg, &mut exhausted)? {
        lo = hi;
    }
    if !converges(ens, lo, cfg, &mut exhausted)? {
        return Err(ThresholdError::NonMonotone { converges: 0.0, fails: lo });
    }
    let mut steps = 0;
    while hi - lo >= resolution {
        let mid = 0.5 * (lo + hi);
        if converges(ens, mid, cfg, &mut exhausted)? {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    Ok(ThresholdResult {
        kind: ThresholdKind::Bp,
        value: 0.5 * (lo + hi),
        resolution,
        diagnostics: Diagnostics::Bisection { lo, hi, steps, exhausted, chain_length },
    })
}

/// Re-runs both bracket ends with ten times the iteration budget and
/// reports whether `lo` still converges and `hi` still fails. An uncoupled
/// `hi` where zero is an unstable fixed point fails without a run.
pub fn certify_bracket(ens: &Ensemble, cfg: &DeConfig, result: &ThresholdResult) -> Result<bool, ThresholdError> {
    let Diagnostics::Bisection { lo, hi, chain_length, .. } = result.diagnostics else {
        return Ok(false);
    };
    let ens = match (ens.spec().coupling, chain_length) {
        (Coupling::Coupled { memory, .. }, Some(length)) => ens.with_coupling(Coupling::Coupled { memory, length })?,
        _ => ens.clone(),
    };
    let strict = DeConfig { max_iterations: cfg.max_iterations * 10, ..*cfg };
    let unstable = chain_length.is_none() && ens.zero_unstable(hi);
    Ok(ens.run(lo, &strict)?.converged() && (unstable || ens.run(hi, &strict)?.outcome == DeOutcome::Stalled))
}

/// Samples `(eps, p_e(eps))` in increasing `eps`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExitCurve {
    pub samples: Vec<(f64, f64)>,
    /// Parallel to `samples`: the value only bounds `p_e` from above because
    /// DE ran out of iterations while still approaching its fixed point.
    pub upper_bound: Vec<bool>,
}

impl ExitCurve {
    pub fn bounded_samples(&self) -> usize {
        self.upper_bound.iter().filter(|&&b| b).count()
    }

    /// The curve with every bounded sample replaced by its lower bound, zero.
    pub fn lower(&self) -> ExitCurve {
        let samples =
            self.samples.iter().zip(&self.upper_bound).map(|(&(e, v), &b)| (e, if b { 0.0 } else { v })).collect();
        ExitCurve { samples, upper_bound: vec![false; self.samples.len()] }
    }

    /// `int_x^1 p_e` by the trapezoid rule over the samples.
    pub fn area_above(&self, x: f64) -> f64 {
        self.samples
            .windows(2)
            .filter(|w| w[1].0 > x)
            .map(|w| {
                let (a, fa) = w[0];
                let (b, fb) = w[1];
                if a >= x {
                    0.5 * (b - a) * (fa + fb)
                } else {
                    let fx = fa + (fb - fa) * (x - a) / (b - a);
                    0.5 * (b - x) * (fx + fb)
                }
            })
            .sum()
    }

    /// Largest `x` with `int_x^1 p_e = area`, interpolating linearly between samples.
    pub fn solve_area(&self, area: f64) -> Option<f64> {
        let mut acc = 0.0;
        for w in self.samples.windows(2).rev() {
            let (a, fa) = w[0];
            let (b, fb) = w[1];
            let seg = 0.5 * (b - a) * (fa + fb);
            if acc + seg >= area {
                // int_{b-s}^b f = fb s + (fa - fb) s^2 / (2 (b - a)) = area - acc
                let need = area - acc;
                let c2 = (fa - fb) / (2.0 * (b - a));
                let s = if c2.abs() < 1e-15 {
                    need / fb
                } else {
                    let disc = (fb * fb + 4.0 * c2 * need).max(0.0);
                    (2.0 * need) / (fb + disc.sqrt())
                };
                return Some(b - s.clamp(0.0, b - a));
            }
            acc += seg;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitGrid {
    /// BP threshold bracket `(lo, hi)`; computed when absent.
    pub bp_bracket: Option<(f64, f64)>,
    pub step: f64,
    /// Neighbouring samples differing by more than this are bisected.
    pub refine_jump: f64,
    pub min_step: f64,
    /// How far below the BP threshold the zero segment is sampled.
    pub below: f64,
    /// Follow the curve downward from the previous fixed point instead of
    /// cold-starting every point at `q = eps`.
    pub warm_start: bool,
}

impl Default for ExitGrid {
    fn default() -> Self {
        ExitGrid { bp_bracket: None, step: 5e-3, refine_jump: 0.01, min_step: 1e-5, below: 0.01, warm_start: false }
    }
}

const BP_ANCHOR_RESOLUTION: f64 = 1e-6;

fn bp_bracket(ens: &Ensemble, cfg: &DeConfig) -> Result<(f64, f64), ThresholdError> {
    match bp_threshold(ens, cfg, BP_ANCHOR_RESOLUTION)?.diagnostics {
        Diagnostics::Bisection { lo, hi, .. } => Ok((lo, hi)),
        _ => unreachable!(),
    }
}

/// Evaluates the extrinsic EXIT curve from `eps = 1` down to below the BP
/// threshold, refining where neighbouring samples jump by more than
/// `grid.refine_jump`.
pub fn exit_curve(ens: &Ensemble, cfg: &DeConfig, grid: &ExitGrid) -> Result<ExitCurve, ThresholdError> {
    let (lo, hi) = match grid.bp_bracket {
        Some(b) => b,
        None => bp_bracket(ens, cfg)?,
    };
    let mut points = grid_points(grid.step, (lo - grid.below).max(0.0));
    points.push(lo);
    points.push(hi);
    let mut values = BTreeMap::new();
    evaluate(ens, cfg, &points, grid.warm_start, &mut values)?;

    loop {
        let keys: Vec<(f64, f64)> = values.iter().map(|(k, v)| (f64::from_bits(*k), v.0)).collect();
        let fresh: Vec<f64> = keys
            .windows(2)
            .filter(|w| {
                let gap = w[1].0 - w[0].0;
                let across_jump = w[0].0 <= lo && w[1].0 >= hi;
                !across_jump && gap > 2.0 * grid.min_step && (w[1].1 - w[0].1).abs() > grid.refine_jump
            })
            .map(|w| 0.5 * (w[0].0 + w[1].0))
            .collect();
        if fresh.is_empty() {
            break;
        }
        evaluate(ens, cfg, &fresh, false, &mut values)?;
    }
    let (samples, upper_bound) = values.into_iter().map(|(k, (v, b))| ((f64::from_bits(k), v), b)).unzip();
    Ok(ExitCurve { samples, upper_bound })
}

// 1, 1 - step, ... down to `floor`
fn grid_points(step: f64, floor: f64) -> Vec<f64> {
    let n = ((1.0 - floor) / step).floor() as usize;
    (0..=n).map(|k| 1.0 - k as f64 * step).filter(|&e| e >= floor).collect()
}

fn evaluate(
    ens: &Ensemble,
    cfg: &DeConfig,
    points: &[f64],
    warm_start: bool,
    values: &mut BTreeMap<u64, (f64, bool)>,
) -> Result<(), ThresholdError> {
    let mut todo: Vec<f64> = points.iter().copied().filter(|e| !values.contains_key(&e.to_bits())).collect();
    todo.sort_by(|a, b| b.total_cmp(a));
    todo.dedup();
    if warm_start {
        let mut init: Option<Vec<f64>> = None;
        for &eps in &todo {
            // start from the fixed point at the previous, larger eps
            let start: Vec<f64> = match &init {
                Some(q) => q.iter().map(|&x| x.min(eps)).collect(),
                None => vec![eps; ens.positions()],
            };
            let r = ens.run_from(eps, &start, cfg)?;
            values.insert(eps.to_bits(), ens.exit_sample(&r, cfg)?);
            init = if r.converged() { None } else { Some(r.q) };
        }
    } else {
        let results = ens.execution().map(&todo, |&eps| ens.run(eps, cfg).and_then(|r| ens.exit_sample(&r, cfg)));
        for (eps, r) in todo.iter().zip(results) {
            values.insert(eps.to_bits(), r?);
        }
    }
    Ok(())
}

/// MAP threshold from `int_{eps_MAP}^1 p_e(eps) d eps = R`, halving the grid
/// step until two successive estimates agree to within `resolution`.
pub fn map_threshold(ens: &Ensemble, cfg: &DeConfig, resolution: f64) -> Result<ThresholdResult, ThresholdError> {
    if ens.spec().is_coupled() {
        return Err(ThresholdError::Coupled);
    }
    if !(resolution >= 1e-6) {
        return Err(ThresholdError::Resolution(resolution));
    }
    let rate = ens.spec().design_rate();
    let (lo, hi) = bp_bracket(ens, cfg)?;
    let mut grid = ExitGrid { bp_bracket: Some((lo, hi)), step: 0.02, refine_jump: f64::INFINITY, ..ExitGrid::default() };
    let mut previous: Option<(f64, f64)> = None;
    loop {
        let curve = exit_curve(ens, cfg, &grid)?;
        let total = curve.area_above(hi);
        // a shortfall within the change between grids is discretisation error at a continuous transition
        let shortfall = rate - total;
        if shortfall > 0.0 {
            let explained = previous.is_some_and(|(_, prev_total)| shortfall <= (total - prev_total).abs());
            if previous.is_some() && !explained || grid.step < grid.min_step {
                return Err(ThresholdError::MapBelowBp { residual: shortfall });
            }
        }
        let value = curve.solve_area(rate).unwrap_or(hi).max(hi);
        // bounded samples put the exact solution in [lower, value]
        let lower = curve.lower().solve_area(rate).unwrap_or(hi).max(hi);
        let bound_gap = value - lower;
        if let Some((prev, _)) = previous {
            if ((value - prev).abs() < resolution && bound_gap < resolution) || grid.step < grid.min_step {
                return Ok(ThresholdResult {
                    kind: ThresholdKind::Map,
                    value,
                    resolution,
                    diagnostics: Diagnostics::Integration {
                        bp_threshold: 0.5 * (lo + hi),
                        grid_points: curve.samples.len(),
                        step: grid.step,
                        area_margin: total - rate,
                        bounded_samples: curve.bounded_samples(),
                        bound_gap,
                    },
                });
            }
        }
        previous = Some((value, total));
        grid.step *= 0.5;
    }
}
