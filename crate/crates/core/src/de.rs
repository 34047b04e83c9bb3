//! Density evolution on the BEC for uncoupled and spatially coupled
//! single-edge-type ensembles.
//!
//! Messages are scalar erasure probabilities: `q` flows from variable to
//! constraint nodes, `p` back. Parity-check constraint nodes use the textbook
//! update; convolutional ones feed the punctured trellis transfer function
//! with `q_s = q`, `q_p = (q + d_c - 2) / (d_c - 1)` and average the outputs
//! over the `d_c - 1` systematic and one parity edge.

use std::sync::Arc;

use thiserror::Error;

use crate::ensemble::{Component, Coupling, EnsembleSpec, SpecError};
use crate::exec::Execution;
use crate::table::UpdateTable;
use crate::transfer::{TransferError, TransferFunction};
use crate::trellis::Trellis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("channel erasure probability {0} outside [0, 1]")]
    Epsilon(f64),
    #[error("initial profile has {got} positions, expected {expected}")]
    InitLength { expected: usize, got: usize },
    #[error("density evolution used its budget of {0} iterations without converging or stalling")]
    BudgetExhausted(usize),
    #[error("invalid DE configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeConfig {
    pub max_iterations: usize,
    /// Success once the largest a-posteriori erasure probability drops below this.
    pub target: f64,
    /// Declares a nonzero fixed point once the relative change of `q` drops below this.
    pub stall_tol: f64,
}

impl DeConfig {
    pub fn uncoupled() -> Self {
        DeConfig { max_iterations: 200_000, target: 1e-8, stall_tol: 1e-13 }
    }

    pub fn coupled() -> Self {
        DeConfig { max_iterations: 1_000_000, ..Self::uncoupled() }
    }

    pub fn for_spec(spec: &EnsembleSpec) -> Self {
        if spec.is_coupled() {
            Self::coupled()
        } else {
            Self::uncoupled()
        }
    }

    pub fn validate(&self) -> Result<(), DeError> {
        if !(self.target > 0.0) {
            return Err(DeError::Config("target must be positive"));
        }
        if !(self.stall_tol < self.target) {
            return Err(DeError::Config("stall_tol must be below target"));
        }
        if self.max_iterations == 0 {
            return Err(DeError::Config("max_iterations must be positive"));
        }
        Ok(())
    }
}

impl Default for DeConfig {
    fn default() -> Self {
        Self::uncoupled()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeOutcome {
    Converged,
    Stalled,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub outcome: DeOutcome,
    pub iterations: usize,
    /// Variable-to-constraint erasure probability per position (one entry when uncoupled).
    pub q: Vec<f64>,
    /// Constraint-to-variable erasure probability seen by each variable position.
    pub p: Vec<f64>,
    /// `eps * p^{d_v}` per position.
    pub p_a: Vec<f64>,
    /// Whether `q` never increased between iterations (up to rounding).
    pub monotone: bool,
}

impl DeResult {
    pub fn converged(&self) -> bool {
        self.outcome == DeOutcome::Converged
    }

    pub fn max_p_a(&self) -> f64 {
        self.p_a.iter().copied().fold(0.0, f64::max)
    }
}

/// `1 - (1 - q)^{d_c - 1}`.
pub fn check_update_spc(q: f64, dc: u32) -> f64 {
    1.0 - (1.0 - q).powi(dc as i32 - 1)
}

/// `eps * p^{d_v - 1}`.
pub fn var_update(eps: f64, p: f64, dv: u32) -> f64 {
    eps * p.powi(dv as i32 - 1)
}

/// Punctured-trellis constraint update.
pub fn check_update_cc(tf: &TransferFunction, q: f64, dc: u32) -> Result<f64, TransferError> {
    assert!(dc >= 2);
    let dc = dc as f64;
    let q_p = (q + dc - 2.0) / (dc - 1.0);
    let (p_s, p_p) = tf.eval(q, q_p.min(1.0))?;
    Ok(((dc - 1.0) * p_s + p_p) / dc)
}

#[derive(Debug, Clone)]
pub enum CheckNode {
    Spc { dc: u32 },
    /// `table`, when present, interpolates [`check_update_cc`] to within
    /// [`crate::table::TABLE_TOLERANCE`].
    Conv { dc: u32, tf: Arc<TransferFunction>, table: Option<Arc<UpdateTable>> },
}

impl CheckNode {
    pub fn update(&self, q: f64) -> Result<f64, TransferError> {
        match self {
            CheckNode::Spc { dc } => Ok(check_update_spc(q, *dc)),
            CheckNode::Conv { table: Some(t), .. } => Ok(t.eval(q)),
            CheckNode::Conv { dc, tf, .. } => check_update_cc(tf, q, *dc),
        }
    }

    /// Evaluates without the interpolation table.
    pub fn update_exact(&self, q: f64) -> Result<f64, TransferError> {
        match self {
            CheckNode::Spc { dc } => Ok(check_update_spc(q, *dc)),
            CheckNode::Conv { dc, tf, .. } => check_update_cc(tf, q, *dc),
        }
    }

    /// Slope of the exact update at `q = 0`.
    pub fn zero_slope(&self) -> Result<f64, TransferError> {
        match self {
            CheckNode::Spc { dc } => Ok((dc - 1) as f64),
            CheckNode::Conv { .. } => {
                // Richardson extrapolation of g(h)/h, error O(h^2)
                let h = 1e-4;
                let coarse = self.update_exact(h)? / h;
                let fine = self.update_exact(0.5 * h)? / (0.5 * h);
                Ok(2.0 * fine - coarse)
            }
        }
    }

    pub fn table(&self) -> Option<&UpdateTable> {
        match self {
            CheckNode::Conv { table: Some(t), .. } => Some(t),
            _ => None,
        }
    }
}

const MONOTONE_SLACK: f64 = 1e-12;

/// An ensemble prepared for density evolution (transfer function built once).
#[derive(Debug, Clone)]
pub struct Ensemble {
    spec: EnsembleSpec,
    check: CheckNode,
    exec: Execution,
    zero_slope: f64,
}

impl Ensemble {
    /// Convolutional constraint updates are tabulated once (see [`UpdateTable`]);
    /// the exact transfer function is used if the table misses its tolerance.
    pub fn new(spec: EnsembleSpec) -> Result<Self, DeError> {
        Self::build(spec, true)
    }

    /// Evaluates every convolutional constraint update through the transfer function.
    pub fn exact(spec: EnsembleSpec) -> Result<Self, DeError> {
        Self::build(spec, false)
    }

    fn build(spec: EnsembleSpec, tabulate: bool) -> Result<Self, DeError> {
        spec.validate()?;
        let exec = Execution::default();
        let check = match spec.component {
            Component::Spc => CheckNode::Spc { dc: spec.dc },
            Component::Conv(g) => {
                let tf = TransferFunction::from_trellis(&Trellis::build(&g))?;
                let table = if tabulate {
                    let dc = spec.dc;
                    let exact = TransferFunction::without_memo(Arc::new(tf.chain().clone()));
                    UpdateTable::build(|q| check_update_cc(&exact, q, dc), exec)?.map(Arc::new)
                } else {
                    None
                };
                CheckNode::Conv { dc: spec.dc, tf: Arc::new(tf), table }
            }
        };
        let zero_slope = check.zero_slope()?;
        Ok(Ensemble { spec, check, exec, zero_slope })
    }

    /// Same constraint node (and transfer-function cache) under a different coupling.
    pub fn with_coupling(&self, coupling: Coupling) -> Result<Self, DeError> {
        let spec = EnsembleSpec { coupling, ..self.spec };
        spec.validate()?;
        Ok(Ensemble { spec, ..self.clone() })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn check_node(&self) -> &CheckNode {
        &self.check
    }

    /// Whether `q = 0` is an unstable fixed point of uncoupled DE at `eps`:
    /// with `d_v = 2` the variable update is linear in `p`, so zero repels once
    /// `eps * g'(0) > 1`.
    pub fn zero_unstable(&self, eps: f64) -> bool {
        self.spec.dv == 2 && eps * self.zero_slope > 1.0
    }

    /// Number of variable positions DE tracks.
    pub fn positions(&self) -> usize {
        match self.spec.coupling {
            Coupling::Uncoupled => 1,
            Coupling::Coupled { length, .. } => length,
        }
    }

    /// Cold-start DE: every position starts at `q = eps`.
    pub fn run(&self, eps: f64, cfg: &DeConfig) -> Result<DeResult, DeError> {
        self.run_from(eps, &vec![eps; self.positions()], cfg)
    }

    /// DE from an explicit initial `q` profile.
    pub fn run_from(&self, eps: f64, init: &[f64], cfg: &DeConfig) -> Result<DeResult, DeError> {
        match self.spec.coupling {
            Coupling::Uncoupled => {
                if init.len() != 1 {
                    return Err(DeError::InitLength { expected: 1, got: init.len() });
                }
                self.run_uncoupled(eps, init[0], cfg)
            }
            Coupling::Coupled { memory, length } => self.run_coupled(eps, memory, length, init, cfg),
        }
    }

    pub fn run_uncoupled(&self, eps: f64, init: f64, cfg: &DeConfig) -> Result<DeResult, DeError> {
        check_eps(eps)?;
        cfg.validate()?;
        let dv = self.spec.dv;
        let mut q = init;
        let mut monotone = true;
        let mut p = 1.0;
        // a tiny nonzero fixed point would otherwise pass the target test
        let reachable = !self.zero_unstable(eps);
        for iteration in 1..=cfg.max_iterations {
            p = self.check.update(q)?;
            let q_next = var_update(eps, p, dv);
            let p_a = eps * p.powi(dv as i32);
            monotone &= q_next <= q + MONOTONE_SLACK;
            let done = if p_a < cfg.target && reachable {
                Some(DeOutcome::Converged)
            } else if (q_next - q).abs() <= cfg.stall_tol * q {
                Some(DeOutcome::Stalled)
            } else {
                None
            };
            q = q_next;
            if let Some(outcome) = done {
                return Ok(DeResult { outcome, iterations: iteration, q: vec![q], p: vec![p], p_a: vec![p_a], monotone });
            }
        }
        Ok(DeResult {
            outcome: DeOutcome::BudgetExhausted,
            iterations: cfg.max_iterations,
            q: vec![q],
            p: vec![p],
            p_a: vec![eps * p.powi(dv as i32)],
            monotone,
        })
    }

    /// Coupled DE over `length` positions with coupling memory `memory`.
    ///
    /// Positions outside `1..=length` carry known symbols (`q = 0`). With
    /// `memory = 0` the positions decouple and each follows uncoupled DE.
    pub fn run_coupled(
        &self,
        eps: f64,
        memory: usize,
        length: usize,
        init: &[f64],
        cfg: &DeConfig,
    ) -> Result<DeResult, DeError> {
        check_eps(eps)?;
        cfg.validate()?;
        if init.len() != length {
            return Err(DeError::InitLength { expected: length, got: init.len() });
        }
        let dv = self.spec.dv;
        let w = 1.0 / (memory + 1) as f64;
        let checks = length + memory;
        let mut q = init.to_vec();
        let mut p_var = vec![1.0; length];
        let mut p_a = vec![eps; length];
        let mut monotone = true;
        // per-iteration fan-out only pays off for exact transfer-function updates
        let exec = match self.check {
            CheckNode::Conv { table: None, .. } => self.exec,
            _ => Execution::Sequential,
        };

        for iteration in 1..=cfg.max_iterations {
            let q_ref = &q;
            // constraint position k (0-based) sees variables k - memory ..= k
            let p_check = exec.try_map_range(0..checks, |k| {
                let lo = k.saturating_sub(memory);
                let hi = k.min(length - 1);
                let avg = if lo <= hi { w * q_ref[lo..=hi].iter().sum::<f64>() } else { 0.0 };
                self.check.update(avg)
            })?;

            let mut max_change: f64 = 0.0;
            let mut max_q: f64 = 0.0;
            let mut max_pa: f64 = 0.0;
            for t in 0..length {
                let pbar = w * p_check[t..=t + memory].iter().sum::<f64>();
                let q_next = var_update(eps, pbar, dv);
                monotone &= q_next <= q[t] + MONOTONE_SLACK;
                max_change = max_change.max((q_next - q[t]).abs());
                max_q = max_q.max(q[t]);
                p_var[t] = pbar;
                p_a[t] = eps * pbar.powi(dv as i32);
                max_pa = max_pa.max(p_a[t]);
                q[t] = q_next;
            }

            let outcome = if max_pa < cfg.target {
                Some(DeOutcome::Converged)
            } else if max_change <= cfg.stall_tol * max_q {
                Some(DeOutcome::Stalled)
            } else {
                None
            };
            if let Some(outcome) = outcome {
                return Ok(DeResult { outcome, iterations: iteration, q, p: p_var, p_a, monotone });
            }
        }
        Ok(DeResult { outcome: DeOutcome::BudgetExhausted, iterations: cfg.max_iterations, q, p: p_var, p_a, monotone })
    }

    /// Average extrinsic erasure probability at the DE fixed point reached
    /// from `q = eps`: `p^{d_v}`, averaged over positions when coupled.
    pub fn extrinsic_exit(&self, eps: f64, cfg: &DeConfig) -> Result<f64, DeError> {
        let r = self.run(eps, cfg)?;
        self.exit_value(&r, cfg)
    }

    /// Extrinsic value of a DE run and whether it is only an upper bound.
    ///
    /// A run that exhausted its budget while `q` never increased sits above
    /// the fixed point it is heading to, so its value bounds the fixed point's.
    pub(crate) fn exit_sample(&self, r: &DeResult, cfg: &DeConfig) -> Result<(f64, bool), DeError> {
        let dv = self.spec.dv as i32;
        let value = || r.p.iter().map(|p| p.powi(dv)).sum::<f64>() / r.p.len() as f64;
        match r.outcome {
            DeOutcome::Converged => Ok((0.0, false)),
            DeOutcome::Stalled => Ok((value(), false)),
            DeOutcome::BudgetExhausted if r.monotone => Ok((value(), true)),
            DeOutcome::BudgetExhausted => Err(DeError::BudgetExhausted(cfg.max_iterations)),
        }
    }

    fn exit_value(&self, r: &DeResult, cfg: &DeConfig) -> Result<f64, DeError> {
        match self.exit_sample(r, cfg)? {
            (_, true) => Err(DeError::BudgetExhausted(cfg.max_iterations)),
            (v, false) => Ok(v),
        }
    }
}

fn check_eps(eps: f64) -> Result<(), DeError> {
    if (0.0..=1.0).contains(&eps) {
        Ok(())
    } else {
        Err(DeError::Epsilon(eps))
    }
}
