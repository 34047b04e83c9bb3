//! Exact extrinsic BEC transfer functions of a rate-1/2 constraint trellis.
//!
//! Under the all-zero codeword, the normalised BCJR forward metric on the BEC
//! is uniform over the set of states consistent with the observations so far,
//! and that set evolves deterministically once the erasure pattern of a
//! section is known. In the interior of a long trellis the forward set `F`
//! and the backward set `B` are therefore Markov chains over state subsets,
//! driven by i.i.d. erasure patterns. The extrinsic erasure probability of a
//! bit is the stationary probability that `F x B` admits a branch on which
//! that bit is 1 while every other observed bit of the section stays 0.

use std::collections::VecDeque;
use std::sync::Arc;

use dashmap::DashMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg;
use crate::trellis::{Branch, Trellis, MAX_MEMORY};

/// Subset of trellis states as a bit mask (`num_states <= 64`).
pub type StateSet = u64;

pub const DEFAULT_SUBSET_CAP: usize = 1 << 16;

const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_BUDGET: usize = 1_000_000;
// dense solves above this size fall back to power iteration
const DENSE_LIMIT: usize = 512;
const MEMO_CAPACITY: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("subset closure exceeded the cap of {cap} subsets")]
    ClosureCap { cap: usize },
    #[error("stationary distribution did not converge (residual {residual:e})")]
    NotConverged { residual: f64 },
    #[error("erasure probability {0} outside [0, 1]")]
    InvalidProbability(f64),
}

/// Erasure pattern of one section's `(systematic, parity)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErasurePattern {
    ObservedObserved = 0,
    ObservedErased = 1,
    ErasedObserved = 2,
    ErasedErased = 3,
}

impl ErasurePattern {
    pub const ALL: [ErasurePattern; 4] = [
        ErasurePattern::ObservedObserved,
        ErasurePattern::ObservedErased,
        ErasurePattern::ErasedObserved,
        ErasurePattern::ErasedErased,
    ];

    pub fn new(systematic_erased: bool, parity_erased: bool) -> Self {
        Self::ALL[(systematic_erased as usize) << 1 | parity_erased as usize]
    }

    pub fn systematic_observed(self) -> bool {
        (self as usize) & 2 == 0
    }

    pub fn parity_observed(self) -> bool {
        (self as usize) & 1 == 0
    }

    /// Probabilities of the four patterns, indexed by discriminant.
    pub fn weights(q_s: f64, q_p: f64) -> [f64; 4] {
        [(1.0 - q_s) * (1.0 - q_p), (1.0 - q_s) * q_p, q_s * (1.0 - q_p), q_s * q_p]
    }
}

/// States reachable from `set` through branches consistent with `pattern`.
pub fn image(trellis: &Trellis, set: StateSet, pattern: ErasurePattern) -> StateSet {
    let (so, po) = (pattern.systematic_observed(), pattern.parity_observed());
    trellis
        .branches()
        .iter()
        .filter(|b| set >> b.from & 1 == 1 && b.matches(so, po))
        .fold(0, |acc, b| acc | 1 << b.to)
}

/// Closed family of state subsets with the four deterministic pattern maps.
#[derive(Debug, Clone)]
pub struct DirectedChain {
    subsets: Vec<StateSet>,
    transitions: Vec<[usize; 4]>,
    start: usize,
}

impl DirectedChain {
    fn explore(trellis: &Trellis, cap: usize) -> Result<Self, TransferError> {
        let full: StateSet = if trellis.num_states() == 64 { !0 } else { (1 << trellis.num_states()) - 1 };
        let mut subsets = vec![1, full];
        subsets.dedup();
        let mut index: std::collections::HashMap<StateSet, usize> =
            subsets.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut transitions = Vec::new();
        let mut queue: VecDeque<usize> = (0..subsets.len()).collect();
        while let Some(i) = queue.pop_front() {
            let mut row = [0; 4];
            for p in ErasurePattern::ALL {
                let next = image(trellis, subsets[i], p);
                row[p as usize] = *index.entry(next).or_insert_with(|| {
                    subsets.push(next);
                    queue.push_back(subsets.len() - 1);
                    subsets.len() - 1
                });
            }
            if subsets.len() > cap {
                return Err(TransferError::ClosureCap { cap });
            }
            if transitions.len() <= i {
                transitions.resize(i + 1, [0; 4]);
            }
            transitions[i] = row;
        }
        Ok(DirectedChain { subsets, transitions, start: 0 })
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn subsets(&self) -> &[StateSet] {
        &self.subsets
    }

    /// Index of the subset `{0}` the chain starts from.
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn index_of(&self, set: StateSet) -> Option<usize> {
        self.subsets.iter().position(|&s| s == set)
    }

    pub fn next(&self, subset: usize, pattern: ErasurePattern) -> usize {
        self.transitions[subset][pattern as usize]
    }

    /// Limiting distribution of the chain started at `{0}` under the given
    /// pattern probabilities, solved exactly through its closed classes.
    pub fn stationary(&self, weights: &[f64; 4]) -> Result<Vec<f64>, TransferError> {
        let active: Vec<usize> = (0..4).filter(|&p| weights[p] > 0.0).collect();

        // reachable subsets from the start, in discovery order
        let mut local = vec![usize::MAX; self.len()];
        let mut nodes = vec![self.start];
        local[self.start] = 0;
        let mut head = 0;
        while head < nodes.len() {
            let i = nodes[head];
            head += 1;
            for &p in &active {
                let j = self.transitions[i][p];
                if local[j] == usize::MAX {
                    local[j] = nodes.len();
                    nodes.push(j);
                }
            }
        }
        let n = nodes.len();
        if n > DENSE_LIMIT {
            return self.stationary_power(weights, STATIONARY_TOL, STATIONARY_BUDGET);
        }

        let mut p = vec![vec![0.0; n]; n];
        for (a, &i) in nodes.iter().enumerate() {
            for &pat in &active {
                p[a][local[self.transitions[i][pat]]] += weights[pat];
            }
        }
        let succ: Vec<Vec<usize>> = (0..n)
            .map(|a| (0..n).filter(|&b| p[a][b] > 0.0).collect())
            .collect();
        let reach: Vec<Vec<bool>> = (0..n).map(|a| reachable_from(a, &succ)).collect();

        // a node is recurrent iff everything it reaches reaches it back
        let mut class_of = vec![usize::MAX; n];
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for a in 0..n {
            if class_of[a] != usize::MAX {
                continue;
            }
            let recurrent = (0..n).all(|b| !reach[a][b] || reach[b][a]);
            if recurrent {
                let members: Vec<usize> = (0..n).filter(|&b| reach[a][b]).collect();
                for &b in &members {
                    class_of[b] = classes.len();
                }
                classes.push(members);
            }
        }

        let absorption = if class_of[0] != usize::MAX {
            let mut h = vec![0.0; classes.len()];
            h[class_of[0]] = 1.0;
            h
        } else {
            let transient: Vec<usize> = (0..n).filter(|&a| class_of[a] == usize::MAX).collect();
            let pos = |a: usize| transient.iter().position(|&t| t == a).unwrap();
            let k = transient.len();
            let mut m = vec![vec![0.0; k]; k];
            let mut rhs = vec![vec![0.0; classes.len()]; k];
            for (r, &a) in transient.iter().enumerate() {
                m[r][r] += 1.0;
                for b in 0..n {
                    if p[a][b] == 0.0 {
                        continue;
                    }
                    match class_of[b] {
                        usize::MAX => m[r][pos(b)] -= p[a][b],
                        c => rhs[r][c] += p[a][b],
                    }
                }
            }
            let sol = linalg::solve_multi(m, rhs).ok_or(TransferError::NotConverged { residual: f64::NAN })?;
            sol[pos(0)].clone()
        };

        let mut pi_local = vec![0.0; n];
        for (c, members) in classes.iter().enumerate() {
            if absorption[c] <= 0.0 {
                continue;
            }
            let k = members.len();
            // (P_C^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
            let mut a = vec![vec![0.0; k]; k];
            for (r, &i) in members.iter().enumerate() {
                for (col, &j) in members.iter().enumerate() {
                    a[r][col] = p[j][i] - if i == j { 1.0 } else { 0.0 };
                }
            }
            a[k - 1].iter_mut().for_each(|x| *x = 1.0);
            let mut b = vec![0.0; k];
            b[k - 1] = 1.0;
            let pi_c = linalg::solve(a, b).ok_or(TransferError::NotConverged { residual: f64::NAN })?;
            for (r, &i) in members.iter().enumerate() {
                pi_local[i] += absorption[c] * pi_c[r].max(0.0);
            }
        }

        let total: f64 = pi_local.iter().sum();
        pi_local.iter_mut().for_each(|x| *x /= total);
        let residual: f64 = (0..n)
            .map(|b| ((0..n).map(|a| pi_local[a] * p[a][b]).sum::<f64>() - pi_local[b]).abs())
            .sum();
        if !(residual < 1e-9) {
            return Err(TransferError::NotConverged { residual });
        }
        let mut pi = vec![0.0; self.len()];
        for (a, &i) in nodes.iter().enumerate() {
            pi[i] = pi_local[a];
        }
        Ok(pi)
    }

    /// Power iteration from `{0}` until the L1 change drops below `tol`.
    pub fn stationary_power(&self, weights: &[f64; 4], tol: f64, budget: usize) -> Result<Vec<f64>, TransferError> {
        let mut pi = vec![0.0; self.len()];
        pi[self.start] = 1.0;
        let mut next = vec![0.0; self.len()];
        let mut change = f64::INFINITY;
        for _ in 0..budget {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (i, &mass) in pi.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for p in 0..4 {
                    next[self.transitions[i][p]] += mass * weights[p];
                }
            }
            change = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut pi, &mut next);
            if change < tol {
                return Ok(pi);
            }
        }
        Err(TransferError::NotConverged { residual: change })
    }
}

fn reachable_from(a: usize, succ: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; succ.len()];
    let mut stack = vec![a];
    seen[a] = true;
    while let Some(x) = stack.pop() {
        for &y in &succ[x] {
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen
}

// ambiguity flag bits for a (forward set, backward set) pair
const SYS_GIVEN_PARITY_OBSERVED: u8 = 1;
const SYS_GIVEN_PARITY_ERASED: u8 = 2;
const PARITY_GIVEN_SYS_OBSERVED: u8 = 4;
const PARITY_GIVEN_SYS_ERASED: u8 = 8;

fn ambiguity(branches: &[Branch], f: StateSet, b: StateSet) -> u8 {
    let mut flags = 0;
    for br in branches.iter().filter(|br| f >> br.from & 1 == 1 && b >> br.to & 1 == 1) {
        if br.input == 1 {
            flags |= SYS_GIVEN_PARITY_ERASED;
            if br.parity == 0 {
                flags |= SYS_GIVEN_PARITY_OBSERVED;
            }
        }
        if br.parity == 1 {
            flags |= PARITY_GIVEN_SYS_ERASED;
            if br.input == 0 {
                flags |= PARITY_GIVEN_SYS_OBSERVED;
            }
        }
    }
    flags
}

/// Forward and backward subset chains of one trellis plus the per-pair
/// ambiguity table used by [`SubsetChain::eval`].
#[derive(Debug, Clone)]
pub struct SubsetChain {
    trellis: Trellis,
    forward: DirectedChain,
    backward: DirectedChain,
    // ambiguity[f * backward.len() + b]
    ambiguity: Vec<u8>,
}

impl SubsetChain {
    pub fn build(trellis: &Trellis) -> Result<Self, TransferError> {
        Self::with_cap(trellis, DEFAULT_SUBSET_CAP)
    }

    pub fn with_cap(trellis: &Trellis, cap: usize) -> Result<Self, TransferError> {
        assert!(!trellis.is_reversed() && trellis.memory() <= MAX_MEMORY);
        let forward = DirectedChain::explore(trellis, cap)?;
        let backward = DirectedChain::explore(&trellis.reverse(), cap)?;
        let ambiguity = forward
            .subsets
            .iter()
            .flat_map(|&f| backward.subsets.iter().map(move |&b| (f, b)))
            .map(|(f, b)| ambiguity(trellis.branches(), f, b))
            .collect();
        Ok(SubsetChain { trellis: trellis.clone(), forward, backward, ambiguity })
    }

    pub fn trellis(&self) -> &Trellis {
        &self.trellis
    }

    pub fn forward(&self) -> &DirectedChain {
        &self.forward
    }

    pub fn backward(&self) -> &DirectedChain {
        &self.backward
    }

    /// Extrinsic erasure probabilities `(p_s, p_p)` at input erasure
    /// probabilities `(q_s, q_p)`.
    pub fn eval(&self, q_s: f64, q_p: f64) -> Result<(f64, f64), TransferError> {
        for q in [q_s, q_p] {
            if !(0.0..=1.0).contains(&q) {
                return Err(TransferError::InvalidProbability(q));
            }
        }
        if q_s == 0.0 && q_p == 0.0 {
            return Ok((0.0, 0.0));
        }
        if q_s == 1.0 && q_p == 1.0 {
            return Ok((1.0, 1.0));
        }
        let w = ErasurePattern::weights(q_s, q_p);
        let pf = self.forward.stationary(&w)?;
        let pb = self.backward.stationary(&w)?;
        let nb = self.backward.len();
        let (mut ps, mut pp) = (0.0, 0.0);
        for (f, &mf) in pf.iter().enumerate().filter(|(_, &m)| m > 0.0) {
            let row = &self.ambiguity[f * nb..(f + 1) * nb];
            for (&flags, &mb) in row.iter().zip(&pb) {
                if mb == 0.0 || flags == 0 {
                    continue;
                }
                let bit = |mask: u8| if flags & mask != 0 { 1.0 } else { 0.0 };
                let m = mf * mb;
                ps += m * (q_p * bit(SYS_GIVEN_PARITY_ERASED) + (1.0 - q_p) * bit(SYS_GIVEN_PARITY_OBSERVED));
                pp += m * (q_s * bit(PARITY_GIVEN_SYS_ERASED) + (1.0 - q_s) * bit(PARITY_GIVEN_SYS_OBSERVED));
            }
        }
        Ok((ps.clamp(0.0, 1.0), pp.clamp(0.0, 1.0)))
    }
}

/// Memoised view of a [`SubsetChain`] as the map `(q_s, q_p) -> (p_s, p_p)`.
///
/// Results are cached per input pair quantised to `1e-12`; the cache is
/// shared and safe to use from several threads.
#[derive(Debug)]
pub struct TransferFunction {
    chain: Arc<SubsetChain>,
    memo: Option<DashMap<(u64, u64), (f64, f64)>>,
}

impl TransferFunction {
    pub fn new(chain: Arc<SubsetChain>) -> Self {
        TransferFunction { chain, memo: Some(DashMap::new()) }
    }

    pub fn without_memo(chain: Arc<SubsetChain>) -> Self {
        TransferFunction { chain, memo: None }
    }

    pub fn from_trellis(trellis: &Trellis) -> Result<Self, TransferError> {
        Ok(Self::new(Arc::new(SubsetChain::build(trellis)?)))
    }

    pub fn chain(&self) -> &SubsetChain {
        &self.chain
    }

    pub fn eval(&self, q_s: f64, q_p: f64) -> Result<(f64, f64), TransferError> {
        let Some(memo) = &self.memo else {
            return self.chain.eval(q_s, q_p);
        };
        let key = (quantize(q_s), quantize(q_p));
        if let Some(hit) = memo.get(&key) {
            return Ok(*hit);
        }
        let value = self.chain.eval(q_s, q_p)?;
        if memo.len() >= MEMO_CAPACITY {
            memo.clear();
        }
        memo.insert(key, value);
        Ok(value)
    }
}

fn quantize(q: f64) -> u64 {
    (q * 1e12).round() as u64
}

/// Monte-Carlo estimate of the extrinsic erasure probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub p_s: f64,
    pub p_p: f64,
    pub std_err_s: f64,
    pub std_err_p: f64,
    /// Interior sections that were counted.
    pub samples: usize,
}

const MC_BATCHES: usize = 50;

/// Simulates one terminated all-zero transmission of `sections` sections,
/// runs set-valued BCJR forward/backward, and counts the interior sections
/// whose extrinsic systematic and parity decisions are ambiguous.
///
/// Standard errors come from batch means over consecutive sections, which
/// accounts for the correlation along the trellis.
pub fn mc_transfer_oracle(trellis: &Trellis, q_s: f64, q_p: f64, sections: usize, seed: u64) -> McEstimate {
    assert!(sections >= 1000, "oracle needs at least 1000 sections");
    assert!(!trellis.is_reversed());
    let reversed = trellis.reverse();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patterns: Vec<ErasurePattern> = (0..sections)
        .map(|_| ErasurePattern::new(rng.gen::<f64>() < q_s, rng.gen::<f64>() < q_p))
        .collect();

    let mut forward = Vec::with_capacity(sections + 1);
    forward.push(1 as StateSet);
    for &p in &patterns {
        forward.push(image(trellis, *forward.last().unwrap(), p));
    }
    let mut backward = vec![0 as StateSet; sections + 1];
    backward[sections] = 1;
    for t in (0..sections).rev() {
        backward[t] = image(&reversed, backward[t + 1], patterns[t]);
    }

    let margin = sections / 20;
    let interior = margin..sections - margin;
    let samples = interior.len();
    let batch = samples / MC_BATCHES;
    let (mut sum_s, mut sum_p) = (vec![0usize; MC_BATCHES], vec![0usize; MC_BATCHES]);
    for (k, t) in interior.enumerate() {
        let flags = ambiguity(trellis.branches(), forward[t], backward[t + 1]);
        let p = patterns[t];
        let sys_mask = if p.parity_observed() { SYS_GIVEN_PARITY_OBSERVED } else { SYS_GIVEN_PARITY_ERASED };
        let par_mask = if p.systematic_observed() { PARITY_GIVEN_SYS_OBSERVED } else { PARITY_GIVEN_SYS_ERASED };
        let slot = (k / batch.max(1)).min(MC_BATCHES - 1);
        sum_s[slot] += (flags & sys_mask != 0) as usize;
        sum_p[slot] += (flags & par_mask != 0) as usize;
    }

    let sizes: Vec<usize> = (0..MC_BATCHES)
        .map(|i| if i + 1 < MC_BATCHES { batch } else { samples - batch * (MC_BATCHES - 1) })
        .collect();
    let estimate = |counts: &[usize]| {
        let mean = counts.iter().sum::<usize>() as f64 / samples as f64;
        let means: Vec<f64> = counts.iter().zip(&sizes).map(|(&c, &s)| c as f64 / s as f64).collect();
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (MC_BATCHES - 1) as f64;
        (mean, (var / MC_BATCHES as f64).sqrt())
    };
    let (p_s, std_err_s) = estimate(&sum_s);
    let (p_p, std_err_p) = estimate(&sum_p);
    McEstimate { p_s, p_p, std_err_s, std_err_p, samples }
}
