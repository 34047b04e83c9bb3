//! Trellises of recursive systematic rate-1/2 convolutional encoders.
//!
//! Generators are given as an octal pair `feedforward/feedback`, e.g. `5/7`.
//! Each octal value is read in binary with the most significant bit as the
//! coefficient of `D^0`, so `13` is `1 + D^2 + D^3` and `15` is `1 + D + D^3`.
//!
//! The encoder is realised in controller-canonical form. With register
//! contents `a_{t-1}, ..., a_{t-nu}` the recursion is
//!
//! ```text
//! a_t = u_t + sum_{i>=1} fb_i a_{t-i}
//! v_t = sum_{i>=0} ff_i a_{t-i}
//! ```
//!
//! and the state integer stores `a_{t-1}` in bit 0, `a_{t-2}` in bit 1, and so on.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Largest supported encoder memory. State subsets are stored as `u64` masks.
pub const MAX_MEMORY: u32 = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrellisError {
    #[error("invalid generator {0:?}: expected octal NUM/DEN such as 5/7")]
    Parse(String),
    #[error("feedback polynomial must have a nonzero constant term")]
    FeedbackConstant,
    #[error("degenerate encoder {0}: both polynomials are constants")]
    Degenerate(GeneratorSpec),
    #[error("encoder memory {0} exceeds the supported maximum of {MAX_MEMORY}")]
    TooManyStates(u32),
    #[error("input sequence must contain at least one bit")]
    EmptyInput,
    #[error("encoding requires a forward trellis")]
    Reversed,
}

/// Parity generator `feedforward(D) / feedback(D)` of a recursive systematic encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GeneratorSpec {
    feedforward: u32,
    feedback: u32,
}

impl GeneratorSpec {
    /// The 2-state accumulator `1/3`.
    pub const ACCUMULATOR: GeneratorSpec = GeneratorSpec { feedforward: 0o1, feedback: 0o3 };
    /// The 4-state code `5/7`.
    pub const FOUR_STATE: GeneratorSpec = GeneratorSpec { feedforward: 0o5, feedback: 0o7 };
    /// The 8-state code `13/15`.
    pub const EIGHT_STATE: GeneratorSpec = GeneratorSpec { feedforward: 0o13, feedback: 0o15 };

    /// Builds a generator from the integer values of the two polynomials (write
    /// them as octal literals, `GeneratorSpec::new(0o5, 0o7)`).
    pub fn new(feedforward: u32, feedback: u32) -> Result<Self, TrellisError> {
        if feedback == 0 {
            return Err(TrellisError::FeedbackConstant);
        }
        let spec = GeneratorSpec { feedforward, feedback };
        if feedforward == 0 || spec.memory() == 0 {
            return Err(TrellisError::Degenerate(spec));
        }
        if spec.memory() > MAX_MEMORY {
            return Err(TrellisError::TooManyStates(spec.memory()));
        }
        Ok(spec)
    }

    pub fn feedforward(&self) -> u32 {
        self.feedforward
    }

    pub fn feedback(&self) -> u32 {
        self.feedback
    }

    /// Encoder memory `nu`, the larger of the two polynomial degrees.
    pub fn memory(&self) -> u32 {
        degree(self.feedforward).max(degree(self.feedback))
    }

    pub fn num_states(&self) -> usize {
        1 << self.memory()
    }

    pub fn feedforward_taps(&self) -> Vec<bool> {
        taps(self.feedforward, self.memory())
    }

    pub fn feedback_taps(&self) -> Vec<bool> {
        taps(self.feedback, self.memory())
    }
}

fn degree(value: u32) -> u32 {
    31 - value.leading_zeros()
}

/// Coefficients `[c_0, ..., c_memory]`, MSB of `value` first.
fn taps(value: u32, memory: u32) -> Vec<bool> {
    let deg = degree(value);
    (0..=memory)
        .map(|i| i <= deg && (value >> (deg - i)) & 1 == 1)
        .collect()
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:o}/{:o}", self.feedforward, self.feedback)
    }
}

impl FromStr for GeneratorSpec {
    type Err = TrellisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (num, den) = s
            .trim()
            .split_once('/')
            .ok_or_else(|| TrellisError::Parse(s.to_string()))?;
        let parse = |x: &str| {
            u32::from_str_radix(x.trim(), 8).map_err(|_| TrellisError::Parse(s.to_string()))
        };
        GeneratorSpec::new(parse(num)?, parse(den)?)
    }
}

/// One labelled trellis edge. `input` is the systematic bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub input: u8,
    pub parity: u8,
}

impl Branch {
    /// Whether the branch labels agree with the all-zero observation of every
    /// bit that is not erased.
    #[inline]
    pub fn matches(&self, input_observed: bool, parity_observed: bool) -> bool {
        (!input_observed || self.input == 0) && (!parity_observed || self.parity == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trellis {
    memory: u32,
    num_states: usize,
    // sorted by (from, input, to); exactly two per origin state
    branches: Vec<Branch>,
    reversed: bool,
}

impl Trellis {
    pub fn build(spec: &GeneratorSpec) -> Trellis {
        let memory = spec.memory();
        let num_states = spec.num_states();
        let ff = spec.feedforward_taps();
        let fb = spec.feedback_taps();
        let mask = num_states - 1;

        let mut branches = Vec::with_capacity(2 * num_states);
        for state in 0..num_states {
            let past = |i: usize| (state >> (i - 1)) & 1 == 1;
            for input in 0..2u8 {
                let mut a = input == 1;
                for i in 1..=memory as usize {
                    a ^= fb[i] & past(i);
                }
                let mut v = ff[0] & a;
                for i in 1..=memory as usize {
                    v ^= ff[i] & past(i);
                }
                branches.push(Branch {
                    from: state,
                    to: ((state << 1) | a as usize) & mask,
                    input,
                    parity: v as u8,
                });
            }
        }
        let trellis = Trellis { memory, num_states, branches, reversed: false };
        trellis.assert_invariants();
        trellis
    }

    fn assert_invariants(&self) {
        for s in 0..self.num_states {
            let out = self.outgoing(s);
            assert_eq!(out.len(), 2, "state {s} must have two branches");
            assert_ne!(out[0].to, out[1].to, "state {s}: next state must depend on the input");
        }
        if !self.reversed {
            let zero = self.branches[0];
            assert_eq!((zero.to, zero.input, zero.parity), (0, 0, 0), "missing all-zero loop");
        }
    }

    /// Trellis with every branch `s -> s'` replaced by `s' -> s`, labels kept.
    pub fn reverse(&self) -> Trellis {
        let mut branches: Vec<Branch> = self
            .branches
            .iter()
            .map(|b| Branch { from: b.to, to: b.from, ..*b })
            .collect();
        branches.sort_unstable_by_key(|b| (b.from, b.input, b.to));
        let t = Trellis {
            memory: self.memory,
            num_states: self.num_states,
            branches,
            reversed: !self.reversed,
        };
        t.assert_invariants();
        t
    }

    pub fn memory(&self) -> u32 {
        self.memory
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn outgoing(&self, state: usize) -> &[Branch] {
        &self.branches[2 * state..2 * state + 2]
    }

    /// Forward branch taken from `state` on `input`.
    pub fn step(&self, state: usize, input: u8) -> &Branch {
        debug_assert!(!self.reversed);
        &self.branches[2 * state + input as usize]
    }

    /// Input that clears the newest register cell, used to drive the encoder
    /// back to state 0.
    pub fn termination_input(&self, state: usize) -> u8 {
        self.outgoing(state)
            .iter()
            .find(|b| b.to & 1 == 0)
            .map(|b| b.input)
            .expect("one of the two branches clears the newest register cell")
    }
}

/// Zero-tail terminated codeword, `(systematic, parity)` interleaved per section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerminatedCodeword {
    pub bits: Vec<u8>,
    pub tail_len: usize,
}

impl TerminatedCodeword {
    pub fn sections(&self) -> usize {
        self.bits.len() / 2
    }

    pub fn systematic(&self, section: usize) -> u8 {
        self.bits[2 * section]
    }

    pub fn parity(&self, section: usize) -> u8 {
        self.bits[2 * section + 1]
    }

    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

/// Encodes `input` from state 0 and appends `memory` tail sections whose inputs
/// return the encoder to state 0.
pub fn encode_terminated(trellis: &Trellis, input: &[u8]) -> Result<TerminatedCodeword, TrellisError> {
    if trellis.is_reversed() {
        return Err(TrellisError::Reversed);
    }
    if input.is_empty() {
        return Err(TrellisError::EmptyInput);
    }
    let tail_len = trellis.memory() as usize;
    let mut bits = Vec::with_capacity(2 * (input.len() + tail_len));
    let mut state = 0;
    let tail = std::iter::repeat(None).take(tail_len);
    for u in input.iter().map(|&u| Some(u & 1)).chain(tail) {
        let u = u.unwrap_or_else(|| trellis.termination_input(state));
        let b = trellis.step(state, u);
        bits.push(b.input);
        bits.push(b.parity);
        state = b.to;
    }
    debug_assert_eq!(state, 0);
    Ok(TerminatedCodeword { bits, tail_len })
}
