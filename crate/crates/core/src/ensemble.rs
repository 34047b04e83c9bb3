//! `(d_v, d_c)`-regular single-edge-type ensembles.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::trellis::{GeneratorSpec, TrellisError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("variable degree d_v = {0} must be at least 2")]
    VariableDegree(u32),
    #[error("check degree d_c = {dc} must exceed d_v = {dv}")]
    CheckDegree { dv: u32, dc: u32 },
    #[error("chain length L must be at least 1")]
    ChainLength,
    #[error("coupling memory must be at least 1")]
    CouplingMemory,
    #[error("invalid component {0:?}: expected `ldpc` or `conv:NUM/DEN`")]
    Component(String),
    #[error("invalid coupling {0:?}: expected `uncoupled` or `m,L`")]
    Coupling(String),
    #[error("invalid ensemble {0:?}: expected `dv,dc`")]
    Degrees(String),
    #[error(transparent)]
    Generator(#[from] TrellisError),
}

/// Constraint-node code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    /// Single parity check: the classical LDPC ensemble.
    Spc,
    /// Punctured terminated rate-1/2 recursive systematic convolutional code.
    Conv(GeneratorSpec),
}

impl Component {
    /// Number of trellis states, `None` for parity checks.
    pub fn states(&self) -> Option<usize> {
        match self {
            Component::Spc => None,
            Component::Conv(g) => Some(g.num_states()),
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Spc => f.write_str("ldpc"),
            Component::Conv(g) => write!(f, "conv:{g}"),
        }
    }
}

impl FromStr for Component {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("ldpc") || s.eq_ignore_ascii_case("spc") {
            return Ok(Component::Spc);
        }
        match s.split_once(':') {
            Some((kind, g)) if kind.eq_ignore_ascii_case("conv") => Ok(Component::Conv(g.parse()?)),
            _ => Err(SpecError::Component(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Coupling {
    Uncoupled,
    /// Uniform coupling with memory `memory` over `length` positions.
    Coupled { memory: usize, length: usize },
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coupling::Uncoupled => f.write_str("uncoupled"),
            Coupling::Coupled { memory, length } => write!(f, "{memory},{length}"),
        }
    }
}

impl FromStr for Coupling {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("uncoupled") || s.eq_ignore_ascii_case("none") {
            return Ok(Coupling::Uncoupled);
        }
        let err = || SpecError::Coupling(s.to_string());
        let (m, l) = s.split_once(',').ok_or_else(err)?;
        let memory = m.trim().parse().map_err(|_| err())?;
        let length = l.trim().parse().map_err(|_| err())?;
        Ok(Coupling::Coupled { memory, length })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnsembleSpec {
    pub dv: u32,
    pub dc: u32,
    pub component: Component,
    pub coupling: Coupling,
}

impl EnsembleSpec {
    pub fn new(dv: u32, dc: u32, component: Component, coupling: Coupling) -> Result<Self, SpecError> {
        let spec = EnsembleSpec { dv, dc, component, coupling };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ldpc(dv: u32, dc: u32) -> Self {
        EnsembleSpec { dv, dc, component: Component::Spc, coupling: Coupling::Uncoupled }
    }

    pub fn conv(dv: u32, dc: u32, generator: GeneratorSpec) -> Self {
        EnsembleSpec { dv, dc, component: Component::Conv(generator), coupling: Coupling::Uncoupled }
    }

    pub fn coupled(self, memory: usize, length: usize) -> Self {
        EnsembleSpec { coupling: Coupling::Coupled { memory, length }, ..self }
    }

    pub fn uncoupled(self) -> Self {
        EnsembleSpec { coupling: Coupling::Uncoupled, ..self }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.dv < 2 {
            return Err(SpecError::VariableDegree(self.dv));
        }
        if self.dc <= self.dv {
            return Err(SpecError::CheckDegree { dv: self.dv, dc: self.dc });
        }
        if let Coupling::Coupled { memory, length } = self.coupling {
            if memory < 1 {
                return Err(SpecError::CouplingMemory);
            }
            if length < 1 {
                return Err(SpecError::ChainLength);
            }
        }
        Ok(())
    }

    /// `R = 1 - d_v / d_c`.
    pub fn design_rate(&self) -> f64 {
        1.0 - self.dv as f64 / self.dc as f64
    }

    pub fn is_coupled(&self) -> bool {
        matches!(self.coupling, Coupling::Coupled { .. })
    }
}

impl fmt::Display for EnsembleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{}) {} [{}]", self.dv, self.dc, self.component, self.coupling)
    }
}

/// Parses `"dv,dc"`.
pub fn parse_degrees(s: &str) -> Result<(u32, u32), SpecError> {
    let err = || SpecError::Degrees(s.to_string());
    let (a, b) = s.trim().split_once(',').ok_or_else(err)?;
    Ok((a.trim().parse().map_err(|_| err())?, b.trim().parse().map_err(|_| err())?))
}
