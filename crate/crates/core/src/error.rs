use std::fmt;

use thiserror::Error;

/// One violated parameter or grid invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension(usize),
    PressureExponent(f64),
    CutoffBand(f64),
    Chemotaxis(f64),
    NegativeViscosity(f64),
    NegativeShift(f64),
    MollifierRadius { name: &'static str, value: f64 },
    FinalTime(f64),
    GridDimension { grid: usize, params: usize },
    Underresolved { name: &'static str, eps: f64, h: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension(d) => write!(f, "spatial dimension d={d} unsupported (need 2 or 3)"),
            Violation::PressureExponent(m) if *m == 1.0 => {
                write!(f, "pressure exponent m=1 unsupported")
            }
            Violation::PressureExponent(m) => {
                write!(f, "pressure exponent m={m} unsupported (need m > 1)")
            }
            Violation::CutoffBand(l) => {
                write!(f, "2λ ≥ 1/λ (λ={l}): identity band of the pressure cutoff is empty")
            }
            Violation::Chemotaxis(chi) => {
                write!(f, "chemotactic sensitivity χ={chi} unsupported (1, or 0 to disable)")
            }
            Violation::NegativeViscosity(s) => write!(f, "viscosity σ={s} must be ≥ 0"),
            Violation::NegativeShift(e) => write!(f, "diffusion shift η={e} must be ≥ 0"),
            Violation::MollifierRadius { name, value } => {
                write!(f, "mollifier radius {name}={value} must be > 0")
            }
            Violation::FinalTime(t) => write!(f, "final time T={t} must be > 0"),
            Violation::GridDimension { grid, params } => {
                write!(f, "grid dimension {grid} differs from parameter dimension {params}")
            }
            Violation::Underresolved { name, eps, h } => {
                write!(f, "grid spacing h={h} does not resolve {name}={eps} (need h ≤ {name}/4)")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum KsError {
    #[error("invalid configuration: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("suspected blow-up at t={t}: {reason}")]
    BlowUp { t: f64, reason: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, KsError>;
