use std::fmt;

use crate::lp::LpError;

/// A single invariant breach, located by (stage, state, action) where known.
///
/// Stages are reported 1-based, matching how horizons are usually written.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Violation {
    pub stage: Option<usize>,
    pub state: Option<String>,
    pub action: Option<String>,
    pub message: String,
}

impl Violation {
    pub fn new(message: impl Into<String>) -> Self {
        Violation {
            stage: None,
            state: None,
            action: None,
            message: message.into(),
        }
    }

    pub fn at_stage(mut self, stage: usize) -> Self {
        self.stage = Some(stage + 1);
        self
    }

    pub fn at_state(mut self, state: impl Into<String>) -> Self {
        self.state = Some(state.into());
        self
    }

    pub fn at_action(mut self, action: impl Into<String>) -> Self {
        self.action = Some(action.into());
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut coords = Vec::new();
        if let Some(t) = self.stage {
            coords.push(t.to_string());
        }
        if let Some(s) = &self.state {
            coords.push(s.clone());
        }
        if let Some(a) = &self.action {
            coords.push(a.clone());
        }
        if coords.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "({}): {}", coords.join(", "), self.message)
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid instance: {}", join_violations(.0))]
    InvalidInstance(Vec<Violation>),

    #[error("invalid ambiguity model: {}", join_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("dimension mismatch at stage {stage}: {detail}")]
    Dimension { stage: usize, detail: String },

    #[error("enumeration of {what} needs {count} combinations, cap is {cap}")]
    CapExceeded { what: String, count: u128, cap: u128 },

    #[error("stage {stage}: r-rectangular parts require costs that do not depend on the next state")]
    NextStateDependentCost { stage: usize },

    #[error("noise-driven model: {0}")]
    CostConflict(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
}

impl Error {
    pub fn is_cap(&self) -> bool {
        matches!(self, Error::CapExceeded { .. })
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Lp(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Default limit on the number of combinations any enumeration may visit.
pub const DEFAULT_CAP: u128 = 1_000_000;

/// Checks a product of counts against `cap`, saturating instead of overflowing.
pub(crate) fn check_cap(
    what: impl FnOnce() -> String,
    counts: impl IntoIterator<Item = usize>,
    cap: u128,
) -> Result<u128> {
    let mut total: u128 = 1;
    for c in counts {
        total = total.saturating_mul(c as u128);
    }
    if total > cap {
        return Err(Error::CapExceeded {
            what: what(),
            count: total,
            cap,
        });
    }
    Ok(total)
}
