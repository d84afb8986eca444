//! Dense linear programming and the matrix-game wrappers built on it.

mod game;
mod simplex;

pub use game::{minmax_over_union, solve_matrix_game, GameSolution, UnionGameSolution};
pub use simplex::solve_lp;
pub(crate) use game::{argmax, argmin};

/// Pivot elements smaller than this are never used.
pub const PIVOT_TOL: f64 = 1e-9;
/// Constraint slack accepted when certifying a solution.
pub const FEAS_TOL: f64 = 1e-7;
/// A pivot this small signals numerical breakdown.
pub const BREAKDOWN_TOL: f64 = 1e-11;
/// Non-improving pivots tolerated before switching to Bland's rule.
pub const BLAND_AFTER: usize = 500;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("numerical breakdown: {0}")]
    Degenerate(String),
    #[error("iteration limit of {0} pivots reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Bound {
    pub const NONNEG: Bound = Bound {
        lower: Some(0.0),
        upper: None,
    };
    pub const FREE: Bound = Bound {
        lower: None,
        upper: None,
    };

    pub fn between(lower: f64, upper: f64) -> Self {
        Bound {
            lower: Some(lower),
            upper: Some(upper),
        }
    }

    pub fn at_least(lower: f64) -> Self {
        Bound {
            lower: Some(lower),
            upper: None,
        }
    }

    pub fn at_most(upper: f64) -> Self {
        Bound {
            lower: None,
            upper: Some(upper),
        }
    }
}

/// `minimize c·x` subject to `A x ≤ b`, `E x = f` and per-coordinate bounds.
///
/// Variables default to `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub bounds: Vec<Bound>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            bounds: vec![Bound::NONNEG; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn leq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
        self
    }

    pub fn geq(self, row: Vec<f64>, rhs: f64) -> Self {
        self.leq(row.into_iter().map(|v| -v).collect(), -rhs)
    }

    pub fn eq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
        self
    }

    pub fn bound(mut self, var: usize, bound: Bound) -> Self {
        self.bounds[var] = bound;
        self
    }

    pub(crate) fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let bad = |m: String| Err(LpError::Malformed(m));
        if self.bounds.len() != n {
            return bad(format!("{} bounds for {} variables", self.bounds.len(), n));
        }
        if self.a_ub.len() != self.b_ub.len() || self.a_eq.len() != self.b_eq.len() {
            return bad("row and right-hand-side counts differ".into());
        }
        for row in self.a_ub.iter().chain(&self.a_eq) {
            if row.len() != n {
                return bad(format!("row of length {} for {} variables", row.len(), n));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return bad("non-finite coefficient".into());
            }
        }
        if self
            .objective
            .iter()
            .chain(&self.b_ub)
            .chain(&self.b_eq)
            .any(|v| !v.is_finite())
        {
            return bad("non-finite objective or right-hand side".into());
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if b.lower.is_some_and(|l| l.is_nan() || l == f64::INFINITY)
                || b.upper.is_some_and(|u| u.is_nan() || u == f64::NEG_INFINITY)
            {
                return bad(format!("bad bound on variable {j}"));
            }
            if let (Some(l), Some(u)) = (b.lower, b.upper) {
                if l > u {
                    return bad(format!("variable {j} has lower bound {l} above upper bound {u}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}
