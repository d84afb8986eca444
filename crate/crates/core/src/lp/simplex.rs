use super::{LinearProgram, LpError, LpOutcome, BLAND_AFTER, BREAKDOWN_TOL, FEAS_TOL, PIVOT_TOL};

const COST_TOL: f64 = 1e-9;

/// How an original variable is recovered from standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Shift { col: usize, lo: f64 },
    Flip { col: usize, hi: f64 },
    Split { pos: usize, neg: usize },
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
    iterations: usize,
    stalls: usize,
    cap: usize,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.ncols]
    }

    fn set_objective(&mut self, costs: &[f64]) {
        let mut obj = vec![0.0; self.ncols + 1];
        obj[..costs.len()].copy_from_slice(costs);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = obj[b];
            if cb != 0.0 {
                for (o, r) in obj.iter_mut().zip(&self.rows[i]) {
                    *o -= cb * r;
                }
            }
        }
        self.obj = obj;
    }

    fn pivot(&mut self, r: usize, c: usize) -> Result<(), LpError> {
        let p = self.rows[r][c];
        if p.abs() < BREAKDOWN_TOL {
            return Err(LpError::Degenerate(format!("pivot element {p:e}")));
        }
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rows[r][c] = 1.0;
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pr) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        Ok(())
    }

    fn run(&mut self, allowed: &[bool]) -> Result<Phase, LpError> {
        loop {
            let bland = self.stalls >= BLAND_AFTER;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..self.ncols {
                if !allowed[j] || self.obj[j] >= -COST_TOL {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if self.obj[j] < best {
                    best = self.obj[j];
                    enter = Some(j);
                }
            }
            let Some(c) = enter else {
                return Ok(Phase::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, r)) => {
                        let tie = (ratio - r).abs() <= 1e-12 * (1.0 + r.abs());
                        if (!tie && ratio < r) || (tie && self.basis[i] < self.basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, r))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else {
                return Ok(Phase::Unbounded);
            };
            if ratio * self.obj[c].abs() <= 1e-12 {
                self.stalls += 1;
            }
            self.iterations += 1;
            if self.iterations > self.cap {
                return Err(LpError::IterationLimit(self.cap));
            }
            self.pivot(r, c)?;
        }
    }
}

/// Two-phase dense simplex.
///
/// Entering columns follow Dantzig's rule until [`BLAND_AFTER`] pivots have
/// failed to improve the objective, after which Bland's rule takes over.
/// The returned point is re-checked against the original constraints.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    lp.check()?;
    let n = lp.num_vars();

    let mut maps = Vec::with_capacity(n);
    let mut nstd = 0;
    let mut box_rows: Vec<(usize, f64)> = Vec::new();
    for b in &lp.bounds {
        let m = match (b.lower, b.upper) {
            (Some(lo), hi) if lo.is_finite() => {
                if let Some(hi) = hi.filter(|h| h.is_finite()) {
                    box_rows.push((nstd, hi - lo));
                }
                VarMap::Shift { col: nstd, lo }
            }
            (_, Some(hi)) if hi.is_finite() => VarMap::Flip { col: nstd, hi },
            _ => {
                nstd += 1;
                VarMap::Split {
                    pos: nstd - 1,
                    neg: nstd,
                }
            }
        };
        nstd += 1;
        maps.push(m);
    }

    let translate = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; nstd];
        let mut r = rhs;
        for (j, &a) in row.iter().enumerate() {
            match maps[j] {
                VarMap::Shift { col, lo } => {
                    out[col] += a;
                    r -= a * lo;
                }
                VarMap::Flip { col, hi } => {
                    out[col] -= a;
                    r -= a * hi;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += a;
                    out[neg] -= a;
                }
            }
        }
        (out, r)
    };

    // (coefficients, rhs, is_inequality)
    let mut cons: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for (row, &b) in lp.a_ub.iter().zip(&lp.b_ub) {
        let (r, rhs) = translate(row, b);
        cons.push((r, rhs, true));
    }
    for &(col, width) in &box_rows {
        let mut r = vec![0.0; nstd];
        r[col] = 1.0;
        cons.push((r, width, true));
    }
    for (row, &f) in lp.a_eq.iter().zip(&lp.b_eq) {
        let (r, rhs) = translate(row, f);
        cons.push((r, rhs, false));
    }

    let m = cons.len();
    let n_slack = cons.iter().filter(|c| c.2).count();
    let n_art = cons.iter().filter(|c| !c.2 || c.1 < 0.0).count();
    let ncols = nstd + n_slack + n_art;
    let art_start = nstd + n_slack;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut slack = nstd;
    let mut art = art_start;
    for (coef, rhs, ineq) in cons {
        let mut row = vec![0.0; ncols + 1];
        row[..nstd].copy_from_slice(&coef);
        row[ncols] = rhs;
        let mut slack_col = None;
        if ineq {
            row[slack] = 1.0;
            slack_col = Some(slack);
            slack += 1;
        }
        if rhs < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        match slack_col {
            Some(sc) if rhs >= 0.0 => basis.push(sc),
            _ => {
                row[art] = 1.0;
                basis.push(art);
                art += 1;
            }
        }
        rows.push(row);
    }

    let mut tab = Tableau {
        rows,
        obj: Vec::new(),
        basis,
        ncols,
        iterations: 0,
        stalls: 0,
        cap: 50_000 + 200 * (m + ncols),
    };

    let scale = 1.0
        + tab
            .rows
            .iter()
            .map(|r| r[ncols].abs())
            .fold(0.0_f64, f64::max);

    if n_art > 0 {
        let mut phase1 = vec![0.0; ncols];
        for v in phase1[art_start..].iter_mut() {
            *v = 1.0;
        }
        tab.set_objective(&phase1);
        let all = vec![true; ncols];
        tab.run(&all)?;
        let infeas = -tab.obj[ncols];
        if infeas > FEAS_TOL * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive remaining artificial columns out of the basis.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= art_start {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..art_start {
                    let a = tab.rows[i][j].abs();
                    if a > PIVOT_TOL && best.is_none_or(|(_, b)| a > b) {
                        best = Some((j, a));
                    }
                }
                match best {
                    Some((j, _)) => tab.pivot(i, j)?,
                    None => {
                        tab.rows.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut costs = vec![0.0; ncols];
    for (j, m) in maps.iter().enumerate() {
        let c = lp.objective[j];
        match *m {
            VarMap::Shift { col, .. } => {
                costs[col] = c;
            }
            VarMap::Flip { col, .. } => {
                costs[col] = -c;
            }
            VarMap::Split { pos, neg } => {
                costs[pos] = c;
                costs[neg] = -c;
            }
        }
    }
    tab.set_objective(&costs);
    let allowed: Vec<bool> = (0..ncols).map(|j| j < art_start).collect();
    if let Phase::Unbounded = tab.run(&allowed)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut y = vec![0.0; ncols];
    for (i, &b) in tab.basis.iter().enumerate() {
        y[b] = tab.rows[i][ncols].max(0.0);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shift { col, lo } => lo + y[col],
            VarMap::Flip { col, hi } => hi - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
    certify(lp, &x)?;
    Ok(LpOutcome::Optimal { x, value })
}

fn certify(lp: &LinearProgram, x: &[f64]) -> Result<(), LpError> {
    let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    for (i, (row, &b)) in lp.a_ub.iter().zip(&lp.b_ub).enumerate() {
        let lhs = dot(row);
        if lhs > b + FEAS_TOL * (1.0 + b.abs()) {
            return Err(LpError::Degenerate(format!(
                "inequality {i} violated by {:e}",
                lhs - b
            )));
        }
    }
    for (i, (row, &f)) in lp.a_eq.iter().zip(&lp.b_eq).enumerate() {
        let lhs = dot(row);
        if (lhs - f).abs() > FEAS_TOL * (1.0 + f.abs()) {
            return Err(LpError::Degenerate(format!(
                "equality {i} violated by {:e}",
                lhs - f
            )));
        }
    }
    for (j, (b, &v)) in lp.bounds.iter().zip(x).enumerate() {
        let lo_bad = b.lower.is_some_and(|l| v < l - FEAS_TOL * (1.0 + l.abs()));
        let hi_bad = b.upper.is_some_and(|u| v > u + FEAS_TOL * (1.0 + u.abs()));
        if lo_bad || hi_bad {
            return Err(LpError::Degenerate(format!("bound on variable {j} violated")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::Bound;

    fn opt(lp: &LinearProgram) -> (Vec<f64>, f64) {
        match solve_lp(lp).unwrap() {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn single_variable_upper_bound() {
        let lp = LinearProgram::new(vec![-1.0]).leq(vec![1.0], 1.0);
        let (x, v) = opt(&lp);
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_negative_cap() {
        let lp = LinearProgram::new(vec![0.0]).leq(vec![1.0], -1.0);
        assert_eq!(solve_lp(&lp).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn facet_optimum() {
        let lp = LinearProgram::new(vec![-1.0, -1.0]).leq(vec![1.0, 1.0], 1.0);
        let (x, v) = opt(&lp);
        assert!((v + 1.0).abs() < 1e-12);
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_ray() {
        let lp = LinearProgram::new(vec![-1.0, 0.0]).leq(vec![-1.0, 1.0], 0.0);
        assert_eq!(solve_lp(&lp).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn free_and_flipped_variables() {
        // min x + y, x free with x >= -3 enforced by a row, y <= 2 with y >= -1 by a row
        let lp = LinearProgram::new(vec![1.0, 1.0])
            .bound(0, Bound::FREE)
            .bound(1, Bound::at_most(2.0))
            .geq(vec![1.0, 0.0], -3.0)
            .geq(vec![0.0, 1.0], -1.0);
        let (x, v) = opt(&lp);
        assert!((x[0] + 3.0).abs() < 1e-12 && (x[1] + 1.0).abs() < 1e-12);
        assert!((v + 4.0).abs() < 1e-12);
    }

    #[test]
    fn boxed_variables_and_equalities() {
        let lp = LinearProgram::new(vec![-1.0, -2.0])
            .bound(0, Bound::between(-1.0, 1.0))
            .bound(1, Bound::between(0.5, 0.75))
            .eq(vec![1.0, 1.0], 1.0);
        let (x, v) = opt(&lp);
        assert!((x[1] - 0.75).abs() < 1e-12);
        assert!((x[0] - 0.25).abs() < 1e-12);
        assert!((v + 1.75).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities() {
        let lp = LinearProgram::new(vec![1.0, 0.0])
            .eq(vec![1.0, 1.0], 1.0)
            .eq(vec![2.0, 2.0], 2.0);
        let (x, v) = opt(&lp);
        assert!(v.abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_bounds_are_malformed() {
        let lp = LinearProgram::new(vec![1.0]).bound(0, Bound::between(1.0, 0.0));
        assert!(matches!(solve_lp(&lp), Err(LpError::Malformed(_))));
    }

    #[test]
    fn deterministic_on_repeat() {
        let lp = LinearProgram::new(vec![-1.0, -1.0, -1.0])
            .leq(vec![1.0, 1.0, 0.0], 1.0)
            .leq(vec![0.0, 1.0, 1.0], 1.0);
        assert_eq!(solve_lp(&lp).unwrap(), solve_lp(&lp).unwrap());
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under naive Dantzig pivoting.
        let lp = LinearProgram::new(vec![-0.75, 150.0, -0.02, 6.0])
            .leq(vec![0.25, -60.0, -0.04, 9.0], 0.0)
            .leq(vec![0.5, -90.0, -0.02, 3.0], 0.0)
            .leq(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let (_, v) = opt(&lp);
        assert!((v + 0.05).abs() < 1e-9);
    }
}
