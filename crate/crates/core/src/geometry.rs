//! Convex polytopes given by vertices or halfspaces, and finite unions of them.
//!
//! Hulls are never built explicitly. Membership is an LP, and halfspace bodies
//! are turned into vertex lists by brute force over active constraint sets.

use crate::error::{check_cap, Error, Result, Violation};
use crate::lp::{solve_lp, Bound, LinearProgram, LpOutcome};

/// Largest ℓ1 residual accepted by [`hull_contains`].
pub const MEMBERSHIP_TOL: f64 = 1e-8;
const VERTEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Polytope {
    /// Convex hull of the listed points.
    Vertices(Vec<Vec<f64>>),
    /// `{x : A x ≤ b, E x = f}`.
    Halfspaces {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default)]
        e: Vec<Vec<f64>>,
        #[serde(default)]
        f: Vec<f64>,
    },
}

impl Polytope {
    pub fn point(x: Vec<f64>) -> Self {
        Polytope::Vertices(vec![x])
    }

    /// Segment `[x, y]`.
    pub fn segment(x: Vec<f64>, y: Vec<f64>) -> Self {
        Polytope::Vertices(vec![x, y])
    }

    pub fn dim(&self) -> usize {
        match self {
            Polytope::Vertices(v) => v.first().map_or(0, |p| p.len()),
            Polytope::Halfspaces { a, e, .. } => a
                .first()
                .or_else(|| e.first())
                .map_or(0, |r| r.len()),
        }
    }

    /// Representation problems; for halfspaces this includes an emptiness check.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        match self {
            Polytope::Vertices(v) => {
                if v.is_empty() {
                    out.push(Violation::new("vertex list is empty"));
                    return out;
                }
                let d = v[0].len();
                if v.iter().any(|p| p.len() != d) {
                    out.push(Violation::new("vertices have differing dimensions"));
                }
                if v.iter().flatten().any(|x| !x.is_finite()) {
                    out.push(Violation::new("vertex coordinate is not finite"));
                }
            }
            Polytope::Halfspaces { a, b, e, f } => {
                let d = self.dim();
                if d == 0 {
                    out.push(Violation::new("halfspace description has no rows"));
                    return out;
                }
                if a.len() != b.len() || e.len() != f.len() {
                    out.push(Violation::new("row and right-hand-side counts differ"));
                }
                if a.iter().chain(e).any(|r| r.len() != d) {
                    out.push(Violation::new("halfspace rows have differing dimensions"));
                }
                if a.iter().flatten().chain(b).chain(e.iter().flatten()).chain(f).any(|x| !x.is_finite()) {
                    out.push(Violation::new("halfspace coefficient is not finite"));
                }
                if out.is_empty() {
                    match self.feasible_point() {
                        Ok(Some(_)) => {}
                        Ok(None) => out.push(Violation::new("halfspace description is empty")),
                        Err(err) => out.push(Violation::new(format!("feasibility check failed: {err}"))),
                    }
                }
            }
        }
        out
    }

    fn halfspace_lp(&self, objective: Vec<f64>) -> LinearProgram {
        let Polytope::Halfspaces { a, b, e, f } = self else {
            unreachable!("halfspace program on a vertex list")
        };
        let d = objective.len();
        let mut lp = LinearProgram::new(objective);
        for j in 0..d {
            lp = lp.bound(j, Bound::FREE);
        }
        for (row, &rhs) in a.iter().zip(b) {
            lp = lp.leq(row.clone(), rhs);
        }
        for (row, &rhs) in e.iter().zip(f) {
            lp = lp.eq(row.clone(), rhs);
        }
        lp
    }

    fn feasible_point(&self) -> Result<Option<Vec<f64>>> {
        match solve_lp(&self.halfspace_lp(vec![0.0; self.dim()]))? {
            LpOutcome::Optimal { x, .. } => Ok(Some(x)),
            _ => Ok(None),
        }
    }

    /// Whether `max ±x_j` is finite for every coordinate.
    pub fn is_bounded(&self) -> Result<bool> {
        if let Polytope::Vertices(_) = self {
            return Ok(true);
        }
        let d = self.dim();
        for j in 0..d {
            for sign in [1.0, -1.0] {
                let mut c = vec![0.0; d];
                c[j] = sign;
                if let LpOutcome::Unbounded = solve_lp(&self.halfspace_lp(c))? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// A vertex list whose hull is this polytope.
    ///
    /// Halfspace bodies must be bounded; their vertices are found by trying
    /// every square system of active constraints, so `cap` bounds that count.
    pub fn vertices(&self, cap: u128) -> Result<Vec<Vec<f64>>> {
        match self {
            Polytope::Vertices(v) => Ok(v.clone()),
            Polytope::Halfspaces { a, b, e, f } => {
                if !self.is_bounded()? {
                    return Err(Error::Unsupported("unbounded halfspace polytope".into()));
                }
                enumerate_vertices(a, b, e, f, self.dim(), cap)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        match self {
            Polytope::Vertices(v) => hull_contains(v, x),
            Polytope::Halfspaces { a, b, e, f } => {
                let dot = |r: &[f64]| r.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
                Ok(a.iter().zip(b).all(|(r, &rhs)| dot(r) <= rhs + MEMBERSHIP_TOL)
                    && e.iter().zip(f).all(|(r, &rhs)| (dot(r) - rhs).abs() <= MEMBERSHIP_TOL))
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    r
}

/// Solves a square system by Gaussian elimination with partial pivoting.
fn solve_square(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

/// Indices of a maximal linearly independent subset of `rows`.
fn independent_rows(rows: &[Vec<f64>]) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut keep = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mut v = r.clone();
        for b in &basis {
            let lead = b.iter().position(|x| x.abs() > 1e-12).unwrap();
            let f = v[lead] / b[lead];
            for (x, y) in v.iter_mut().zip(b) {
                *x -= f * y;
            }
        }
        if v.iter().any(|x| x.abs() > 1e-10) {
            let lead = v.iter().position(|x| x.abs() > 1e-10).unwrap();
            let norm = v[lead];
            for x in v.iter_mut() {
                *x /= norm;
            }
            basis.push(v);
            keep.push(i);
        }
    }
    keep
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn enumerate_vertices(
    a: &[Vec<f64>],
    b: &[f64],
    e: &[Vec<f64>],
    f: &[f64],
    d: usize,
    cap: u128,
) -> Result<Vec<Vec<f64>>> {
    let eq_keep = independent_rows(e);
    let k = d.saturating_sub(eq_keep.len());
    if k > a.len() {
        return Err(Error::Unsupported("halfspace polytope has too few rows to pin a vertex".into()));
    }
    let combos = binomial(a.len(), k);
    if combos > cap {
        return Err(Error::CapExceeded {
            what: "active constraint sets".into(),
            count: combos,
            cap,
        });
    }
    let feasible = |x: &[f64]| {
        let dot = |r: &[f64]| r.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        a.iter().zip(b).all(|(r, &rhs)| dot(r) <= rhs + VERTEX_TOL * (1.0 + rhs.abs()))
            && e.iter().zip(f).all(|(r, &rhs)| (dot(r) - rhs).abs() <= VERTEX_TOL * (1.0 + rhs.abs()))
    };
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut m: Vec<Vec<f64>> = eq_keep.iter().map(|&i| e[i].clone()).collect();
        let mut rhs: Vec<f64> = eq_keep.iter().map(|&i| f[i]).collect();
        for &i in &idx {
            m.push(a[i].clone());
            rhs.push(b[i]);
        }
        if m.len() == d {
            if let Some(mut x) = solve_square(m, rhs) {
                for v in x.iter_mut() {
                    if v.abs() < 1e-13 {
                        *v = 0.0;
                    }
                }
                if feasible(&x)
                    && !out
                        .iter()
                        .any(|y| y.iter().zip(&x).all(|(p, q)| (p - q).abs() <= VERTEX_TOL))
                {
                    out.push(x);
                }
            }
        }
        if k == 0 || !next_combination(&mut idx, a.len()) {
            break;
        }
    }
    if out.is_empty() {
        return Err(Error::Unsupported("halfspace polytope has no vertices".into()));
    }
    Ok(out)
}

/// ℓ1 distance from `x` to the hull of `points`, via LP.
pub fn hull_distance(points: &[Vec<f64>], x: &[f64]) -> Result<f64> {
    let k = points.len();
    let d = x.len();
    if k == 0 {
        return Err(Error::Unsupported("membership in an empty hull".into()));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Dimension {
            stage: 0,
            detail: "membership point dimension differs from vertices".into(),
        });
    }
    // Variables: λ (k), r⁺ (d), r⁻ (d).
    let mut c = vec![0.0; k + 2 * d];
    for v in c[k..].iter_mut() {
        *v = 1.0;
    }
    let mut lp = LinearProgram::new(c);
    for j in 0..d {
        let mut row = vec![0.0; k + 2 * d];
        for (i, p) in points.iter().enumerate() {
            row[i] = p[j];
        }
        row[k + j] = 1.0;
        row[k + d + j] = -1.0;
        lp = lp.eq(row, x[j]);
    }
    let mut row = vec![0.0; k + 2 * d];
    for v in row[..k].iter_mut() {
        *v = 1.0;
    }
    lp = lp.eq(row, 1.0);
    match solve_lp(&lp)? {
        LpOutcome::Optimal { value, .. } => Ok(value.max(0.0)),
        other => Err(Error::Unsupported(format!("membership program reported {other:?}"))),
    }
}

/// Whether `x` lies in the hull of `points` within [`MEMBERSHIP_TOL`].
pub fn hull_contains(points: &[Vec<f64>], x: &[f64]) -> Result<bool> {
    Ok(hull_distance(points, x)? <= MEMBERSHIP_TOL)
}

/// Finite union of convex pieces; need not be convex.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct UnionOfPolytopes {
    pub pieces: Vec<Polytope>,
}

impl UnionOfPolytopes {
    pub fn new(pieces: Vec<Polytope>) -> Result<Self> {
        let u = UnionOfPolytopes { pieces };
        let v = u.violations();
        if v.is_empty() {
            Ok(u)
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    pub fn single(p: Polytope) -> Self {
        UnionOfPolytopes { pieces: vec![p] }
    }

    pub fn dim(&self) -> usize {
        self.pieces.first().map_or(0, |p| p.dim())
    }

    pub fn violations(&self) -> Vec<Violation> {
        if self.pieces.is_empty() {
            return vec![Violation::new("union has no pieces")];
        }
        let d = self.dim();
        let mut out: Vec<Violation> = self.pieces.iter().flat_map(|p| p.violations()).collect();
        if self.pieces.iter().any(|p| p.dim() != d) {
            out.push(Violation::new("union pieces have differing dimensions"));
        }
        out
    }

    /// Vertex lists of every piece.
    pub fn piece_vertices(&self, cap: u128) -> Result<Vec<Vec<Vec<f64>>>> {
        let lists = self
            .pieces
            .iter()
            .map(|p| p.vertices(cap))
            .collect::<Result<Vec<_>>>()?;
        check_cap(
            || "union vertices".into(),
            [lists.iter().map(|l| l.len()).sum()],
            cap,
        )?;
        Ok(lists)
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        for p in &self.pieces {
            if p.contains(x)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polytope {
        Polytope::Halfspaces {
            a: vec![
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, -1.0],
            ],
            b: vec![1.0, 0.0, 1.0, 0.0],
            e: vec![],
            f: vec![],
        }
    }

    #[test]
    fn square_has_four_vertices() {
        let v = square().vertices(1000).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v.contains(&vec![1.0, 1.0]));
    }

    #[test]
    fn simplex_edge_from_equality() {
        // {q ≥ 0, q ≤ 1, q1 + q2 = 1}
        let p = Polytope::Halfspaces {
            a: vec![
                vec![-1.0, 0.0],
                vec![0.0, -1.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
            ],
            b: vec![0.0, 0.0, 1.0, 1.0],
            e: vec![vec![1.0, 1.0]],
            f: vec![1.0],
        };
        let mut v = p.vertices(1000).unwrap();
        v.sort_by(|x, y| x[0].total_cmp(&y[0]));
        assert_eq!(v, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn unbounded_halfspace_is_refused() {
        let p = Polytope::Halfspaces {
            a: vec![vec![-1.0]],
            b: vec![0.0],
            e: vec![],
            f: vec![],
        };
        assert!(!p.is_bounded().unwrap());
        assert!(p.vertices(10).is_err());
    }

    #[test]
    fn empty_halfspace_is_a_violation() {
        let p = Polytope::Halfspaces {
            a: vec![vec![1.0], vec![-1.0]],
            b: vec![0.0, -1.0],
            e: vec![],
            f: vec![],
        };
        assert!(!p.violations().is_empty());
    }

    #[test]
    fn hull_membership() {
        let tri = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(hull_contains(&tri, &[0.25, 0.25]).unwrap());
        assert!(!hull_contains(&tri, &[0.75, 0.75]).unwrap());
        assert!((hull_distance(&tri, &[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn union_membership_is_piecewise() {
        let u = UnionOfPolytopes::new(vec![
            Polytope::segment(vec![0.0], vec![0.25]),
            Polytope::segment(vec![0.75], vec![1.0]),
        ])
        .unwrap();
        assert!(u.contains(&[0.1]).unwrap());
        assert!(!u.contains(&[0.5]).unwrap());
    }

    #[test]
    fn vertex_cap_is_enforced() {
        assert!(matches!(square().vertices(2), Err(Error::CapExceeded { .. })));
    }
}
