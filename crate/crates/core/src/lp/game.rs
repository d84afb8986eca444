use super::{solve_lp, Bound, LinearProgram, LpError, LpOutcome};

/// Tolerance on |min-max − max-min| for declaring a saddle point.
pub const SADDLE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GameSolution {
    pub value: f64,
    /// Controller's mixed strategy over rows (actions).
    pub minimizer: Vec<f64>,
    /// Nature's weights over columns (vertices) of the attaining piece.
    pub maximizer: Vec<f64>,
    pub is_saddle: bool,
    pub piece_index: usize,
}

fn clean(mut v: Vec<f64>) -> Vec<f64> {
    for p in v.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for p in v.iter_mut() {
            *p /= s;
        }
    }
    v
}

fn dirac(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn expect_optimal(out: LpOutcome) -> Result<Vec<f64>, LpError> {
    match out {
        LpOutcome::Optimal { x, .. } => Ok(x),
        other => Err(LpError::Degenerate(format!(
            "game program reported {other:?}"
        ))),
    }
}

/// `min_{x∈Δm} max_{y∈Δk} xᵀ M y` with `M` given row-major (`m × k`).
///
/// Both players' programs are solved; the reported value is the controller's.
pub fn solve_matrix_game(m: &[Vec<f64>]) -> Result<GameSolution, LpError> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 || m.iter().any(|r| r.len() != cols) {
        return Err(LpError::Malformed("game matrix must be a nonempty rectangle".into()));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LpError::Malformed("non-finite payoff".into()));
    }
    if rows == 1 {
        let j = argmax(&m[0]);
        return Ok(GameSolution {
            value: m[0][j],
            minimizer: vec![1.0],
            maximizer: dirac(cols, j),
            is_saddle: true,
            piece_index: 0,
        });
    }
    if cols == 1 {
        let col: Vec<f64> = m.iter().map(|r| r[0]).collect();
        let i = argmin(&col);
        return Ok(GameSolution {
            value: col[i],
            minimizer: dirac(rows, i),
            maximizer: vec![1.0],
            is_saddle: true,
            piece_index: 0,
        });
    }

    // Controller: min u s.t. Σ_i x_i M_ij ≤ u for every column j.
    let mut c = vec![0.0; rows + 1];
    c[rows] = 1.0;
    let mut lp = LinearProgram::new(c).bound(rows, Bound::FREE);
    for j in 0..cols {
        let mut r: Vec<f64> = m.iter().map(|row| row[j]).collect();
        r.push(-1.0);
        lp = lp.leq(r, 0.0);
    }
    let mut simplex = vec![1.0; rows];
    simplex.push(0.0);
    lp = lp.eq(simplex, 1.0);
    let x = expect_optimal(solve_lp(&lp)?)?;
    let value = x[rows];
    let minimizer = clean(x[..rows].to_vec());

    // Nature: max w s.t. w ≤ Σ_j M_ij y_j for every row i.
    let mut c = vec![0.0; cols + 1];
    c[cols] = -1.0;
    let mut lp = LinearProgram::new(c).bound(cols, Bound::FREE);
    for row in m {
        let mut r: Vec<f64> = row.iter().map(|v| -v).collect();
        r.push(1.0);
        lp = lp.leq(r, 0.0);
    }
    let mut simplex = vec![1.0; cols];
    simplex.push(0.0);
    lp = lp.eq(simplex, 1.0);
    let y = expect_optimal(solve_lp(&lp)?)?;
    let lower = y[cols];
    let maximizer = clean(y[..cols].to_vec());

    if (value - lower).abs() > 1e-8 * (1.0 + value.abs()) {
        return Err(LpError::Degenerate(format!(
            "matrix game values disagree: {value} vs {lower}"
        )));
    }
    Ok(GameSolution {
        value,
        minimizer,
        maximizer,
        is_saddle: true,
        piece_index: 0,
    })
}

/// Lowest index attaining the maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Lowest index attaining the minimum.
pub(crate) fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Primal and dual solutions of one min-max subproblem over a union of pieces.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct UnionGameSolution {
    /// Minimizer over the pooled vertices of all pieces.
    pub primal: GameSolution,
    /// Best piece's max-min solution; `minimizer` is the pure controller response.
    pub dual: GameSolution,
    /// Max-min value of each piece.
    pub piece_values: Vec<f64>,
    /// Pure controller response to each piece's maximizing point.
    pub piece_responses: Vec<usize>,
}

/// Solves `min_π max_{v ∈ ∪ pieces}` and `max_{piece} max_{q ∈ conv(piece)} min_a`.
///
/// `pieces[p][v][a]` is the payoff of action `a` against vertex `v` of piece `p`.
pub fn minmax_over_union(pieces: &[Vec<Vec<f64>>]) -> Result<UnionGameSolution, LpError> {
    let actions = pieces
        .first()
        .and_then(|p| p.first())
        .map_or(0, |v| v.len());
    if actions == 0 || pieces.iter().any(|p| p.is_empty()) {
        return Err(LpError::Malformed("union game needs nonempty pieces and actions".into()));
    }
    if pieces.iter().flatten().any(|v| v.len() != actions) {
        return Err(LpError::Malformed("inconsistent action counts across vertices".into()));
    }

    let pooled: Vec<Vec<f64>> = (0..actions)
        .map(|a| pieces.iter().flatten().map(|v| v[a]).collect())
        .collect();
    let mut primal = solve_matrix_game(&pooled)?;

    let mut piece_values = Vec::with_capacity(pieces.len());
    let mut piece_responses = Vec::with_capacity(pieces.len());
    let mut best: Option<(usize, GameSolution)> = None;
    for (p, piece) in pieces.iter().enumerate() {
        let m: Vec<Vec<f64>> = (0..actions)
            .map(|a| piece.iter().map(|v| v[a]).collect())
            .collect();
        let g = solve_matrix_game(&m)?;
        let response: Vec<f64> = (0..actions)
            .map(|a| g.maximizer.iter().zip(&m[a]).map(|(l, w)| l * w).sum())
            .collect();
        piece_values.push(g.value);
        piece_responses.push(argmin(&response));
        if best.as_ref().is_none_or(|(_, b)| g.value > b.value + 1e-12) {
            best = Some((p, g));
        }
    }
    let (piece_index, g) = best.expect("at least one piece");
    let saddle = (primal.value - g.value).abs() <= SADDLE_TOL;
    primal.is_saddle = saddle;
    let dual = GameSolution {
        value: g.value,
        minimizer: dirac(actions, piece_responses[piece_index]),
        maximizer: g.maximizer,
        is_saddle: saddle,
        piece_index,
    };
    Ok(UnionGameSolution {
        primal,
        dual,
        piece_values,
        piece_responses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rock_paper_scissors() {
        let m = vec![
            vec![0.0, 1.0, -1.0],
            vec![-1.0, 0.0, 1.0],
            vec![1.0, -1.0, 0.0],
        ];
        let g = solve_matrix_game(&m).unwrap();
        assert!(g.value.abs() < 1e-9);
        for p in g.minimizer.iter().chain(&g.maximizer) {
            assert!((p - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn one_by_one() {
        assert_eq!(solve_matrix_game(&[vec![1.0]]).unwrap().value, 1.0);
    }

    #[test]
    fn identity_two_by_two() {
        let g = solve_matrix_game(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((g.value - 0.5).abs() < 1e-12);
        assert!((g.minimizer[0] - 0.5).abs() < 1e-12);
        assert!((g.maximizer[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_vertex_piece() {
        let u = minmax_over_union(&[vec![vec![3.0, 1.0, 2.0]]]).unwrap();
        assert_eq!(u.primal.value, 1.0);
        assert_eq!(u.dual.value, 1.0);
        assert!(u.primal.is_saddle);
        assert_eq!(u.primal.minimizer, vec![0.0, 1.0, 0.0]);
    }

    // Payoffs (aL, aR) against p: aL gets p, aR gets 1 − p.
    fn segment(p0: f64, p1: f64) -> Vec<Vec<f64>> {
        vec![vec![p0, 1.0 - p0], vec![p1, 1.0 - p1]]
    }

    #[test]
    fn two_segments_have_a_gap() {
        let u = minmax_over_union(&[segment(0.0, 0.25), segment(0.75, 1.0)]).unwrap();
        assert!((u.primal.value - 0.5).abs() < 1e-9);
        assert!((u.dual.value - 0.25).abs() < 1e-9);
        assert!(!u.primal.is_saddle);
    }

    #[test]
    fn full_segment_is_a_saddle() {
        let u = minmax_over_union(&[segment(0.0, 1.0)]).unwrap();
        assert!((u.primal.value - 0.5).abs() < 1e-9);
        assert!((u.dual.value - 0.5).abs() < 1e-9);
        assert!((u.primal.minimizer[0] - 0.5).abs() < 1e-9);
        assert!(u.dual.is_saddle);
    }
}
