//! Dense-tableau two-phase primal simplex for small linear programs.
//!
//! Variables are nonnegative; rows may be equalities or inequalities.
//! Pivoting uses Dantzig's rule until a long degenerate streak, then
//! switches to Bland's rule permanently, which guarantees termination.
//! Problem sizes here are a few thousand columns at most, so a dense
//! tableau is simpler and fast enough.

use crate::Error;

const EPS: f64 = 1e-9;
/// Degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Le,
    Ge,
}

/// `max c.x  s.t.  rows, x >= 0`, rows given sparsely.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub num_vars: usize,
    /// Maximization objective.
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
}

#[derive(Debug, Clone)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
    /// Multiplier per original row: the objective decrease per unit of
    /// slack added to that row, in the row's stated orientation.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

struct Tableau {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.cols + c]
    }
    #[inline]
    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.a[r * self.cols + c]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let cols = self.cols;
        let piv = self.at(row, col);
        let inv = 1.0 / piv;
        for c in 0..cols {
            *self.at_mut(row, c) *= inv;
        }
        *self.at_mut(row, col) = 1.0;
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = self.at(r, col);
            if factor == 0.0 {
                continue;
            }
            for c in 0..cols {
                let delta = factor * self.at(row, c);
                *self.at_mut(r, c) -= delta;
            }
            *self.at_mut(r, col) = 0.0;
        }
        self.basis[row] = col;
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, Error> {
    let m = lp.rows.len();
    let n = lp.num_vars;
    for row in &lp.rows {
        for &(j, _) in &row.coeffs {
            if j >= n {
                return Err(Error::DimensionMismatch(format!(
                    "row references variable {j} of {n}"
                )));
            }
        }
    }
    if lp.objective.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "objective length {} vs {} variables",
            lp.objective.len(),
            n
        )));
    }

    // Standardize: nonnegative right-hand sides, slack per inequality,
    // artificial per row lacking an initial basic column.
    let mut flipped = vec![false; m];
    let mut slack_col = vec![usize::MAX; m];
    let mut art_col = vec![usize::MAX; m];
    let mut next = n;
    for (i, row) in lp.rows.iter().enumerate() {
        let mut cmp = row.cmp;
        if row.rhs < 0.0 {
            flipped[i] = true;
            cmp = match cmp {
                Cmp::Eq => Cmp::Eq,
                Cmp::Le => Cmp::Ge,
                Cmp::Ge => Cmp::Le,
            };
        }
        match cmp {
            Cmp::Le => {
                slack_col[i] = next;
                next += 1;
            }
            Cmp::Ge => {
                slack_col[i] = next;
                next += 1;
                art_col[i] = next;
                next += 1;
            }
            Cmp::Eq => {
                art_col[i] = next;
                next += 1;
            }
        }
    }
    let total = next;
    let mut is_artificial = vec![false; total];
    for &c in &art_col {
        if c != usize::MAX {
            is_artificial[c] = true;
        }
    }
    let num_artificial = is_artificial.iter().filter(|b| **b).count();

    // Tableau rows: m constraint rows, one phase-2 cost row, one phase-1
    // cost row. Last column is the right-hand side.
    let cols = total + 1;
    let z2 = m;
    let z1 = m + 1;
    let mut t = Tableau {
        rows: m + 2,
        cols,
        a: vec![0.0; (m + 2) * cols],
        basis: vec![usize::MAX; m],
    };
    for (i, row) in lp.rows.iter().enumerate() {
        let sign = if flipped[i] { -1.0 } else { 1.0 };
        for &(j, v) in &row.coeffs {
            *t.at_mut(i, j) += sign * v;
        }
        *t.at_mut(i, total) = sign * row.rhs;
        if slack_col[i] != usize::MAX {
            let is_ge = art_col[i] != usize::MAX;
            *t.at_mut(i, slack_col[i]) = if is_ge { -1.0 } else { 1.0 };
        }
        if art_col[i] != usize::MAX {
            *t.at_mut(i, art_col[i]) = 1.0;
            t.basis[i] = art_col[i];
        } else {
            t.basis[i] = slack_col[i];
        }
    }
    // Phase-2 cost row: reduced costs of `min -c.x` (we maximize c.x).
    for j in 0..n {
        *t.at_mut(z2, j) = -lp.objective[j];
    }
    // Phase-1 cost row: minimize the sum of artificials. Reduced costs
    // start as 1 on artificials, then eliminate the basic ones.
    if num_artificial > 0 {
        for i in 0..m {
            if art_col[i] != usize::MAX {
                for c in 0..cols {
                    let v = t.at(i, c);
                    *t.at_mut(z1, c) -= v;
                }
                *t.at_mut(z1, art_col[i]) = 0.0;
            }
        }
    }

    let max_iter = 20_000 + 40 * (m + total);
    let mut iterations = 0;

    if num_artificial > 0 {
        run_phase(&mut t, z1, total, &is_artificial, max_iter, &mut iterations)?;
        let infeas = -t.at(z1, total);
        if infeas > 1e-7 {
            return Err(Error::Infeasible(format!(
                "phase-1 residual {infeas:.3e}"
            )));
        }
        // Drive remaining artificials out of the basis where possible;
        // rows that cannot pivot are redundant and harmless.
        for i in 0..m {
            if is_artificial[t.basis[i]] {
                let col = (0..total).find(|&c| !is_artificial[c] && t.at(i, c).abs() > EPS);
                if let Some(c) = col {
                    t.pivot(i, c);
                }
            }
        }
    }

    run_phase(&mut t, z2, total, &is_artificial, max_iter, &mut iterations)?;

    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.at(i, total);
        }
    }
    let objective = t.at(z2, total);

    // Duals from the reduced costs of each row's initial basic column:
    // for a slack column s_i with zero cost, rc(s_i) = -y_i (times the
    // standardization sign). Equality rows use their artificial column.
    let mut duals = vec![0.0; m];
    for i in 0..m {
        let col = if slack_col[i] != usize::MAX {
            slack_col[i]
        } else {
            art_col[i]
        };
        let mut y = t.at(z2, col);
        // A >= row's surplus enters with coefficient -1: flip once more.
        let is_ge_surplus = slack_col[i] != usize::MAX && art_col[i] != usize::MAX;
        if is_ge_surplus {
            y = -y;
        }
        if flipped[i] {
            y = -y;
        }
        duals[i] = y;
    }

    Ok(LpSolution {
        objective,
        x,
        duals,
        iterations,
    })
}

fn run_phase(
    t: &mut Tableau,
    cost_row: usize,
    total: usize,
    barred: &[bool],
    max_iter: usize,
    iterations: &mut usize,
) -> Result<(), Error> {
    let m = t.rows - 2;
    let mut bland = false;
    let mut streak = 0usize;
    let mut last_obj = t.at(cost_row, total);
    loop {
        // Entering column: negative reduced cost, barred columns skipped.
        let mut enter = usize::MAX;
        if bland {
            for c in 0..total {
                if !barred[c] && t.at(cost_row, c) < -EPS {
                    enter = c;
                    break;
                }
            }
        } else {
            let mut best = -EPS;
            for c in 0..total {
                let rc = t.at(cost_row, c);
                if !barred[c] && rc < best {
                    best = rc;
                    enter = c;
                }
            }
        }
        if enter == usize::MAX {
            return Ok(());
        }
        // Ratio test, ties to the lowest basis variable (Bland-safe).
        let mut leave = usize::MAX;
        let mut best_ratio = f64::INFINITY;
        for r in 0..m {
            let a = t.at(r, enter);
            if a > EPS {
                let ratio = t.at(r, total) / a;
                if ratio < best_ratio - EPS
                    || (ratio < best_ratio + EPS
                        && (leave == usize::MAX || t.basis[r] < t.basis[leave]))
                {
                    best_ratio = ratio;
                    leave = r;
                }
            }
        }
        if leave == usize::MAX {
            return Err(Error::Unbounded(format!("column {enter} has no bound")));
        }
        t.pivot(leave, enter);
        *iterations += 1;
        if *iterations > max_iter {
            return Err(Error::CapExceeded(format!(
                "simplex did not converge in {max_iter} pivots"
            )));
        }
        let obj = t.at(cost_row, total);
        if (obj - last_obj).abs() <= EPS {
            streak += 1;
            if streak >= DEGENERATE_STREAK {
                bland = true;
            }
        } else {
            streak = 0;
        }
        last_obj = obj;
    }
}
