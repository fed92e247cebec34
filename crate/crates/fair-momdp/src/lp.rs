//! Dense linear programming via a two-phase primal simplex.
//!
//! Sized for desk-scale programs (hundreds of variables): the tableau is kept
//! dense, pivoting uses Dantzig's rule with a fallback to Bland's rule after
//! `10 * m` consecutive degenerate pivots (re-armed every time a fresh streak
//! accumulates, dropped again on the first non-degenerate pivot), so the
//! solver is deterministic and escapes degenerate plateaus without crawling
//! through the whole solve under Bland. Infeasible and unbounded programs are
//! reported as outcomes, not errors; only malformed input and iteration-limit
//! blowups are `Err`.

use thiserror::Error;

/// Default feasibility/optimality tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("simplex iteration limit reached after {0} pivots")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Per-variable bounds; `None` means unbounded on that side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarBound {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl VarBound {
    pub fn non_negative() -> Self {
        VarBound {
            lower: Some(0.0),
            upper: None,
        }
    }

    pub fn free() -> Self {
        VarBound {
            lower: None,
            upper: None,
        }
    }
}

/// A linear program in maximization form.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    /// Objective coefficients, maximized.
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<VarBound>,
}

impl LinearProgram {
    /// New program maximizing `objective`; all variables default to `>= 0`.
    pub fn maximize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            constraints: Vec::new(),
            bounds: vec![VarBound::non_negative(); n],
        }
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn set_free(&mut self, var: usize) {
        self.bounds[var] = VarBound::free();
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if n == 0 {
            return Err(LpError::Malformed("no variables".into()));
        }
        if self.bounds.len() != n {
            return Err(LpError::Malformed(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective coefficient".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::Malformed(format!(
                    "constraint {i} has {} coefficients for {} variables",
                    c.coeffs.len(),
                    n
                )));
            }
            if c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
                return Err(LpError::Malformed(format!(
                    "constraint {i} has a non-finite entry"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

/// How each original variable maps onto non-negative structural columns.
enum VarMap {
    /// `x = offset + y[col]`
    Shifted { col: usize, offset: f64 },
    /// `x = offset - y[col]` (upper bound only)
    Negated { col: usize, offset: f64 },
    /// `x = y[pos] - y[neg]` (free)
    Split { pos: usize, neg: usize },
}

struct Tableau {
    rows: Vec<Vec<f64>>, // m x (n_cols + 1), last entry is rhs
    cost: Vec<f64>,      // reduced costs + objective cell
    basis: Vec<usize>,
    n_cols: usize,
    first_artificial: usize, // columns >= this are artificial
    pivots: usize,
    degenerate_streak: usize,
    bland: bool,
    tol: f64,
    max_iters: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, row: usize) -> f64 {
        self.rows[row][self.n_cols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.rows[row][col];
        let inv = 1.0 / piv;
        for v in self.rows[row].iter_mut() {
            *v *= inv;
        }
        self.rows[row][col] = 1.0;
        for i in 0..self.rows.len() {
            if i == row {
                continue;
            }
            let factor = self.rows[i][col];
            if factor != 0.0 {
                for j in 0..=self.n_cols {
                    let sub = factor * self.rows[row][j];
                    self.rows[i][j] -= sub;
                }
                self.rows[i][col] = 0.0;
            }
        }
        let factor = self.cost[col];
        if factor != 0.0 {
            for j in 0..=self.n_cols {
                let sub = factor * self.rows[row][j];
                self.cost[j] -= sub;
            }
            self.cost[col] = 0.0;
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Entering column for minimization, or `None` at optimality.
    fn entering(&self, allow_artificial: bool) -> Option<usize> {
        let limit = if allow_artificial {
            self.n_cols
        } else {
            self.first_artificial
        };
        if self.bland {
            (0..limit).find(|&j| self.cost[j] < -self.tol)
        } else {
            let mut best = None;
            let mut best_cost = -self.tol;
            for j in 0..limit {
                if self.cost[j] < best_cost {
                    best_cost = self.cost[j];
                    best = Some(j);
                }
            }
            best
        }
    }

    /// Leaving row by minimum ratio, or `None` if the column is unbounded.
    fn leaving(&self, col: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..self.rows.len() {
            let a = self.rows[i][col];
            if a <= 1e-10 {
                continue;
            }
            let ratio = self.rhs(i) / a;
            let better = match best {
                None => true,
                Some(prev) => {
                    if ratio < best_ratio - 1e-12 {
                        true
                    } else if ratio > best_ratio + 1e-12 {
                        false
                    } else if self.bland {
                        // Bland tie-break: smallest basic variable index.
                        self.basis[i] < self.basis[prev]
                    } else {
                        // Stability tie-break: largest pivot element.
                        a > self.rows[prev][col]
                    }
                }
            };
            if better {
                best = Some(i);
                best_ratio = ratio;
            }
        }
        best
    }

    fn run(&mut self, allow_artificial: bool) -> Result<PhaseEnd, LpError> {
        loop {
            let Some(col) = self.entering(allow_artificial) else {
                return Ok(PhaseEnd::Optimal);
            };
            let Some(row) = self.leaving(col) else {
                return Ok(PhaseEnd::Unbounded);
            };
            let degenerate = self.rhs(row).abs() <= self.tol;
            self.pivot(row, col);
            if degenerate {
                self.degenerate_streak += 1;
                if !self.bland && self.degenerate_streak > 10 * self.rows.len() {
                    self.bland = true;
                }
            } else {
                // Off the degenerate plateau: resume the fast rule.
                self.degenerate_streak = 0;
                self.bland = false;
            }
            if self.pivots > self.max_iters {
                return Err(LpError::IterationLimit(self.pivots));
            }
        }
    }
}

/// Solve `lp` to within `tol` (feasibility and optimality).
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<LpOutcome, LpError> {
    lp.check()?;
    let n = lp.n_vars();

    // Map variables onto non-negative structural columns.
    let mut maps = Vec::with_capacity(n);
    let mut n_structural = 0usize;
    let mut extra_rows: Vec<(usize, f64)> = Vec::new(); // (structural col, upper bound on it)
    for bound in &lp.bounds {
        match (bound.lower, bound.upper) {
            (Some(l), u) => {
                if let Some(u) = u {
                    if u < l {
                        return Ok(LpOutcome::Infeasible);
                    }
                    extra_rows.push((n_structural, u - l));
                }
                maps.push(VarMap::Shifted {
                    col: n_structural,
                    offset: l,
                });
                n_structural += 1;
            }
            (None, Some(u)) => {
                maps.push(VarMap::Negated {
                    col: n_structural,
                    offset: u,
                });
                n_structural += 1;
            }
            (None, None) => {
                maps.push(VarMap::Split {
                    pos: n_structural,
                    neg: n_structural + 1,
                });
                n_structural += 2;
            }
        }
    }

    // Rewrite constraints over the structural columns.
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for c in &lp.constraints {
        let mut coeffs = vec![0.0; n_structural];
        let mut rhs = c.rhs;
        for (j, &a) in c.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shifted { col, offset } => {
                    coeffs[col] += a;
                    rhs -= a * offset;
                }
                VarMap::Negated { col, offset } => {
                    coeffs[col] -= a;
                    rhs -= a * offset;
                }
                VarMap::Split { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        rows.push((coeffs, c.relation, rhs));
    }
    for &(col, ub) in &extra_rows {
        let mut coeffs = vec![0.0; n_structural];
        coeffs[col] = 1.0;
        rows.push((coeffs, Relation::Le, ub));
    }

    // Structural objective (maximize).
    let mut structural_obj = vec![0.0; n_structural];
    for (j, &c) in lp.objective.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        match maps[j] {
            VarMap::Shifted { col, .. } => structural_obj[col] += c,
            VarMap::Negated { col, .. } => structural_obj[col] -= c,
            VarMap::Split { pos, neg } => {
                structural_obj[pos] += c;
                structural_obj[neg] -= c;
            }
        }
    }

    // Equilibrate rows then columns toward unit magnitude so the fixed
    // absolute tolerances track the problem's actual scale. The scaled
    // variable z_j = y_j / col_scale[j] is mapped back at extraction; the
    // reported objective is recomputed from the original data regardless.
    for row in rows.iter_mut() {
        let max = row.0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max > 0.0 {
            let s = 1.0 / max;
            for v in row.0.iter_mut() {
                *v *= s;
            }
            row.2 *= s;
        }
    }
    let mut col_scale = vec![1.0; n_structural];
    for (j, scale) in col_scale.iter_mut().enumerate() {
        let max = rows.iter().fold(0.0f64, |m, r| m.max(r.0[j].abs()));
        if max > 0.0 {
            *scale = 1.0 / max;
        }
    }
    for row in rows.iter_mut() {
        for (j, v) in row.0.iter_mut().enumerate() {
            *v *= col_scale[j];
        }
    }
    for (j, c) in structural_obj.iter_mut().enumerate() {
        *c *= col_scale[j];
    }

    // Normalize rhs signs, then attach slack/artificial columns.
    let m = rows.len();
    let mut n_slack = 0usize;
    let mut n_art = 0usize;
    for row in rows.iter_mut() {
        if row.2 < 0.0 {
            for v in row.0.iter_mut() {
                *v = -*v;
            }
            row.2 = -row.2;
            row.1 = match row.1 {
                Relation::Le => Relation::Ge,
                Relation::Eq => Relation::Eq,
                Relation::Ge => Relation::Le,
            };
        }
        match row.1 {
            Relation::Le => n_slack += 1,
            Relation::Ge => {
                n_slack += 1;
                n_art += 1;
            }
            Relation::Eq => n_art += 1,
        }
    }

    let n_cols = n_structural + n_slack + n_art;
    let first_artificial = n_structural + n_slack;
    let mut tableau_rows = vec![vec![0.0; n_cols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut slack_idx = n_structural;
    let mut art_idx = first_artificial;
    for (i, (coeffs, relation, rhs)) in rows.iter().enumerate() {
        tableau_rows[i][..n_structural].copy_from_slice(coeffs);
        tableau_rows[i][n_cols] = *rhs;
        match relation {
            Relation::Le => {
                tableau_rows[i][slack_idx] = 1.0;
                basis[i] = slack_idx;
                slack_idx += 1;
            }
            Relation::Ge => {
                tableau_rows[i][slack_idx] = -1.0;
                slack_idx += 1;
                tableau_rows[i][art_idx] = 1.0;
                basis[i] = art_idx;
                art_idx += 1;
            }
            Relation::Eq => {
                tableau_rows[i][art_idx] = 1.0;
                basis[i] = art_idx;
                art_idx += 1;
            }
        }
    }

    let max_iters = 2000 + 200 * (m + n_cols);
    let mut tab = Tableau {
        rows: tableau_rows,
        cost: vec![0.0; n_cols + 1],
        basis,
        n_cols,
        first_artificial,
        pivots: 0,
        degenerate_streak: 0,
        bland: false,
        tol,
        max_iters,
    };

    // Phase 1: minimize the sum of artificials.
    if n_art > 0 {
        for j in first_artificial..n_cols {
            tab.cost[j] = 1.0;
        }
        for i in 0..m {
            if tab.basis[i] >= first_artificial {
                let row = tab.rows[i].clone();
                for j in 0..=n_cols {
                    tab.cost[j] -= row[j];
                }
                tab.cost[tab.basis[i]] = 0.0;
            }
        }
        match tab.run(true)? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => {
                // Phase-1 objective is bounded below by zero; cannot happen.
                return Err(LpError::Malformed("phase-1 reported unbounded".into()));
            }
        }
        let infeasibility: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= first_artificial)
            .map(|i| tab.rhs(i).max(0.0))
            .sum();
        let scale = 1.0 + rows.iter().map(|r| r.2.abs()).fold(0.0, f64::max);
        if infeasibility > tol * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // Pivot leftover artificials out of the basis; an all-zero row is
        // redundant and gets cleared.
        for i in 0..m {
            if tab.basis[i] < first_artificial {
                continue;
            }
            let mut best: Option<usize> = None;
            for j in 0..first_artificial {
                if tab.rows[i][j].abs() > 1e-7
                    && best.is_none_or(|b| tab.rows[i][j].abs() > tab.rows[i][b].abs())
                {
                    best = Some(j);
                }
            }
            match best {
                Some(j) => tab.pivot(i, j),
                None => {
                    for v in tab.rows[i].iter_mut() {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    // Phase 2: minimize the negated structural objective, normalized so the
    // optimality tolerance is insensitive to the objective's own scale.
    let obj_norm = structural_obj
        .iter()
        .fold(0.0f64, |m, c| m.max(c.abs()));
    let obj_factor = if obj_norm > 0.0 { 1.0 / obj_norm } else { 1.0 };
    tab.cost = vec![0.0; n_cols + 1];
    for (j, &c) in structural_obj.iter().enumerate() {
        tab.cost[j] = -c * obj_factor;
    }
    tab.degenerate_streak = 0;
    tab.bland = false;
    for i in 0..m {
        let b = tab.basis[i];
        let factor = tab.cost[b];
        if factor != 0.0 {
            let row = tab.rows[i].clone();
            for j in 0..=n_cols {
                tab.cost[j] -= factor * row[j];
            }
            tab.cost[b] = 0.0;
        }
    }
    match tab.run(false)? {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded => return Ok(LpOutcome::Unbounded),
    }

    // Extract structural values (undoing column scaling) and map back to
    // the original variables.
    let mut y = vec![0.0; n_structural];
    for i in 0..m {
        if tab.basis[i] < n_structural {
            y[tab.basis[i]] = tab.rhs(i) * col_scale[tab.basis[i]];
        }
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|mapping| match *mapping {
            VarMap::Shifted { col, offset } => offset + y[col],
            VarMap::Negated { col, offset } => offset - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let objective = lp
        .objective
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum();
    Ok(LpOutcome::Optimal { x, objective })
}

/// [`solve_lp`] at the default tolerance.
pub fn solve_lp_default(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    solve_lp(lp, DEFAULT_TOL)
}
