//! Dense two-phase simplex for `maximize c.x subject to A x <= b`, `x` free.
//!
//! Sized for the Chebyshev-center problems of the cutting-plane solver: a few
//! hundred rows, at most a few dozen columns. Free variables are split as
//! `x = x+ - x-`, every row gets a slack, rows with negative right-hand side
//! get an artificial variable, and pivoting follows Bland's rule so the
//! method cannot cycle.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpError {
    Infeasible,
    Unbounded,
    IterationLimit,
    /// Row lengths, `b` or `c` disagree in size, or an entry is not finite.
    Shape,
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpError::Infeasible => "infeasible",
            LpError::Unbounded => "unbounded",
            LpError::IterationLimit => "iteration limit reached",
            LpError::Shape => "malformed problem data",
        })
    }
}

impl core::error::Error for LpError {}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// `max_i (A x - b)_i`, clamped at zero.
    pub max_violation: f64,
    pub pivots: usize,
}

const PIVOT_EPS: f64 = 1e-11;

struct Tableau {
    width: usize,
    data: Vec<f64>,
    rows: usize,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    /// The objective row sits after the constraint rows.
    fn obj(&self, c: usize) -> f64 {
        self.at(self.rows, c)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let p = self.at(pr, pc);
        for c in 0..w {
            self.data[pr * w + c] /= p;
        }
        self.data[pr * w + pc] = 1.0;
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f == 0.0 {
                continue;
            }
            for c in 0..w {
                let v = self.data[pr * w + c];
                self.data[r * w + c] -= f * v;
            }
            self.data[r * w + pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// Maximizes the objective row, entering only columns `< allowed`.
    fn run(&mut self, allowed: usize, max_pivots: usize) -> Result<(), LpError> {
        loop {
            let Some(enter) = (0..allowed).find(|&c| self.obj(c) < -1e-10) else {
                return Ok(());
            };
            let rhs = self.rhs_col();
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, enter);
                if a > PIVOT_EPS {
                    let ratio = self.at(r, rhs) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let tie = libm::fabs(ratio - lratio) <= 1e-12 * (1.0 + libm::fabs(lratio));
                            if ratio < lratio && !tie
                                || tie && self.basis[r] < self.basis[lr]
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((leave, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            if self.pivots >= max_pivots {
                return Err(LpError::IterationLimit);
            }
            self.pivot(leave, enter);
        }
    }

    /// Writes `-cost` into the objective row and eliminates basic columns.
    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.width;
        let base = self.rows * w;
        self.data[base..base + w].iter_mut().for_each(|v| *v = 0.0);
        for (c, &v) in cost.iter().enumerate() {
            self.data[base + c] = -v;
        }
        for r in 0..self.rows {
            let f = self.data[base + self.basis[r]];
            if f != 0.0 {
                for c in 0..w {
                    let v = self.data[r * w + c];
                    self.data[base + c] -= f * v;
                }
            }
        }
    }
}

/// Solves `maximize c.x subject to A x <= b` over free `x`.
///
/// `a` holds one row per constraint, each of length `c.len()`.
pub fn lp_solve(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution, LpError> {
    let n = c.len();
    let m = a.len();
    if b.len() != m
        || a.iter().any(|row| row.len() != n)
        || c.iter().chain(b).chain(a.iter().flatten()).any(|v| !v.is_finite())
    {
        return Err(LpError::Shape);
    }
    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_art = negative.len();
    // columns: x+ (n), x- (n), slacks (m), artificials (n_art), rhs
    let n_struct = 2 * n + m;
    let width = n_struct + n_art + 1;
    let mut t = Tableau {
        width,
        data: vec![0.0; (m + 1) * width],
        rows: m,
        basis: vec![0; m],
        pivots: 0,
    };
    let mut art = 0;
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let row = &mut t.data[i * width..(i + 1) * width];
        for j in 0..n {
            row[j] = sign * a[i][j];
            row[n + j] = -sign * a[i][j];
        }
        row[2 * n + i] = sign;
        row[width - 1] = sign * b[i];
        if sign < 0.0 {
            row[n_struct + art] = 1.0;
            t.basis[i] = n_struct + art;
            art += 1;
        } else {
            t.basis[i] = 2 * n + i;
        }
    }
    let max_pivots = 50 * (m + width) + 1000;

    if n_art > 0 {
        let mut cost = vec![0.0; width - 1];
        cost[n_struct..].iter_mut().for_each(|v| *v = -1.0);
        t.set_objective(&cost);
        t.run(width - 1, max_pivots)?;
        let scale = 1.0 + b.iter().map(|v| libm::fabs(*v)).fold(0.0, f64::max);
        if t.at(m, t.rhs_col()) < -1e-9 * scale {
            return Err(LpError::Infeasible);
        }
        // drive zero-level artificials out of the basis
        for r in 0..m {
            if t.basis[r] >= n_struct {
                if let Some(col) = (0..n_struct).find(|&c| libm::fabs(t.at(r, c)) > 1e-9) {
                    t.pivot(r, col);
                }
            }
        }
    }

    let mut cost = vec![0.0; width - 1];
    cost[..n].copy_from_slice(c);
    for j in 0..n {
        cost[n + j] = -c[j];
    }
    t.set_objective(&cost);
    t.run(n_struct, max_pivots)?;

    let mut vals = vec![0.0; width - 1];
    for r in 0..m {
        vals[t.basis[r]] = t.at(r, t.rhs_col());
    }
    let x: Vec<f64> = (0..n).map(|j| vals[j] - vals[n + j]).collect();
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    let max_violation = a
        .iter()
        .zip(b)
        .map(|(row, bi)| row.iter().zip(&x).map(|(aij, xj)| aij * xj).sum::<f64>() - bi)
        .fold(0.0, f64::max);
    Ok(LpSolution {
        x,
        objective,
        max_violation,
        pivots: t.pivots,
    })
}
