//! Equality-constrained conic programs over products of PSD blocks,
//! nonnegative scalars and free scalars, solved with a primal–dual
//! interior-point method on the homogeneous self-dual embedding.
//!
//! A problem is stated over scalar variables `v`:
//!
//! ```text
//! minimize    c0 + c'v
//! subject to  e_k(v) = 0                 (affine equalities)
//!             F_j(v) = F_j0 + sum_i v_i F_ji  PSD   (symmetric blocks)
//!             g_l(v) >= 0                (affine scalars)
//! ```
//!
//! Everything is generic over a real field; the library itself runs it on `f64`.

mod cone;
mod ipm;

use nalgebra::{DMatrix, RealField};

use crate::error::{Error, Result};

pub use ipm::solve;

/// Affine form `constant + sum coef * v[var]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinExpr<T> {
    pub constant: T,
    pub terms: Vec<(usize, T)>,
}

impl<T: RealField + Copy> LinExpr<T> {
    pub fn constant(c: T) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    pub fn var(v: usize) -> Self {
        Self { constant: T::zero(), terms: vec![(v, T::one())] }
    }

    pub fn term(v: usize, coef: T) -> Self {
        Self { constant: T::zero(), terms: vec![(v, coef)] }
    }

    pub fn zero() -> Self {
        Self::constant(T::zero())
    }

    pub fn plus(mut self, v: usize, coef: T) -> Self {
        self.terms.push((v, coef));
        self
    }

    pub fn plus_constant(mut self, c: T) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, k: T) -> Self {
        self.constant *= k;
        for t in &mut self.terms {
            t.1 *= k;
        }
        self
    }

    pub fn eval(&self, values: &[T]) -> T {
        self.terms.iter().fold(self.constant, |acc, &(v, c)| acc + c * values[v])
    }

    /// Merges repeated variables and drops zero coefficients.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, T)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|t| t.1 != T::zero());
        self.terms = out;
        self
    }
}

/// One cone constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum Block<T> {
    /// Symmetric `dim x dim` matrix given by its upper-triangle entries
    /// `(row, col, expr)` with `row <= col`; absent entries are zero.
    Psd { dim: usize, entries: Vec<(usize, usize, LinExpr<T>)> },
    /// `expr >= 0`.
    Nonneg(LinExpr<T>),
    /// No constraint; carried so its value is reported in the solution.
    Free(LinExpr<T>),
}

/// A conic program in the form documented at module level.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem<T> {
    num_vars: usize,
    objective: LinExpr<T>,
    equalities: Vec<LinExpr<T>>,
    blocks: Vec<Block<T>>,
    maximize: bool,
}

impl<T: RealField + Copy> Default for ConicProblem<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: RealField + Copy> ConicProblem<T> {
    pub fn new() -> Self {
        Self { num_vars: 0, objective: LinExpr::zero(), equalities: Vec::new(), blocks: Vec::new(), maximize: false }
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, n: usize) -> std::ops::Range<usize> {
        let start = self.num_vars;
        self.num_vars += n;
        start..self.num_vars
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Objective to be minimized.
    pub fn minimize(&mut self, objective: LinExpr<T>) {
        self.objective = objective;
        self.maximize = false;
    }

    /// Objective to be maximized; reported values keep the caller's sign.
    pub fn maximize(&mut self, objective: LinExpr<T>) {
        self.objective = objective;
        self.maximize = true;
    }

    pub fn objective(&self) -> &LinExpr<T> {
        &self.objective
    }

    pub fn is_maximization(&self) -> bool {
        self.maximize
    }

    /// Adds the constraint `expr = 0`.
    pub fn add_equality(&mut self, expr: LinExpr<T>) {
        self.equalities.push(expr);
    }

    pub fn add_block(&mut self, block: Block<T>) -> usize {
        self.blocks.push(block);
        self.blocks.len() - 1
    }

    pub fn add_psd(&mut self, dim: usize, entries: Vec<(usize, usize, LinExpr<T>)>) -> usize {
        self.add_block(Block::Psd { dim, entries })
    }

    pub fn add_nonneg(&mut self, expr: LinExpr<T>) -> usize {
        self.add_block(Block::Nonneg(expr))
    }

    pub fn equalities(&self) -> &[LinExpr<T>] {
        &self.equalities
    }

    pub fn blocks(&self) -> &[Block<T>] {
        &self.blocks
    }

    /// Structural checks: variable references in range, PSD entries in the
    /// upper triangle and unique, every variable used by some constraint.
    pub fn check(&self) -> Result<()> {
        let mut used = vec![false; self.num_vars];
        let touch = |e: &LinExpr<T>, used: &mut Vec<bool>| -> Result<()> {
            for &(v, c) in &e.terms {
                if v >= self.num_vars {
                    return Err(Error::Problem(format!("unknown variable {v}")));
                }
                if c != T::zero() {
                    used[v] = true;
                }
            }
            Ok(())
        };
        for e in &self.equalities {
            touch(e, &mut used)?;
        }
        for b in &self.blocks {
            match b {
                Block::Psd { dim, entries } => {
                    let mut seen = std::collections::HashSet::new();
                    for (i, j, e) in entries {
                        if i > j || *j >= *dim {
                            return Err(Error::Problem(format!(
                                "PSD entry ({i},{j}) outside upper triangle of {dim}x{dim}"
                            )));
                        }
                        if !seen.insert((*i, *j)) {
                            return Err(Error::Problem(format!("PSD entry ({i},{j}) given twice")));
                        }
                        touch(e, &mut used)?;
                    }
                }
                Block::Nonneg(e) => touch(e, &mut used)?,
                Block::Free(e) => {
                    for &(v, _) in &e.terms {
                        if v >= self.num_vars {
                            return Err(Error::Problem(format!("unknown variable {v}")));
                        }
                    }
                }
            }
        }
        for &(v, _) in &self.objective.terms {
            if v >= self.num_vars {
                return Err(Error::Problem(format!("unknown variable {v}")));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Problem(format!("variable {v} appears in no constraint")));
        }
        Ok(())
    }
}

/// Termination status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    /// A dual certificate proves the constraints cannot be met.
    Infeasible,
    /// A primal ray decreases the objective without bound.
    Unbounded,
    /// Iteration cap reached or progress stalled; the best iterate is returned.
    MaxIterations,
}

/// Accuracy targets and iteration cap.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Settings {
    pub max_iterations: usize,
    /// Absolute duality-gap target.
    pub abs_tol: f64,
    /// Relative duality-gap target.
    pub rel_tol: f64,
    /// Relative primal/dual residual target.
    pub feas_tol: f64,
    /// A stalled run whose best iterate meets every target relaxed by this
    /// factor is still reported as optimal.
    pub stall_factor: f64,
    pub verbose: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self { max_iterations: 100, abs_tol: 1e-8, rel_tol: 1e-8, feas_tol: 1e-8, stall_factor: 10.0, verbose: false }
    }
}

/// Value of one block at the returned point.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue<T> {
    Matrix(DMatrix<T>),
    Scalar(T),
}

impl<T: RealField + Copy> BlockValue<T> {
    pub fn matrix(&self) -> Option<&DMatrix<T>> {
        match self {
            BlockValue::Matrix(m) => Some(m),
            BlockValue::Scalar(_) => None,
        }
    }

    pub fn scalar(&self) -> Option<T> {
        match self {
            BlockValue::Scalar(s) => Some(*s),
            BlockValue::Matrix(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub status: Status,
    /// Objective at the primal point, in the caller's orientation.
    pub objective: T,
    /// Dual objective, in the caller's orientation.
    pub dual_objective: T,
    pub values: Vec<T>,
    /// Block values in insertion order (primal slack for PSD/nonneg blocks).
    pub blocks: Vec<BlockValue<T>>,
    /// Dual matrices/scalars for PSD and nonneg blocks (`None` for free blocks).
    pub duals: Vec<Option<BlockValue<T>>>,
    /// Absolute complementarity gap `s'z`.
    pub gap: T,
    /// Largest relative equality/cone residual.
    pub primal_residual: T,
    pub dual_residual: T,
    pub iterations: usize,
}

/// Pluggable backend contract.
pub trait ConicSolver<T> {
    fn solve(&self, problem: &ConicProblem<T>) -> Result<Solution<T>>;
}

/// The embedded interior-point solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint {
    pub settings: Settings,
}

impl<T: RealField + Copy> ConicSolver<T> for InteriorPoint {
    fn solve(&self, problem: &ConicProblem<T>) -> Result<Solution<T>> {
        solve(problem, &self.settings)
    }
}
