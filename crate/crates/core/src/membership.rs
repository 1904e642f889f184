//! Membership tests and linear optimization over the relaxations and over the
//! local polytope.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::boxes::{CgBasis, CgVector, ProbBox};
use crate::error::{Error, Result};
use crate::functional::BellFunctional;
use crate::moment::{Binding, MomentProblem};
use crate::scenario::{Level, Scenario, TupleIter};
use crate::solver::{solve, ConicProblem, LinExpr, Settings, Solution, Status};

/// A box is a member when its PSD margin is at least `-MEMBER_TOL`.
pub const MEMBER_TOL: f64 = 1e-7;
/// Largest number of deterministic strategies the local LP accepts.
pub const MAX_STRATEGIES: usize = 100_000;
/// Validation tolerance for boxes rebuilt from solver output.
pub const RECONSTRUCT_TOL: f64 = 1e-6;

/// Solver settings used by every solve in this module;
/// `ALMOSTQ_SOLVER_TRACE` prints the iteration log to stderr.
pub fn solver_settings() -> Settings {
    Settings { verbose: std::env::var_os("ALMOSTQ_SOLVER_TRACE").is_some(), ..Settings::default() }
}

fn require_optimal(sol: &Solution<f64>, what: &str) -> Result<()> {
    if sol.status == Status::Optimal {
        return Ok(());
    }
    Err(Error::Solver(format!(
        "{what}: status {:?} after {} iterations (gap {:.2e}, primal residual {:.2e}, dual residual {:.2e})",
        sol.status, sol.iterations, sol.gap, sol.primal_residual, sol.dual_residual
    )))
}

/// Result of [`psd_margin`].
#[derive(Debug, Clone)]
pub struct Margin {
    /// Largest `lambda` with `Gamma - lambda I` PSD over all admissible `Gamma`.
    pub lambda: f64,
    /// The maximizing moment matrix.
    pub gamma: DMatrix<f64>,
    pub iterations: usize,
}

impl Margin {
    pub fn is_member(&self) -> bool {
        self.lambda >= -MEMBER_TOL
    }
}

/// Robust membership measure of a fixed box.
pub fn psd_margin(mp: &MomentProblem) -> Result<Margin> {
    if !matches!(mp.binding(), Binding::FixedBox(_)) {
        return Err(Error::Problem("psd_margin needs a fixed box".into()));
    }
    let mut asm = mp.assemble(true);
    let lambda = asm.lambda_var.expect("shifted problem");
    asm.problem.maximize(LinExpr::var(lambda));
    let sol = solve(&asm.problem, &solver_settings())?;
    require_optimal(&sol, "membership SDP")?;
    Ok(Margin { lambda: sol.values[lambda], gamma: mp.gamma_from(&asm, &sol.values), iterations: sol.iterations })
}

/// Builds the fixed-box problem and returns its margin.
pub fn box_margin(b: &ProbBox<f64>, level: Level) -> Result<Margin> {
    psd_margin(&MomentProblem::build(b.scenario(), level, Binding::FixedBox(b.clone()))?)
}

/// Optimum of a functional over a relaxation.
#[derive(Debug, Clone)]
pub struct Optimum {
    pub value: f64,
    /// Collins–Gisin coordinates of the optimizer, where determined by the level.
    pub cg: Option<Vec<f64>>,
    pub optimizer: Option<ProbBox<f64>>,
    pub gamma: DMatrix<f64>,
    pub iterations: usize,
}

/// Maximizes (or, with `minimize`, minimizes) a functional over a free-box
/// moment problem.
pub fn optimize_linear(mp: &MomentProblem, functional: &BellFunctional, minimize: bool) -> Result<Optimum> {
    if !matches!(mp.binding(), Binding::FreeBox) {
        return Err(Error::Problem("functional optimization needs a free box".into()));
    }
    if functional.scenario() != mp.scenario() {
        return Err(Error::Scenario("functional and problem scenarios differ".into()));
    }
    let basis = CgBasis::new(mp.scenario());
    let mut asm = mp.assemble(false);
    let mut var_of = vec![None; basis.len()];
    for (e, &v) in mp.prob_events().iter().zip(&asm.prob_vars) {
        var_of[basis.index_of(e).expect("probability events are basis events")] = Some(v);
    }
    let mut objective = LinExpr::constant(functional.constant());
    for (i, &c) in functional.coefficients().iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        match var_of[i] {
            Some(v) => objective = objective.plus(v, c),
            None => {
                return Err(Error::Problem(format!(
                    "functional weights {} which the {} level does not constrain",
                    basis.events()[i],
                    mp.level()
                )))
            }
        }
    }
    if minimize {
        asm.problem.minimize(objective);
    } else {
        asm.problem.maximize(objective);
    }
    let sol = solve(&asm.problem, &solver_settings())?;
    require_optimal(&sol, "optimization SDP")?;
    let gamma = mp.gamma_from(&asm, &sol.values);
    let cg: Option<Vec<f64>> = var_of.iter().map(|v| v.map(|v| sol.values[v])).collect();
    let optimizer = match &cg {
        Some(cg) => Some(rebuild(mp.scenario(), cg)?),
        None => None,
    };
    Ok(Optimum { value: sol.objective, cg, optimizer, gamma, iterations: sol.iterations })
}

pub fn maximize_linear(mp: &MomentProblem, functional: &BellFunctional) -> Result<Optimum> {
    optimize_linear(mp, functional, false)
}

pub fn minimize_linear(mp: &MomentProblem, functional: &BellFunctional) -> Result<Optimum> {
    optimize_linear(mp, functional, true)
}

fn rebuild(scenario: &Scenario, cg: &[f64]) -> Result<ProbBox<f64>> {
    let b = CgVector::new(scenario.clone(), cg.to_vec())?
        .to_box_within(RECONSTRUCT_TOL)
        .map_err(|e| Error::Inconsistent(format!("optimizer box: {e}")))?;
    let worst = b.validate().worst();
    if worst > RECONSTRUCT_TOL {
        return Err(Error::Inconsistent(format!("optimizer box violates validity by {worst:.3e}")));
    }
    Ok(b)
}

/// Result of maximizing the parameter of an affine family.
#[derive(Debug, Clone)]
pub struct ParameterOptimum {
    pub t: f64,
    pub gamma: DMatrix<f64>,
    pub iterations: usize,
}

/// Largest `t` in the family's interval for which the box admits a certificate.
pub fn maximize_parameter(mp: &MomentProblem) -> Result<ParameterOptimum> {
    if !matches!(mp.binding(), Binding::AffineFamily { .. }) {
        return Err(Error::Problem("parameter maximization needs an affine family".into()));
    }
    let mut asm = mp.assemble(false);
    let t = asm.t_var.expect("affine binding has t");
    asm.problem.maximize(LinExpr::var(t));
    let sol = solve(&asm.problem, &solver_settings())?;
    require_optimal(&sol, "parameter SDP")?;
    Ok(ParameterOptimum { t: sol.values[t], gamma: mp.gamma_from(&asm, &sol.values), iterations: sol.iterations })
}

/// Collins–Gisin coordinates of every deterministic strategy.
fn deterministic_points(scenario: &Scenario) -> Result<Vec<Vec<f64>>> {
    let radices: Vec<usize> = (0..scenario.num_parties())
        .flat_map(|k| std::iter::repeat_n(scenario.outputs()[k], scenario.inputs()[k]))
        .collect();
    let count = radices.iter().fold(1usize, |acc, &r| acc.saturating_mul(r));
    if count > MAX_STRATEGIES {
        return Err(Error::TooLarge(count, MAX_STRATEGIES));
    }
    let basis = CgBasis::new(scenario);
    let mut points = Vec::with_capacity(count);
    for flat in TupleIter::new(radices) {
        let mut strategy = Vec::with_capacity(scenario.num_parties());
        let mut rest = &flat[..];
        for k in 0..scenario.num_parties() {
            let (head, tail) = rest.split_at(scenario.inputs()[k]);
            strategy.push(head.to_vec());
            rest = tail;
        }
        points.push(
            basis
                .events()
                .iter()
                .map(|e| if e.assignments().iter().all(|a| strategy[a.party][a.input] == a.output) { 1.0 } else { 0.0 })
                .collect(),
        );
    }
    Ok(points)
}

/// Outcome of the local-polytope LP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMembership {
    pub member: bool,
    /// `v* - 1`, where `v*` is the largest weight (capped at 2) such that
    /// `v P + (1 - v) U` is local, `U` the uniform box.
    pub margin: f64,
}

/// Decides membership in the local polytope.
pub fn lp_local_membership(b: &ProbBox<f64>) -> Result<LocalMembership> {
    b.ensure_valid()?;
    let scenario = b.scenario();
    let points = deterministic_points(scenario)?;
    let p = b.to_cg();
    let u = ProbBox::<f64>::uniform(scenario.clone()).to_cg();
    let mut lp = ConicProblem::new();
    let w: Vec<usize> = lp.add_vars(points.len()).collect();
    let v = lp.add_var();
    for &wi in &w {
        lp.add_nonneg(LinExpr::var(wi));
    }
    lp.add_nonneg(LinExpr::term(v, -1.0).plus_constant(2.0));
    for (i, (pi, ui)) in p.coefficients().iter().zip(u.coefficients()).enumerate() {
        let mut row = LinExpr::term(v, -(pi - ui)).plus_constant(-ui);
        for (s, &ws) in w.iter().enumerate() {
            if points[s][i] != 0.0 {
                row = row.plus(ws, points[s][i]);
            }
        }
        lp.add_equality(row);
    }
    lp.add_equality(w.iter().fold(LinExpr::constant(-1.0), |e, &ws| e.plus(ws, 1.0)));
    lp.maximize(LinExpr::var(v));
    let sol = solve(&lp, &solver_settings())?;
    require_optimal(&sol, "local LP")?;
    let margin = sol.values[v] - 1.0;
    Ok(LocalMembership { member: margin >= -MEMBER_TOL, margin })
}

/// Maximum of a functional over the local polytope, solved as an LP over
/// mixtures of deterministic strategies.
pub fn maximize_local(functional: &BellFunctional) -> Result<f64> {
    let points = deterministic_points(functional.scenario())?;
    let mut lp = ConicProblem::new();
    let w: Vec<usize> = lp.add_vars(points.len()).collect();
    let mut objective = LinExpr::constant(functional.constant());
    for (&ws, pt) in w.iter().zip(&points) {
        lp.add_nonneg(LinExpr::var(ws));
        objective = objective.plus(ws, functional.evaluate_cg(pt) - functional.constant());
    }
    lp.add_equality(w.iter().fold(LinExpr::constant(-1.0), |e, &ws| e.plus(ws, 1.0)));
    lp.maximize(objective);
    let sol = solve(&lp, &solver_settings())?;
    require_optimal(&sol, "local LP")?;
    Ok(sol.objective)
}

/// Maximum of a functional over the no-signalling polytope: an LP in the
/// Collins–Gisin coordinates with every table entry nonnegative.
pub fn maximize_no_signalling(functional: &BellFunctional) -> Result<f64> {
    let scenario = functional.scenario();
    let basis = CgBasis::new(scenario);
    let mut lp = ConicProblem::new();
    let cg: Vec<usize> = lp.add_vars(basis.len()).collect();
    for xs in scenario.input_tuples() {
        for a in scenario.output_tuples() {
            let (k, terms) = basis.expand_full_entry(&xs, &a);
            let entry = terms.iter().fold(LinExpr::constant(k as f64), |e, &(i, c)| e.plus(cg[i], c as f64));
            lp.add_nonneg(entry);
        }
    }
    let objective = functional
        .coefficients()
        .iter()
        .zip(&cg)
        .fold(LinExpr::constant(functional.constant()), |e, (&c, &v)| e.plus(v, c));
    lp.maximize(objective);
    let sol = solve(&lp, &solver_settings())?;
    require_optimal(&sol, "no-signalling LP")?;
    Ok(sol.objective)
}
