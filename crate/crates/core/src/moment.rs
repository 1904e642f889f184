//! Moment-matrix certificates: classification of entries, SDP assembly and
//! certificate checking.
//!
//! Rows and columns are labelled by the null event and by events whose
//! outputs are all nonzero. An entry `(e1, e2)` is the inner product of the
//! vectors attached to `e1` and `e2`, so it vanishes when the events are
//! locally orthogonal, equals a probability when no party is measured with
//! different inputs on the two sides, and is otherwise a free real number
//! shared by every entry that describes the same pair of measurements.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::boxes::{CgBasis, ProbBox};
use crate::error::{Error, Result};
use crate::scenario::{enumerate_events, locally_orthogonal, subsets_by_size, Assignment, Event, Level, Scenario};
use crate::solver::{ConicProblem, LinExpr};

/// Certificates are accepted when their smallest eigenvalue and structural
/// residuals are within this tolerance.
pub const CERT_TOL: f64 = 1e-9;

/// Unordered pair of events identifying one free entry; stored with the
/// smaller event first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey(Event, Event);

impl PairKey {
    pub fn new(a: Event, b: Event) -> Self {
        if b < a {
            Self(b, a)
        } else {
            Self(a, b)
        }
    }

    pub fn first(&self) -> &Event {
        &self.0
    }

    pub fn second(&self) -> &Event {
        &self.1
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}; {}}}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EntryClass {
    Zero,
    /// Marginal probability of the merged event.
    Prob(Event),
    Free(PairKey),
}

/// Classifies one moment-matrix entry.
///
/// Parties measured on both sides with the same input and output, or on one
/// side only, can be moved freely between the sides. Only parties measured on
/// both sides with different inputs are pinned. With no pinned party the entry
/// is a probability. Otherwise every placement of the movable assignments
/// gives the same entry, and the key is the smallest of the two placements
/// that put all of them on one side.
pub fn classify_pair(e1: &Event, e2: &Event) -> Result<EntryClass> {
    if !e1.all_outputs_nonzero() || !e2.all_outputs_nonzero() {
        return Err(Error::Event(format!("moment-matrix events need nonzero outputs: {e1}, {e2}")));
    }
    if locally_orthogonal(e1, e2) {
        return Ok(EntryClass::Zero);
    }
    let mut movable: Vec<Assignment> = Vec::new();
    let mut left: Vec<Assignment> = Vec::new();
    let mut right: Vec<Assignment> = Vec::new();
    for a in e1.assignments() {
        match e2.get(a.party) {
            Some(b) if b.input != a.input => {
                left.push(*a);
                right.push(*b);
            }
            _ => movable.push(*a),
        }
    }
    for b in e2.assignments() {
        if e1.get(b.party).is_none() {
            movable.push(*b);
        }
    }
    if left.is_empty() {
        return Ok(EntryClass::Prob(e1.merge(e2)?));
    }
    let with = |fixed: &[Assignment]| Event::new(movable.iter().chain(fixed).copied().collect());
    let l = Event::new(left.clone())?;
    let r = Event::new(right.clone())?;
    let k1 = PairKey::new(with(&left)?, r);
    let k2 = PairKey::new(with(&right)?, l);
    Ok(EntryClass::Free(k1.min(k2)))
}

/// How the probability entries of the moment matrix are tied to a box.
#[derive(Debug, Clone)]
pub enum Binding {
    /// Probabilities are the marginals of a fixed box.
    FixedBox(ProbBox<f64>),
    /// Probabilities are the marginals of `base + t * direction` for a scalar
    /// `t` in `bounds`; `direction` is a table of the same shape as `base`.
    AffineFamily { base: ProbBox<f64>, direction: Vec<f64>, bounds: (f64, f64) },
    /// Every distinct probability entry is a variable.
    FreeBox,
}

/// Value source of one entry after classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Zero,
    One,
    Prob(usize),
    Free(usize),
}

/// The moment matrix of a scenario at a relaxation level, with its entry
/// classification and variable registry.
#[derive(Debug, Clone)]
pub struct MomentProblem {
    scenario: Scenario,
    level: Level,
    index: Vec<Event>,
    classes: Vec<EntryClass>,
    slots: Vec<Slot>,
    prob_events: Vec<Event>,
    free_keys: Vec<PairKey>,
    binding: Binding,
}

/// Variable layout of an assembled conic problem.
#[derive(Debug, Clone)]
pub(crate) struct Assembled {
    pub problem: ConicProblem<f64>,
    /// Variable of each probability event under [`Binding::FreeBox`].
    pub prob_vars: Vec<usize>,
    pub free_vars: Vec<usize>,
    pub t_var: Option<usize>,
    pub lambda_var: Option<usize>,
}

impl MomentProblem {
    pub fn build(scenario: &Scenario, level: Level, binding: Binding) -> Result<Self> {
        match &binding {
            Binding::FixedBox(b) => {
                check_scenario(scenario, b)?;
                b.ensure_valid()?;
            }
            Binding::AffineFamily { base, direction, bounds } => {
                check_scenario(scenario, base)?;
                if direction.len() != scenario.table_len() {
                    return Err(Error::Dimension { expected: scenario.table_len(), found: direction.len() });
                }
                if bounds.0.is_nan() || bounds.1.is_nan() || bounds.0 > bounds.1 {
                    return Err(Error::Parameter(format!("empty parameter interval {bounds:?}")));
                }
            }
            Binding::FreeBox => {}
        }
        let index = enumerate_events(scenario, level);
        let n = index.len();
        let mut classes = Vec::with_capacity(n * n);
        let mut slots = Vec::with_capacity(n * n);
        let mut prob_of: HashMap<Event, usize> = HashMap::new();
        let mut free_of: HashMap<PairKey, usize> = HashMap::new();
        let mut prob_events = Vec::new();
        let mut free_keys = Vec::new();
        for e1 in &index {
            for e2 in &index {
                let class = classify_pair(e1, e2)?;
                let slot = match &class {
                    EntryClass::Zero => Slot::Zero,
                    EntryClass::Prob(e) if e.is_null() => Slot::One,
                    EntryClass::Prob(e) => Slot::Prob(*prob_of.entry(e.clone()).or_insert_with(|| {
                        prob_events.push(e.clone());
                        prob_events.len() - 1
                    })),
                    EntryClass::Free(k) => Slot::Free(*free_of.entry(k.clone()).or_insert_with(|| {
                        free_keys.push(k.clone());
                        free_keys.len() - 1
                    })),
                };
                classes.push(class);
                slots.push(slot);
            }
        }
        Ok(Self { scenario: scenario.clone(), level, index, classes, slots, prob_events, free_keys, binding })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn binding(&self) -> &Binding {
        &self.binding
    }

    pub fn index(&self) -> &[Event] {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn class(&self, i: usize, j: usize) -> &EntryClass {
        &self.classes[i * self.dim() + j]
    }

    /// Distinct non-null events appearing as probability entries.
    pub fn prob_events(&self) -> &[Event] {
        &self.prob_events
    }

    /// Distinct free entries, one variable each.
    pub fn free_keys(&self) -> &[PairKey] {
        &self.free_keys
    }

    /// Builds the SDP. With `shift` a variable `lambda` is subtracted from
    /// the diagonal; no objective is set.
    pub(crate) fn assemble(&self, shift: bool) -> Assembled {
        let mut problem = ConicProblem::new();
        let free_vars: Vec<usize> = problem.add_vars(self.free_keys.len()).collect();
        let mut prob_vars = Vec::new();
        let mut t_var = None;
        let prob_expr: Vec<LinExpr<f64>> = match &self.binding {
            Binding::FixedBox(b) => self.prob_events.iter().map(|e| LinExpr::constant(b.marginal(e))).collect(),
            Binding::AffineFamily { base, direction, bounds } => {
                let t = problem.add_var();
                t_var = Some(t);
                problem.add_nonneg(LinExpr::var(t).plus_constant(-bounds.0));
                problem.add_nonneg(LinExpr::term(t, -1.0).plus_constant(bounds.1));
                let dir = ProbBox::new(self.scenario.clone(), direction.clone()).expect("checked length");
                self.prob_events.iter().map(|e| LinExpr::constant(base.marginal(e)).plus(t, dir.marginal(e))).collect()
            }
            Binding::FreeBox => {
                prob_vars = problem.add_vars(self.prob_events.len()).collect();
                prob_vars.iter().map(|&v| LinExpr::var(v)).collect()
            }
        };
        if self.level == Level::Q1 && !matches!(self.binding, Binding::FixedBox(_)) {
            for expr in self.pair_marginal_entries(&prob_expr) {
                problem.add_nonneg(expr);
            }
        }
        let lambda_var = shift.then(|| problem.add_var());
        let n = self.dim();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in i..n {
                let mut expr = match self.slots[i * n + j] {
                    Slot::Zero => LinExpr::zero(),
                    Slot::One => LinExpr::constant(1.0),
                    Slot::Prob(p) => prob_expr[p].clone(),
                    Slot::Free(f) => LinExpr::var(free_vars[f]),
                };
                if let (Some(l), true) = (lambda_var, i == j) {
                    expr = expr.plus(l, -1.0);
                }
                if expr.terms.is_empty() && expr.constant == 0.0 {
                    continue;
                }
                entries.push((i, j, expr));
            }
        }
        problem.add_psd(n, entries);
        Assembled { problem, prob_vars, free_vars, t_var, lambda_var }
    }

    /// Entries of every one- and two-party marginal table as affine forms in
    /// the probability entries. The single-party moment matrix does not imply
    /// their nonnegativity, so they are imposed explicitly at that level.
    fn pair_marginal_entries(&self, prob_expr: &[LinExpr<f64>]) -> Vec<LinExpr<f64>> {
        let prob_of: HashMap<&Event, usize> = self.prob_events.iter().enumerate().map(|(i, e)| (e, i)).collect();
        let n = self.scenario.num_parties();
        let mut out = Vec::new();
        for parties in subsets_by_size(n, 2).into_iter().filter(|p| p.len() == n.min(2)) {
            let sub = self.scenario.restrict(&parties).expect("valid party subset");
            let basis = CgBasis::new(&sub);
            for xs in sub.input_tuples() {
                for a in sub.output_tuples() {
                    let (c, terms) = basis.expand_full_entry(&xs, &a);
                    let mut expr = LinExpr::constant(c as f64);
                    for (i, k) in terms {
                        let lifted = Event::new(
                            basis.events()[i]
                                .assignments()
                                .iter()
                                .map(|x| Assignment::new(parties[x.party], x.input, x.output))
                                .collect(),
                        )
                        .expect("distinct parties");
                        let p = prob_of[&lifted];
                        expr.constant += k as f64 * prob_expr[p].constant;
                        for &(v, coef) in &prob_expr[p].terms {
                            expr.terms.push((v, k as f64 * coef));
                        }
                    }
                    out.push(expr.compact());
                }
            }
        }
        out
    }

    /// Moment matrix from a variable assignment of [`MomentProblem::assemble`],
    /// without the diagonal shift.
    pub(crate) fn gamma_from(&self, asm: &Assembled, values: &[f64]) -> DMatrix<f64> {
        let probs: Vec<f64> = match &self.binding {
            Binding::FixedBox(b) => self.prob_events.iter().map(|e| b.marginal(e)).collect(),
            Binding::AffineFamily { base, direction, .. } => {
                let t = values[asm.t_var.expect("affine binding has t")];
                let dir = ProbBox::new(self.scenario.clone(), direction.clone()).expect("checked length");
                self.prob_events.iter().map(|e| base.marginal(e) + t * dir.marginal(e)).collect()
            }
            Binding::FreeBox => asm.prob_vars.iter().map(|&v| values[v]).collect(),
        };
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| match self.slots[i * n + j] {
            Slot::Zero => 0.0,
            Slot::One => 1.0,
            Slot::Prob(p) => probs[p],
            Slot::Free(f) => values[asm.free_vars[f]],
        })
    }
}

fn check_scenario(scenario: &Scenario, b: &ProbBox<f64>) -> Result<()> {
    if b.scenario() != scenario {
        return Err(Error::Scenario(format!("box is over {}, problem over {scenario}", b.scenario())));
    }
    Ok(())
}

/// Shorthand for [`MomentProblem::build`].
pub fn build_moment_problem(scenario: &Scenario, level: Level, binding: Binding) -> Result<MomentProblem> {
    MomentProblem::build(scenario, level, binding)
}

/// Outcome of checking a candidate certificate against a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub min_eigenvalue: f64,
    pub asymmetry: f64,
    pub zero_residual: f64,
    pub prob_residual: f64,
    /// Largest spread within a group of entries that must be equal.
    pub free_residual: f64,
    /// `Gamma[phi, phi] - 1`.
    pub normalization_residual: f64,
    pub accepted: bool,
}

/// Checks that `gamma` is a certificate for `b` at `level`.
pub fn validate_certificate(gamma: &DMatrix<f64>, b: &ProbBox<f64>, level: Level) -> Result<CertificateReport> {
    let mp = MomentProblem::build(b.scenario(), level, Binding::FreeBox)?;
    let n = mp.dim();
    if gamma.nrows() != n || gamma.ncols() != n {
        return Err(Error::Dimension { expected: n, found: gamma.nrows().max(gamma.ncols()) });
    }
    let probs: Vec<f64> = mp.prob_events.iter().map(|e| b.marginal(e)).collect();
    let mut asymmetry = 0f64;
    let mut zero = 0f64;
    let mut prob = 0f64;
    let mut range = vec![(f64::INFINITY, f64::NEG_INFINITY); mp.free_keys.len()];
    for i in 0..n {
        for j in 0..n {
            let g = gamma[(i, j)];
            asymmetry = asymmetry.max((g - gamma[(j, i)]).abs());
            match mp.slots[i * n + j] {
                Slot::Zero => zero = zero.max(g.abs()),
                Slot::One => {}
                Slot::Prob(p) => prob = prob.max((g - probs[p]).abs()),
                Slot::Free(f) => {
                    let r = &mut range[f];
                    r.0 = r.0.min(g);
                    r.1 = r.1.max(g);
                }
            }
        }
    }
    let free = range.iter().map(|r| r.1 - r.0).fold(0.0, f64::max);
    let norm = gamma[(0, 0)] - 1.0;
    let sym = (gamma + gamma.transpose()) * 0.5;
    let min_eigenvalue = sym.symmetric_eigenvalues().min();
    let accepted =
        min_eigenvalue >= -CERT_TOL && [asymmetry, zero, prob, free, norm.abs()].iter().all(|&r| r <= CERT_TOL);
    Ok(CertificateReport {
        min_eigenvalue,
        asymmetry,
        zero_residual: zero,
        prob_residual: prob,
        free_residual: free,
        normalization_residual: norm,
        accepted,
    })
}

/// Vectors whose Gram matrix is `gamma`, one per row. Eigenvalues in
/// `[-1e-9, 0)` are treated as zero.
pub fn gram_vectors(gamma: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    if !gamma.is_square() {
        return Err(Error::Dimension { expected: gamma.nrows(), found: gamma.ncols() });
    }
    let eig = SymmetricEigen::new((gamma + gamma.transpose()) * 0.5);
    let min = eig.eigenvalues.min();
    if min < -CERT_TOL {
        return Err(Error::NotPsd(min));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let factor = eig.eigenvectors * DMatrix::from_diagonal(&roots);
    Ok(factor.row_iter().map(|r| r.transpose()).collect())
}
