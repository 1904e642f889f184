//! Conditional probability tables ("boxes"), their validation, and
//! Collins–Gisin coordinates.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::{max_of, Scalar};
use crate::scenario::{mixed_radix, nonzero_events_on, subsets_by_size, Event, Scenario, TupleIter};

/// Entry negativity tolerated in numerically generated boxes.
pub const EPS_ZERO: f64 = 1e-10;
/// Tolerance on normalization and no-signalling residuals.
pub const EPS_SUM: f64 = 1e-9;

/// Full table `P(a|x)` in [`Scenario::table_index`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbBox<T> {
    scenario: Scenario,
    table: Vec<T>,
}

impl<T: Scalar> ProbBox<T> {
    /// Wraps a table after checking its length. No probabilistic checks are
    /// made here; see [`ProbBox::validate`].
    pub fn new(scenario: Scenario, table: Vec<T>) -> Result<Self> {
        if table.len() != scenario.table_len() {
            return Err(Error::Dimension { expected: scenario.table_len(), found: table.len() });
        }
        Ok(Self { scenario, table })
    }

    pub fn from_fn(scenario: Scenario, mut f: impl FnMut(&[usize], &[usize]) -> T) -> Self {
        let mut table = Vec::with_capacity(scenario.table_len());
        for xs in scenario.input_tuples() {
            for a in scenario.output_tuples() {
                table.push(f(&xs, &a));
            }
        }
        Self { scenario, table }
    }

    /// Uniformly random outputs for every input.
    pub fn uniform(scenario: Scenario) -> Self {
        let p = T::one() / T::from_usize_exact(scenario.num_output_tuples());
        Self::from_fn(scenario, |_, _| p.clone())
    }

    /// Local deterministic box: `strategy[k][x]` is party `k`'s output on input `x`.
    pub fn deterministic(scenario: Scenario, strategy: &[Vec<usize>]) -> Result<Self> {
        if strategy.len() != scenario.num_parties() {
            return Err(Error::Dimension { expected: scenario.num_parties(), found: strategy.len() });
        }
        for (k, s) in strategy.iter().enumerate() {
            if s.len() != scenario.inputs()[k] || s.iter().any(|&a| a >= scenario.outputs()[k]) {
                return Err(Error::Parameter(format!("bad deterministic strategy for party {k}")));
            }
        }
        Ok(Self::from_fn(scenario, |xs, a| {
            if xs.iter().zip(a).enumerate().all(|(k, (&x, &o))| strategy[k][x] == o) {
                T::one()
            } else {
                T::zero()
            }
        }))
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn table(&self) -> &[T] {
        &self.table
    }

    pub fn into_table(self) -> Vec<T> {
        self.table
    }

    pub fn prob(&self, inputs: &[usize], outputs: &[usize]) -> &T {
        &self.table[self.scenario.table_index(inputs, outputs)]
    }

    /// Probability of a partial event. Parties outside the event are summed
    /// over at input 0, which is well defined for no-signalling boxes.
    pub fn marginal(&self, event: &Event) -> T {
        let n = self.scenario.num_parties();
        let mut inputs = vec![0; n];
        let mut outputs = vec![0; n];
        let mut free = Vec::new();
        for k in 0..n {
            match event.get(k) {
                Some(a) => {
                    inputs[k] = a.input;
                    outputs[k] = a.output;
                }
                None => free.push(k),
            }
        }
        let radices: Vec<usize> = free.iter().map(|&k| self.scenario.outputs()[k]).collect();
        let mut sum = T::zero();
        for tail in TupleIter::new(radices) {
            for (&k, &o) in free.iter().zip(&tail) {
                outputs[k] = o;
            }
            sum = sum + self.prob(&inputs, &outputs).clone();
        }
        sum
    }

    /// Convex mixture `w * self + (1 - w) * other`.
    pub fn mix(&self, other: &Self, w: T) -> Result<Self> {
        if self.scenario != other.scenario {
            return Err(Error::Scenario("mixing boxes from different scenarios".into()));
        }
        let table = self
            .table
            .iter()
            .zip(&other.table)
            .map(|(p, q)| w.clone() * p.clone() + (T::one() - w.clone()) * q.clone())
            .collect();
        Ok(Self { scenario: self.scenario.clone(), table })
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> ProbBox<U> {
        ProbBox { scenario: self.scenario.clone(), table: self.table.iter().map(f).collect() }
    }

    pub fn to_f64(&self) -> ProbBox<f64> {
        self.map(|v| v.to_f64_lossy())
    }

    pub fn validate(&self) -> ValidationReport<T> {
        ValidationReport::compute(&self.scenario, &self.table)
    }

    /// Errors unless [`ProbBox::validate`] passes.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidBox(report.summary()))
        }
    }
}

/// Which invariants a table satisfies, with the worst residual of each.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport<T> {
    /// `max(0, -min entry)`.
    pub negativity: T,
    /// `max |sum_a P(a|x) - 1|`.
    pub normalization: T,
    /// Largest dependence of a single-party-omitted marginal on the omitted input.
    pub signalling: T,
    pub nonneg_ok: bool,
    pub normalized_ok: bool,
    pub no_signalling_ok: bool,
}

impl<T: Scalar> ValidationReport<T> {
    /// Validates a raw table; a length mismatch is a structural error.
    pub fn of(scenario: &Scenario, table: &[T]) -> Result<Self> {
        if table.len() != scenario.table_len() {
            return Err(Error::Dimension { expected: scenario.table_len(), found: table.len() });
        }
        Ok(Self::compute(scenario, table))
    }

    fn compute(scenario: &Scenario, table: &[T]) -> Self {
        let eps_zero = T::from_f64(EPS_ZERO).unwrap_or_else(T::zero);
        let eps_sum = T::from_f64(EPS_SUM).unwrap_or_else(T::zero);
        let nout = scenario.num_output_tuples();

        let negativity = max_of(table.iter().map(|p| if *p < T::zero() { -p.clone() } else { T::zero() }));
        let normalization = max_of(table.chunks(nout).map(|row| {
            let s = row.iter().cloned().fold(T::zero(), |a, b| a + b);
            (s - T::one()).abs()
        }));

        let n = scenario.num_parties();
        let mut signalling = T::zero();
        for k in 0..n {
            // marginal over party k's output, keyed by (inputs, outputs with a_k = 0)
            let reduced: Vec<usize> = (0..n).map(|j| if j == k { 1 } else { scenario.outputs()[j] }).collect();
            let mut reference: Vec<T> = Vec::new();
            for xs in scenario.input_tuples() {
                let mut marg = vec![T::zero(); reduced.iter().product()];
                for a in scenario.output_tuples() {
                    let mut r = a.clone();
                    r[k] = 0;
                    let slot = mixed_radix(&r, &reduced);
                    marg[slot] = marg[slot].clone() + table[scenario.table_index(&xs, &a)].clone();
                }
                if xs[k] == 0 {
                    let key = other_key(&xs, k, scenario);
                    let len = marg.len();
                    if reference.len() < (key + 1) * len {
                        reference.resize((key + 1) * len, T::zero());
                    }
                    reference[key * len..(key + 1) * len].clone_from_slice(&marg);
                }
            }
            for xs in scenario.input_tuples() {
                if xs[k] == 0 {
                    continue;
                }
                let mut marg = vec![T::zero(); reduced.iter().product()];
                for a in scenario.output_tuples() {
                    let mut r = a.clone();
                    r[k] = 0;
                    let slot = mixed_radix(&r, &reduced);
                    marg[slot] = marg[slot].clone() + table[scenario.table_index(&xs, &a)].clone();
                }
                let key = other_key(&xs, k, scenario);
                let len = marg.len();
                for (m, r) in marg.iter().zip(&reference[key * len..(key + 1) * len]) {
                    let d = (m.clone() - r.clone()).abs();
                    if d > signalling {
                        signalling = d;
                    }
                }
            }
        }

        Self {
            nonneg_ok: negativity <= eps_zero,
            normalized_ok: normalization <= eps_sum,
            no_signalling_ok: signalling <= eps_sum,
            negativity,
            normalization,
            signalling,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.nonneg_ok && self.normalized_ok && self.no_signalling_ok
    }

    /// Largest of the three residuals.
    pub fn worst(&self) -> T {
        max_of([self.negativity.clone(), self.normalization.clone(), self.signalling.clone()])
    }

    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if !self.nonneg_ok {
            parts.push(format!("negative entry (residual {:?})", self.negativity));
        }
        if !self.normalized_ok {
            parts.push(format!("not normalized (residual {:?})", self.normalization));
        }
        if !self.no_signalling_ok {
            parts.push(format!("signalling (residual {:?})", self.signalling));
        }
        if parts.is_empty() {
            "valid".into()
        } else {
            parts.join("; ")
        }
    }
}

fn other_key(xs: &[usize], k: usize, scenario: &Scenario) -> usize {
    xs.iter().zip(scenario.inputs()).enumerate().filter(|&(j, _)| j != k).fold(0, |acc, (_, (&x, &m))| acc * m + x)
}

/// Index of the nonzero-output event basis: every event over a nonempty party
/// subset with all outputs nonzero, in moment-matrix order.
#[derive(Debug, Clone)]
pub struct CgBasis {
    scenario: Scenario,
    offsets: HashMap<Vec<usize>, usize>,
    events: Vec<Event>,
}

impl CgBasis {
    pub fn new(scenario: &Scenario) -> Self {
        let mut offsets = HashMap::new();
        let mut events = Vec::new();
        for subset in subsets_by_size(scenario.num_parties(), scenario.num_parties()) {
            offsets.insert(subset.clone(), events.len());
            events.extend(nonzero_events_on(scenario, &subset));
        }
        Self { scenario: scenario.clone(), offsets, events }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Position of a nonempty event with all outputs nonzero.
    pub fn index_of(&self, event: &Event) -> Option<usize> {
        if event.is_null() || !event.all_outputs_nonzero() {
            return None;
        }
        let parties: Vec<usize> = event.parties().collect();
        let offset = *self.offsets.get(&parties)?;
        let ins: Vec<usize> = parties.iter().map(|&k| self.scenario.inputs()[k]).collect();
        let outs: Vec<usize> = parties.iter().map(|&k| self.scenario.outputs()[k] - 1).collect();
        let xs: Vec<usize> = event.assignments().iter().map(|a| a.input).collect();
        let os: Vec<usize> = event.assignments().iter().map(|a| a.output - 1).collect();
        if xs.iter().zip(&ins).any(|(x, m)| x >= m) || os.iter().zip(&outs).any(|(o, d)| o >= d) {
            return None;
        }
        Some(offset + mixed_radix(&xs, &ins) * outs.iter().product::<usize>() + mixed_radix(&os, &outs))
    }

    /// Coefficients expressing the full-table entry `P(a|x)` as a constant plus
    /// a combination of basis coordinates (inclusion–exclusion over zero outputs).
    pub fn expand_full_entry(&self, inputs: &[usize], outputs: &[usize]) -> (i64, Vec<(usize, i64)>) {
        let n = self.scenario.num_parties();
        // each party contributes either "absent" (sign +1, only if output 0),
        // or a concrete nonzero output (sign -1 if the table output is 0)
        let mut constant = 0i64;
        let mut terms: HashMap<usize, i64> = HashMap::new();
        let choices: Vec<Vec<(Option<usize>, i64)>> = (0..n)
            .map(|k| {
                if outputs[k] != 0 {
                    vec![(Some(outputs[k]), 1)]
                } else {
                    std::iter::once((None, 1)).chain((1..self.scenario.outputs()[k]).map(|b| (Some(b), -1))).collect()
                }
            })
            .collect();
        let radices: Vec<usize> = choices.iter().map(|c| c.len()).collect();
        for pick in TupleIter::new(radices) {
            let mut sign = 1;
            let mut assignments = Vec::new();
            for (k, &c) in pick.iter().enumerate() {
                let (out, s) = choices[k][c];
                sign *= s;
                if let Some(o) = out {
                    assignments.push(crate::scenario::Assignment::new(k, inputs[k], o));
                }
            }
            if assignments.is_empty() {
                constant += sign;
            } else {
                let e = Event::new(assignments).expect("distinct parties");
                let idx = self.index_of(&e).expect("basis event");
                *terms.entry(idx).or_insert(0) += sign;
            }
        }
        let mut terms: Vec<(usize, i64)> = terms.into_iter().filter(|&(_, c)| c != 0).collect();
        terms.sort_unstable();
        (constant, terms)
    }
}

/// A box in Collins–Gisin coordinates: the marginal probability of every
/// basis event of [`CgBasis`], in basis order. For two parties with two
/// inputs and outputs this is
/// `(PA(1|0), PA(1|1), PB(1|0), PB(1|1), P(11|00), P(11|01), P(11|10), P(11|11))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CgVector<T> {
    scenario: Scenario,
    coefficients: Vec<T>,
}

impl<T: Scalar> CgVector<T> {
    pub fn new(scenario: Scenario, coefficients: Vec<T>) -> Result<Self> {
        let len = CgBasis::new(&scenario).len();
        if coefficients.len() != len {
            return Err(Error::Dimension { expected: len, found: coefficients.len() });
        }
        Ok(Self { scenario, coefficients })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    /// Rebuilds the full table; reconstructed entries below `-EPS_ZERO` are rejected.
    pub fn to_box(&self) -> Result<ProbBox<T>> {
        self.to_box_within(EPS_ZERO)
    }

    /// As [`CgVector::to_box`] with an explicit negativity tolerance, for
    /// coordinates produced by a numerical solver.
    pub fn to_box_within(&self, tol: f64) -> Result<ProbBox<T>> {
        let basis = CgBasis::new(&self.scenario);
        let eps = T::from_f64(tol).unwrap_or_else(T::zero);
        let mut table = Vec::with_capacity(self.scenario.table_len());
        for xs in self.scenario.input_tuples() {
            for a in self.scenario.output_tuples() {
                let (c, terms) = basis.expand_full_entry(&xs, &a);
                let mut p = T::from_i64(c).expect("small integer");
                for (i, s) in terms {
                    p = p + T::from_i64(s).expect("small integer") * self.coefficients[i].clone();
                }
                if p < -eps.clone() {
                    return Err(Error::InvalidCg { entry: table.len(), value: p.to_f64_lossy() });
                }
                table.push(p);
            }
        }
        ProbBox::new(self.scenario.clone(), table)
    }
}

impl<T: Scalar> ProbBox<T> {
    pub fn to_cg(&self) -> CgVector<T> {
        let basis = CgBasis::new(&self.scenario);
        CgVector {
            scenario: self.scenario.clone(),
            coefficients: basis.events().iter().map(|e| self.marginal(e)).collect(),
        }
    }
}

/// Two-party, two-input, two-output PR box: `a xor b = x y`.
pub fn pr_box_2222<T: Scalar>() -> ProbBox<T> {
    let half = T::ratio(1, 2);
    ProbBox::from_fn(Scenario::chsh(), |xs, a| if (a[0] ^ a[1]) == (xs[0] & xs[1]) { half.clone() } else { T::zero() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn pr_box_is_valid_and_has_expected_cg() {
        let pr: ProbBox<Rational64> = pr_box_2222();
        assert!(pr.validate().is_valid());
        let half = Rational64::new(1, 2);
        let z = Rational64::from_integer(0);
        assert_eq!(pr.to_cg().coefficients(), &[half, half, half, half, half, half, half, z]);
    }

    #[test]
    fn deterministic_zero_box_has_zero_cg() {
        let s = Scenario::chsh();
        let b: ProbBox<f64> = ProbBox::deterministic(s, &[vec![0, 0], vec![0, 0]]).unwrap();
        assert!(b.to_cg().coefficients().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn normalization_defect_detected() {
        let s = Scenario::chsh();
        let mut t = ProbBox::<f64>::uniform(s.clone()).into_table();
        // scale the x=(0,0) row to sum to 0.9
        for v in t.iter_mut().take(4) {
            *v *= 0.9;
        }
        let r = ValidationReport::of(&s, &t).unwrap();
        assert!(!r.normalized_ok);
        assert!((r.normalization - 0.1).abs() < 1e-12);
        assert!(!r.is_valid());
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let s = Scenario::chsh();
        assert!(matches!(ValidationReport::<f64>::of(&s, &[0.5; 15]), Err(Error::Dimension { .. })));
        assert!(ProbBox::new(s, vec![0.0f64; 3]).is_err());
    }

    #[test]
    fn signalling_detected() {
        // Alice's output copies Bob's input: signalling
        let b: ProbBox<f64> =
            ProbBox::from_fn(Scenario::chsh(), |xs, a| if a[0] == xs[1] && a[1] == 0 { 1.0 } else { 0.0 });
        let r = b.validate();
        assert!(r.nonneg_ok && r.normalized_ok);
        assert!(!r.no_signalling_ok);
        assert!((r.signalling - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cg_roundtrip_multipartite_exact() {
        let s = Scenario::new(vec![2, 1, 3], vec![3, 2, 2]).unwrap();
        let b: ProbBox<Rational64> = ProbBox::deterministic(s.clone(), &[vec![2, 1], vec![1], vec![0, 1, 1]])
            .unwrap()
            .mix(&ProbBox::uniform(s), Rational64::new(1, 3))
            .unwrap();
        assert!(b.validate().is_valid());
        assert_eq!(b.to_cg().to_box().unwrap(), b);
    }

    #[test]
    fn negative_reconstruction_rejected() {
        let v = CgVector::new(Scenario::chsh(), vec![0.9, 0.5, 0.9, 0.5, 0.1, 0.5, 0.5, 0.5]).unwrap();
        assert!(matches!(v.to_box(), Err(Error::InvalidCg { .. })));
    }

    #[test]
    fn basis_index_matches_order() {
        let s = Scenario::new(vec![2, 3], vec![3, 2]).unwrap();
        let basis = CgBasis::new(&s);
        for (i, e) in basis.events().iter().enumerate() {
            assert_eq!(basis.index_of(e), Some(i));
        }
        assert_eq!(basis.index_of(&Event::null()), None);
        assert_eq!(basis.index_of(&Event::single(0, 0, 0)), None);
    }
}
