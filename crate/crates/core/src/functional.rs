//! Linear functionals on boxes, stored in Collins–Gisin coordinates.

use serde::{Deserialize, Serialize};

use crate::boxes::{CgBasis, ProbBox};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// `constant + sum_e coefficients[e] * P(e)` over the [`CgBasis`] events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellFunctional {
    scenario: Scenario,
    constant: f64,
    coefficients: Vec<f64>,
}

impl BellFunctional {
    pub fn new(scenario: Scenario, coefficients: Vec<f64>, constant: f64) -> Result<Self> {
        let len = CgBasis::new(&scenario).len();
        if coefficients.len() != len {
            return Err(Error::Dimension { expected: len, found: coefficients.len() });
        }
        if coefficients.iter().any(|c| !c.is_finite()) || !constant.is_finite() {
            return Err(Error::Parameter("non-finite functional coefficient".into()));
        }
        Ok(Self { scenario, constant, coefficients })
    }

    pub fn zero(scenario: Scenario) -> Self {
        let len = CgBasis::new(&scenario).len();
        Self { scenario, constant: 0.0, coefficients: vec![0.0; len] }
    }

    /// Converts `sum_{a,x} c(a|x) P(a|x)` given over the full table.
    pub fn from_full(scenario: Scenario, table: &[f64]) -> Result<Self> {
        if table.len() != scenario.table_len() {
            return Err(Error::Dimension { expected: scenario.table_len(), found: table.len() });
        }
        let basis = CgBasis::new(&scenario);
        let mut coefficients = vec![0.0; basis.len()];
        let mut constant = 0.0;
        for (idx, &c) in table.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let (xs, a) = scenario.table_tuple(idx);
            let (k, terms) = basis.expand_full_entry(&xs, &a);
            constant += c * k as f64;
            for (i, s) in terms {
                coefficients[i] += c * s as f64;
            }
        }
        Self::new(scenario, coefficients, constant)
    }

    /// `<A0B0> + <A0B1> + <A1B0> - <A1B1>` for two parties with two inputs
    /// and outputs.
    pub fn chsh() -> Self {
        Self {
            scenario: Scenario::chsh(),
            constant: 2.0,
            coefficients: vec![-4.0, 0.0, -4.0, 0.0, 4.0, 4.0, 4.0, -4.0],
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn negated(&self) -> Self {
        Self {
            scenario: self.scenario.clone(),
            constant: -self.constant,
            coefficients: self.coefficients.iter().map(|c| -c).collect(),
        }
    }

    pub fn evaluate_cg(&self, cg: &[f64]) -> f64 {
        self.constant + self.coefficients.iter().zip(cg).map(|(c, p)| c * p).sum::<f64>()
    }

    pub fn evaluate(&self, b: &ProbBox<f64>) -> Result<f64> {
        if b.scenario() != &self.scenario {
            return Err(Error::Scenario(format!("functional is over {}, box over {}", self.scenario, b.scenario())));
        }
        Ok(self.evaluate_cg(b.to_cg().coefficients()))
    }
}
