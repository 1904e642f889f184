//! JSON files for boxes, functionals, certificates and wiring specs.
//!
//! Box tables are flat: input tuples in lexicographic order with the first
//! party slowest, and within each input tuple the output tuples in the same
//! order.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::boxes::ProbBox;
use crate::error::{Error, Result};
use crate::functional::BellFunctional;
use crate::membership::Margin;
use crate::moment::MomentProblem;
use crate::scenario::{Level, Scenario};

/// Largest asymmetry accepted in a certificate file.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxFile {
    pub parties: usize,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub probabilities: Vec<f64>,
}

impl BoxFile {
    pub fn from_box(b: &ProbBox<f64>) -> Self {
        let s = b.scenario();
        Self {
            parties: s.num_parties(),
            inputs: s.inputs().to_vec(),
            outputs: s.outputs().to_vec(),
            probabilities: b.table().to_vec(),
        }
    }

    /// Checks shape and finiteness; no-signalling is left to the caller.
    pub fn to_box(&self) -> Result<ProbBox<f64>> {
        if self.inputs.len() != self.parties || self.outputs.len() != self.parties {
            return Err(Error::Parse(format!(
                "{} parties but {} input and {} output counts",
                self.parties,
                self.inputs.len(),
                self.outputs.len()
            )));
        }
        if let Some(i) = self.probabilities.iter().position(|p| !p.is_finite()) {
            return Err(Error::Parse(format!("probability {i} is not finite")));
        }
        let scenario = Scenario::new(self.inputs.clone(), self.outputs.clone())?;
        ProbBox::new(scenario, self.probabilities.clone())
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    CollinsGisin,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalFile {
    pub scenario: Scenario,
    pub basis: Basis,
    pub coefficients: Vec<f64>,
    pub sense: Sense,
    #[serde(default)]
    pub constant: f64,
}

impl FunctionalFile {
    pub fn from_functional(f: &BellFunctional, sense: Sense) -> Self {
        Self {
            scenario: f.scenario().clone(),
            basis: Basis::CollinsGisin,
            coefficients: f.coefficients().to_vec(),
            sense,
            constant: f.constant(),
        }
    }

    pub fn to_functional(&self) -> Result<BellFunctional> {
        match self.basis {
            Basis::CollinsGisin => BellFunctional::new(self.scenario.clone(), self.coefficients.clone(), self.constant),
            Basis::Full => {
                let f = BellFunctional::from_full(self.scenario.clone(), &self.coefficients)?;
                BellFunctional::new(f.scenario().clone(), f.coefficients().to_vec(), f.constant() + self.constant)
            }
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub level: Level,
    /// Row labels in the event notation of [`crate::Event`].
    pub index: Vec<String>,
    /// Row-major entries.
    pub matrix: Vec<f64>,
    pub psd_margin: f64,
}

impl CertificateFile {
    pub fn new(mp: &MomentProblem, margin: &Margin) -> Self {
        let n = margin.gamma.nrows();
        Self {
            level: mp.level(),
            index: mp.index().iter().map(|e| e.to_string()).collect(),
            matrix: (0..n * n).map(|k| margin.gamma[(k / n, k % n)]).collect(),
            psd_margin: margin.lambda,
        }
    }

    /// The matrix, after checking its shape and symmetry.
    pub fn gamma(&self) -> Result<DMatrix<f64>> {
        let n = self.index.len();
        if self.matrix.len() != n * n {
            return Err(Error::Dimension { expected: n * n, found: self.matrix.len() });
        }
        let g = DMatrix::from_row_slice(n, n, &self.matrix);
        let asym = (&g - g.transpose()).abs().max();
        if asym.is_nan() || asym > SYMMETRY_TOL {
            return Err(Error::Parse(format!("certificate asymmetric by {asym:.3e}")));
        }
        Ok(g)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let c: Self = read_json(path)?;
        c.gamma()?;
        Ok(c)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aq" | "almost-quantum" | "almostquantum" => Ok(Level::AlmostQuantum),
            "q1" => Ok(Level::Q1),
            _ => Err(Error::Parse(format!("unknown level '{s}'"))),
        }
    }
}
