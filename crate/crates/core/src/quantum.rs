//! Quantum-side reference data: a two-qubit Bell-operator scan, a Born-rule
//! box sampler, and an explicit almost-quantum point that no quantum system
//! reaches.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::boxes::{CgVector, ProbBox};
use crate::error::{Error, Result};
use crate::functional::BellFunctional;
use crate::membership::box_margin;
use crate::moment::{validate_certificate, CertificateReport};
use crate::scenario::{Level, Scenario};

/// Position in the library's Collins–Gisin order of each coordinate written
/// with the joint terms ordered `11|00, 11|10, 11|01, 11|11` (Bob's input
/// slowest). The permutation is its own inverse.
pub const Y_MAJOR_CG_ORDER: [usize; 8] = [0, 1, 2, 3, 4, 6, 5, 7];

/// Reorders an 8-vector given in [`Y_MAJOR_CG_ORDER`] into library order.
pub fn from_y_major(v: &[f64; 8]) -> Vec<f64> {
    Y_MAJOR_CG_ORDER.iter().map(|&i| v[i]).collect()
}

/// Bell coefficients of the witness, Bob's input slowest in the joint terms.
pub fn witness_bell_y_major() -> [f64; 8] {
    [-30.0 / 31.0, 167.0 / 9.0, 167.0 / 9.0, -30.0 / 31.0, -174.0 / 11.0, -244.0 / 23.0, 74.0 / 11.0, -174.0 / 11.0]
}

/// The almost-quantum point, Bob's input slowest in the joint terms.
pub fn witness_point_y_major() -> [f64; 8] {
    [9.0 / 20.0, 2.0 / 11.0, 2.0 / 11.0, 9.0 / 20.0, 22.0 / 125.0, 2f64.sqrt() / 9.0, 37.0 / 700.0, 22.0 / 125.0]
}

/// Certificate of the witness point with rows `phi, A(1|0), A(1|1), B(1|0),
/// B(1|1)` followed by the joint events with Bob's input slowest.
pub fn witness_gamma_y_major() -> DMatrix<f64> {
    let p = 9.0 / 20.0;
    let q = 2.0 / 11.0;
    let r = 22.0 / 125.0;
    let s = 2f64.sqrt() / 9.0;
    let t = 37.0 / 700.0;
    let u = 17.0 / 155.0;
    let v = 33f64.sqrt() / 40.0;
    let w = 71f64.sqrt() / 100.0;
    let y = 21.0 / 158.0;
    let z = 4.0 / 53.0;
    #[rustfmt::skip]
    let rows = [
        1.0, p, q, q, p, r, s, t, r,
        p,   p, u, r, t, r, v, t, w,
        q,   u, q, s, r, v, s, w, r,
        q,   r, s, q, u, r, s, w, v,
        p,   t, r, u, p, w, v, t, r,
        r,   r, v, r, w, r, v, w, y,
        s,   v, s, s, v, v, s, z, v,
        t,   t, w, w, t, w, z, t, w,
        r,   w, r, v, r, y, v, w, r,
    ];
    DMatrix::from_row_slice(9, 9, &rows)
}

/// The witness in library order: a Bell functional whose quantum minimum
/// exceeds -1, a point it sends to about -1.052, and a certificate showing the
/// point is almost quantum.
#[derive(Debug, Clone)]
pub struct SeparationWitness {
    pub bell: BellFunctional,
    pub point: ProbBox<f64>,
    pub gamma: DMatrix<f64>,
}

impl SeparationWitness {
    pub fn new() -> Self {
        let bell = BellFunctional::new(Scenario::chsh(), from_y_major(&witness_bell_y_major()), 0.0)
            .expect("eight coefficients");
        let point = CgVector::new(Scenario::chsh(), from_y_major(&witness_point_y_major()))
            .and_then(|cg| cg.to_box())
            .expect("witness point is a valid box");
        // rows 6 and 7 hold the joint events 11|10 and 11|01
        let printed = witness_gamma_y_major();
        let perm = [0, 1, 2, 3, 4, 5, 7, 6, 8];
        let gamma = DMatrix::from_fn(9, 9, |i, j| printed[(perm[i], perm[j])]);
        Self { bell, point, gamma }
    }
}

impl Default for SeparationWitness {
    fn default() -> Self {
        Self::new()
    }
}

/// Grid for [`bell_operator_min`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Points per angle on `[0, 2 pi)`; at least 64.
    pub resolution: usize,
    /// Rescan a 10x finer grid around the best cell.
    pub refine: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { resolution: 512, refine: true }
    }
}

fn bell_operator(f: &BellFunctional, t1: f64, t2: f64) -> Matrix4<f64> {
    let one = Matrix2::new(0.0, 0.0, 0.0, 1.0);
    let psi = |t: f64| {
        let (s, c) = t.sin_cos();
        Matrix2::new(c * c, c * s, c * s, s * s)
    };
    let id = Matrix2::identity();
    let a = [one, psi(t1)];
    let b = [one, psi(t2)];
    let c = f.coefficients();
    let mut m = Matrix4::identity() * f.constant();
    for x in 0..2 {
        m += a[x].kronecker(&id) * c[x];
        m += id.kronecker(&b[x]) * c[2 + x];
    }
    for x in 0..2 {
        for y in 0..2 {
            m += a[x].kronecker(&b[y]) * c[4 + 2 * x + y];
        }
    }
    m
}

/// Smallest eigenvalue of the two-qubit Bell operator over a grid of
/// measurement angles. Each party measures `|1><1|` for input 0 and
/// `|psi(theta)><psi(theta)|` with `psi = cos theta |0> + sin theta |1>` for
/// input 1.
pub fn bell_operator_min(f: &BellFunctional, config: &ScanConfig) -> Result<f64> {
    if f.scenario() != &Scenario::chsh() {
        return Err(Error::Scenario("the Bell-operator scan needs two parties with two inputs and outputs".into()));
    }
    if config.resolution < 64 {
        return Err(Error::Parameter(format!("scan resolution {} is below 64", config.resolution)));
    }
    let eval = |t1: f64, t2: f64| bell_operator(f, t1, t2).symmetric_eigenvalues().min();
    let step = std::f64::consts::TAU / config.resolution as f64;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..config.resolution {
        for j in 0..config.resolution {
            let (t1, t2) = (i as f64 * step, j as f64 * step);
            let v = eval(t1, t2);
            if v < best.0 {
                best = (v, t1, t2);
            }
        }
    }
    if config.refine {
        let fine = step / 10.0;
        let (_, c1, c2) = best;
        for i in -10..=10 {
            for j in -10..=10 {
                let (t1, t2) = (c1 + i as f64 * fine, c2 + j as f64 * fine);
                best.0 = best.0.min(eval(t1, t2));
            }
        }
    }
    Ok(best.0)
}

/// Born-rule box `P(a,b|x,y) = <psi| A[x][a] (x) B[y][b] |psi>` for a state on
/// `C^dA (x) C^dB` and projective measurements given as lists of projectors.
pub fn born_box(
    state: &DVector<Complex64>,
    alice: &[Vec<DMatrix<Complex64>>],
    bob: &[Vec<DMatrix<Complex64>>],
) -> Result<ProbBox<f64>> {
    let (Some(a0), Some(b0)) = (alice.first().and_then(|m| m.first()), bob.first().and_then(|m| m.first())) else {
        return Err(Error::Parameter("each party needs at least one measurement".into()));
    };
    let (da, db) = (a0.nrows(), b0.nrows());
    if state.len() != da * db {
        return Err(Error::Dimension { expected: da * db, found: state.len() });
    }
    let outputs = |ms: &[Vec<DMatrix<Complex64>>]| -> Result<usize> {
        let d = ms[0].len();
        if ms.iter().any(|m| m.len() != d) {
            return Err(Error::Parameter("every input needs the same number of outcomes".into()));
        }
        Ok(d)
    };
    let scenario = Scenario::new(vec![alice.len(), bob.len()], vec![outputs(alice)?, outputs(bob)?])?;
    let norm = state.norm_squared();
    Ok(ProbBox::from_fn(scenario, |xs, a| {
        let op = alice[xs[0]][a[0]].kronecker(&bob[xs[1]][a[1]]);
        (state.adjoint() * op * state)[(0, 0)].re / norm
    }))
}

/// Projector `(I + n . sigma) / 2` onto the Bloch direction `n`.
pub fn qubit_projector(n: [f64; 3]) -> DMatrix<Complex64> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    DMatrix::from_row_slice(
        2,
        2,
        &[
            c((1.0 + n[2]) / 2.0, 0.0),
            c(n[0] / 2.0, -n[1] / 2.0),
            c(n[0] / 2.0, n[1] / 2.0),
            c((1.0 - n[2]) / 2.0, 0.0),
        ],
    )
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random two-qubit box: a Haar-random pure state and, for every input, a
/// projective measurement along a uniformly random Bloch direction.
/// Deterministic in `seed`.
pub fn sample_quantum_box(scenario: &Scenario, seed: u64) -> Result<ProbBox<f64>> {
    if scenario.num_parties() != 2 || scenario.outputs().iter().any(|&d| d != 2) {
        return Err(Error::Scenario(format!("qubit sampling needs two parties with two outputs, got {scenario}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps = unit_vector(&mut rng, 8);
    let state = DVector::from_fn(4, |i, _| Complex64::new(amps[2 * i], amps[2 * i + 1]));
    let mut measure = |inputs: usize| -> Vec<Vec<DMatrix<Complex64>>> {
        (0..inputs)
            .map(|_| {
                let n = unit_vector(&mut rng, 3);
                vec![qubit_projector([-n[0], -n[1], -n[2]]), qubit_projector([n[0], n[1], n[2]])]
            })
            .collect()
    };
    let alice = measure(scenario.inputs()[0]);
    let bob = measure(scenario.inputs()[1]);
    born_box(&state, &alice, &bob)
}

/// Four-step check that the witness point is almost quantum but not quantum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationReport {
    pub certificate: CertificateReport,
    pub bell_value: f64,
    pub quantum_min: f64,
    pub psd_margin: f64,
    pub certificate_ok: bool,
    pub bell_value_ok: bool,
    pub quantum_min_ok: bool,
    pub margin_ok: bool,
    /// All four checks pass and the point lies below the quantum minimum.
    pub separated: bool,
}

/// Expected window of the witness value.
pub const WITNESS_VALUE_RANGE: (f64, f64) = (-1.053, -1.051);

pub fn separation_report(witness: &SeparationWitness, config: &ScanConfig) -> Result<SeparationReport> {
    let certificate = validate_certificate(&witness.gamma, &witness.point, Level::AlmostQuantum)?;
    let bell_value = witness.bell.evaluate(&witness.point)?;
    let quantum_min = bell_operator_min(&witness.bell, config)?;
    let psd_margin = box_margin(&witness.point, Level::AlmostQuantum)?.lambda;
    let certificate_ok = certificate.accepted;
    let bell_value_ok = (WITNESS_VALUE_RANGE.0..=WITNESS_VALUE_RANGE.1).contains(&bell_value);
    let quantum_min_ok = quantum_min > -1.0;
    let margin_ok = psd_margin >= -crate::membership::MEMBER_TOL;
    let separated = certificate_ok && bell_value_ok && quantum_min_ok && margin_ok && bell_value < quantum_min;
    Ok(SeparationReport {
        certificate,
        bell_value,
        quantum_min,
        psd_margin,
        certificate_ok,
        bell_value_ok,
        quantum_min_ok,
        margin_ok,
        separated,
    })
}
