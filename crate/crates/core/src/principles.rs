//! Evaluators for physical principles: local orthogonality, nonlocal
//! computation, communication complexity, Uffink's inequality and the
//! isotropic PR family.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boxes::ProbBox;
use crate::error::{Error, Result};
use crate::functional::BellFunctional;
use crate::membership::{maximize_linear, maximize_parameter};
use crate::moment::{Binding, MomentProblem};
use crate::scalar::Scalar;
use crate::scenario::{locally_orthogonal, Event, Level, Scenario};

/// `sum_e P(e)` over pairwise locally orthogonal events.
pub fn lo_value<T: Scalar>(b: &ProbBox<T>, events: &[Event]) -> Result<T> {
    for e in events {
        b.scenario().check_event(e)?;
    }
    for (i, e) in events.iter().enumerate() {
        for f in &events[i + 1..] {
            if !locally_orthogonal(e, f) {
                return Err(Error::NotOrthogonal(e.to_string(), f.to_string()));
            }
        }
    }
    Ok(events.iter().fold(T::zero(), |acc, e| acc + b.marginal(e)))
}

/// Largest number of vertices accepted by [`find_lo_violation`].
pub const MAX_LO_EVENTS: usize = 4096;
/// Default clique size limit of [`find_lo_violation`].
pub const DEFAULT_LO_SET_SIZE: usize = 8;

/// Heaviest set of at most `max_size` pairwise locally orthogonal events.
///
/// Only events over all parties are searched: any event can be replaced by
/// its extensions to all parties (at arbitrary fixed inputs for the missing
/// ones), which are orthogonal to each other and to everything the original
/// event was orthogonal to, without changing the sum.
pub fn find_lo_violation(b: &ProbBox<f64>, max_size: usize) -> Result<(f64, Vec<Event>)> {
    let s = b.scenario();
    let mut verts: Vec<(f64, Event)> = (0..s.table_len())
        .filter(|&i| b.table()[i] > 1e-12)
        .map(|i| {
            let (xs, a) = s.table_tuple(i);
            (b.table()[i], Event::full(&xs, &a))
        })
        .collect();
    if verts.len() > MAX_LO_EVENTS {
        return Err(Error::TooLarge(verts.len(), MAX_LO_EVENTS));
    }
    if verts.is_empty() || max_size == 0 {
        return Ok((0.0, Vec::new()));
    }
    verts.sort_by(|x, y| y.0.total_cmp(&x.0));
    let weights: Vec<f64> = verts.iter().map(|v| v.0).collect();
    let events: Vec<Event> = verts.into_iter().map(|v| v.1).collect();
    let clique = MaxClique::new(&events, weights.clone(), max_size).solve();
    let value = clique.iter().map(|&i| weights[i]).sum();
    Ok((value, clique.into_iter().map(|i| events[i].clone()).collect()))
}

type Bits = Vec<u64>;

fn bit(b: &Bits, i: usize) -> bool {
    b[i / 64] >> (i % 64) & 1 == 1
}

/// Exact weighted clique search with a size limit. Vertices are sorted by
/// decreasing weight. `best_from[i]` is the best clique within vertices
/// `i..`, computed from the last vertex backwards, and bounds every subtree
/// whose candidates start at `i`.
struct MaxClique {
    adj: Vec<Bits>,
    weights: Vec<f64>,
    cap: usize,
    best_from: Vec<f64>,
    best: f64,
    best_set: Vec<usize>,
}

impl MaxClique {
    fn new(events: &[Event], weights: Vec<f64>, cap: usize) -> Self {
        let n = events.len();
        let words = n.div_ceil(64);
        let mut adj = vec![vec![0u64; words]; n];
        for i in 0..n {
            for j in i + 1..n {
                if locally_orthogonal(&events[i], &events[j]) {
                    adj[i][j / 64] |= 1 << (j % 64);
                    adj[j][i / 64] |= 1 << (i % 64);
                }
            }
        }
        Self { adj, weights, cap, best_from: vec![0.0; n], best: 0.0, best_set: Vec::new() }
    }

    fn solve(mut self) -> Vec<usize> {
        let n = self.weights.len();
        for i in (0..n).rev() {
            let cands: Vec<usize> = (i + 1..n).filter(|&j| bit(&self.adj[i], j)).collect();
            let mut cur = vec![i];
            self.expand(&cands, self.weights[i], &mut cur);
            self.best_from[i] = self.best;
        }
        self.best_set
    }

    fn expand(&mut self, cands: &[usize], weight: f64, cur: &mut Vec<usize>) {
        if weight > self.best {
            self.best = weight;
            self.best_set = cur.clone();
        }
        let room = self.cap - cur.len();
        if room == 0 {
            return;
        }
        for (pos, &v) in cands.iter().enumerate() {
            if weight + self.best_from[v] <= self.best {
                return;
            }
            let top: f64 = cands[pos..].iter().take(room).map(|&u| self.weights[u]).sum();
            if weight + top <= self.best {
                return;
            }
            let next: Vec<usize> = cands[pos + 1..].iter().copied().filter(|&u| bit(&self.adj[v], u)).collect();
            cur.push(v);
            self.expand(&next, weight + self.weights[v], cur);
            cur.pop();
        }
    }
}

/// Boolean function with a prior on its argument. Alice receives a uniform
/// `x`, Bob `y = x xor z` with `z` drawn from the prior, and they must output
/// bits whose XOR is `f(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlocalComputationTask {
    n: usize,
    f: Vec<bool>,
    prior: Vec<f64>,
}

impl NonlocalComputationTask {
    pub fn new(n: usize, f: Vec<bool>, prior: Vec<f64>) -> Result<Self> {
        if n == 0 || n > 20 {
            return Err(Error::Parameter(format!("unsupported bit count {n}")));
        }
        let size = 1 << n;
        if f.len() != size || prior.len() != size {
            return Err(Error::Dimension { expected: size, found: f.len().max(prior.len()) });
        }
        if prior.iter().any(|&p| p.is_nan() || p < 0.0) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter("prior must be a probability distribution".into()));
        }
        Ok(Self { n, f, prior })
    }

    /// Random truth table and random prior.
    pub fn random(n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = 1usize.checked_shl(n as u32).unwrap_or(0);
        let f = (0..size).map(|_| rng.random::<bool>()).collect();
        let raw: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let mut prior: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let drift: f64 = 1.0 - prior.iter().sum::<f64>();
        if let Some(p) = prior.first_mut() {
            *p += drift;
        }
        Self::new(n, f, prior)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> &[bool] {
        &self.f
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    fn signed_prior(&self) -> Vec<f64> {
        self.prior.iter().zip(&self.f).map(|(&p, &v)| if v { -p } else { p }).collect()
    }

    /// `Phi[x][y] = (-1)^f(x xor y) prior(x xor y)`.
    pub fn phi(&self) -> DMatrix<f64> {
        let s = self.signed_prior();
        let size = s.len();
        DMatrix::from_fn(size, size, |x, y| s[x ^ y])
    }
}

/// In-place Walsh–Hadamard transform `v[u] <- sum_z (-1)^(u.z) v[z]`.
pub fn walsh_hadamard<T: Scalar>(v: &mut [T]) {
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (a.clone(), b.clone());
                *a = x.clone() + y.clone();
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Best classical success probability, `(1 + max_u |W(u)|) / 2` with `W` the
/// Walsh transform of the signed prior.
pub fn nlc_classical_bound(task: &NonlocalComputationTask) -> f64 {
    let mut w = task.signed_prior();
    walsh_hadamard(&mut w);
    0.5 * (1.0 + w.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// `(1 + ||Phi||) / 2`, from the spectrum of `Phi`.
pub fn nlc_phi_bound(task: &NonlocalComputationTask) -> f64 {
    let eig = task.phi().symmetric_eigenvalues();
    0.5 * (1.0 + eig.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Largest input count per party for [`nlc_q1_value`].
pub const MAX_NLC_INPUTS: usize = 16;

/// Success probability of the task as a Bell functional.
pub fn nlc_functional(task: &NonlocalComputationTask) -> Result<BellFunctional> {
    let m = 1usize << task.n;
    let scenario = Scenario::new(vec![m, m], vec![2, 2])?;
    let scale = 1.0 / m as f64;
    let mut table = vec![0.0; scenario.table_len()];
    for (idx, c) in table.iter_mut().enumerate() {
        let (xs, a) = scenario.table_tuple(idx);
        let z = xs[0] ^ xs[1];
        if (a[0] ^ a[1] == 1) == task.f[z] {
            *c = scale * task.prior[z];
        }
    }
    BellFunctional::from_full(scenario, &table)
}

/// Best success probability over the single-party relaxation.
pub fn nlc_q1_value(task: &NonlocalComputationTask) -> Result<f64> {
    let m = 1usize << task.n;
    if m > MAX_NLC_INPUTS {
        return Err(Error::TooLarge(m, MAX_NLC_INPUTS));
    }
    let f = nlc_functional(task)?;
    let mp = MomentProblem::build(f.scenario(), Level::Q1, Binding::FreeBox)?;
    Ok(maximize_linear(&mp, &f)?.value)
}

/// Bound on the success probability of computing the inner product of two
/// `n`-bit strings with one `m`-bit message, `(1 + 2^((m - n) / 2)) / 2`.
pub fn ntcc_bound(n: usize, m: usize) -> Result<f64> {
    if m >= n {
        return Err(Error::Parameter(format!("message length {m} must be below the input length {n}")));
    }
    Ok(0.5 * (1.0 + 2f64.powf((m as f64 - n as f64) / 2.0)))
}

/// Largest `n` accepted by [`ntcc_game_value`].
pub const MAX_NTCC_BITS: usize = 2;

/// Scenario of the communication game: Alice reads `x` (2^n inputs) and
/// outputs the message (2^m outputs, at least 2); Bob reads the message and
/// `y` (input `message * 2^n + y`) and outputs a bit.
pub fn ntcc_scenario(n: usize, m: usize) -> Result<Scenario> {
    Scenario::new(vec![1 << n, 1 << (m + n)], vec![(1usize << m).max(2), 2])
}

/// Average success probability of outputting `x . y mod 2`, as a functional.
pub fn ntcc_functional(n: usize, m: usize) -> Result<BellFunctional> {
    if m >= n {
        return Err(Error::Parameter(format!("message length {m} must be below the input length {n}")));
    }
    let scenario = ntcc_scenario(n, m)?;
    let weight = 1.0 / (1usize << (2 * n)) as f64;
    let mut table = vec![0.0; scenario.table_len()];
    for x in 0..1usize << n {
        for y in 0..1usize << n {
            let target = ((x & y).count_ones() % 2) as usize;
            for a in 0..scenario.outputs()[0] {
                let bob = if m == 0 { y } else { (a << n) | y };
                table[scenario.table_index(&[x, bob], &[a, target])] += weight;
            }
        }
    }
    BellFunctional::from_full(scenario, &table)
}

/// Best average success probability over a relaxation.
pub fn ntcc_game_value(n: usize, m: usize, level: Level) -> Result<f64> {
    if n > MAX_NTCC_BITS {
        return Err(Error::TooLarge(n, MAX_NTCC_BITS));
    }
    let f = ntcc_functional(n, m)?;
    let mp = MomentProblem::build(f.scenario(), level, Binding::FreeBox)?;
    Ok(maximize_linear(&mp, &f)?.value)
}

/// `(<A0B0> + <A1B0>)^2 + (<A0B1> - <A1B1>)^2`.
pub fn uffink_lhs<T: Scalar>(b: &ProbBox<T>) -> Result<T> {
    if b.scenario() != &Scenario::chsh() {
        return Err(Error::Scenario(format!(
            "Uffink's inequality needs two inputs and outputs per party, got {}",
            b.scenario()
        )));
    }
    let corr = |x: usize, y: usize| {
        let mut e = T::zero();
        for a in 0..2 {
            for o in 0..2 {
                let p = b.prob(&[x, y], &[a, o]).clone();
                e = if a == o { e + p } else { e - p };
            }
        }
        e
    };
    let s = corr(0, 0) + corr(1, 0);
    let t = corr(0, 1) - corr(1, 1);
    Ok(s.clone() * s + t.clone() * t)
}

/// Scenario of [`pr_box`]: Alice has `d` inputs, Bob 2, both `d` outputs.
pub fn pr_scenario(d: usize) -> Result<Scenario> {
    if d < 2 {
        return Err(Error::Parameter(format!("PR boxes need d >= 2, got {d}")));
    }
    Scenario::new(vec![d, 2], vec![d, d])
}

/// `E PR0 + (1 - E) U`, where `PR0(a,b|x,y) = 1/d` iff `b - a = x y mod d`
/// and `U` is uniform.
pub fn pr_box<T: Scalar>(d: usize, e: T) -> Result<ProbBox<T>> {
    if e < T::zero() || e > T::one() {
        return Err(Error::Parameter(format!("visibility {e:?} outside [0, 1]")));
    }
    let scenario = pr_scenario(d)?;
    let dd = T::from_usize_exact(d);
    let hit = T::one() / dd.clone();
    let noise = (T::one() - e.clone()) / (dd.clone() * dd);
    Ok(ProbBox::from_fn(scenario, |xs, a| {
        let on = (a[1] + d - a[0]) % d == (xs[0] * xs[1]) % d;
        let pr = if on { hit.clone() } else { T::zero() };
        e.clone() * pr + noise.clone()
    }))
}

/// Largest `E` for which `pr_box(d, E)` passes the relaxation at `level`.
pub fn critical_noise(d: usize, level: Level) -> Result<f64> {
    let base = ProbBox::<f64>::uniform(pr_scenario(d)?);
    let pr = pr_box(d, 1.0)?;
    let direction: Vec<f64> = pr.table().iter().zip(base.table()).map(|(p, u)| p - u).collect();
    let mp = MomentProblem::build(
        base.scenario(),
        level,
        Binding::AffineFamily { base: base.clone(), direction, bounds: (0.0, 1.0) },
    )?;
    Ok(maximize_parameter(&mp)?.t)
}

/// Noise thresholds compatible with information causality, reported next to
/// computed values and never recomputed: `(d, E)`.
pub const IC_THRESHOLDS: [(usize, f64); 4] = [(2, 0.707), (3, 0.708), (4, 0.705), (5, 0.700)];

/// Published almost-quantum thresholds for comparison: `(d, E)`.
pub const ALMOST_QUANTUM_THRESHOLDS: [(usize, f64); 3] = [(2, 0.707), (3, 0.667), (4, 0.653)];
