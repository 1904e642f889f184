//! Cone vectors, the compiled problem data, and Nesterov–Todd scaling.

use std::cmp::Ordering;

use nalgebra::{Cholesky, DMatrix, DVector, RealField, SymmetricEigen, SVD};

use super::{Block, ConicProblem};

pub(super) fn cst<T: RealField>(v: f64) -> T {
    nalgebra::convert(v)
}

/// An element of the product cone: one symmetric matrix per PSD block and a
/// vector for all nonnegative scalars.
#[derive(Debug, Clone)]
pub(super) struct ConeVec<T: RealField> {
    pub psd: Vec<DMatrix<T>>,
    pub lin: DVector<T>,
}

impl<T: RealField + Copy> ConeVec<T> {
    pub fn zeros(dims: &[usize], nlin: usize) -> Self {
        Self { psd: dims.iter().map(|&n| DMatrix::zeros(n, n)).collect(), lin: DVector::zeros(nlin) }
    }

    pub fn identity(dims: &[usize], nlin: usize) -> Self {
        Self {
            psd: dims.iter().map(|&n| DMatrix::identity(n, n)).collect(),
            lin: DVector::from_element(nlin, T::one()),
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        let mut acc = self.lin.dot(&other.lin);
        for (a, b) in self.psd.iter().zip(&other.psd) {
            acc += a.dot(b);
        }
        acc
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        self.lin.axpy(alpha, &other.lin, T::one());
        for (a, b) in self.psd.iter_mut().zip(&other.psd) {
            a.zip_apply(b, |x, y| *x += alpha * y);
        }
    }

    pub fn scale(&mut self, alpha: T) {
        self.lin *= alpha;
        for a in &mut self.psd {
            *a *= alpha;
        }
    }

    pub fn symmetrize(&mut self) {
        let half: T = cst(0.5);
        for a in &mut self.psd {
            let t = a.transpose();
            *a += t;
            *a *= half;
        }
    }

    /// Jordan product: `(uv + vu)/2` on matrices, elementwise on scalars.
    pub fn circ(&self, other: &Self) -> Self {
        let half: T = cst(0.5);
        Self {
            psd: self
                .psd
                .iter()
                .zip(&other.psd)
                .map(|(u, v)| {
                    let uv = u * v;
                    (&uv + uv.transpose()) * half
                })
                .collect(),
            lin: self.lin.component_mul(&other.lin),
        }
    }

    /// Smallest `t` such that `self + t e` is in the cone boundary, i.e. the
    /// negated smallest eigenvalue over all blocks.
    pub fn min_eig(&self) -> T {
        let mut m = self.lin.iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b));
        for a in &self.psd {
            if a.nrows() > 0 {
                let e = SymmetricEigen::new(a.clone()).eigenvalues.min();
                m = m.min(e);
            }
        }
        m
    }
}

/// Upper-triangle entries `(row, col, coef)` of one coefficient matrix.
pub(super) type SparseCol<T> = Vec<(usize, usize, T)>;

/// One compiled PSD block: `F(v) = f0 + sum_i v_i F_i`.
#[derive(Debug, Clone)]
pub(super) struct PsdData<T: RealField> {
    pub dim: usize,
    pub f0: DMatrix<T>,
    /// Per variable, upper-triangle entries `(row, col, coef)` of `F_i`.
    pub cols: Vec<(usize, SparseCol<T>)>,
}

/// All nonnegative scalars: `g_l(v) = h_l + sum coef v`.
#[derive(Debug, Clone)]
pub(super) struct LinData<T: RealField> {
    pub h: DVector<T>,
    pub rows: Vec<Vec<(usize, T)>>,
}

/// Where a user block lives in the compiled data.
#[derive(Debug, Clone, Copy)]
pub(super) enum BlockRef {
    Psd(usize),
    Lin(usize),
    Free(usize),
}

/// The problem in `min c'x  s.t.  Ax = b,  h - Gx in K` form, with `G = -F`.
#[derive(Debug, Clone)]
pub(super) struct Compiled<T: RealField> {
    pub m: usize,
    pub c: DVector<T>,
    pub c0: T,
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    pub psd: Vec<PsdData<T>>,
    pub lin: LinData<T>,
    pub blocks: Vec<BlockRef>,
    pub free: Vec<super::LinExpr<T>>,
}

impl<T: RealField + Copy> Compiled<T> {
    pub fn new(problem: &ConicProblem<T>) -> Self {
        let m = problem.num_vars;
        let obj = if problem.maximize {
            problem.objective.clone().scaled(-T::one()).compact()
        } else {
            problem.objective.clone().compact()
        };
        let mut c = DVector::zeros(m);
        for &(v, k) in &obj.terms {
            c[v] += k;
        }
        let p = problem.equalities.len();
        let mut a = DMatrix::zeros(p, m);
        let mut b = DVector::zeros(p);
        for (r, e) in problem.equalities.iter().enumerate() {
            for &(v, k) in &e.terms {
                a[(r, v)] += k;
            }
            b[r] = -e.constant;
        }
        let mut psd = Vec::new();
        let mut lin_h = Vec::new();
        let mut lin_rows = Vec::new();
        let mut blocks = Vec::new();
        let mut free = Vec::new();
        for block in &problem.blocks {
            match block {
                Block::Psd { dim, entries } => {
                    let mut f0 = DMatrix::zeros(*dim, *dim);
                    let mut per_var: std::collections::BTreeMap<usize, Vec<(usize, usize, T)>> = Default::default();
                    for (i, j, e) in entries {
                        f0[(*i, *j)] = e.constant;
                        f0[(*j, *i)] = e.constant;
                        for &(v, k) in &e.clone().compact().terms {
                            per_var.entry(v).or_default().push((*i, *j, k));
                        }
                    }
                    blocks.push(BlockRef::Psd(psd.len()));
                    psd.push(PsdData { dim: *dim, f0, cols: per_var.into_iter().collect() });
                }
                Block::Nonneg(e) => {
                    blocks.push(BlockRef::Lin(lin_h.len()));
                    let e = e.clone().compact();
                    lin_h.push(e.constant);
                    lin_rows.push(e.terms);
                }
                Block::Free(e) => {
                    blocks.push(BlockRef::Free(free.len()));
                    free.push(e.clone());
                }
            }
        }
        Self {
            m,
            c,
            c0: obj.constant,
            a,
            b,
            psd,
            lin: LinData { h: DVector::from_vec(lin_h), rows: lin_rows },
            blocks,
            free,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.psd.iter().map(|b| b.dim).collect()
    }

    pub fn nlin(&self) -> usize {
        self.lin.h.len()
    }

    pub fn degree(&self) -> usize {
        self.psd.iter().map(|b| b.dim).sum::<usize>() + self.nlin()
    }

    pub fn h(&self) -> ConeVec<T> {
        ConeVec { psd: self.psd.iter().map(|b| b.f0.clone()).collect(), lin: self.lin.h.clone() }
    }

    /// `G x`
    pub fn g_mul(&self, x: &DVector<T>) -> ConeVec<T> {
        let mut out = ConeVec::zeros(&self.dims(), self.nlin());
        for (blk, data) in out.psd.iter_mut().zip(&self.psd) {
            for (v, entries) in &data.cols {
                let xv = x[*v];
                if xv == T::zero() {
                    continue;
                }
                for &(i, j, k) in entries {
                    blk[(i, j)] -= k * xv;
                    if i != j {
                        blk[(j, i)] -= k * xv;
                    }
                }
            }
        }
        for (l, row) in self.lin.rows.iter().enumerate() {
            out.lin[l] = -row.iter().fold(T::zero(), |acc, &(v, k)| acc + k * x[v]);
        }
        out
    }

    /// `G' z`
    pub fn gt_mul(&self, z: &ConeVec<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.m);
        for (blk, data) in z.psd.iter().zip(&self.psd) {
            for (v, entries) in &data.cols {
                let mut acc = T::zero();
                for &(i, j, k) in entries {
                    acc += if i == j { k * blk[(i, i)] } else { k * (blk[(i, j)] + blk[(j, i)]) };
                }
                out[*v] -= acc;
            }
        }
        for (l, row) in self.lin.rows.iter().enumerate() {
            for &(v, k) in row {
                out[v] -= k * z.lin[l];
            }
        }
        out
    }

    /// True when no two variables share a block, so `G'H^{-1}G` is diagonal.
    pub fn diagonal_schur(&self) -> bool {
        self.psd.iter().all(|b| b.cols.len() <= 1) && self.lin.rows.iter().all(|r| r.len() <= 1)
    }
}

/// Nesterov–Todd scaling of one PSD block: `W z = R' z R`, `W^{-T} s = R^{-1} s R^{-T}`,
/// both equal to `diag(lambda)`.
#[derive(Debug, Clone)]
pub(super) struct PsdScaling<T: RealField> {
    pub r: DMatrix<T>,
    pub lambda: DVector<T>,
    /// `(R R')^{-1}`, so that `H^{-1} X = P X P`.
    pub p: DMatrix<T>,
}

#[derive(Debug, Clone)]
pub(super) struct Scaling<T: RealField> {
    pub psd: Vec<PsdScaling<T>>,
    pub w: DVector<T>,
    pub lambda_lin: DVector<T>,
}

fn factor<T: RealField + Copy>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Some(ch.l());
    }
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&e| e <= T::zero()) {
        return None;
    }
    let sq = eig.eigenvalues.map(|e| e.sqrt());
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&sq))
}

impl<T: RealField + Copy> Scaling<T> {
    pub fn new(s: &ConeVec<T>, z: &ConeVec<T>) -> Option<Self> {
        let mut psd = Vec::with_capacity(s.psd.len());
        for (sb, zb) in s.psd.iter().zip(&z.psd) {
            let ls = factor(sb)?;
            let lz = factor(zb)?;
            let svd = SVD::new(lz.transpose() * &ls, true, true);
            let u = svd.u?;
            let vt = svd.v_t?;
            let lambda = svd.singular_values;
            if lambda.iter().any(|&l| l.partial_cmp(&T::zero()) != Some(Ordering::Greater)) {
                return None;
            }
            let isq = lambda.map(|l| T::one() / l.sqrt());
            let r = &ls * vt.transpose() * DMatrix::from_diagonal(&isq);
            let rinv_t = &lz * &u * DMatrix::from_diagonal(&isq);
            let p = &rinv_t * rinv_t.transpose();
            psd.push(PsdScaling { r, lambda, p });
        }
        if s.lin.iter().chain(z.lin.iter()).any(|&v| v.partial_cmp(&T::zero()) != Some(Ordering::Greater)) {
            return None;
        }
        let w = s.lin.zip_map(&z.lin, |a, b| (a / b).sqrt());
        let lambda_lin = s.lin.zip_map(&z.lin, |a, b| (a * b).sqrt());
        Some(Self { psd, w, lambda_lin })
    }

    /// `W dz`
    pub fn scale_z(&self, dz: &ConeVec<T>) -> ConeVec<T> {
        ConeVec {
            psd: self.psd.iter().zip(&dz.psd).map(|(sc, d)| sc.r.transpose() * d * &sc.r).collect(),
            lin: dz.lin.component_mul(&self.w),
        }
    }

    /// `W' u`
    pub fn scale_t(&self, u: &ConeVec<T>) -> ConeVec<T> {
        ConeVec {
            psd: self.psd.iter().zip(&u.psd).map(|(sc, d)| &sc.r * d * sc.r.transpose()).collect(),
            lin: u.lin.component_mul(&self.w),
        }
    }

    /// `H^{-1} v` with `H = W'W`.
    pub fn hinv(&self, v: &ConeVec<T>) -> ConeVec<T> {
        ConeVec {
            psd: self.psd.iter().zip(&v.psd).map(|(sc, d)| &sc.p * d * &sc.p).collect(),
            lin: v.lin.zip_map(&self.w, |a, w| a / (w * w)),
        }
    }

    pub fn lambda(&self) -> ConeVec<T> {
        ConeVec {
            psd: self.psd.iter().map(|sc| DMatrix::from_diagonal(&sc.lambda)).collect(),
            lin: self.lambda_lin.clone(),
        }
    }

    /// Solves `lambda o u = v` for `u`.
    pub fn lambda_div(&self, v: &ConeVec<T>) -> ConeVec<T> {
        let two: T = cst(2.0);
        ConeVec {
            psd: self
                .psd
                .iter()
                .zip(&v.psd)
                .map(|(sc, d)| {
                    DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| two * d[(i, j)] / (sc.lambda[i] + sc.lambda[j]))
                })
                .collect(),
            lin: v.lin.component_div(&self.lambda_lin),
        }
    }

    /// Largest `t` with `lambda + t d` in the cone (`None` = unbounded).
    pub fn max_step(&self, d: &ConeVec<T>) -> Option<T> {
        let mut best: Option<T> = None;
        let mut upd = |t: T| best = Some(best.map_or(t, |b: T| b.min(t)));
        for (sc, dm) in self.psd.iter().zip(&d.psd) {
            let isq = sc.lambda.map(|l| T::one() / l.sqrt());
            let scaled = DMatrix::from_fn(dm.nrows(), dm.ncols(), |i, j| dm[(i, j)] * isq[i] * isq[j]);
            let sym = (&scaled + scaled.transpose()) * cst::<T>(0.5);
            let rho = SymmetricEigen::new(sym).eigenvalues.min();
            if rho < T::zero() {
                upd(-T::one() / rho);
            }
        }
        for (l, dl) in self.lambda_lin.iter().zip(d.lin.iter()) {
            if *dl < T::zero() {
                upd(-*l / *dl);
            }
        }
        best
    }
}
