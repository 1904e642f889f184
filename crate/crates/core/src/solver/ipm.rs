//! Mehrotra predictor–corrector iterations on the homogeneous self-dual
//! embedding, with Nesterov–Todd scaling.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, RealField};

use super::cone::{cst, BlockRef, Compiled, ConeVec, Scaling};
use super::{BlockValue, ConicProblem, Settings, Solution, Status};
use crate::error::{Error, Result};

const STEP: f64 = 0.99;
const REFINE: usize = 3;

/// Schur complement `G' H^{-1} G`.
fn schur<T: RealField + Copy>(cp: &Compiled<T>, sc: &Scaling<T>) -> DMatrix<T> {
    let m = cp.m;
    let mut out = DMatrix::zeros(m, m);
    let two: T = cst(2.0);
    for (data, scb) in cp.psd.iter().zip(&sc.psd) {
        let n = data.dim;
        let p = &scb.p;
        let mut y = DMatrix::<T>::zeros(n, n);
        for (ii, (vi, ent_i)) in data.cols.iter().enumerate() {
            // y = P F_i P
            if ent_i.len() > 2 * n {
                let mut f = DMatrix::<T>::zeros(n, n);
                for &(r, s, k) in ent_i {
                    f[(r, s)] = k;
                    f[(s, r)] = k;
                }
                y = p * f * p;
            } else {
                y.fill(T::zero());
                for &(r, s, k) in ent_i {
                    y.ger(k, &p.column(r), &p.column(s), T::one());
                    if r != s {
                        y.ger(k, &p.column(s), &p.column(r), T::one());
                    }
                }
            }
            for (vj, ent_j) in &data.cols[ii..] {
                let mut val = T::zero();
                for &(r, s, k) in ent_j {
                    val += if r == s { k * y[(r, r)] } else { two * k * y[(r, s)] };
                }
                out[(*vi, *vj)] += val;
                if vi != vj {
                    out[(*vj, *vi)] += val;
                }
            }
        }
    }
    for (l, row) in cp.lin.rows.iter().enumerate() {
        let w2 = sc.w[l] * sc.w[l];
        for &(vi, ki) in row {
            for &(vj, kj) in row {
                out[(vi, vj)] += ki * kj / w2;
            }
        }
    }
    out
}

fn chol_regularized<T: RealField + Copy>(mut m: DMatrix<T>) -> Option<Cholesky<T, Dyn>> {
    let scale = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(T::one(), |a, b| a.max(b));
    let mut delta = T::zero();
    for _ in 0..8 {
        if let Some(ch) = Cholesky::new(m.clone()) {
            return Some(ch);
        }
        let next = if delta == T::zero() { cst::<T>(1e-14) * scale } else { delta * cst::<T>(100.0) };
        for i in 0..m.nrows() {
            m[(i, i)] += next - delta;
        }
        delta = next;
    }
    None
}

enum Factor<T: RealField> {
    Plain(Cholesky<T, Dyn>),
    Diag { d: DVector<T>, s2: Cholesky<T, Dyn> },
    Aug { k1: Cholesky<T, Dyn>, s2: Cholesky<T, Dyn> },
}

struct Kkt<'a, T: RealField> {
    cp: &'a Compiled<T>,
    sc: &'a Scaling<T>,
    factor: Factor<T>,
}

impl<'a, T: RealField + Copy> Kkt<'a, T> {
    fn new(cp: &'a Compiled<T>, sc: &'a Scaling<T>) -> Option<Self> {
        let m = schur(cp, sc);
        let p = cp.a.nrows();
        let factor = if p == 0 {
            Factor::Plain(chol_regularized(m)?)
        } else if cp.diagonal_schur() && (0..cp.m).all(|i| m[(i, i)] > T::zero()) {
            let d = m.diagonal();
            let mut ad = cp.a.clone();
            for (j, mut col) in ad.column_iter_mut().enumerate() {
                col /= d[j];
            }
            let s2 = &ad * cp.a.transpose();
            Factor::Diag { d, s2: chol_regularized(s2)? }
        } else {
            let k1 = chol_regularized(m + cp.a.transpose() * &cp.a)?;
            let kat = k1.solve(&cp.a.transpose());
            let s2 = &cp.a * kat;
            Factor::Aug { k1, s2: chol_regularized(s2)? }
        };
        Some(Self { cp, sc, factor })
    }

    fn solve_once(&self, bx: &DVector<T>, by: &DVector<T>, bz: &ConeVec<T>) -> (DVector<T>, DVector<T>, ConeVec<T>) {
        let cp = self.cp;
        let r = bx + cp.gt_mul(&self.sc.hinv(bz));
        let (dx, dy) = match &self.factor {
            Factor::Plain(ch) => (ch.solve(&r), DVector::zeros(0)),
            Factor::Diag { d, s2 } => {
                let dr = r.component_div(d);
                let dy = s2.solve(&(&cp.a * dr - by));
                let dx = (r - cp.a.transpose() * &dy).component_div(d);
                (dx, dy)
            }
            Factor::Aug { k1, s2 } => {
                let r2 = r + cp.a.transpose() * by;
                let dy = s2.solve(&(&cp.a * k1.solve(&r2) - by));
                let dx = k1.solve(&(r2 - cp.a.transpose() * &dy));
                (dx, dy)
            }
        };
        let mut gx = cp.g_mul(&dx);
        gx.axpy(-T::one(), bz);
        let dz = self.sc.hinv(&gx);
        (dx, dy, dz)
    }

    /// Solves `[0 A' G'; A 0 0; G 0 -H] (dx, dy, dz) = (bx, by, bz)` with one
    /// step of iterative refinement.
    fn solve(&self, bx: &DVector<T>, by: &DVector<T>, bz: &ConeVec<T>) -> (DVector<T>, DVector<T>, ConeVec<T>) {
        let cp = self.cp;
        let (mut dx, mut dy, mut dz) = self.solve_once(bx, by, bz);
        for _ in 0..REFINE {
            let e1 = bx - (cp.a.transpose() * &dy + cp.gt_mul(&dz));
            let e2 = by - &cp.a * &dx;
            let mut e3 = bz.clone();
            e3.axpy(-T::one(), &cp.g_mul(&dx));
            e3.axpy(T::one(), &self.sc.scale_t(&self.sc.scale_z(&dz)));
            let (cx, cy, cz) = self.solve_once(&e1, &e2, &e3);
            dx += cx;
            dy += cy;
            dz.axpy(T::one(), &cz);
        }
        (dx, dy, dz)
    }
}

struct Direction<T: RealField> {
    dx: DVector<T>,
    dy: DVector<T>,
    dz: ConeVec<T>,
    ds: ConeVec<T>,
    dtau: T,
    dkappa: T,
    /// Scaled directions `W dz` and `W^{-T} ds`.
    dz_s: ConeVec<T>,
    ds_s: ConeVec<T>,
}

#[derive(Clone)]
struct Point<T: RealField> {
    x: DVector<T>,
    y: DVector<T>,
    z: ConeVec<T>,
    s: ConeVec<T>,
    tau: T,
    kappa: T,
}

/// Solves the conic program. Structural problems are errors; numerical
/// outcomes (including infeasibility) are reported through [`Status`].
pub fn solve<T: RealField + Copy>(problem: &ConicProblem<T>, settings: &Settings) -> Result<Solution<T>> {
    problem.check()?;
    let cp = Compiled::new(problem);
    if cp.degree() == 0 {
        return Err(Error::Problem("no cone constraints".into()));
    }
    let dims = cp.dims();
    let nlin = cp.nlin();
    let nu: T = nalgebra::convert(cp.degree() as f64);
    let h = cp.h();
    let feas_tol: T = cst(settings.feas_tol);
    let abs_tol: T = cst(settings.abs_tol);
    let rel_tol: T = cst(settings.rel_tol);

    let resx0 = T::one().max(cp.c.norm());
    let resy0 = T::one().max(cp.b.norm());
    let resz0 = T::one().max(h.norm());

    // initial point from two least-squares solves with identity scaling
    let ones = ConeVec::identity(&dims, nlin);
    let unit = Scaling::new(&ones, &ones).expect("identity scaling");
    let kkt0 = Kkt::new(&cp, &unit).ok_or_else(|| Error::Solver("singular initial KKT system".into()))?;
    let (x, _, zp) = kkt0.solve(&DVector::zeros(cp.m), &cp.b, &h);
    let mut s = zp;
    s.scale(-T::one());
    let (_, y, mut z) = kkt0.solve(&(-&cp.c), &DVector::zeros(cp.b.len()), &ConeVec::zeros(&dims, nlin));
    s.symmetrize();
    z.symmetrize();
    for v in [&mut s, &mut z] {
        let alpha = -v.min_eig();
        if alpha >= T::zero() {
            v.axpy(T::one() + alpha, &ones);
        }
    }
    let mut pt = Point { x, y, z, s, tau: T::one(), kappa: T::one() };

    let mut status = Status::MaxIterations;
    let mut iterations = 0;
    let mut gap_out = T::zero();
    let mut pres_out = T::zero();
    let mut dres_out = T::zero();
    let mut small_steps = 0;
    // iterate with the smallest worst-case residual, returned if progress stalls
    let mut best: Option<(T, Point<T>, T, T, T, bool)> = None;

    for iter in 0..=settings.max_iterations {
        iterations = iter;
        let hx = cp.a.transpose() * &pt.y + cp.gt_mul(&pt.z);
        let rx = &hx + &cp.c * pt.tau;
        let ax = &cp.a * &pt.x;
        let ry = &ax - &cp.b * pt.tau;
        let mut gxs = cp.g_mul(&pt.x);
        gxs.axpy(T::one(), &pt.s);
        let mut rz = gxs.clone();
        rz.axpy(-pt.tau, &h);
        let cx = cp.c.dot(&pt.x);
        let by = cp.b.dot(&pt.y);
        let hz = h.dot(&pt.z);
        let rt = pt.kappa + cx + by + hz;
        let sz = pt.s.dot(&pt.z);
        let mu = (sz + pt.tau * pt.kappa) / (nu + T::one());

        let pcost = cx / pt.tau;
        let dcost = -(by + hz) / pt.tau;
        let gap = sz / (pt.tau * pt.tau);
        let pres = (ry.norm() / pt.tau / resy0).max(rz.norm() / pt.tau / resz0);
        let dres = rx.norm() / pt.tau / resx0;
        let relgap = if pcost < T::zero() {
            Some(gap / -pcost)
        } else if dcost > T::zero() {
            Some(gap / dcost)
        } else {
            None
        };
        gap_out = gap;
        pres_out = pres;
        dres_out = dres;
        if settings.verbose {
            eprintln!(
                "{iter:3} pcost {:+.9e} dcost {:+.9e} gap {:.2e} pres {:.2e} dres {:.2e} tau {:.2e} kappa {:.2e}",
                to_f64(pcost),
                to_f64(dcost),
                to_f64(gap),
                to_f64(pres),
                to_f64(dres),
                to_f64(pt.tau),
                to_f64(pt.kappa)
            );
        }
        let score = pres.max(dres).max(relgap.unwrap_or(gap).min(gap));
        if best.as_ref().is_none_or(|b| score < b.0) {
            let f = cst::<T>(settings.stall_factor);
            let close = pres <= f * feas_tol
                && dres <= f * feas_tol
                && (gap <= f * abs_tol || relgap.is_some_and(|r| r <= f * rel_tol));
            best = Some((score, pt.clone(), gap, pres, dres, close));
        }
        if pres <= feas_tol && dres <= feas_tol && (gap <= abs_tol || relgap.is_some_and(|r| r <= rel_tol)) {
            status = Status::Optimal;
            break;
        }
        if by + hz < T::zero() {
            let pinf = hx.norm() / resx0 / -(by + hz);
            if pinf <= feas_tol {
                status = Status::Infeasible;
                break;
            }
        }
        if cx < T::zero() {
            let dinf = (ax.norm() / resy0).max(gxs.norm() / resz0) / -cx;
            if dinf <= feas_tol {
                status = Status::Unbounded;
                break;
            }
        }
        if iter == settings.max_iterations {
            break;
        }

        let Some(sc) = Scaling::new(&pt.s, &pt.z) else { break };
        let Some(kkt) = Kkt::new(&cp, &sc) else { break };
        let lambda = sc.lambda();
        let lambda_sq = lambda.circ(&lambda);

        let (x1, y1, z1) = kkt.solve(&(-&cp.c), &cp.b, &h);
        let z1s = sc.scale_z(&z1);
        let denom = -z1s.dot(&z1s) - pt.kappa / pt.tau;

        let direction = |sigma: T, ds_rhs: &ConeVec<T>, dk: T| -> Direction<T> {
            let f = T::one() - sigma;
            let mut bz = rz.clone();
            bz.scale(-f);
            bz.axpy(T::one(), &sc.scale_t(&sc.lambda_div(ds_rhs)));
            let (dx0, dy0, dz0) = kkt.solve(&(&rx * -f), &(&ry * -f), &bz);
            let q0 = cp.c.dot(&dx0) + cp.b.dot(&dy0) + h.dot(&dz0);
            let dtau = (-f * rt + dk / pt.tau - q0) / denom;
            let dx = dx0 + &x1 * dtau;
            let dy = dy0 + &y1 * dtau;
            let mut dz = dz0;
            dz.axpy(dtau, &z1);
            let dz_s = sc.scale_z(&dz);
            let mut ds_s = sc.lambda_div(ds_rhs);
            ds_s.scale(-T::one());
            ds_s.axpy(-T::one(), &dz_s);
            let ds = sc.scale_t(&ds_s);
            let dkappa = -(dk + pt.kappa * dtau) / pt.tau;
            Direction { dx, dy, dz, ds, dtau, dkappa, dz_s, ds_s }
        };
        let max_step = |d: &Direction<T>| -> T {
            let mut t = T::max_value().unwrap();
            if let Some(a) = sc.max_step(&d.ds_s) {
                t = t.min(a);
            }
            if let Some(a) = sc.max_step(&d.dz_s) {
                t = t.min(a);
            }
            if d.dtau < T::zero() {
                t = t.min(-pt.tau / d.dtau);
            }
            if d.dkappa < T::zero() {
                t = t.min(-pt.kappa / d.dkappa);
            }
            t
        };

        // predictor
        let aff = direction(T::zero(), &lambda_sq, pt.tau * pt.kappa);
        let alpha_aff = T::one().min(max_step(&aff));
        let sigma = (T::one() - alpha_aff).powi(3);

        // corrector
        let mut ds_rhs = lambda_sq.clone();
        ds_rhs.axpy(-sigma * mu, &ConeVec::identity(&dims, nlin));
        ds_rhs.axpy(T::one(), &aff.ds_s.circ(&aff.dz_s));
        let dk = pt.tau * pt.kappa - sigma * mu + aff.dtau * aff.dkappa;
        let dir = direction(sigma, &ds_rhs, dk);
        let alpha = T::one().min(cst::<T>(STEP) * max_step(&dir));

        pt.x.axpy(alpha, &dir.dx, T::one());
        pt.y.axpy(alpha, &dir.dy, T::one());
        pt.z.axpy(alpha, &dir.dz);
        pt.s.axpy(alpha, &dir.ds);
        pt.z.symmetrize();
        pt.s.symmetrize();
        pt.tau += alpha * dir.dtau;
        pt.kappa += alpha * dir.dkappa;

        if alpha < cst(1e-10) {
            small_steps += 1;
            if small_steps >= 3 {
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    if status == Status::MaxIterations {
        if let Some((_, p, g, pr, dr, close)) = best {
            if close {
                status = Status::Optimal;
            }
            pt = p;
            gap_out = g;
            pres_out = pr;
            dres_out = dr;
        }
    }
    Ok(finish(&cp, &pt, status, gap_out, pres_out, dres_out, iterations, problem.is_maximization()))
}

fn to_f64<T: RealField + Copy>(v: T) -> f64 {
    nalgebra::try_convert::<T, f64>(v).unwrap_or(f64::NAN)
}

#[allow(clippy::too_many_arguments)]
fn finish<T: RealField + Copy>(
    cp: &Compiled<T>,
    pt: &Point<T>,
    status: Status,
    gap: T,
    pres: T,
    dres: T,
    iterations: usize,
    maximize: bool,
) -> Solution<T> {
    let inv = T::one() / pt.tau;
    let values: Vec<T> = pt.x.iter().map(|&v| v * inv).collect();
    let sign = if maximize { -T::one() } else { T::one() };
    let objective = sign * (cp.c0 + cp.c.dot(&pt.x) * inv);
    let dual_objective = sign * (cp.c0 - (cp.b.dot(&pt.y) + cp.h().dot(&pt.z)) * inv);
    let mut blocks = Vec::with_capacity(cp.blocks.len());
    let mut duals = Vec::with_capacity(cp.blocks.len());
    for b in &cp.blocks {
        match *b {
            BlockRef::Psd(i) => {
                blocks.push(BlockValue::Matrix(&pt.s.psd[i] * inv));
                duals.push(Some(BlockValue::Matrix(&pt.z.psd[i] * inv)));
            }
            BlockRef::Lin(i) => {
                blocks.push(BlockValue::Scalar(pt.s.lin[i] * inv));
                duals.push(Some(BlockValue::Scalar(pt.z.lin[i] * inv)));
            }
            BlockRef::Free(i) => {
                blocks.push(BlockValue::Scalar(cp.free[i].eval(&values)));
                duals.push(None);
            }
        }
    }
    Solution {
        status,
        objective,
        dual_objective,
        values,
        blocks,
        duals,
        gap,
        primal_residual: pres,
        dual_residual: dres,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use approx::assert_relative_eq;

    fn opt() -> Settings {
        Settings::default()
    }

    #[test]
    fn largest_eigenvalue_of_flip() {
        // minimize t s.t. t I - [[0,1],[1,0]] PSD
        let mut p = ConicProblem::<f64>::new();
        let t = p.add_var();
        p.minimize(LinExpr::var(t));
        p.add_psd(2, vec![(0, 0, LinExpr::var(t)), (0, 1, LinExpr::constant(-1.0)), (1, 1, LinExpr::var(t))]);
        let sol = solve(&p, &opt()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert_relative_eq!(sol.objective, 1.0, epsilon = 1e-8);
        assert_relative_eq!(sol.values[0], 1.0, epsilon = 1e-8);
        assert!((sol.objective - sol.dual_objective).abs() < 1e-7);
    }

    #[test]
    fn small_lp_with_equalities() {
        // max x + 2y s.t. x + y = 1, x, y >= 0  -> 2
        let mut p = ConicProblem::<f64>::new();
        let x = p.add_var();
        let y = p.add_var();
        p.maximize(LinExpr::var(x).plus(y, 2.0));
        p.add_equality(LinExpr::var(x).plus(y, 1.0).plus_constant(-1.0));
        p.add_nonneg(LinExpr::var(x));
        p.add_nonneg(LinExpr::var(y));
        let sol = solve(&p, &opt()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert_relative_eq!(sol.objective, 2.0, epsilon = 1e-8);
        assert_relative_eq!(sol.values[1], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn mixed_lp_takes_augmented_path() {
        // min x + y s.t. x + y >= 1 (shared block), x - y = 0.2 -> 1
        let mut p = ConicProblem::<f64>::new();
        let x = p.add_var();
        let y = p.add_var();
        p.minimize(LinExpr::var(x).plus(y, 1.0));
        p.add_nonneg(LinExpr::var(x).plus(y, 1.0).plus_constant(-1.0));
        p.add_equality(LinExpr::var(x).plus(y, -1.0).plus_constant(-0.2));
        let sol = solve(&p, &opt()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert_relative_eq!(sol.values[0], 0.6, epsilon = 1e-7);
        assert_relative_eq!(sol.values[1], 0.4, epsilon = 1e-7);
    }

    #[test]
    fn infeasible_lp_is_reported() {
        // x >= 1 and x <= -1
        let mut p = ConicProblem::<f64>::new();
        let x = p.add_var();
        p.minimize(LinExpr::var(x));
        p.add_nonneg(LinExpr::var(x).plus_constant(-1.0));
        p.add_nonneg(LinExpr::term(x, -1.0).plus_constant(-1.0));
        assert_eq!(solve(&p, &opt()).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn unbounded_lp_is_reported() {
        let mut p = ConicProblem::<f64>::new();
        let x = p.add_var();
        p.minimize(LinExpr::var(x));
        p.add_nonneg(LinExpr::term(x, -1.0).plus_constant(1.0));
        assert_eq!(solve(&p, &opt()).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn infeasible_sdp_is_reported() {
        // [[x, 1],[1, -x]] PSD is impossible
        let mut p = ConicProblem::<f64>::new();
        let x = p.add_var();
        p.minimize(LinExpr::var(x));
        p.add_psd(2, vec![(0, 0, LinExpr::var(x)), (0, 1, LinExpr::constant(1.0)), (1, 1, LinExpr::term(x, -1.0))]);
        assert_eq!(solve(&p, &opt()).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn single_precision_solve() {
        let mut p = ConicProblem::<f32>::new();
        let t = p.add_var();
        p.minimize(LinExpr::var(t));
        p.add_psd(2, vec![(0, 0, LinExpr::var(t)), (0, 1, LinExpr::constant(-1.0)), (1, 1, LinExpr::var(t))]);
        let sol = solve(&p, &Settings { abs_tol: 1e-4, rel_tol: 1e-4, feas_tol: 1e-4, ..Settings::default() }).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-3);
    }

    #[test]
    fn structural_errors() {
        let mut p = ConicProblem::<f64>::new();
        let x = p.add_var();
        let _unused = p.add_var();
        p.minimize(LinExpr::var(x));
        p.add_nonneg(LinExpr::var(x));
        assert!(solve(&p, &opt()).is_err());

        let mut q = ConicProblem::<f64>::new();
        let x = q.add_var();
        q.add_psd(2, vec![(1, 0, LinExpr::var(x))]);
        assert!(q.check().is_err());
    }

    #[test]
    fn free_block_reports_value() {
        let mut p = ConicProblem::<f64>::new();
        let x = p.add_var();
        p.minimize(LinExpr::var(x));
        p.add_nonneg(LinExpr::var(x).plus_constant(-2.0));
        let b = p.add_block(Block::Free(LinExpr::term(x, 3.0)));
        let sol = solve(&p, &opt()).unwrap();
        assert_relative_eq!(sol.blocks[b].scalar().unwrap(), 6.0, epsilon = 1e-7);
    }
}
