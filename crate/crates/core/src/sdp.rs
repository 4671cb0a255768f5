//! Small dense semidefinite feasibility solver.
//!
//! A problem asks for parameters `y` with `E y = b` making every block
//! `C_i + Σ_j y_j A_ij` positive semidefinite, and maximizes the margin `t`
//! with every block `⪰ t I` (capped at `margin_cap`). Equalities are removed
//! by an SVD parametrization `y = y0 + N z`; the remaining problem
//!
//! ```text
//! maximize t  s.t.  S(z, t) = C' + Σ_l z_l F_l - t I ⪰ 0,  cap - t >= 0
//! ```
//!
//! is solved by an infeasible primal-dual path-following method with the
//! HKM search direction and Mehrotra's predictor-corrector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SdpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NonSymmetric(f64),
}

/// Affine block `C + Σ y_j A_j`, with the `A_j` stored sparsely by parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpBlock {
    pub c: DMatrix<f64>,
    pub a: Vec<(usize, DMatrix<f64>)>,
}

impl SdpBlock {
    pub fn size(&self) -> usize {
        self.c.nrows()
    }

    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = self.c.clone();
        for (j, a) in &self.a {
            m += a * y[*j];
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub m: usize,
    pub blocks: Vec<SdpBlock>,
    /// Rows `(a, b)` meaning `a·y = b`.
    pub equalities: Vec<(Vec<f64>, f64)>,
    pub margin_cap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdpOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub tol_margin: f64,
    pub step: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-12,
            tol_margin: 1e-7,
            step: 0.95,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    MaxIterations,
}

/// Why a problem is infeasible.
#[derive(Clone, Debug, PartialEq)]
pub enum InfeasibilityCertificate {
    /// `u` with `Eᵀu = 0` and `bᵀu > 0`.
    Equalities { u: Vec<f64> },
    /// A PSD `X` (one matrix per block plus the cap entry) feasible for the
    /// dual of the margin problem, whose objective bounds the margin by
    /// `bound < 0`.
    Psd { x: Vec<DMatrix<f64>>, bound: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    pub y: Vec<f64>,
    /// Smallest eigenvalue over all blocks at `y`.
    pub t: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    /// Max absolute equality residual at `y`.
    pub equality_residual: f64,
    pub certificate: Option<InfeasibilityCertificate>,
}

impl SdpProblem {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            blocks: Vec::new(),
            equalities: Vec::new(),
            margin_cap: 1.0,
        }
    }

    fn check(&self) -> Result<(), SdpError> {
        for (i, b) in self.blocks.iter().enumerate() {
            let s = b.c.nrows();
            if b.c.ncols() != s {
                return Err(SdpError::Dimension(format!("block {i}: C is not square")));
            }
            for (j, a) in &b.a {
                if *j >= self.m || a.nrows() != s || a.ncols() != s {
                    return Err(SdpError::Dimension(format!("block {i}: bad coefficient for parameter {j}")));
                }
            }
        }
        for (r, (a, _)) in self.equalities.iter().enumerate() {
            if a.len() != self.m {
                return Err(SdpError::Dimension(format!("equality {r} has length {}", a.len())));
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue over all blocks at `y`.
    pub fn margin_at(&self, y: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| symmetric_min_eig(&b.eval(y)))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn equality_residual(&self, y: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|(a, b)| (a.iter().zip(y).map(|(u, v)| u * v).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }

    /// Documented JSON form for cross-checking with external solvers.
    pub fn to_json(&self) -> String {
        let dump = Dump {
            format: "stopcert-sdp/1".into(),
            m: self.m,
            margin_cap: self.margin_cap,
            blocks: self
                .blocks
                .iter()
                .map(|b| DumpBlock {
                    size: b.size(),
                    c: rows(&b.c),
                    a: b.a.iter().map(|(j, a)| DumpCoef { param: *j, matrix: rows(a) }).collect(),
                })
                .collect(),
            equalities: self
                .equalities
                .iter()
                .map(|(a, b)| DumpEq { a: a.clone(), b: *b })
                .collect(),
        };
        serde_json::to_string_pretty(&dump).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let d: Dump = serde_json::from_str(text)?;
        let mat = |r: &Vec<Vec<f64>>| DMatrix::from_fn(r.len(), r.len(), |i, j| r[i][j]);
        Ok(SdpProblem {
            m: d.m,
            margin_cap: d.margin_cap,
            blocks: d
                .blocks
                .iter()
                .map(|b| SdpBlock {
                    c: mat(&b.c),
                    a: b.a.iter().map(|c| (c.param, mat(&c.matrix))).collect(),
                })
                .collect(),
            equalities: d.equalities.into_iter().map(|e| (e.a, e.b)).collect(),
        })
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Serialize, Deserialize)]
struct Dump {
    format: String,
    m: usize,
    margin_cap: f64,
    blocks: Vec<DumpBlock>,
    equalities: Vec<DumpEq>,
}

#[derive(Serialize, Deserialize)]
struct DumpBlock {
    size: usize,
    c: Vec<Vec<f64>>,
    a: Vec<DumpCoef>,
}

#[derive(Serialize, Deserialize)]
struct DumpCoef {
    param: usize,
    matrix: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct DumpEq {
    a: Vec<f64>,
    b: f64,
}

fn symmetric_min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64, SdpError> {
    if m.nrows() != m.ncols() {
        return Err(SdpError::Dimension("matrix is not square".into()));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * (1.0 + m.amax()) {
        return Err(SdpError::NonSymmetric(asym));
    }
    Ok(symmetric_min_eig(m))
}

/// `y = y0 + N z` parametrizing `{y : E y = b}`, or a certificate that the
/// equalities are inconsistent.
fn eliminate(p: &SdpProblem) -> Result<(DVector<f64>, DMatrix<f64>), Vec<f64>> {
    let m = p.m;
    let rows = p.equalities.len();
    if rows == 0 {
        return Ok((DVector::zeros(m), DMatrix::identity(m, m)));
    }
    let padded = rows.max(m);
    let mut e = DMatrix::zeros(padded, m);
    let mut b = DVector::zeros(padded);
    for (r, (a, bv)) in p.equalities.iter().enumerate() {
        for (j, v) in a.iter().enumerate() {
            e[(r, j)] = *v;
        }
        b[r] = *bv;
    }
    if m == 0 {
        return if b.amax() > 1e-9 { Err(b.iter().copied().collect()) } else { Ok((DVector::zeros(0), DMatrix::zeros(0, 0))) };
    }
    let svd = e.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u computed");
    let vt = svd.v_t.as_ref().expect("v computed");
    let smax = svd.singular_values.max();
    let cut = 1e-10 * smax.max(1.0);
    let mut y0 = DVector::zeros(m);
    let mut null = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let v = vt.row(i).transpose();
        if s > cut {
            y0 += &v * (u.column(i).dot(&b) / s);
        } else {
            null.push(v);
        }
    }
    let resid = &b - &e * &y0;
    if resid.amax() > 1e-8 * (1.0 + b.amax()) {
        return Err(resid.iter().take(rows).copied().collect());
    }
    let mut n = DMatrix::zeros(m, null.len());
    for (l, v) in null.iter().enumerate() {
        n.set_column(l, v);
    }
    Ok((y0, n))
}

/// Margin problem in the form `max bᵀw s.t. C - Σ w_l G_l ⪰ 0`.
struct Std {
    c: Vec<DMatrix<f64>>,
    g: Vec<Vec<Option<DMatrix<f64>>>>,
    b: DVector<f64>,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Largest `α ≤ 1` with `M + α dM ⪰ 0`, scaled by `frac`.
fn step_length(m: &DMatrix<f64>, dm: &DMatrix<f64>, frac: f64) -> f64 {
    let Some(ch) = m.clone().cholesky() else {
        return 0.0;
    };
    let l = ch.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let w = sym(&linv * dm * linv.transpose());
    let lmin = w.symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        1.0
    } else {
        (frac * (-1.0 / lmin)).min(1.0)
    }
}

struct Ipm {
    x: Vec<DMatrix<f64>>,
    w: DVector<f64>,
    iterations: usize,
    primal_feasible: bool,
    pobj: f64,
}

fn ipm(std: &Std, opts: &SdpOptions) -> Ipm {
    let nb = std.c.len();
    let k = std.b.len();
    let n: usize = std.c.iter().map(|c| c.nrows()).sum();
    let cnorm = std.c.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();
    let gnorm: Vec<f64> = std
        .g
        .iter()
        .map(|gl| gl.iter().flatten().map(|g| g.norm_squared()).sum::<f64>().sqrt())
        .collect();
    let bnorm = std.b.norm();
    let sn = (n as f64).sqrt();
    let mut rx: f64 = 10f64.max(sn);
    for l in 0..k {
        rx = rx.max(sn * (1.0 + std.b[l].abs()) / (1.0 + gnorm[l]));
    }
    let rs = 10f64.max(sn).max(cnorm).max(gnorm.iter().copied().fold(0.0, f64::max));
    let mut x: Vec<DMatrix<f64>> = std.c.iter().map(|c| DMatrix::identity(c.nrows(), c.nrows()) * rx).collect();
    let mut s: Vec<DMatrix<f64>> = std.c.iter().map(|c| DMatrix::identity(c.nrows(), c.nrows()) * rs).collect();
    let mut w = DVector::zeros(k);
    let mut iterations = 0;
    let mut pinf = f64::INFINITY;

    let gsum = |w: &DVector<f64>, i: usize| {
        let mut acc = DMatrix::zeros(std.c[i].nrows(), std.c[i].nrows());
        for l in 0..k {
            if let Some(g) = &std.g[l][i] {
                acc += g * w[l];
            }
        }
        acc
    };

    while iterations < opts.max_iters {
        let rd: Vec<DMatrix<f64>> = (0..nb).map(|i| &std.c[i] - &s[i] - gsum(&w, i)).collect();
        let rp: DVector<f64> = DVector::from_fn(k, |l, _| {
            std.b[l] - (0..nb).filter_map(|i| std.g[l][i].as_ref().map(|g| inner(g, &x[i]))).sum::<f64>()
        });
        let mu = (0..nb).map(|i| inner(&x[i], &s[i])).sum::<f64>() / n as f64;
        let pobj: f64 = (0..nb).map(|i| inner(&std.c[i], &x[i])).sum();
        let dobj = std.b.dot(&w);
        pinf = rp.norm() / (1.0 + bnorm);
        let dinf = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + cnorm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if pinf < opts.tol && dinf < opts.tol && gap < opts.tol {
            break;
        }
        let Some(sinv) = s.iter().map(spd_inverse).collect::<Option<Vec<_>>>() else {
            break;
        };
        // Schur complement M_kl = Σ_i tr(G_ki X_i G_li S_i^-1).
        let mut mmat = DMatrix::zeros(k, k);
        let mut xg: Vec<Vec<Option<DMatrix<f64>>>> = vec![vec![None; nb]; k];
        for l in 0..k {
            for i in 0..nb {
                if let Some(g) = &std.g[l][i] {
                    xg[l][i] = Some(&x[i] * g * &sinv[i]);
                }
            }
        }
        for a in 0..k {
            for bb in a..k {
                let mut v = 0.0;
                for i in 0..nb {
                    if let (Some(p), Some(g)) = (&xg[a][i], &std.g[bb][i]) {
                        v += inner(p, g);
                    }
                }
                mmat[(a, bb)] = v;
                mmat[(bb, a)] = v;
            }
        }
        let diag_max = (0..k).map(|i| mmat[(i, i)].abs()).fold(0.0, f64::max);
        let chol = mmat.clone().cholesky().or_else(|| {
            let mut reg = mmat.clone();
            for i in 0..k {
                reg[(i, i)] += 1e-14 * diag_max.max(1e-300);
            }
            reg.cholesky()
        });
        let solve = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
            match &chol {
                Some(c) => Some(c.solve(rhs)),
                None => mmat.clone().lu().solve(rhs),
            }
        };
        let xrd: Vec<DMatrix<f64>> = (0..nb).map(|i| &x[i] * &rd[i] * &sinv[i]).collect();

        let direction = |sigma_mu: f64, corr: Option<&Vec<DMatrix<f64>>>| {
            let rhs = DVector::from_fn(k, |l, _| {
                let mut v = std.b[l];
                for i in 0..nb {
                    if let Some(g) = &std.g[l][i] {
                        v -= sigma_mu * inner(g, &sinv[i]);
                        v += inner(g, &xrd[i]);
                        if let Some(c) = corr {
                            v += inner(g, &c[i]);
                        }
                    }
                }
                v
            });
            let dw = solve(&rhs)?;
            let ds: Vec<DMatrix<f64>> = (0..nb).map(|i| &rd[i] - gsum(&dw, i)).collect();
            let dx: Vec<DMatrix<f64>> = (0..nb)
                .map(|i| {
                    let mut d = &sinv[i] * sigma_mu - &x[i] - &x[i] * &ds[i] * &sinv[i];
                    if let Some(c) = corr {
                        d -= &c[i];
                    }
                    sym(d)
                })
                .collect();
            Some((dw, dx, ds))
        };

        let Some((_, dxa, dsa)) = direction(0.0, None) else {
            break;
        };
        let ap = (0..nb).map(|i| step_length(&x[i], &dxa[i], 1.0)).fold(1.0, f64::min);
        let ad = (0..nb).map(|i| step_length(&s[i], &dsa[i], 1.0)).fold(1.0, f64::min);
        let mu_aff = (0..nb)
            .map(|i| inner(&(&x[i] + &dxa[i] * ap), &(&s[i] + &dsa[i] * ad)))
            .sum::<f64>()
            / n as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let corr: Vec<DMatrix<f64>> = (0..nb).map(|i| &dxa[i] * &dsa[i] * &sinv[i]).collect();
        let Some((dw, dx, ds)) = direction(sigma * mu, Some(&corr)) else {
            break;
        };
        let ap = (0..nb).map(|i| step_length(&x[i], &dx[i], opts.step)).fold(1.0, f64::min);
        let ad = (0..nb).map(|i| step_length(&s[i], &ds[i], opts.step)).fold(1.0, f64::min);
        for i in 0..nb {
            x[i] += &dx[i] * ap;
            s[i] += &ds[i] * ad;
        }
        w += &dw * ad;
        iterations += 1;
        if ap == 0.0 && ad == 0.0 {
            break;
        }
    }
    let pobj: f64 = (0..nb).map(|i| inner(&std.c[i], &x[i])).sum();
    Ipm {
        x,
        w,
        iterations,
        primal_feasible: pinf < 1e-6,
        pobj,
    }
}

/// Solves the margin problem.
pub fn solve(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
    p.check()?;
    let (y0, nmat) = match eliminate(p) {
        Ok(v) => v,
        Err(u) => {
            return Ok(SdpSolution {
                y: vec![0.0; p.m],
                t: f64::NEG_INFINITY,
                status: SdpStatus::Infeasible,
                iterations: 0,
                equality_residual: f64::INFINITY,
                certificate: Some(InfeasibilityCertificate::Equalities { u }),
            })
        }
    };
    let nz = nmat.ncols();
    let y0v: Vec<f64> = y0.iter().copied().collect();

    // Reduced blocks C' = C + Σ y0_j A_j and F_l = Σ_j N_jl A_j, plus the cap.
    let mut c = Vec::new();
    let mut g: Vec<Vec<Option<DMatrix<f64>>>> = vec![Vec::new(); nz + 1];
    for blk in &p.blocks {
        let s = blk.size();
        c.push(blk.eval(&y0v));
        let mut f: Vec<Option<DMatrix<f64>>> = vec![None; nz];
        for (j, a) in &blk.a {
            for l in 0..nz {
                let coef = nmat[(*j, l)];
                if coef != 0.0 {
                    let e = f[l].get_or_insert_with(|| DMatrix::zeros(s, s));
                    *e += a * coef;
                }
            }
        }
        for (l, fl) in f.into_iter().enumerate() {
            g[l].push(fl.map(|m| -m));
        }
        g[nz].push(Some(DMatrix::identity(s, s)));
    }
    c.push(DMatrix::from_element(1, 1, p.margin_cap));
    for gl in g.iter_mut().take(nz) {
        gl.push(None);
    }
    g[nz].push(Some(DMatrix::from_element(1, 1, 1.0)));
    let mut b = DVector::zeros(nz + 1);
    b[nz] = 1.0;
    let std = Std { c, g, b };

    let run = ipm(&std, opts);
    let z = run.w.rows(0, nz).into_owned();
    let y: Vec<f64> = (&y0 + &nmat * &z).iter().copied().collect();
    let margin = p.margin_at(&y).min(p.margin_cap);
    let equality_residual = p.equality_residual(&y);
    let (status, certificate) = if margin >= -opts.tol_margin && equality_residual <= 1e-8 {
        (SdpStatus::Feasible, None)
    } else if run.primal_feasible && run.pobj < -opts.tol_margin {
        (
            SdpStatus::Infeasible,
            Some(InfeasibilityCertificate::Psd {
                x: run.x,
                bound: run.pobj,
            }),
        )
    } else {
        (SdpStatus::MaxIterations, None)
    };
    Ok(SdpSolution {
        y,
        t: margin,
        status,
        iterations: run.iterations,
        equality_residual,
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn half_problem(c: f64) -> SdpProblem {
        let mut p = SdpProblem::new(1);
        p.blocks.push(SdpBlock {
            c: scalar(0.0),
            a: vec![(0, scalar(c))],
        });
        p.blocks.push(SdpBlock {
            c: scalar(c),
            a: vec![(0, scalar(-c))],
        });
        p
    }

    #[test]
    fn min_eigenvalues() {
        assert!((min_eigenvalue(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-12);
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -3.0]);
        assert!((min_eigenvalue(&d).unwrap() + 3.0).abs() < 1e-12);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((min_eigenvalue(&m).unwrap() - 1.0).abs() < 1e-10);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(min_eigenvalue(&bad), Err(SdpError::NonSymmetric(_))));
    }

    #[test]
    fn margin_one_half() {
        let s = solve(&half_problem(1.0), &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Feasible);
        assert!((s.t - 0.5).abs() < 1e-4, "{}", s.t);
        assert!((s.y[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn margin_scales() {
        for c in [0.5, 1.5] {
            let s = solve(&half_problem(c), &SdpOptions::default()).unwrap();
            assert!((s.t - 0.5 * c).abs() <= 1e-6 * 0.5 * c, "{c}: {}", s.t);
        }
    }

    #[test]
    fn negative_constant_infeasible() {
        let mut p = SdpProblem::new(0);
        p.blocks.push(SdpBlock {
            c: scalar(-1.0),
            a: vec![],
        });
        let s = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Infeasible);
        match s.certificate {
            Some(InfeasibilityCertificate::Psd { bound, .. }) => assert!(bound < -0.5),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn inconsistent_equalities() {
        let mut p = half_problem(1.0);
        p.equalities.push((vec![1.0], 1.0));
        p.equalities.push((vec![2.0], 3.0));
        let s = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Infeasible);
        assert!(matches!(s.certificate, Some(InfeasibilityCertificate::Equalities { .. })));
    }

    #[test]
    fn equality_pins_parameter() {
        // y0 + y1 = 1 with blocks [y0], [y1]: best margin 1/2.
        let mut p = SdpProblem::new(2);
        p.blocks.push(SdpBlock {
            c: scalar(0.0),
            a: vec![(0, scalar(1.0))],
        });
        p.blocks.push(SdpBlock {
            c: scalar(0.0),
            a: vec![(1, scalar(1.0))],
        });
        p.equalities.push((vec![1.0, 1.0], 1.0));
        let s = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Feasible);
        assert!((s.t - 0.5).abs() < 1e-6);
        assert!(s.equality_residual < 1e-9);
    }

    #[test]
    fn matrix_block() {
        // [[1, y], [y, 1]] is best at y = 0 with margin 1 (capped at 2).
        let mut p = SdpProblem::new(1);
        p.margin_cap = 2.0;
        let off = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        p.blocks.push(SdpBlock {
            c: DMatrix::identity(2, 2),
            a: vec![(0, off)],
        });
        let s = solve(&p, &SdpOptions::default()).unwrap();
        assert!((s.t - 1.0).abs() < 1e-6);
        assert!(s.y[0].abs() < 1e-5);
    }

    #[test]
    fn deterministic_and_self_consistent() {
        let p = half_problem(1.0);
        let a = solve(&p, &SdpOptions::default()).unwrap();
        let b = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(p.margin_at(&a.y) >= a.t - 1e-8);
    }

    #[test]
    fn json_round_trip() {
        let mut p = half_problem(1.0);
        p.equalities.push((vec![1.0], 0.25));
        let back = SdpProblem::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }
}
