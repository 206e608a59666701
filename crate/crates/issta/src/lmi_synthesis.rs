//! Sliding-surface synthesis by LMI pole-region feasibility.
//!
//! The decision variables are `Y = M^-1` (symmetric 3x3) and `N = K Y`
//! (1x3). Constraints: quadratic stability against the friction slope bound,
//! a vertical strip `-h_fast <= Re(lambda) <= -h_slow` and a conic sector of
//! half-angle `theta` around the negative real axis. A small log-barrier
//! Newton method maximizes the common eigenvalue margin `t`; the certificate
//! is then recomputed from scratch and is the actual contract.

use nalgebra::{Cholesky, DMatrix, Matrix3, RowVector3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydraulic_plant::PlantParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("LMI region infeasible: most violated constraint `{constraint}` (min eigenvalue {min_eig:.3e})")]
    Infeasible { constraint: &'static str, min_eig: f64 },
    #[error("ill-conditioned solution: cond(Y) = {0:.3e}")]
    Conditioning(f64),
    #[error("certificate check failed: {0}")]
    Certificate(String),
    #[error("invalid synthesis input: {0}")]
    Input(String),
}

/// Nominal error-dynamics matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMatrices {
    pub a_n: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub h: Matrix3<f64>,
}

pub fn build_matrices(params: &PlantParams<f64>) -> RegionMatrices {
    let mut a_n = Matrix3::zeros();
    a_n[(0, 1)] = 1.0;
    a_n[(1, 1)] = -params.sigma / params.m;
    a_n[(1, 2)] = 1.0;
    let mut h = Matrix3::zeros();
    h[(1, 1)] = 1.0;
    RegionMatrices { a_n, b: Vector3::new(0.0, 0.0, 1.0), h }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisInput {
    /// Friction slope bound.
    pub psi: f64,
    /// Slow strip edge; closed-loop real parts must be `<= -h_slow`.
    pub h_slow: f64,
    /// Fast strip edge; closed-loop real parts must be `>= -h_fast`.
    pub h_fast: f64,
    /// Cone half-angle [rad].
    pub theta: f64,
    /// Strictness relative to `||A_n||`.
    pub margin: f64,
}

impl Default for SynthesisInput {
    fn default() -> Self {
        Self { psi: 0.5, h_slow: 1.0, h_fast: 5.0, theta: std::f64::consts::PI / 20.0, margin: 1e-8 }
    }
}

impl SynthesisInput {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        if !(self.psi >= 0.0) {
            return Err(SynthesisError::Input("psi must be non-negative".into()));
        }
        if !(self.h_slow >= 0.0 && self.h_fast > self.h_slow) {
            return Err(SynthesisError::Input(format!(
                "empty strip: h_slow = {} must be below h_fast = {}",
                self.h_slow, self.h_fast
            )));
        }
        if !(self.theta >= 0.0 && self.theta < std::f64::consts::FRAC_PI_2) {
            return Err(SynthesisError::Input("theta must lie in [0, pi/2)".into()));
        }
        if !(self.margin > 0.0) {
            return Err(SynthesisError::Input("margin must be positive".into()));
        }
        Ok(())
    }
}

/// Independently recomputed feasibility evidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub y_min_eig: f64,
    pub y_cond: f64,
    pub lmi_max_eig: f64,
    pub lmi_bound: f64,
    pub region_ok: bool,
    pub y_positive: bool,
    pub lmi_ok: bool,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.y_positive && self.lmi_ok && self.region_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDesign {
    pub m: [[f64; 3]; 3],
    pub y: [[f64; 3]; 3],
    pub k: [f64; 3],
    pub gamma1: f64,
    pub gamma2: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub tau: f64,
    pub mu_m: f64,
    /// `(re, im)` pairs of `A_n - B K`.
    pub closed_loop_eigs: Vec<[f64; 2]>,
    pub input: SynthesisInput,
    pub certificate: Certificate,
}

impl SurfaceDesign {
    pub fn m_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.m[i][j])
    }

    pub fn k_row(&self) -> RowVector3<f64> {
        RowVector3::new(self.k[0], self.k[1], self.k[2])
    }
}

fn to_array(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
}

/// `a_23 = A/(tau m)` and `alpha = 4 tau E A / V_t`.
pub fn coupling(params: &PlantParams<f64>) -> (f64, f64) {
    let a23 = params.area / (params.tau * params.m);
    let alpha = 4.0 * params.tau * params.bulk_modulus * params.area / params.v_t;
    (a23, alpha)
}

/// Surface parameters `(gamma1, gamma2, kappa)` from the gain row.
pub fn recover_gains(params: &PlantParams<f64>, k: &[f64; 3]) -> (f64, f64, f64) {
    let (a23, alpha) = coupling(params);
    (k[0] / a23, k[2], k[1] / a23 - alpha)
}

/// Gain row rebuilt from surface parameters.
pub fn rebuild_k(params: &PlantParams<f64>, gamma1: f64, gamma2: f64, kappa: f64) -> [f64; 3] {
    let (a23, alpha) = coupling(params);
    [a23 * gamma1, a23 * (kappa + alpha), gamma2]
}

/// Fast edge from the 63.2 % rise requirement.
pub fn assign_h2(y_d: f64, y_bar2: f64) -> Result<f64, SynthesisError> {
    let rad = (0.632 * y_d).powi(2) - y_bar2 * y_bar2;
    if !(rad > 0.0) || y_bar2 < 0.0 {
        return Err(SynthesisError::Input(format!("h2 radicand {rad} must be positive")));
    }
    Ok(1.0 / rad.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H1Assignment {
    pub sigma_h: f64,
    pub h1: f64,
    /// Set when the demanded time constant is slower than the open loop.
    pub slower_than_open_loop: bool,
}

/// Slow edge from a critically damped mechanical time constant.
pub fn assign_h1(params: &PlantParams<f64>, t_h1: f64) -> Result<H1Assignment, SynthesisError> {
    if !(t_h1 > 0.0) {
        return Err(SynthesisError::Input("T_h1 must be positive".into()));
    }
    let (m, tau, sigma) = (params.m, params.tau, params.sigma);
    let sigma_h = 2.0 * m * tau / t_h1 - sigma * tau;
    let h1 = -(sigma * tau + sigma_h) / (2.0 * tau * m);
    Ok(H1Assignment { sigma_h, h1, slower_than_open_loop: sigma_h < 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiBound {
    pub analytic: f64,
    pub sampled: f64,
}

/// Friction slope `psi(x2) = f_nl(x2) / (m x2)` of the non-viscous part.
pub fn friction_slope(params: &PlantParams<f64>, x2: f64) -> f64 {
    let stribeck = (-(x2.abs() / params.chi).powf(params.iota)).exp();
    (params.vartheta * x2).tanh() * (params.f_c + (params.f_s - params.f_c) * stribeck) / (params.m * x2)
}

/// Supremum of the friction slope, attained as `x2 -> 0`.
pub fn bound_psi(params: &PlantParams<f64>) -> PsiBound {
    let analytic = params.vartheta * params.f_s / params.m;
    let n = 4000;
    let sampled = (0..=n)
        .map(|i| 10f64.powf(-6.0 + 7.0 * i as f64 / n as f64))
        .map(|x| friction_slope(params, x))
        .fold(f64::MIN, f64::max);
    PsiBound { analytic, sampled }
}

/// `L = L3 + kappa q_ddot_bar`.
pub fn compute_l(l3: f64, kappa: f64, q_ddot_bar: f64) -> Result<f64, SynthesisError> {
    if l3 < 0.0 || kappa < 0.0 || q_ddot_bar < 0.0 {
        return Err(SynthesisError::Input("L bound arguments must be non-negative".into()));
    }
    Ok(l3 + kappa * q_ddot_bar)
}

/// Ultimate bound on `||e||` for perturbation level `beta`.
pub fn ultimate_bound(m: &Matrix3<f64>, mu_m: f64, beta: f64, theta_v: f64) -> Result<f64, SynthesisError> {
    if !(mu_m > 0.0) || !(theta_v > 0.0 && theta_v < 1.0) || beta < 0.0 {
        return Err(SynthesisError::Input("need mu > 0, 0 < theta_v < 1, beta >= 0".into()));
    }
    let e = SymmetricEigen::new(*m).eigenvalues;
    let (lmin, lmax) = (e.min(), e.max());
    if !(lmin > 0.0) {
        return Err(SynthesisError::Input("M must be positive definite".into()));
    }
    Ok(2.0 * lmax.powf(1.5) * beta / (theta_v * mu_m * lmin.sqrt()))
}

const NV: usize = 10;
const BLOCK_NAMES: [&str; 6] = ["Y > 0", "Y < I", "quadratic stability", "slow strip", "fast strip", "cone"];

fn unpack(x: &[f64]) -> (Matrix3<f64>, RowVector3<f64>, f64) {
    let y = Matrix3::new(x[0], x[1], x[2], x[1], x[3], x[4], x[2], x[4], x[5]);
    (y, RowVector3::new(x[6], x[7], x[8]), x[9])
}

/// All constraint blocks, each required positive definite.
fn blocks(x: &[f64], rm: &RegionMatrices, inp: &SynthesisInput) -> Vec<DMatrix<f64>> {
    let (y, n, t) = unpack(x);
    let i3 = Matrix3::identity();
    let bn = rm.b * n;
    let c = rm.a_n * y - bn;
    let s = c + c.transpose();
    let a_psi = rm.a_n + rm.h * inp.psi;
    let q = a_psi * y + y * a_psi.transpose() - bn - bn.transpose();
    let d3 = |m: Matrix3<f64>| DMatrix::from_fn(3, 3, |i, j| m[(i, j)]);
    let (st, ct) = inp.theta.sin_cos();
    let skew = c - c.transpose();
    let cone = DMatrix::from_fn(6, 6, |i, j| {
        let (bi, bj, ii, jj) = (i / 3, j / 3, i % 3, j % 3);
        let v = match (bi, bj) {
            (0, 0) | (1, 1) => st * s[(ii, jj)],
            (0, 1) => ct * skew[(ii, jj)],
            _ => -ct * skew[(ii, jj)],
        };
        -v - if i == j { t } else { 0.0 }
    });
    vec![
        d3(y - i3 * t),
        d3(i3 - y),
        d3(-q - i3 * t),
        d3(-(s + y * (2.0 * inp.h_slow)) - i3 * t),
        d3(s + y * (2.0 * inp.h_fast) - i3 * t),
        cone,
    ]
}

struct Affine {
    base: Vec<DMatrix<f64>>,
    basis: Vec<Vec<DMatrix<f64>>>,
}

impl Affine {
    fn new(rm: &RegionMatrices, inp: &SynthesisInput) -> Self {
        let zero = [0.0; NV];
        let base = blocks(&zero, rm, inp);
        let basis = (0..NV)
            .map(|k| {
                let mut e = [0.0; NV];
                e[k] = 1.0;
                blocks(&e, rm, inp).into_iter().zip(&base).map(|(g, g0)| g - g0).collect()
            })
            .collect();
        Self { base, basis }
    }

    fn eval(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out = self.base.clone();
        for (k, xk) in x.iter().enumerate() {
            for (j, g) in out.iter_mut().enumerate() {
                *g += &self.basis[k][j] * *xk;
            }
        }
        out
    }

    /// Barrier value `-w t - sum log det G_j`, gradient and Hessian; `None`
    /// outside the interior.
    fn barrier(&self, x: &[f64], w: f64) -> Option<(f64, Vec<f64>, DMatrix<f64>)> {
        let gs = self.eval(x);
        let mut f = -w * x[NV - 1];
        let mut grad = vec![0.0; NV];
        grad[NV - 1] = -w;
        let mut hess = DMatrix::zeros(NV, NV);
        for (j, g) in gs.into_iter().enumerate() {
            let chol = Cholesky::new(g)?;
            f -= 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let ginv = chol.inverse();
            let prods: Vec<DMatrix<f64>> = (0..NV).map(|k| &ginv * &self.basis[k][j]).collect();
            for k in 0..NV {
                grad[k] -= prods[k].trace();
                for l in k..NV {
                    let v = (&prods[k] * &prods[l]).trace();
                    hess[(k, l)] += v;
                    if l != k {
                        hess[(l, k)] += v;
                    }
                }
            }
        }
        Some((f, grad, hess))
    }
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Maximizes the common margin `t` by a barrier path. Returns the final
/// iterate.
fn maximize_margin(aff: &Affine) -> [f64; NV] {
    let mut x = [0.0; NV];
    x[0] = 0.5;
    x[3] = 0.5;
    x[5] = 0.5;
    let t0 = aff.eval(&x).iter().map(min_eig).fold(f64::INFINITY, f64::min);
    x[NV - 1] = t0.min(0.0) - 1.0;
    let mut w = 1.0;
    while w < 1e9 {
        for _ in 0..200 {
            let Some((f, g, h)) = aff.barrier(&x, w) else { break };
            let Some(chol) = Cholesky::new(h) else { break };
            let gv = DMatrix::from_column_slice(NV, 1, &g);
            let dx = -chol.solve(&gv);
            let dec = -(gv.transpose() * &dx)[(0, 0)];
            if dec < 1e-12 {
                break;
            }
            let mut a = 1.0;
            loop {
                let mut trial = x;
                for k in 0..NV {
                    trial[k] += a * dx[k];
                }
                if let Some((ft, _, _)) = aff.barrier(&trial, w) {
                    if ft <= f - 0.25 * a * dec {
                        x = trial;
                        break;
                    }
                }
                a *= 0.5;
                if a < 1e-12 {
                    break;
                }
            }
            if a < 1e-12 {
                break;
            }
        }
        w *= 4.0;
    }
    x
}

fn spectral_norm(m: &Matrix3<f64>) -> f64 {
    m.svd(false, false).singular_values.max()
}

/// Quadratic-stability left-hand side in `M` form.
pub fn lmi21_lhs(m: &Matrix3<f64>, k: &RowVector3<f64>, rm: &RegionMatrices, psi: f64) -> Matrix3<f64> {
    let bk = rm.b * k;
    let a = rm.a_n - bk;
    let mh = m * rm.h;
    m * a + a.transpose() * m + (mh + mh.transpose()) * psi
}

/// Recomputes every certificate check from `Y` and `K` alone.
pub fn check_certificate(y: &Matrix3<f64>, k: &RowVector3<f64>, rm: &RegionMatrices, inp: &SynthesisInput) -> Certificate {
    let ye = SymmetricEigen::new(*y).eigenvalues;
    let (ymin, ymax) = (ye.min(), ye.max());
    let m = y.try_inverse().unwrap_or_else(|| Matrix3::from_element(f64::NAN));
    let m = (m + m.transpose()) * 0.5;
    let lhs = lmi21_lhs(&m, k, rm, inp.psi);
    let lmi_max_eig = SymmetricEigen::new(lhs).eigenvalues.max();
    let lmi_bound = -inp.margin * spectral_norm(&rm.a_n);
    let eigs = (rm.a_n - rm.b * k).complex_eigenvalues();
    let tol = 1e-6;
    let tan = inp.theta.tan();
    let region_ok = eigs.iter().all(|l| {
        l.re <= -inp.h_slow + tol && l.re >= -inp.h_fast - tol && l.im.abs() <= tan * l.re.abs() + tol
    });
    Certificate {
        y_min_eig: ymin,
        y_cond: ymax / ymin,
        lmi_max_eig,
        lmi_bound,
        region_ok,
        y_positive: ymin > 0.0,
        lmi_ok: lmi_max_eig < lmi_bound,
    }
}

/// Solves the region LMI for a fixed cone angle.
pub fn solve_region_lmi(params: &PlantParams<f64>, inp: &SynthesisInput) -> Result<SurfaceDesign, SynthesisError> {
    inp.validate()?;
    let rm = build_matrices(params);
    let aff = Affine::new(&rm, inp);
    let x = maximize_margin(&aff);
    let (y, n, _) = unpack(&x);

    let mut zero_t = x;
    zero_t[NV - 1] = 0.0;
    let worst = aff
        .eval(&zero_t)
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != 1)
        .map(|(j, g)| (j, min_eig(g)))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    if !(x[NV - 1] > 0.0) {
        return Err(SynthesisError::Infeasible { constraint: BLOCK_NAMES[worst.0], min_eig: worst.1 });
    }

    let ye = SymmetricEigen::new(y).eigenvalues;
    let cond = ye.max() / ye.min();
    if !(cond <= 1e10) {
        return Err(SynthesisError::Conditioning(cond));
    }
    let m = y.try_inverse().ok_or(SynthesisError::Conditioning(f64::INFINITY))?;
    let m = (m + m.transpose()) * 0.5;
    let k_row = n * m;
    let certificate = check_certificate(&y, &k_row, &rm, inp);
    if !certificate.passed() {
        return Err(SynthesisError::Certificate(format!("{certificate:?}")));
    }
    let k = [k_row[0], k_row[1], k_row[2]];
    let (gamma1, gamma2, kappa) = recover_gains(params, &k);
    let (_, alpha) = coupling(params);
    let mu_m = -certificate.lmi_max_eig;
    let closed_loop_eigs = (rm.a_n - rm.b * k_row).complex_eigenvalues().iter().map(|c| [c.re, c.im]).collect();
    Ok(SurfaceDesign {
        m: to_array(&m),
        y: to_array(&y),
        k,
        gamma1,
        gamma2,
        kappa,
        alpha,
        tau: params.tau,
        mu_m,
        closed_loop_eigs,
        input: *inp,
        certificate,
    })
}

/// Smallest cone angle on a `pi/40` grid from zero up to `pi/4` that is
/// feasible.
pub fn search_theta(params: &PlantParams<f64>, inp: &SynthesisInput) -> Result<SurfaceDesign, SynthesisError> {
    let step = std::f64::consts::PI / 40.0;
    let mut last = SynthesisError::Input("no cone angle tried".into());
    for i in 0..=10 {
        let trial = SynthesisInput { theta: step * i as f64, ..*inp };
        match solve_region_lmi(params, &trial) {
            Ok(d) => return Ok(d),
            Err(e) => last = e,
        }
    }
    Err(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn plant() -> PlantParams<f64> {
        PlantParams::placeholder()
    }

    #[test]
    fn matrices_structure() {
        let p = PlantParams { sigma: 0.0, ..plant() };
        let rm = build_matrices(&p);
        let a2 = rm.a_n * rm.a_n;
        assert!((a2 * rm.a_n).iter().all(|v| *v == 0.0));
        assert_eq!(rm.b, Vector3::new(0.0, 0.0, 1.0));
        let e = Vector3::new(3.0, -2.0, 7.0);
        assert_eq!(rm.h * e, Vector3::new(0.0, -2.0, 0.0));
    }

    #[test]
    fn h2_assignment() {
        assert_relative_eq!(1.0 / assign_h2(0.5, 0.0).unwrap(), 0.632 * 0.5);
        assert_relative_eq!(1.0 / assign_h2(1.0, 0.632 * 0.6).unwrap(), 0.632 * 0.8, max_relative = 1e-12);
        assert!(assign_h2(1.0, 0.7).is_err());
    }

    #[test]
    fn h1_assignment() {
        let p = plant();
        let a = assign_h1(&p, 1.0).unwrap();
        assert_relative_eq!(a.h1, -1.0, max_relative = 1e-12);
        for t in [0.1, 0.7, 3.0] {
            assert_relative_eq!(assign_h1(&p, t).unwrap().h1, -1.0 / t, max_relative = 1e-12);
        }
        let boundary = 2.0 * p.m * p.tau / (p.sigma * p.tau);
        assert!(assign_h1(&p, boundary).unwrap().sigma_h.abs() < 1e-18);
        assert!(assign_h1(&p, 2.0 * boundary).unwrap().slower_than_open_loop);
    }

    #[test]
    fn psi_bound() {
        let p = plant();
        let b = bound_psi(&p);
        assert_relative_eq!(b.analytic, 0.5);
        assert!(b.sampled <= b.analytic + 1e-9);
        assert!(b.sampled > 0.99 * b.analytic);
        let flat = PlantParams { f_s: 0.6 + 1e-15, ..p };
        assert_relative_eq!(bound_psi(&flat).analytic, flat.vartheta * flat.f_c / flat.m, max_relative = 1e-12);
    }

    #[test]
    fn l_and_bound_arithmetic() {
        assert_eq!(compute_l(0.0, 3.0, 0.0).unwrap(), 0.0);
        assert_eq!(compute_l(1.0, 2.0, 0.5).unwrap(), 2.0);
        assert!(compute_l(1.0, -2.0, 0.5).is_err());
        let i = Matrix3::identity();
        assert_eq!(ultimate_bound(&i, 2.0, 0.0, 0.5).unwrap(), 0.0);
        assert_relative_eq!(ultimate_bound(&i, 2.0, 3.0, 0.5).unwrap(), 2.0 * 3.0 / (0.5 * 2.0));
    }

    #[test]
    fn double_integrator_design_lands_in_region() {
        let p = PlantParams { sigma: 0.0, ..plant() };
        let inp = SynthesisInput { psi: 0.0, ..Default::default() };
        let d = solve_region_lmi(&p, &inp).unwrap();
        let rm = build_matrices(&p);
        let eigs = (rm.a_n - rm.b * d.k_row()).complex_eigenvalues();
        for l in eigs.iter() {
            assert!(l.re <= -1.0 + 1e-6 && l.re >= -5.0 - 1e-6, "{l}");
            assert!(l.im.abs() <= (std::f64::consts::PI / 20.0).tan() * l.re.abs() + 1e-6);
        }
    }

    #[test]
    fn preset_design_certificate_and_gain_roundtrip() {
        let p = plant();
        let d = solve_region_lmi(&p, &SynthesisInput::default()).unwrap();
        assert!(d.certificate.passed());
        assert!(d.mu_m > 0.0);
        let k = rebuild_k(&p, d.gamma1, d.gamma2, d.kappa);
        for i in 0..3 {
            assert_relative_eq!(k[i], d.k[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn empty_strip_rejected() {
        let inp = SynthesisInput { h_slow: 5.0, h_fast: 1.0, ..Default::default() };
        assert!(matches!(solve_region_lmi(&plant(), &inp), Err(SynthesisError::Input(_))));
    }

    #[test]
    fn degenerate_cone_is_infeasible_and_search_moves_on() {
        let p = plant();
        let inp = SynthesisInput { theta: 0.0, ..Default::default() };
        assert!(solve_region_lmi(&p, &inp).is_err());
        let d = search_theta(&p, &inp).unwrap();
        assert!(d.input.theta > 0.0);
        assert!(d.input.theta <= std::f64::consts::FRAC_PI_4 + 1e-12);
    }
}
