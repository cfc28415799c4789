//! Gaussian fluctuations around a mean-field solution.
//!
//! Writing `a_i = alpha_i + d_i` and keeping terms up to second order in the
//! fluctuations gives a closed linear system for the normally ordered second
//! moments. Its steady state fixes the two-mode covariance matrix, from which
//! the order-parameter variance, logarithmic negativity and von Neumann
//! entropy follow in closed form.
//!
//! Quadratures are `x = (d + d^dag)/sqrt(2)`, `p = (d - d^dag)/(i sqrt(2))`,
//! ordered `(x1, p1, x2, p2)`, so the vacuum covariance is `I/2`.

use faer::Mat;
use num_complex::Complex64;
use thiserror::Error;

use crate::model::DimerParams;
use crate::numerics::{self, LinalgError};
use crate::semiclassical::{
    fit_exponent, fit_offsets, linspace, stability_crossings, symmetric_solutions, FitError, PowerLawFit,
    SemiclassicalSolution, SolveError,
};

/// Moment systems with a larger condition number count as critical.
pub const CRITICAL_CONDITION: f64 = 1e12;
/// Tolerance on the symplectic eigenvalue bound `nu >= 1/2`.
pub const PHYSICALITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("moment system is singular (condition {condition:.3e}): the drive sits at a bifurcation point")]
    SingularAtCriticality { condition: f64 },
    #[error("mean-field solution is unstable (max growth {growth:.3e}); it has no Gaussian steady state")]
    UnstableSolution { growth: f64 },
    #[error("covariance matrix is unphysical: symplectic eigenvalue {nu:.6e} < 1/2")]
    Unphysical { nu: f64 },
    #[error("inconsistent covariance: discriminant {0:.3e} is negative")]
    NumericalDomain(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Semiclassical(#[from] SolveError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Normally ordered second moments of the fluctuation operators.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentSet {
    /// `<d1^dag d1>`
    pub n1: f64,
    /// `<d2^dag d2>`
    pub n2: f64,
    /// `<d1 d1>`
    pub s1: Complex64,
    /// `<d2 d2>`
    pub s2: Complex64,
    /// `<d1^dag d2>`
    pub t: Complex64,
    /// `<d1 d2>`
    pub u: Complex64,
}

/// Unknown ordering of the moment system.
pub const MOMENT_LABELS: [&str; 10] = [
    "<d1+ d1>", "<d2+ d2>", "<d1 d1>", "<d1+ d1+>", "<d2 d2>", "<d2+ d2+>", "<d1+ d2>", "<d2+ d1>",
    "<d1 d2>", "<d1+ d2+>",
];

impl MomentSet {
    /// Moments as the 10-component vector used by the linear system.
    pub fn to_vector(&self) -> [Complex64; 10] {
        let r = |x: f64| Complex64::new(x, 0.0);
        [
            r(self.n1),
            r(self.n2),
            self.s1,
            self.s1.conj(),
            self.s2,
            self.s2.conj(),
            self.t,
            self.t.conj(),
            self.u,
            self.u.conj(),
        ]
    }

    fn from_vector(z: &[Complex64]) -> Self {
        // Average each moment with its conjugate partner; they agree to rounding.
        MomentSet {
            n1: z[0].re,
            n2: z[1].re,
            s1: 0.5 * (z[2] + z[3].conj()),
            s2: 0.5 * (z[4] + z[5].conj()),
            t: 0.5 * (z[6] + z[7].conj()),
            u: 0.5 * (z[8] + z[9].conj()),
        }
    }

    /// Moments after relabelling `d1 <-> -d2`.
    pub fn z2_transform(&self) -> Self {
        MomentSet {
            n1: self.n2,
            n2: self.n1,
            s1: self.s2,
            s2: self.s1,
            t: self.t.conj(),
            u: self.u,
        }
    }
}

/// Linear system `i dz/dt = M z + c` for the moment vector `z`
/// (ordering [`MOMENT_LABELS`]).
pub fn assemble_moment_system(solution: &SemiclassicalSolution) -> (Mat<Complex64>, [Complex64; 10]) {
    let p = &solution.params;
    let (a1, a2) = (solution.alpha1, solution.alpha2);
    let i = Complex64::i();
    let gamma = p.gamma;
    let j = Complex64::new(p.j, 0.0);
    let e1 = -p.delta + 4.0 * p.u * a1.norm_sqr();
    let e2 = -p.delta + 4.0 * p.u * a2.norm_sqr();
    let g1 = 2.0 * p.u * a1 * a1;
    let g2 = 2.0 * p.u * a2 * a2;
    let (n1, n2, s1, s1c, s2, s2c, t, tc, u, uc) = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9);

    let mut m = Mat::<Complex64>::zeros(10, 10);
    let mut c = [Complex64::new(0.0, 0.0); 10];
    let mut set = |r: usize, col: usize, v: Complex64| m[(r, col)] += v;

    set(n1, n1, -i * gamma);
    set(n1, s1c, g1);
    set(n1, s1, -g1.conj());
    set(n1, t, -j);
    set(n1, tc, j);

    set(n2, n2, -i * gamma);
    set(n2, s2c, g2);
    set(n2, s2, -g2.conj());
    set(n2, tc, -j);
    set(n2, t, j);

    set(s1, s1, 2.0 * e1 - i * gamma);
    set(s1, n1, 2.0 * g1);
    set(s1, u, -2.0 * j);
    set(s1c, s1c, -(2.0 * e1 + i * gamma));
    set(s1c, n1, -2.0 * g1.conj());
    set(s1c, uc, 2.0 * j);

    set(s2, s2, 2.0 * e2 - i * gamma);
    set(s2, n2, 2.0 * g2);
    set(s2, u, -2.0 * j);
    set(s2c, s2c, -(2.0 * e2 + i * gamma));
    set(s2c, n2, -2.0 * g2.conj());
    set(s2c, uc, 2.0 * j);

    set(t, t, e2 - e1 - i * gamma);
    set(t, uc, g2);
    set(t, u, -g1.conj());
    set(t, n1, -j);
    set(t, n2, j);
    set(tc, tc, -(e2 - e1 + i * gamma));
    set(tc, u, -g2.conj());
    set(tc, uc, g1);
    set(tc, n1, j);
    set(tc, n2, -j);

    set(u, u, e1 + e2 - i * gamma);
    set(u, tc, g2);
    set(u, t, g1);
    set(u, s1, -j);
    set(u, s2, -j);
    set(uc, uc, -(e1 + e2 + i * gamma));
    set(uc, t, -g2.conj());
    set(uc, tc, -g1.conj());
    set(uc, s1c, j);
    set(uc, s2c, j);

    c[s1] = g1;
    c[s1c] = -g1.conj();
    c[s2] = g2;
    c[s2c] = -g2.conj();
    (m, c)
}

/// Time derivatives `dz/dt = -i (M z + c)` of the moment vector.
pub fn moment_derivatives(solution: &SemiclassicalSolution, moments: &MomentSet) -> [Complex64; 10] {
    let (m, c) = assemble_moment_system(solution);
    let z = moments.to_vector();
    let mut out = [Complex64::new(0.0, 0.0); 10];
    for r in 0..10 {
        let acc: Complex64 = (0..10).map(|k| m[(r, k)] * z[k]).sum::<Complex64>() + c[r];
        out[r] = -Complex64::i() * acc;
    }
    out
}

fn inf_norm(m: &Mat<Complex64>) -> f64 {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|k| m[(r, k)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `||M||_inf ||M^-1||_inf`, or infinity if `M` is numerically singular.
pub fn moment_condition_number(solution: &SemiclassicalSolution) -> f64 {
    let (m, _) = assemble_moment_system(solution);
    let n = m.nrows();
    let mut inv_norm_rows = vec![0.0f64; n];
    for k in 0..n {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[k] = Complex64::new(1.0, 0.0);
        match numerics::solve_dense(m.as_ref(), &e) {
            Ok(col) => {
                for (r, v) in col.iter().enumerate() {
                    inv_norm_rows[r] += v.norm();
                }
            }
            Err(_) => return f64::INFINITY,
        }
    }
    inf_norm(&m) * inv_norm_rows.into_iter().fold(0.0, f64::max)
}

/// Steady-state second moments around a stable mean-field solution.
pub fn solve_moments(solution: &SemiclassicalSolution) -> Result<MomentSet, GaussianError> {
    if !solution.stable {
        return Err(GaussianError::UnstableSolution { growth: solution.max_growth() });
    }
    let condition = moment_condition_number(solution);
    if !(condition <= CRITICAL_CONDITION) {
        return Err(GaussianError::SingularAtCriticality { condition });
    }
    let (m, c) = assemble_moment_system(solution);
    let rhs: Vec<Complex64> = c.iter().map(|v| -v).collect();
    let z = numerics::solve_dense(m.as_ref(), &rhs).map_err(|e| match e {
        LinalgError::SingularMatrix { .. } => GaussianError::SingularAtCriticality { condition },
        other => GaussianError::Linalg(other),
    })?;
    Ok(MomentSet::from_vector(&z))
}

/// `V(O) = n1 + n2 + 2 Re t - |<d1> + <d2>|^2`.
pub fn variance_order_parameter(moments: &MomentSet, fluctuation_mean: Complex64) -> f64 {
    moments.n1 + moments.n2 + 2.0 * moments.t.re - fluctuation_mean.norm_sqr()
}

/// Symmetrized quadrature covariance over `(x1, p1, x2, p2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix {
    pub sigma: [[f64; 4]; 4],
}

fn det2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    a * d - b * c
}

fn det4(m: &[[f64; 4]; 4]) -> f64 {
    let mut a = *m;
    let mut det = 1.0;
    for col in 0..4 {
        let piv = (col..4).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for k in col..4 {
                a[r][k] -= f * a[col][k];
            }
        }
    }
    det
}

/// von Neumann entropy contribution of one symplectic eigenvalue.
pub fn entropy_function(nu: f64) -> f64 {
    let plus = nu + 0.5;
    let minus = nu - 0.5;
    let xlnx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
    xlnx(plus) - xlnx(minus)
}

impl CovarianceMatrix {
    pub fn vacuum() -> Self {
        let mut sigma = [[0.0; 4]; 4];
        for (k, row) in sigma.iter_mut().enumerate() {
            row[k] = 0.5;
        }
        CovarianceMatrix { sigma }
    }

    /// Builds the covariance without checking physicality.
    pub fn from_moments_unchecked(m: &MomentSet) -> Self {
        let x1x1 = m.n1 + m.s1.re + 0.5;
        let p1p1 = m.n1 - m.s1.re + 0.5;
        let x1p1 = m.s1.im;
        let x2x2 = m.n2 + m.s2.re + 0.5;
        let p2p2 = m.n2 - m.s2.re + 0.5;
        let x2p2 = m.s2.im;
        let x1x2 = m.t.re + m.u.re;
        let p1p2 = m.t.re - m.u.re;
        let x1p2 = m.u.im + m.t.im;
        let p1x2 = m.u.im - m.t.im;
        CovarianceMatrix {
            sigma: [
                [x1x1, x1p1, x1x2, x1p2],
                [x1p1, p1p1, p1x2, p1p2],
                [x1x2, p1x2, x2x2, x2p2],
                [x1p2, p1p2, x2p2, p2p2],
            ],
        }
    }

    /// Inverse of the moment dictionary.
    pub fn to_moments(&self) -> MomentSet {
        let s = &self.sigma;
        MomentSet {
            n1: 0.5 * (s[0][0] + s[1][1] - 1.0),
            n2: 0.5 * (s[2][2] + s[3][3] - 1.0),
            s1: Complex64::new(0.5 * (s[0][0] - s[1][1]), s[0][1]),
            s2: Complex64::new(0.5 * (s[2][2] - s[3][3]), s[2][3]),
            t: Complex64::new(0.5 * (s[0][2] + s[1][3]), 0.5 * (s[0][3] - s[1][2])),
            u: Complex64::new(0.5 * (s[0][2] - s[1][3]), 0.5 * (s[0][3] + s[1][2])),
        }
    }

    pub fn block_dets(&self) -> (f64, f64, f64) {
        let s = &self.sigma;
        (
            det2(s[0][0], s[0][1], s[1][0], s[1][1]),
            det2(s[2][2], s[2][3], s[3][2], s[3][3]),
            det2(s[0][2], s[0][3], s[1][2], s[1][3]),
        )
    }

    pub fn det(&self) -> f64 {
        det4(&self.sigma)
    }

    /// Symplectic eigenvalues `(nu_minus, nu_plus)`.
    pub fn symplectic_eigenvalues(&self) -> Result<(f64, f64), GaussianError> {
        let (a, b, c) = self.block_dets();
        self.eigen_pair(a + b + 2.0 * c)
    }

    /// Symplectic eigenvalues of the partially transposed state.
    pub fn pt_symplectic_eigenvalues(&self) -> Result<(f64, f64), GaussianError> {
        let (a, b, c) = self.block_dets();
        self.eigen_pair(a + b - 2.0 * c)
    }

    fn eigen_pair(&self, invariant: f64) -> Result<(f64, f64), GaussianError> {
        let det = self.det();
        let mut disc = invariant * invariant - 4.0 * det;
        let scale = invariant * invariant;
        if disc < 0.0 {
            if disc < -1e-10 * scale.max(1.0) {
                return Err(GaussianError::NumericalDomain(disc));
            }
            disc = 0.0;
        }
        let root = disc.sqrt();
        let minus_sq = (invariant - root) / 2.0;
        let plus_sq = (invariant + root) / 2.0;
        // Avoid cancellation: nu_minus^2 nu_plus^2 = det.
        let minus_sq = if plus_sq > 0.0 && minus_sq < 1e-3 * plus_sq { det / plus_sq } else { minus_sq };
        Ok((minus_sq.max(0.0).sqrt(), plus_sq.max(0.0).sqrt()))
    }

    pub fn check_physical(&self, tol: f64) -> Result<(), GaussianError> {
        let (nu_minus, _) = self.symplectic_eigenvalues()?;
        if nu_minus < 0.5 - tol {
            return Err(GaussianError::Unphysical { nu: nu_minus });
        }
        Ok(())
    }

    /// `V(O)` from quadratures: `(var(x1 + x2) + var(p1 + p2)) / 2 - 1`.
    pub fn variance_order_parameter(&self) -> f64 {
        let s = &self.sigma;
        let vx = s[0][0] + s[2][2] + 2.0 * s[0][2];
        let vp = s[1][1] + s[3][3] + 2.0 * s[1][3];
        0.5 * (vx + vp) - 1.0
    }
}

/// Covariance matrix of a moment set, rejecting unphysical input.
pub fn covariance_from_moments(moments: &MomentSet) -> Result<CovarianceMatrix, GaussianError> {
    let cov = CovarianceMatrix::from_moments_unchecked(moments);
    cov.check_physical(PHYSICALITY_TOL)?;
    Ok(cov)
}

/// `E_N = max(0, -ln(2 nu~_minus))`.
pub fn log_negativity_gaussian(sigma: &CovarianceMatrix) -> Result<f64, GaussianError> {
    let (nu_pt, _) = sigma.pt_symplectic_eigenvalues()?;
    Ok((-(2.0 * nu_pt).ln()).max(0.0))
}

pub fn von_neumann_entropy_gaussian(sigma: &CovarianceMatrix) -> Result<f64, GaussianError> {
    let (minus, plus) = sigma.symplectic_eigenvalues()?;
    if minus < 0.5 - PHYSICALITY_TOL {
        return Err(GaussianError::Unphysical { nu: minus });
    }
    // The pair is ill-conditioned near purity (the discriminant's square root
    // amplifies rounding); the product nu_- nu_+ = sqrt(det) is not.
    let (minus, plus) = if minus < 0.5 {
        (0.5, (2.0 * sigma.det().max(0.0).sqrt()).max(0.5))
    } else {
        (minus, plus)
    };
    Ok(entropy_function(minus) + entropy_function(plus))
}

/// Everything the Gaussian tier reports for one mean-field solution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianObservables {
    pub moments: MomentSet,
    pub covariance: CovarianceMatrix,
    pub variance: f64,
    pub log_negativity: f64,
    pub entropy: f64,
    /// Smallest symplectic eigenvalue of the partial transpose.
    pub nu_pt_minus: f64,
    pub nu_minus: f64,
    pub nu_plus: f64,
}

impl GaussianObservables {
    pub fn inverse_variance(&self) -> f64 {
        1.0 / self.variance
    }
}

pub fn gaussian_observables(solution: &SemiclassicalSolution) -> Result<GaussianObservables, GaussianError> {
    let moments = solve_moments(solution)?;
    let covariance = covariance_from_moments(&moments)?;
    let (nu_minus, nu_plus) = covariance.symplectic_eigenvalues()?;
    let (nu_pt_minus, _) = covariance.pt_symplectic_eigenvalues()?;
    Ok(GaussianObservables {
        variance: variance_order_parameter(&moments, Complex64::new(0.0, 0.0)),
        log_negativity: log_negativity_gaussian(&covariance)?,
        entropy: von_neumann_entropy_gaussian(&covariance)?,
        moments,
        covariance,
        nu_pt_minus,
        nu_minus,
        nu_plus,
    })
}

/// Gaussian variance on the stable symmetric branch at `uf_c + side * offset`.
///
/// Where the symmetric equations have several stable roots (Kerr
/// bistability), the one closest to the critical solution is taken.
pub fn variance_near(
    params_base: &DimerParams,
    uf_c: f64,
    side: f64,
    offsets: &[f64],
) -> Result<Vec<(f64, f64)>, GaussianError> {
    let critical = symmetric_solutions(&params_base.with_rescaled_drive(uf_c).map_err(SolveError::from)?)?
        .into_iter()
        .max_by(|a, b| a.max_growth().total_cmp(&b.max_growth()))
        .ok_or(SolveError::NoSymmetricSolution)?;
    let mut pts = Vec::with_capacity(offsets.len());
    for &o in offsets {
        let uf = uf_c + side * o;
        let params = params_base.with_rescaled_drive(uf).map_err(SolveError::from)?;
        let nearest = symmetric_solutions(&params)?
            .into_iter()
            .filter(|s| s.stable)
            .min_by(|a, b| {
                let da = (a.alpha1 - critical.alpha1).norm();
                let db = (b.alpha1 - critical.alpha1).norm();
                da.total_cmp(&db)
            });
        if let Some(sol) = nearest {
            let m = solve_moments(&sol)?;
            pts.push((uf, variance_order_parameter(&m, Complex64::new(0.0, 0.0))));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pts)
}

/// Variance divergence at both bifurcations, approached from the symmetric side.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDivergence {
    pub uf_lower: f64,
    pub uf_upper: f64,
    pub fit_lower: PowerLawFit,
    pub fit_upper: PowerLawFit,
}

pub fn analyze_variance(
    params_base: &DimerParams,
    uf_min: f64,
    uf_max: f64,
    steps: usize,
) -> Result<VarianceDivergence, GaussianError> {
    let crossings = stability_crossings(params_base, &linspace(uf_min, uf_max, steps))?;
    if crossings.len() != 2 {
        return Err(SolveError::UnexpectedCrossings(crossings.len()).into());
    }
    let offsets = fit_offsets(40);
    let lower = variance_near(params_base, crossings[0], -1.0, &offsets)?;
    let upper = variance_near(params_base, crossings[1], 1.0, &offsets)?;
    Ok(VarianceDivergence {
        uf_lower: crossings[0],
        uf_upper: crossings[1],
        fit_lower: fit_exponent(&lower, crossings[0])?,
        fit_upper: fit_exponent(&upper, crossings[1])?,
    })
}
