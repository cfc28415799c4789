//! Mean-field steady states, their stability, and the symmetry-breaking
//! bifurcations.
//!
//! The mean-field equations for the anti-bonding drive configuration read
//!
//! ```text
//! i da1/dt = (-delta - i gamma/2 + 2U |a1|^2) a1 - J a2 + F
//! i da2/dt = (-delta - i gamma/2 + 2U |a2|^2) a2 - J a1 - F
//! ```
//!
//! Under `a' = sqrt(U) a` they depend on the drive only through
//! `sqrt(U) F`, so residuals are measured in rescaled units whenever `U > 0`.

use faer::Mat;
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{z2_transform, DimerParams, ParamError};
use crate::numerics::{self, LinalgError};

/// Newton stops once the rescaled residual norm drops below this.
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 200;
/// Relative threshold of the symmetry test `|a1 + a2| < eps (|a1| + |a2| + tiny)`.
pub const SYMMETRY_TOL: f64 = 1e-6;
/// Bisection on the stability crossing stops below this drive interval.
pub const BISECTION_TOL: f64 = 1e-8;
/// Offsets from the critical drive used when fitting power laws.
pub const FIT_WINDOW: (f64, f64) = (1e-4, 1e-1);
/// Divergence guard for transient integration.
pub const OVERFLOW_AMPLITUDE: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("trajectory diverged at t = {time}")]
    StepOverflow { time: f64 },
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("expected two stability crossings, found {0}")]
    UnexpectedCrossings(usize),
    #[error("no symmetric steady state found")]
    NoSymmetricSolution,
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {required} usable points, found {found}")]
    InsufficientPoints { found: usize, required: usize },
    #[error("power-law fit diverged: {0}")]
    FitDiverged(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Symmetric,
    BrokenPlus,
    BrokenMinus,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Symmetric => "symmetric",
            Branch::BrokenPlus => "broken_plus",
            Branch::BrokenMinus => "broken_minus",
        }
    }

    pub fn is_broken(self) -> bool {
        self != Branch::Symmetric
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiclassicalSolution {
    pub alpha1: Complex64,
    pub alpha2: Complex64,
    pub branch: Branch,
    pub stable: bool,
    /// Eigenvalues of the linearized evolution on `(d1, d1*, d2, d2*)`.
    pub spectrum: [Complex64; 4],
    /// Rescaled residual norm of the steady-state equations.
    pub residual: f64,
    pub iterations: usize,
    pub params: DimerParams,
}

impl SemiclassicalSolution {
    pub fn amplitudes(&self) -> (Complex64, Complex64) {
        (self.alpha1, self.alpha2)
    }

    /// `<O> = a1 + a2`.
    pub fn order_parameter(&self) -> Complex64 {
        self.alpha1 + self.alpha2
    }

    /// `|a1 + a2| sqrt(U / gamma)`, which depends on the drive only via `sqrt(U) F`.
    pub fn rescaled_order_parameter(&self) -> f64 {
        self.order_parameter().norm() * (self.params.u / self.params.gamma).sqrt()
    }

    /// Largest real part of the stability spectrum.
    pub fn max_growth(&self) -> f64 {
        max_growth(&self.spectrum)
    }

    /// The solution related to this one by `a1 <-> -a2`.
    pub fn z2_partner(&self) -> SemiclassicalSolution {
        let (a1, a2) = z2_transform(self.amplitudes());
        let spectrum = linearization_spectrum(a1, a2, &self.params).unwrap_or(self.spectrum);
        SemiclassicalSolution {
            alpha1: a1,
            alpha2: a2,
            branch: classify(a1, a2),
            stable: self.stable,
            spectrum,
            residual: residual_norm(a1, a2, &self.params),
            iterations: 0,
            params: self.params,
        }
    }
}

fn max_growth(spectrum: &[Complex64]) -> f64 {
    spectrum.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

fn unit_scale(params: &DimerParams) -> f64 {
    if params.u > 0.0 {
        params.u.sqrt()
    } else {
        1.0
    }
}

/// Left-hand sides of the stationary mean-field equations.
pub fn residual(alpha1: Complex64, alpha2: Complex64, params: &DimerParams) -> (Complex64, Complex64) {
    let c = Complex64::new(-params.delta, -params.gamma / 2.0);
    let (f1, f2) = params.drives();
    let r1 = (c + 2.0 * params.u * alpha1.norm_sqr()) * alpha1 - params.j * alpha2 + f1;
    let r2 = (c + 2.0 * params.u * alpha2.norm_sqr()) * alpha2 - params.j * alpha1 + f2;
    (r1, r2)
}

fn residual_norm(a1: Complex64, a2: Complex64, params: &DimerParams) -> f64 {
    let (r1, r2) = residual(a1, a2, params);
    (r1.norm_sqr() + r2.norm_sqr()).sqrt() * unit_scale(params)
}

fn classify(a1: Complex64, a2: Complex64) -> Branch {
    let o = a1 + a2;
    if o.norm() < SYMMETRY_TOL * (a1.norm() + a2.norm() + f64::MIN_POSITIVE) {
        Branch::Symmetric
    } else if o.re > 0.0 || (o.re == 0.0 && o.im > 0.0) {
        Branch::BrokenPlus
    } else {
        Branch::BrokenMinus
    }
}

/// Real Jacobian of `(Re r1, Im r1, Re r2, Im r2)` with respect to
/// `(Re a1, Im a1, Re a2, Im a2)`.
fn jacobian(a1: Complex64, a2: Complex64, params: &DimerParams) -> [[f64; 4]; 4] {
    let c = Complex64::new(-params.delta, -params.gamma / 2.0);
    let i = Complex64::i();
    let u = params.u;
    let site = |a: Complex64| {
        let base = c + 2.0 * u * a.norm_sqr();
        let d_re = base + 4.0 * u * a.re * a;
        let d_im = i * base + 4.0 * u * a.im * a;
        (d_re, d_im)
    };
    let (d1r, d1i) = site(a1);
    let (d2r, d2i) = site(a2);
    let hop_re = Complex64::new(-params.j, 0.0);
    let hop_im = -params.j * i;
    let cols1 = [d1r, d1i, hop_re, hop_im];
    let cols2 = [hop_re, hop_im, d2r, d2i];
    let mut jac = [[0.0; 4]; 4];
    for k in 0..4 {
        jac[0][k] = cols1[k].re;
        jac[1][k] = cols1[k].im;
        jac[2][k] = cols2[k].re;
        jac[3][k] = cols2[k].im;
    }
    jac
}

/// Damped Newton iteration on the four real unknowns.
fn newton(
    mut a1: Complex64,
    mut a2: Complex64,
    params: &DimerParams,
    max_iter: usize,
) -> Result<(Complex64, Complex64, usize), SolveError> {
    let mut res = residual_norm(a1, a2, params);
    for it in 0..max_iter {
        if res < NEWTON_TOL {
            return Ok((a1, a2, it));
        }
        let jac = jacobian(a1, a2, params);
        let mat = Mat::from_fn(4, 4, |r, c| Complex64::new(jac[r][c], 0.0));
        let (r1, r2) = residual(a1, a2, params);
        let rhs = [-r1.re, -r1.im, -r2.re, -r2.im].map(|v| Complex64::new(v, 0.0));
        let step = match numerics::solve_dense(mat.as_ref(), &rhs) {
            Ok(s) => s,
            Err(_) => return Err(SolveError::NoConvergence { iterations: it, residual: res }),
        };
        let d1 = Complex64::new(step[0].re, step[1].re);
        let d2 = Complex64::new(step[2].re, step[3].re);
        let mut lambda = 1.0;
        loop {
            let t1 = a1 + lambda * d1;
            let t2 = a2 + lambda * d2;
            let r = residual_norm(t1, t2, params);
            if r < res || lambda < 1e-4 {
                a1 = t1;
                a2 = t2;
                res = r;
                break;
            }
            lambda *= 0.5;
        }
        if !res.is_finite() {
            return Err(SolveError::NoConvergence { iterations: it + 1, residual: res });
        }
    }
    if res < NEWTON_TOL {
        Ok((a1, a2, max_iter))
    } else {
        Err(SolveError::NoConvergence { iterations: max_iter, residual: res })
    }
}

/// Newton on the symmetric subspace `a2 = -a1`, where the two equations coincide.
fn newton_symmetric(
    mut a: Complex64,
    params: &DimerParams,
    max_iter: usize,
) -> Result<(Complex64, usize), SolveError> {
    let c = Complex64::new(params.j - params.delta, -params.gamma / 2.0);
    let u = params.u;
    let scale = unit_scale(params);
    let eval = |a: Complex64| (c + 2.0 * u * a.norm_sqr()) * a + params.f;
    let mut r = eval(a);
    for it in 0..max_iter {
        // The full residual is sqrt(2) |r| for symmetric amplitudes.
        if std::f64::consts::SQRT_2 * r.norm() * scale < NEWTON_TOL {
            return Ok((a, it));
        }
        let base = c + 2.0 * u * a.norm_sqr();
        let d_re = base + 4.0 * u * a.re * a;
        let d_im = Complex64::i() * base + 4.0 * u * a.im * a;
        let det = d_re.re * d_im.im - d_im.re * d_re.im;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dx = (-r.re * d_im.im + r.im * d_im.re) / det;
        let dy = (-d_re.re * r.im + d_re.im * r.re) / det;
        a += Complex64::new(dx, dy);
        r = eval(a);
    }
    let res = std::f64::consts::SQRT_2 * r.norm() * scale;
    if res < NEWTON_TOL {
        Ok((a, max_iter))
    } else {
        Err(SolveError::NoConvergence { iterations: max_iter, residual: res })
    }
}

fn finish(a1: Complex64, a2: Complex64, iterations: usize, params: &DimerParams) -> Result<SemiclassicalSolution, SolveError> {
    let spectrum = linearization_spectrum(a1, a2, params)?;
    Ok(SemiclassicalSolution {
        alpha1: a1,
        alpha2: a2,
        branch: classify(a1, a2),
        stable: max_growth(&spectrum) < 0.0,
        spectrum,
        residual: residual_norm(a1, a2, params),
        iterations,
        params: *params,
    })
}

/// Newton solve from an initial guess; the branch label comes from the symmetry test.
pub fn solve_steady(
    params: &DimerParams,
    initial_guess: (Complex64, Complex64),
) -> Result<SemiclassicalSolution, SolveError> {
    params.validate()?;
    let (g1, g2) = initial_guess;
    if !(g1.re.is_finite() && g1.im.is_finite() && g2.re.is_finite() && g2.im.is_finite()) {
        return Err(SolveError::NoConvergence { iterations: 0, residual: f64::INFINITY });
    }
    let (a1, a2, it) = newton(g1, g2, params, NEWTON_MAX_ITER)?;
    if classify(a1, a2) == Branch::Symmetric {
        // Snap onto the exactly symmetric solution.
        let (a, it2) = newton_symmetric(0.5 * (a1 - a2), params, NEWTON_MAX_ITER)?;
        return finish(a, -a, it + it2, params);
    }
    finish(a1, a2, it, params)
}

/// Real roots of `c3 x^3 + c2 x^2 + c1 x + c0` (with `c3 != 0`).
fn real_cubic_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let (a, b, c) = (c2 / c3, c1 / c3, c0 / c3);
    let q = (a * a - 3.0 * b) / 9.0;
    let r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
    let mut roots = if r * r < q * q * q {
        let theta = (r / q.powf(1.5)).clamp(-1.0, 1.0).acos();
        let s = -2.0 * q.sqrt();
        vec![
            s * (theta / 3.0).cos() - a / 3.0,
            s * ((theta + 2.0 * std::f64::consts::PI) / 3.0).cos() - a / 3.0,
            s * ((theta - 2.0 * std::f64::consts::PI) / 3.0).cos() - a / 3.0,
        ]
    } else {
        let big_a = -r.signum() * (r.abs() + (r * r - q * q * q).sqrt()).cbrt();
        let big_b = if big_a != 0.0 { q / big_a } else { 0.0 };
        vec![big_a + big_b - a / 3.0]
    };
    // Polish against cancellation in the closed forms.
    for x in roots.iter_mut() {
        for _ in 0..4 {
            let f = ((c3 * *x + c2) * *x + c1) * *x + c0;
            let df = (3.0 * c3 * *x + 2.0 * c2) * *x + c1;
            if df == 0.0 {
                break;
            }
            *x -= f / df;
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));
    roots
}

/// All symmetric (`a2 = -a1`) steady states.
///
/// With `n = |a1|^2` the symmetric equation reduces to the cubic
/// `n [(J - delta + 2 U n)^2 + gamma^2 / 4] = F^2`; each non-negative root
/// fixes `a1 = -F / (J - delta + 2 U n - i gamma / 2)`.
pub fn symmetric_solutions(params: &DimerParams) -> Result<Vec<SemiclassicalSolution>, SolveError> {
    params.validate()?;
    let k = params.j - params.delta;
    let g2 = params.gamma * params.gamma / 4.0;
    let f2 = params.f * params.f;
    let occupations = if params.u == 0.0 {
        vec![f2 / (k * k + g2)]
    } else {
        let u = params.u;
        real_cubic_roots(4.0 * u * u, 4.0 * u * k, k * k + g2, -f2)
            .into_iter()
            .filter(|&n| n >= -1e-14 * (1.0 + f2))
            .map(|n| n.max(0.0))
            .collect()
    };
    let mut out: Vec<SemiclassicalSolution> = Vec::new();
    for n in occupations {
        let a = -params.f / Complex64::new(k + 2.0 * params.u * n, -params.gamma / 2.0);
        let (a, it) = newton_symmetric(a, params, NEWTON_MAX_ITER)?;
        if out.iter().any(|s| (s.alpha1 - a).norm() <= 1e-9 * (1.0 + a.norm())) {
            continue;
        }
        out.push(finish(a, -a, it, params)?);
    }
    Ok(out)
}

fn mean_field_rhs(a1: Complex64, a2: Complex64, params: &DimerParams) -> (Complex64, Complex64) {
    let (r1, r2) = residual(a1, a2, params);
    let mi = -Complex64::i();
    (mi * r1, mi * r2)
}

/// Fixed-step RK4 integration of the time-dependent mean-field equations.
pub fn integrate_transient(
    params: &DimerParams,
    alpha0: (Complex64, Complex64),
    t_end: f64,
    dt: f64,
) -> Result<(Complex64, Complex64), SolveError> {
    params.validate()?;
    let steps = (t_end / dt).ceil().max(0.0) as usize;
    let h = if steps > 0 { t_end / steps as f64 } else { 0.0 };
    let (mut a1, mut a2) = alpha0;
    for s in 0..steps {
        let (k1a, k1b) = mean_field_rhs(a1, a2, params);
        let (k2a, k2b) = mean_field_rhs(a1 + 0.5 * h * k1a, a2 + 0.5 * h * k1b, params);
        let (k3a, k3b) = mean_field_rhs(a1 + 0.5 * h * k2a, a2 + 0.5 * h * k2b, params);
        let (k4a, k4b) = mean_field_rhs(a1 + h * k3a, a2 + h * k3b, params);
        a1 += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        a2 += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        let big = a1.norm().max(a2.norm());
        if !(big <= OVERFLOW_AMPLITUDE) {
            return Err(SolveError::StepOverflow { time: (s + 1) as f64 * h });
        }
    }
    Ok((a1, a2))
}

/// Matrix `K` with `i d/dt (d1, d1*, d2, d2*) = K (d1, d1*, d2, d2*)`.
pub fn linearization(a1: Complex64, a2: Complex64, params: &DimerParams) -> Mat<Complex64> {
    let u = params.u;
    let j = Complex64::new(params.j, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let diag = |a: Complex64| Complex64::new(-params.delta + 4.0 * u * a.norm_sqr(), -params.gamma / 2.0);
    let (d1, d2) = (diag(a1), diag(a2));
    let (g1, g2) = (2.0 * u * a1 * a1, 2.0 * u * a2 * a2);
    let rows = [
        [d1, g1, -j, zero],
        [-g1.conj(), -d1.conj(), zero, j],
        [-j, zero, d2, g2],
        [zero, j, -g2.conj(), -d2.conj()],
    ];
    Mat::from_fn(4, 4, |r, c| rows[r][c])
}

/// Generator `-i K` of the linearized dynamics.
pub fn stability_generator(a1: Complex64, a2: Complex64, params: &DimerParams) -> Mat<Complex64> {
    let k = linearization(a1, a2, params);
    Mat::from_fn(4, 4, |r, c| -Complex64::i() * k[(r, c)])
}

fn linearization_spectrum(a1: Complex64, a2: Complex64, params: &DimerParams) -> Result<[Complex64; 4], LinalgError> {
    let m = stability_generator(a1, a2, params);
    let mut ev = numerics::eig_general(m.as_ref())?;
    ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    Ok([ev[0], ev[1], ev[2], ev[3]])
}

/// Stability verdict and spectrum of the linearization around a solution.
pub fn stability(solution: &SemiclassicalSolution) -> Result<(bool, [Complex64; 4]), SolveError> {
    let spectrum = linearization_spectrum(solution.alpha1, solution.alpha2, &solution.params)?;
    Ok((max_growth(&spectrum) < 0.0, spectrum))
}

/// Seeds a broken solution from an unstable symmetric one: nudge along the
/// fastest-growing eigenvector, let the dynamics relax, then polish with Newton.
fn broken_from_unstable(sym: &SemiclassicalSolution) -> Option<SemiclassicalSolution> {
    let params = &sym.params;
    let m = stability_generator(sym.alpha1, sym.alpha2, params);
    let (vals, vecs) = numerics::eig_general_vectors(m.as_ref()).ok()?;
    let k = (0..4).max_by(|&x, &y| vals[x].re.total_cmp(&vals[y].re))?;
    if vals[k].re <= 0.0 {
        return None;
    }
    let (v1, v2) = (vecs[(0, k)], vecs[(2, k)]);
    let vn = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
    let scale = sym.alpha1.norm().max(1.0 / unit_scale(params));
    // Close to a bifurcation the broken pair sits O(sqrt(distance)) away and
    // the instability is too slow to follow in time, so try Newton directly
    // from a ladder of kicks along the unstable direction first.
    for k in 0..9 {
        let amp = scale * 1e-4 * 10f64.powf(0.5 * k as f64);
        for q in 0..4 {
            let phase = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_2 * q as f64);
            let kick = amp * phase / vn;
            if let Ok((b1, b2, it)) = newton(sym.alpha1 + kick * v1, sym.alpha2 + kick * v2, params, 60) {
                if classify(b1, b2).is_broken() {
                    return finish(b1, b2, it, params).ok();
                }
            }
        }
    }
    let amp = scale * 1e-3;
    let mut a1 = sym.alpha1 + amp * v1 / vn;
    let mut a2 = sym.alpha2 + amp * v2 / vn;
    let relax = 20.0 / params.gamma;
    let dt = 0.01 / params.gamma;
    for _ in 0..50 {
        if let Ok((b1, b2, it)) = newton(a1, a2, params, 60) {
            if classify(b1, b2).is_broken() {
                return finish(b1, b2, it, params).ok();
            }
        }
        let (b1, b2) = integrate_transient(params, (a1, a2), relax, dt).ok()?;
        a1 = b1;
        a2 = b2;
    }
    None
}

fn broken_pair(solution: SemiclassicalSolution) -> [SemiclassicalSolution; 2] {
    let partner = solution.z2_partner();
    if solution.branch == Branch::BrokenPlus {
        [solution, partner]
    } else {
        [partner, solution]
    }
}

/// Every steady state reachable without continuation history: all
/// symmetric solutions plus, when a symmetric solution is unstable, the
/// broken pair it connects to.
pub fn all_solutions(params: &DimerParams) -> Result<Vec<SemiclassicalSolution>, SolveError> {
    let mut out = symmetric_solutions(params)?;
    let seeds: Vec<_> = out.iter().filter(|s| !s.stable).cloned().collect();
    for sym in seeds {
        if let Some(b) = broken_from_unstable(&sym) {
            for s in broken_pair(b) {
                if !out.iter().any(|o| (o.alpha1 - s.alpha1).norm() + (o.alpha2 - s.alpha2).norm() < 1e-8 * (1.0 + s.alpha1.norm())) {
                    out.push(s);
                }
            }
        }
    }
    Ok(out)
}

/// Solutions found at one drive value of a continuation scan.
#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub uf: f64,
    pub solutions: Vec<SemiclassicalSolution>,
    pub error: Option<SolveError>,
}

impl ScanPoint {
    pub fn symmetric(&self) -> Option<&SemiclassicalSolution> {
        self.solutions.iter().find(|s| s.branch == Branch::Symmetric)
    }

    pub fn branch(&self, branch: Branch) -> Option<&SemiclassicalSolution> {
        self.solutions.iter().find(|s| s.branch == branch)
    }

    /// Stable broken solution if one exists, otherwise the stable symmetric one.
    pub fn preferred(&self) -> Option<&SemiclassicalSolution> {
        self.solutions
            .iter()
            .find(|s| s.branch == Branch::BrokenPlus && s.stable)
            .or_else(|| self.solutions.iter().find(|s| s.branch == Branch::Symmetric && s.stable))
            .or_else(|| self.solutions.first())
    }
}

/// Continuation in the rescaled drive at fixed `U` (taken from `params_base`).
///
/// Each grid point enumerates the symmetric solutions directly and carries
/// the broken pair over from the previous point. A broken pair is born by
/// seeding from an unstable symmetric solution and dies when Newton falls
/// back onto the symmetric subspace or fails.
pub fn scan_branches(params_base: &DimerParams, uf_grid: &[f64]) -> Result<Vec<ScanPoint>, SolveError> {
    params_base.validate()?;
    let mut carried: Option<(Complex64, Complex64)> = None;
    let mut out = Vec::with_capacity(uf_grid.len());
    for &uf in uf_grid {
        let params = params_base.with_rescaled_drive(uf)?;
        let mut point = ScanPoint { uf, solutions: Vec::new(), error: None };
        match symmetric_solutions(&params) {
            Ok(s) => point.solutions = s,
            Err(e) => point.error = Some(e),
        }
        let mut broken = None;
        if let Some((g1, g2)) = carried {
            if let Ok((b1, b2, it)) = newton(g1, g2, &params, 60) {
                if classify(b1, b2).is_broken() {
                    broken = finish(b1, b2, it, &params).ok();
                }
            }
        }
        if broken.is_none() {
            broken = point
                .solutions
                .iter()
                .filter(|s| !s.stable)
                .find_map(broken_from_unstable);
        }
        carried = broken.as_ref().map(|b| b.amplitudes());
        if let Some(b) = broken {
            point.solutions.extend(broken_pair(b));
        }
        out.push(point);
    }
    Ok(out)
}

fn symmetric_growth(params_base: &DimerParams, uf: f64) -> Result<f64, SolveError> {
    let params = params_base.with_rescaled_drive(uf)?;
    let sols = symmetric_solutions(&params)?;
    Ok(sols.iter().map(|s| s.max_growth()).fold(f64::NEG_INFINITY, f64::max))
}

/// Drive values where the symmetric solution changes stability, found by
/// bisection between sign changes on `uf_grid`.
pub fn stability_crossings(params_base: &DimerParams, uf_grid: &[f64]) -> Result<Vec<f64>, SolveError> {
    let growth: Vec<f64> = uf_grid
        .iter()
        .map(|&uf| symmetric_growth(params_base, uf))
        .collect::<Result<_, _>>()?;
    let mut crossings = Vec::new();
    for k in 1..uf_grid.len() {
        if (growth[k - 1] < 0.0) != (growth[k] < 0.0) {
            let (mut lo, mut hi) = (uf_grid[k - 1], uf_grid[k]);
            let lo_negative = growth[k - 1] < 0.0;
            while hi - lo > BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                if (symmetric_growth(params_base, mid)? < 0.0) == lo_negative {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            crossings.push(0.5 * (lo + hi));
        }
    }
    Ok(crossings)
}

/// Fitted power law `y = prefactor |x - critical|^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub critical: f64,
    pub exponent: f64,
    pub prefactor: f64,
    /// Root-mean-square residual in `ln y`.
    pub rms_log_residual: f64,
    pub points: usize,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let sse = xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    (slope, icpt, sse)
}

/// Least-squares fit of `ln y = ln A + beta ln|x - x_c|` with `x_c` free.
///
/// The points are taken to lie on one side of the critical value, the side
/// being the one holding the majority of points relative to `uf_c_guess`.
/// For every trial `x_c` the slope and intercept follow from linear
/// regression; `x_c` itself is located by a logarithmic grid search followed
/// by golden-section refinement.
pub fn fit_exponent(points: &[(f64, f64)], uf_c_guess: f64) -> Result<PowerLawFit, FitError> {
    const REQUIRED: usize = 6;
    let above = points.iter().filter(|p| p.0 > uf_c_guess).count();
    let side_above = 2 * above >= points.len();
    let pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, y)| y > 0.0 && x.is_finite() && y.is_finite() && ((x > uf_c_guess) == side_above))
        .collect();
    if pts.len() < REQUIRED {
        return Err(FitError::InsufficientPoints { found: pts.len(), required: REQUIRED });
    }
    let xmin = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let span = xmax - xmin;
    if !(span > 0.0) {
        return Err(FitError::FitDiverged("all points share one abscissa".into()));
    }
    // Gap between the nearest point and the critical value.
    let edge = if side_above { xmin } else { xmax };
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let sse_at = |log_gap: f64| {
        let gap = log_gap.exp();
        let xc = if side_above { edge - gap } else { edge + gap };
        let xs: Vec<f64> = pts.iter().map(|p| (p.0 - xc).abs().ln()).collect();
        linear_fit(&xs, &ys)
    };
    let (lo, hi) = ((1e-9 * span).ln(), (10.0 * span).ln());
    let grid = 400;
    let mut best = (0usize, f64::INFINITY);
    for k in 0..=grid {
        let lg = lo + (hi - lo) * k as f64 / grid as f64;
        let sse = sse_at(lg).2;
        if sse < best.1 {
            best = (k, sse);
        }
    }
    if best.0 == 0 || best.0 == grid || !best.1.is_finite() {
        return Err(FitError::FitDiverged(format!(
            "critical value ran to the edge of the search range ({} of {grid})",
            best.0
        )));
    }
    let step = (hi - lo) / grid as f64;
    let (mut a, mut b) = (lo + step * (best.0 - 1) as f64, lo + step * (best.0 + 1) as f64);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (sse_at(c).2, sse_at(d).2);
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = sse_at(c).2;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = sse_at(d).2;
        }
    }
    let lg = 0.5 * (a + b);
    let (slope, icpt, sse) = sse_at(lg);
    let gap = lg.exp();
    let critical = if side_above { edge - gap } else { edge + gap };
    if !(slope.is_finite() && icpt.is_finite()) {
        return Err(FitError::FitDiverged("non-finite regression".into()));
    }
    Ok(PowerLawFit {
        critical,
        exponent: slope,
        prefactor: icpt.exp(),
        rms_log_residual: (sse / pts.len() as f64).sqrt(),
        points: pts.len(),
    })
}

/// Drive offsets from a critical value, log-spaced over the fit window.
pub fn fit_offsets(count: usize) -> Vec<f64> {
    let (lo, hi) = (FIT_WINDOW.0.ln(), FIT_WINDOW.1.ln());
    (0..count)
        .map(|k| {
            // Stay strictly inside the open window.
            let t = (k as f64 + 0.5) / count as f64;
            (lo + (hi - lo) * t).exp()
        })
        .collect()
}

/// Bifurcation points of the symmetric branch and the order-parameter power laws.
#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationResult {
    pub uf_lower: f64,
    pub uf_upper: f64,
    pub exponent_lower: f64,
    pub exponent_upper: f64,
    pub prefactor_lower: f64,
    pub prefactor_upper: f64,
    pub fit_lower: PowerLawFit,
    pub fit_upper: PowerLawFit,
}

/// Rescaled order parameter on the broken branch at drives `uf_c + side * offset`,
/// continued inward from the far end of the window.
pub fn broken_order_near(
    params_base: &DimerParams,
    uf_c: f64,
    side: f64,
    offsets: &[f64],
) -> Result<Vec<(f64, f64)>, SolveError> {
    let mut sorted = offsets.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let grid: Vec<f64> = sorted.iter().map(|o| uf_c + side * o).collect();
    let scan = scan_branches(params_base, &grid)?;
    let mut pts: Vec<(f64, f64)> = scan
        .iter()
        .filter_map(|p| p.branch(Branch::BrokenPlus).map(|s| (p.uf, s.rescaled_order_parameter())))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pts)
}

/// Locates both bifurcations on `[uf_min, uf_max]` and fits the order-parameter
/// exponent on the broken side of each, using [`FIT_WINDOW`].
pub fn analyze_bifurcations(
    params_base: &DimerParams,
    uf_min: f64,
    uf_max: f64,
    steps: usize,
) -> Result<BifurcationResult, SolveError> {
    let grid = linspace(uf_min, uf_max, steps);
    let crossings = stability_crossings(params_base, &grid)?;
    if crossings.len() != 2 {
        return Err(SolveError::UnexpectedCrossings(crossings.len()));
    }
    let offsets = fit_offsets(40);
    let lower = broken_order_near(params_base, crossings[0], 1.0, &offsets)?;
    let upper = broken_order_near(params_base, crossings[1], -1.0, &offsets)?;
    let fit_lower = fit_exponent(&lower, crossings[0])?;
    let fit_upper = fit_exponent(&upper, crossings[1])?;
    Ok(BifurcationResult {
        uf_lower: crossings[0],
        uf_upper: crossings[1],
        exponent_lower: fit_lower.exponent,
        exponent_upper: fit_upper.exponent,
        prefactor_lower: fit_lower.prefactor,
        prefactor_upper: fit_upper.prefactor,
        fit_lower,
        fit_upper,
    })
}

pub fn linspace(min: f64, max: f64, steps: usize) -> Vec<f64> {
    if steps < 2 {
        return vec![min];
    }
    (0..steps)
        .map(|k| min + (max - min) * k as f64 / (steps - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fig1(u: f64, uf: f64) -> DimerParams {
        DimerParams::from_rescaled(2.5, -1.5, 1.0, u, uf).unwrap()
    }

    #[test]
    fn vacuum_is_undriven_fixed_point() {
        let p = DimerParams::new(2.5, -1.5, 1.0, 0.7, 0.0).unwrap();
        let (r1, r2) = residual(c(0.0, 0.0), c(0.0, 0.0), &p);
        assert_eq!((r1, r2), (c(0.0, 0.0), c(0.0, 0.0)));
        let s = solve_steady(&p, (c(0.0, 0.0), c(0.0, 0.0))).unwrap();
        assert_eq!(s.branch, Branch::Symmetric);
        assert!(s.stable);
        assert_eq!(s.amplitudes(), (c(0.0, 0.0), c(0.0, 0.0)));
    }

    #[test]
    fn linear_closed_form() {
        let p = DimerParams::new(2.5, -1.5, 1.0, 0.0, 1.0).unwrap();
        let a = -1.0 / c(4.0, -0.5);
        let (r1, r2) = residual(a, -a, &p);
        assert!(r1.norm() < 1e-14 && r2.norm() < 1e-14);

        let s = solve_steady(&p, (c(0.0, 0.0), c(0.0, 0.0))).unwrap();
        assert!(s.iterations <= 5);
        assert!((s.alpha1 - a).norm() < 1e-12 && (s.alpha2 + a).norm() < 1e-12);
        for ev in s.spectrum {
            assert!((ev.re + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn z2_residual_identity() {
        let p = DimerParams::new(2.5, -1.5, 1.0, 0.8, 1.3).unwrap();
        let cases = [(c(0.3, -0.2), c(1.1, 0.4)), (c(-2.0, 0.5), c(0.1, 0.9)), (c(0.0, 1.0), c(0.7, -0.7))];
        for (a1, a2) in cases {
            let (r1, r2) = residual(a1, a2, &p);
            let (b1, b2) = z2_transform((a1, a2));
            let (s1, s2) = residual(b1, b2, &p);
            assert!((s1 + r2).norm() < 1e-13);
            assert!((s2 + r1).norm() < 1e-13);
        }
    }

    #[test]
    fn newton_agrees_with_time_integration() {
        let p = fig1(1e-2, 1.0);
        let sols = all_solutions(&p).unwrap();
        let stable: Vec<_> = sols.iter().filter(|s| s.stable).collect();
        assert!(!stable.is_empty());
        for s in stable {
            let start = (s.alpha1 * 1.02 + 0.01 * s.alpha1.norm(), s.alpha2 * 0.98);
            let (a1, a2) = integrate_transient(&p, start, 400.0, 0.01).unwrap();
            let scale = s.alpha1.norm() + s.alpha2.norm();
            assert!((a1 - s.alpha1).norm() + (a2 - s.alpha2).norm() < 1e-6 * scale);
        }
    }

    #[test]
    fn transient_decay_and_linear_limit() {
        let p = DimerParams::new(2.5, -1.5, 1.0, 0.0, 0.0).unwrap();
        let (a1, a2) = integrate_transient(&p, (c(1.0, 0.0), c(1.0, 0.0)), 4.0, 0.01).unwrap();
        let env = (-0.5f64 * 4.0).exp();
        assert!(((a1.norm_sqr() + a2.norm_sqr()).sqrt() / 2f64.sqrt() - env).abs() < 1e-8);

        let p = DimerParams::new(2.5, -1.5, 1.0, 0.0, 1.0).unwrap();
        let (a1, a2) = integrate_transient(&p, (c(0.0, 0.0), c(0.0, 0.0)), 40.0, 0.01).unwrap();
        let a = -1.0 / c(4.0, -0.5);
        assert!((a1 - a).norm() < 1e-6 && (a2 + a).norm() < 1e-6);
    }

    #[test]
    fn transient_overflow_is_reported() {
        // Negative loss is not allowed, so force divergence with a huge start.
        let p = DimerParams::new(2.5, -1.5, 1.0, 1.0, 0.0).unwrap();
        let err = integrate_transient(&p, (c(2e6, 0.0), c(0.0, 0.0)), 1.0, 0.01).unwrap_err();
        assert!(matches!(err, SolveError::StepOverflow { .. }));
    }

    #[test]
    fn symmetric_branch_unstable_inside_window() {
        let crossings = stability_crossings(&fig1(1.0, 0.0), &linspace(1.5, 4.0, 101)).unwrap();
        assert_eq!(crossings.len(), 2);
        let mid = 0.5 * (crossings[0] + crossings[1]);
        let sols = all_solutions(&fig1(1.0, mid)).unwrap();
        assert_eq!(sols.len(), 3);
        let sym = sols.iter().find(|s| s.branch == Branch::Symmetric).unwrap();
        assert!(!sym.stable && sym.max_growth() > 0.0);
        assert_eq!(sols.iter().filter(|s| s.branch.is_broken() && s.stable).count(), 2);
    }

    #[test]
    fn broken_branch_marginal_near_lower_crossing() {
        let base = fig1(1.0, 0.0);
        let crossings = stability_crossings(&base, &linspace(1.5, 4.0, 101)).unwrap();
        let uf_c = crossings[0];
        let pts = scan_branches(&base, &[uf_c + 0.05, uf_c + 0.01, uf_c + 1e-3]).unwrap();
        let g: Vec<f64> = pts.iter().map(|p| p.branch(Branch::BrokenPlus).unwrap().max_growth()).collect();
        assert!(g.iter().all(|&x| x < 0.0));
        assert!(g[2] > g[1] && g[1] > g[0], "growth rates {g:?} should approach 0 from below");
        assert!(g[2] > -0.05);
    }

    #[test]
    fn scan_up_and_down_agree() {
        let base = fig1(1.0, 0.0);
        let grid = linspace(1.5, 4.0, 61);
        let up = scan_branches(&base, &grid).unwrap();
        let rev: Vec<f64> = grid.iter().rev().copied().collect();
        let mut down = scan_branches(&base, &rev).unwrap();
        down.reverse();
        for (a, b) in up.iter().zip(&down) {
            assert_eq!(a.solutions.len(), b.solutions.len(), "uf = {}", a.uf);
            for s in &a.solutions {
                let t = b.branch(s.branch).unwrap();
                assert!((s.alpha1 - t.alpha1).norm() + (s.alpha2 - t.alpha2).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn order_parameter_profile() {
        let base = fig1(1.0, 0.0);
        let scan = scan_branches(&base, &linspace(1.5, 4.0, 51)).unwrap();
        let first = &scan[0];
        assert_eq!(first.solutions.len(), 1);
        assert!(first.solutions[0].stable);
        assert_eq!(first.solutions[0].rescaled_order_parameter(), 0.0);
        assert!(scan.iter().any(|p| p.preferred().unwrap().rescaled_order_parameter() > 0.1));
    }

    #[test]
    fn z2_partner_shares_order_and_spectrum() {
        let base = fig1(1.0, 0.0);
        let crossings = stability_crossings(&base, &linspace(1.5, 4.0, 101)).unwrap();
        let p = fig1(1.0, 0.5 * (crossings[0] + crossings[1]));
        let sols = all_solutions(&p).unwrap();
        let plus = sols.iter().find(|s| s.branch == Branch::BrokenPlus).unwrap();
        let minus = sols.iter().find(|s| s.branch == Branch::BrokenMinus).unwrap();
        assert!(minus.residual < NEWTON_TOL);
        assert!((plus.rescaled_order_parameter() - minus.rescaled_order_parameter()).abs() < 1e-12);
        // Compared as multisets: conjugate pairs tie on the real part.
        for x in &plus.spectrum {
            let nearest = minus.spectrum.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-10, "{x} missing from partner spectrum");
        }
    }

    #[test]
    fn spectrum_closed_under_conjugation() {
        let p = fig1(1.0, 1.0);
        for s in all_solutions(&p).unwrap() {
            for ev in s.spectrum {
                let nearest = s.spectrum.iter().map(|z| (z - ev.conj()).norm()).fold(f64::INFINITY, f64::min);
                assert!(nearest < 1e-10);
            }
            let conj_params = s.params;
            let (_, spec_conj) = stability(&SemiclassicalSolution {
                alpha1: s.alpha1.conj(),
                alpha2: s.alpha2.conj(),
                ..s.clone()
            })
            .unwrap();
            let _ = conj_params;
            for (x, y) in s.spectrum.iter().zip(&spec_conj) {
                assert!((x.re - y.re).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fit_exact_power_laws() {
        let xs = linspace(1.001, 1.05, 30);
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, (x - 1.0).sqrt())).collect();
        let fit = fit_exponent(&pts, 1.0).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-3);
        assert!((fit.critical - 1.0).abs() < 1e-3);

        let xs = linspace(0.31, 0.6, 20);
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 2.0 * (x - 0.3))).collect();
        let fit = fit_exponent(&pts, 0.3).unwrap();
        assert!((fit.exponent - 1.0).abs() < 1e-6);
        assert!((fit.critical - 0.3).abs() < 1e-6);
        assert!((fit.prefactor - 2.0).abs() < 1e-5);

        // Approach from above the critical value with a diverging quantity.
        let xs = linspace(0.5, 0.69, 20);
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 3.0 / (0.7 - x))).collect();
        let fit = fit_exponent(&pts, 0.7).unwrap();
        assert!((fit.exponent + 1.0).abs() < 1e-6);
        assert!((fit.critical - 0.7).abs() < 1e-6);
    }

    #[test]
    fn fit_errors() {
        let pts: Vec<(f64, f64)> = (0..4).map(|k| (1.0 + k as f64, 1.0)).collect();
        assert!(matches!(fit_exponent(&pts, 0.0), Err(FitError::InsufficientPoints { found: 4, .. })));
        // Exponential data has no finite critical point.
        let pts: Vec<(f64, f64)> = linspace(0.0, 1.0, 20).iter().map(|&x| (x, (3.0 * x).exp())).collect();
        assert!(matches!(fit_exponent(&pts, -0.5), Err(FitError::FitDiverged(_))));
    }

    #[test]
    fn cubic_roots() {
        let r = real_cubic_roots(1.0, -6.0, 11.0, -6.0);
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let r = real_cubic_roots(2.0, 0.0, 2.0, -4.0);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn rescaling_invariance(u in 0.05f64..2.0, uf in 0.2f64..4.0) {
            let a = all_solutions(&fig1(u, uf)).unwrap();
            let b = all_solutions(&fig1(u / 4.0, uf)).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for s in &a {
                let t = b.iter().find(|t| t.branch == s.branch).unwrap();
                let (sa, sb) = (u.sqrt(), (u / 4.0).sqrt());
                prop_assert!((s.alpha1 * sa - t.alpha1 * sb).norm() < 1e-10);
                prop_assert!((s.alpha2 * sa - t.alpha2 * sb).norm() < 1e-10);
            }
        }

        #[test]
        fn converged_solutions_have_small_residual(uf in 0.0f64..4.0) {
            for s in all_solutions(&fig1(0.5, uf)).unwrap() {
                prop_assert!(s.residual < NEWTON_TOL);
                if s.branch == Branch::Symmetric {
                    prop_assert_eq!(s.order_parameter().norm(), 0.0);
                }
            }
        }
    }
}
