//! Exact steady state of the Lindblad master equation on a truncated Fock
//! space of the fluctuation operators `d_i = a_i - alpha_i`.
//!
//! Basis states `|n1, n2>` are indexed `n1 * (cutoff + 1) + n2`. Density
//! matrices are vectorized row by row, `vec(rho)[i * d + j] = rho[i][j]`, so
//! that `vec(A rho B) = (A kron B^T) vec(rho)` and the generator reads
//!
//! ```text
//! L = -i (H kron I - I kron H^T)
//!     + gamma/2 sum_j [2 d_j kron conj(d_j) - N_j kron I - I kron N_j^T]
//! ```

use faer::Mat;
use num_complex::Complex64;
use thiserror::Error;

use crate::gaussian::{entropy_function, MomentSet};
use crate::model::DimerParams;
use crate::numerics::{self, LinalgError, SparseMatrix, TripletBuilder, KERNEL_TOL};
use crate::semiclassical::{self, SemiclassicalSolution, SolveError};

/// Largest tolerated linear drive left over in the displaced frame.
pub const RESIDUAL_DRIVE_TOL: f64 = 1e-8;
/// Default per-site cutoff.
pub const DEFAULT_CUTOFF: usize = 10;
/// Cutoffs above this are supported but slow.
pub const SLOW_CUTOFF: usize = 14;
/// Eigenvalues of `rho` below this (negative) bound are an error.
pub const UNPHYSICAL_EIGENVALUE: f64 = -1e-6;
/// Eigenvalues of `rho` below this are dropped from the entropy sum.
pub const ENTROPY_CUTOFF: f64 = 1e-14;
/// Default threshold on relative changes between consecutive cutoffs.
pub const CONVERGENCE_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("cutoff must be at least 1")]
    InvalidCutoff,
    #[error("displacement leaves a linear drive of magnitude {magnitude:.3e}; it is not a mean-field steady state")]
    ResidualDriveTooLarge { magnitude: f64 },
    #[error("steady state not converged: residual {residual:.3e} exceeds {bound:.3e}")]
    NotConverged { residual: f64, bound: f64 },
    #[error("density matrix has eigenvalue {0:.3e}")]
    UnphysicalSpectrum(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Semiclassical(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockConfig {
    pub cutoff: usize,
    pub displacement: (Complex64, Complex64),
}

impl FockConfig {
    pub fn new(cutoff: usize, displacement: (Complex64, Complex64)) -> Result<Self, FockError> {
        if cutoff < 1 {
            return Err(FockError::InvalidCutoff);
        }
        Ok(Self { cutoff, displacement })
    }

    pub fn vacuum_frame(cutoff: usize) -> Result<Self, FockError> {
        Self::new(cutoff, (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)))
    }

    pub fn local_dim(&self) -> usize {
        self.cutoff + 1
    }

    pub fn dim(&self) -> usize {
        self.local_dim() * self.local_dim()
    }

    pub fn is_slow(&self) -> bool {
        self.cutoff > SLOW_CUTOFF
    }
}

/// Ladder operators on the two-site product space.
#[derive(Debug, Clone)]
pub struct Operators {
    pub d1: Mat<Complex64>,
    pub d2: Mat<Complex64>,
    pub identity: Mat<Complex64>,
}

fn local_annihilation(m: usize) -> Mat<Complex64> {
    Mat::from_fn(m, m, |r, c| {
        if c == r + 1 {
            Complex64::new((c as f64).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

fn kron(a: &Mat<Complex64>, b: &Mat<Complex64>) -> Mat<Complex64> {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}

pub fn adjoint(a: &Mat<Complex64>) -> Mat<Complex64> {
    Mat::from_fn(a.ncols(), a.nrows(), |r, c| a[(c, r)].conj())
}

impl Operators {
    pub fn number1(&self) -> Mat<Complex64> {
        &adjoint(&self.d1) * &self.d1
    }

    pub fn number2(&self) -> Mat<Complex64> {
        &adjoint(&self.d2) * &self.d2
    }
}

pub fn build_operators(config: &FockConfig) -> Operators {
    let m = config.local_dim();
    let a = local_annihilation(m);
    let id = Mat::<Complex64>::identity(m, m);
    Operators { d1: kron(&a, &id), d2: kron(&id, &a), identity: Mat::identity(m * m, m * m) }
}

/// Rotating-frame Hamiltonian expanded around the displacement.
#[derive(Debug, Clone)]
pub struct DisplacedHamiltonian {
    pub matrix: Mat<Complex64>,
    /// Coefficients of `d_i^dag` in the linear part, including the
    /// contribution of the dissipator; they vanish at a mean-field steady state.
    pub linear_drive: (Complex64, Complex64),
}

fn local_hamiltonian(m: usize, params: &DimerParams, alpha: Complex64) -> Mat<Complex64> {
    let a = local_annihilation(m);
    let ad = adjoint(&a);
    let n = &ad * &a;
    let ad2 = &ad * &ad;
    let a2 = &a * &a;
    let u = params.u;
    let mut h = Mat::<Complex64>::zeros(m, m);
    let cubic_up = &ad2 * &a;
    let cubic_down = &ad * &a2;
    let quartic = &ad2 * &a2;
    for r in 0..m {
        for c in 0..m {
            h[(r, c)] = (-params.delta + 4.0 * u * alpha.norm_sqr()) * n[(r, c)]
                + u * (alpha * alpha * ad2[(r, c)] + (alpha * alpha).conj() * a2[(r, c)])
                + 2.0 * u * (alpha * cubic_up[(r, c)] + alpha.conj() * cubic_down[(r, c)])
                + u * quartic[(r, c)];
        }
    }
    h
}

/// Displaced-frame Hamiltonian: the constant is dropped and the linear
/// drive, which must cancel against the dissipator's displacement term, is
/// checked and discarded.
pub fn displaced_hamiltonian(params: &DimerParams, config: &FockConfig) -> Result<DisplacedHamiltonian, FockError> {
    let (a1, a2) = config.displacement;
    let linear_drive = semiclassical::residual(a1, a2, params);
    let magnitude = linear_drive.0.norm().max(linear_drive.1.norm());
    if !(magnitude <= RESIDUAL_DRIVE_TOL) {
        return Err(FockError::ResidualDriveTooLarge { magnitude });
    }
    let m = config.local_dim();
    let id = Mat::<Complex64>::identity(m, m);
    let a = local_annihilation(m);
    let ad = adjoint(&a);
    let h1 = kron(&local_hamiltonian(m, params, a1), &id);
    let h2 = kron(&id, &local_hamiltonian(m, params, a2));
    let hop = &kron(&ad, &a) + &kron(&a, &ad);
    let d = config.dim();
    let matrix = Mat::from_fn(d, d, |r, c| h1[(r, c)] + h2[(r, c)] - params.j * hop[(r, c)]);
    Ok(DisplacedHamiltonian { matrix, linear_drive })
}

fn nonzeros(a: &Mat<Complex64>) -> Vec<(usize, usize, Complex64)> {
    let mut out = Vec::new();
    for c in 0..a.ncols() {
        for r in 0..a.nrows() {
            let v = a[(r, c)];
            if v != Complex64::new(0.0, 0.0) {
                out.push((r, c, v));
            }
        }
    }
    out
}

/// Row-stacked Liouvillian with loss `gamma` on both sites.
pub fn build_liouvillian(h: &Mat<Complex64>, config: &FockConfig, gamma: f64) -> SparseMatrix {
    let ops = build_operators(config);
    let d = config.dim();
    let i = Complex64::i();
    let n_total = &ops.number1() + &ops.number2();
    let h_eff = Mat::from_fn(d, d, |r, c| h[(r, c)] - 0.5 * gamma * i * n_total[(r, c)]);
    let h_nz = nonzeros(&h_eff);
    let jumps = [nonzeros(&ops.d1), nonzeros(&ops.d2)];
    let capacity = 2 * h_nz.len() * d + jumps.iter().map(|j| j.len() * j.len()).sum::<usize>();
    let mut b = TripletBuilder::with_capacity(d * d, capacity);
    let idx = |r: usize, c: usize| r * d + c;
    for &(r, k, v) in &h_nz {
        for j in 0..d {
            // -i H_eff rho
            b.push(idx(r, j), idx(k, j), -i * v);
            // +i rho H_eff^dag: (rho H_eff^dag)[j][r] picks up conj(H_eff[r][k]) rho[j][k]
            b.push(idx(j, r), idx(j, k), i * v.conj());
        }
    }
    for jump in &jumps {
        for &(r, k, w) in jump {
            for &(c, l, w2) in jump {
                b.push(idx(r, c), idx(k, l), gamma * w * w2.conj());
            }
        }
    }
    b.build()
}

/// Hermitian, unit-trace density matrix in the displaced Fock basis.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub rho: Mat<Complex64>,
    pub cutoff: usize,
    pub displacement: (Complex64, Complex64),
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn local_dim(&self) -> usize {
        self.cutoff + 1
    }

    pub fn from_matrix(rho: Mat<Complex64>, config: &FockConfig) -> Self {
        assert_eq!(rho.nrows(), config.dim());
        DensityMatrix { rho, cutoff: config.cutoff, displacement: config.displacement }
    }

    /// Pure state `|psi><psi|`, normalized.
    pub fn from_pure(psi: &[Complex64], config: &FockConfig) -> Self {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let rho = Mat::from_fn(psi.len(), psi.len(), |r, c| psi[r] * psi[c].conj() / norm);
        Self::from_matrix(rho, config)
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|k| self.rho[(k, k)]).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in 0..=r {
                worst = worst.max((self.rho[(r, c)] - self.rho[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>, FockError> {
        Ok(numerics::eigvals_hermitian(self.rho.as_ref())?)
    }

    /// `Tr(rho X)`.
    pub fn expect(&self, op: &Mat<Complex64>) -> Complex64 {
        let d = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..d {
            for b in 0..d {
                let o = op[(b, a)];
                if o != Complex64::new(0.0, 0.0) {
                    acc += self.rho[(a, b)] * o;
                }
            }
        }
        acc
    }

    /// Partial transpose with respect to site 2.
    pub fn partial_transpose(&self) -> Mat<Complex64> {
        let m = self.local_dim();
        let d = self.dim();
        Mat::from_fn(d, d, |r, c| {
            let (n1, n2) = (r / m, r % m);
            let (m1, m2) = (c / m, c % m);
            self.rho[(n1 * m + m2, m1 * m + n2)]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMethod {
    /// Sparse LU solve with one row replaced by the trace constraint.
    TraceAugmented,
    /// The same trace-augmented system solved by preconditioned GMRES.
    Krylov,
    /// Shift-invert Arnoldi for the eigenvalue closest to zero.
    Arnoldi,
}

impl KernelMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelMethod::TraceAugmented => "direct",
            KernelMethod::Krylov => "krylov",
            KernelMethod::Arnoldi => "arnoldi",
        }
    }
}

/// Above this cutoff the automatic choice switches from sparse LU to GMRES;
/// the fill of the LU factors grows like `(cutoff + 1)^6`.
pub const DIRECT_MAX_CUTOFF: usize = 5;
const GMRES_RESTART: usize = 80;
const GMRES_MAX_ITER: usize = 4000;
const GMRES_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// `||L vec(rho)||_2` of the final, Hermitized and normalized state.
    pub residual: f64,
    /// `||L||_inf`, the scale residuals are compared against.
    pub scale: f64,
    /// Largest entry of the anti-Hermitian part removed by Hermitization.
    pub hermiticity_correction: f64,
    /// `|Tr rho - 1|` removed by the final renormalization.
    pub trace_correction: f64,
    pub method: KernelMethod,
    /// GMRES iterations, zero for the other methods.
    pub iterations: usize,
}

impl SteadyState {
    pub fn relative_residual(&self) -> f64 {
        self.residual / self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    /// Kernel tolerance relative to `||L||_inf`.
    pub tol_kernel: f64,
    /// `None` picks by cutoff and falls back on failure.
    pub method: Option<KernelMethod>,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self { tol_kernel: KERNEL_TOL, method: None }
    }
}

/// Exact inverse of the jump-free part of the Liouvillian,
/// `X -> A X + X A^dag` with `A = -i H_eff`, applied in the eigenbasis of `A`.
///
/// Used as a right preconditioner; the jump terms are a comparatively small
/// correction away from criticality.
pub struct NoJumpPreconditioner {
    v: Mat<Complex64>,
    v_inv: Mat<Complex64>,
    inv_den: Mat<Complex64>,
}

impl NoJumpPreconditioner {
    pub fn new(h: &Mat<Complex64>, config: &FockConfig, gamma: f64) -> Result<Self, FockError> {
        let ops = build_operators(config);
        let n_total = &ops.number1() + &ops.number2();
        let d = config.dim();
        let a = Mat::from_fn(d, d, |r, c| -Complex64::i() * h[(r, c)] - 0.5 * gamma * n_total[(r, c)]);
        let (lambda, v) = numerics::eig_general_vectors(a.as_ref())?;
        let v_inv = numerics::inverse(v.as_ref());
        // The tiny shift keeps the vacuum pair (lambda = 0 without displacement) invertible.
        let shift = 1e-8 * gamma;
        let inv_den = Mat::from_fn(d, d, |i, j| 1.0 / (lambda[i] + lambda[j].conj() - shift));
        Ok(Self { v, v_inv, inv_den })
    }

    pub fn apply(&self, y: &[Complex64], out: &mut [Complex64]) {
        let d = self.v.nrows();
        let ym = Mat::from_fn(d, d, |i, j| y[i * d + j]);
        let yt = &(&self.v_inv * &ym) * &adjoint(&self.v_inv);
        let xt = Mat::from_fn(d, d, |i, j| yt[(i, j)] * self.inv_den[(i, j)]);
        let x = &(&self.v * &xt) * &adjoint(&self.v);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = x[(i, j)];
            }
        }
    }
}

fn trace_row(d: usize) -> Vec<(usize, Complex64)> {
    (0..d).map(|k| (k * d + k, Complex64::new(1.0, 0.0))).collect()
}

fn unit_rhs(n: usize) -> Vec<Complex64> {
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    rhs[0] = Complex64::new(1.0, 0.0);
    rhs
}

fn trace_augmented(l: &SparseMatrix, d: usize) -> Result<Vec<Complex64>, LinalgError> {
    let aug = l.with_row_replaced(0, &trace_row(d));
    Ok(aug.lu()?.solve(&unit_rhs(d * d)))
}

fn krylov(l: &SparseMatrix, pre: &NoJumpPreconditioner, d: usize) -> Result<(Vec<Complex64>, usize), LinalgError> {
    let aug = l.with_row_replaced(0, &trace_row(d));
    let (x, stats) = numerics::gmres(
        |v, out| aug.matvec_into(v, out),
        |v, out| pre.apply(v, out),
        &unit_rhs(d * d),
        GMRES_TOL,
        GMRES_RESTART,
        GMRES_MAX_ITER,
    )?;
    Ok((x, stats.iterations))
}

fn finalize(v: &[Complex64], config: &FockConfig) -> (DensityMatrix, f64, f64) {
    let d = config.dim();
    let tr: Complex64 = (0..d).map(|k| v[k * d + k]).sum();
    let raw = Mat::from_fn(d, d, |r, c| v[r * d + c] / tr);
    let mut herm_corr = 0.0f64;
    let mut rho = Mat::from_fn(d, d, |r, c| 0.5 * (raw[(r, c)] + raw[(c, r)].conj()));
    for r in 0..d {
        for c in 0..d {
            herm_corr = herm_corr.max((raw[(r, c)] - rho[(r, c)]).norm());
        }
    }
    let tr_h: f64 = (0..d).map(|k| rho[(k, k)].re).sum();
    let trace_corr = (tr_h - 1.0).abs();
    for r in 0..d {
        for c in 0..d {
            rho[(r, c)] /= tr_h;
        }
    }
    (DensityMatrix::from_matrix(rho, config), herm_corr, trace_corr)
}

fn vectorize(rho: &DensityMatrix) -> Vec<Complex64> {
    let d = rho.dim();
    (0..d * d).map(|k| rho.rho[(k / d, k % d)]).collect()
}

fn solve_kernel(
    l: &SparseMatrix,
    pre: Option<&NoJumpPreconditioner>,
    config: &FockConfig,
    tol_kernel: f64,
    method: KernelMethod,
) -> Result<SteadyState, FockError> {
    let d = config.dim();
    assert_eq!(l.dim(), d * d, "Liouvillian does not match the Fock configuration");
    let scale = l.norm_scale();
    let bound = tol_kernel * scale;
    let (v, iterations) = match method {
        KernelMethod::TraceAugmented => (trace_augmented(l, d)?, 0),
        KernelMethod::Krylov => {
            let pre = pre.ok_or_else(|| {
                FockError::Linalg(LinalgError::DimensionMismatch("GMRES needs the no-jump preconditioner".into()))
            })?;
            krylov(l, pre, d)?
        }
        KernelMethod::Arnoldi => (numerics::null_vector(l, bound)?, 0),
    };
    let (rho, hermiticity_correction, trace_correction) = finalize(&v, config);
    let residual = numerics::norm2(&l.matvec(&vectorize(&rho)));
    if !(residual <= bound) {
        return Err(FockError::NotConverged { residual, bound });
    }
    Ok(SteadyState { rho, residual, scale, hermiticity_correction, trace_correction, method, iterations })
}

fn solve_with_fallback(
    l: &SparseMatrix,
    pre: Option<&NoJumpPreconditioner>,
    config: &FockConfig,
    options: &SteadyStateOptions,
) -> Result<SteadyState, FockError> {
    if let Some(m) = options.method {
        return solve_kernel(l, pre, config, options.tol_kernel, m);
    }
    let order: &[KernelMethod] = if pre.is_some() && config.cutoff > DIRECT_MAX_CUTOFF {
        &[KernelMethod::Krylov, KernelMethod::TraceAugmented, KernelMethod::Arnoldi]
    } else {
        &[KernelMethod::TraceAugmented, KernelMethod::Arnoldi]
    };
    let mut last = None;
    for &m in order {
        match solve_kernel(l, pre, config, options.tol_kernel, m) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one method attempted"))
}

/// Kernel of the Liouvillian as a density matrix.
///
/// The trace-augmented direct solve is tried first; if it fails or its
/// residual misses the bound, shift-invert Arnoldi takes over.
pub fn steady_state(l: &SparseMatrix, config: &FockConfig, options: &SteadyStateOptions) -> Result<SteadyState, FockError> {
    solve_with_fallback(l, None, config, options)
}

/// As [`steady_state`], with the GMRES route available (and preferred above
/// [`DIRECT_MAX_CUTOFF`]).
pub fn steady_state_preconditioned(
    l: &SparseMatrix,
    pre: &NoJumpPreconditioner,
    config: &FockConfig,
    options: &SteadyStateOptions,
) -> Result<SteadyState, FockError> {
    solve_with_fallback(l, Some(pre), config, options)
}

/// First and second moments of the fluctuations plus the order parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockObservables {
    /// `(<d1>, <d2>)`
    pub mean_fields: (Complex64, Complex64),
    /// `<O> = alpha1 + alpha2 + <d1 + d2>`
    pub order_parameter: Complex64,
    /// Raw (uncentered) second moments of the fluctuation operators.
    pub moments: MomentSet,
    pub variance: f64,
}

pub fn observables(rho: &DensityMatrix, displacement: (Complex64, Complex64)) -> FockObservables {
    let cfg = FockConfig { cutoff: rho.cutoff, displacement };
    let ops = build_operators(&cfg);
    let d1d = adjoint(&ops.d1);
    let d2d = adjoint(&ops.d2);
    let m1 = rho.expect(&ops.d1);
    let m2 = rho.expect(&ops.d2);
    let moments = MomentSet {
        n1: rho.expect(&(&d1d * &ops.d1)).re,
        n2: rho.expect(&(&d2d * &ops.d2)).re,
        s1: rho.expect(&(&ops.d1 * &ops.d1)),
        s2: rho.expect(&(&ops.d2 * &ops.d2)),
        t: rho.expect(&(&d1d * &ops.d2)),
        u: rho.expect(&(&ops.d1 * &ops.d2)),
    };
    let variance = moments.n1 + moments.n2 + 2.0 * moments.t.re - (m1 + m2).norm_sqr();
    FockObservables {
        mean_fields: (m1, m2),
        order_parameter: displacement.0 + displacement.1 + m1 + m2,
        moments,
        variance,
    }
}

/// Negativity `N` and logarithmic negativity `ln(2N + 1)` from the partial transpose.
pub fn negativity_exact(rho: &DensityMatrix) -> Result<(f64, f64), FockError> {
    let pt = rho.partial_transpose();
    let ev = numerics::eigvals_hermitian(pt.as_ref())?;
    let n: f64 = ev.iter().map(|l| (l.abs() - l) / 2.0).sum();
    Ok((n, (2.0 * n + 1.0).ln()))
}

/// `S = -Tr(rho ln rho)`.
pub fn entropy_exact(rho: &DensityMatrix) -> Result<f64, FockError> {
    let ev = rho.eigenvalues()?;
    entropy_from_spectrum(&ev)
}

fn entropy_from_spectrum(ev: &[f64]) -> Result<f64, FockError> {
    if let Some(&min) = ev.iter().min_by(|a, b| a.total_cmp(b)) {
        if min < UNPHYSICAL_EIGENVALUE {
            return Err(FockError::UnphysicalSpectrum(min));
        }
    }
    Ok(ev.iter().filter(|&&l| l > ENTROPY_CUTOFF).map(|&l| -l * l.ln()).sum())
}

/// Everything the exact tier reports at one parameter point.
#[derive(Debug, Clone)]
pub struct ExactPoint {
    pub cutoff: usize,
    pub observables: FockObservables,
    pub negativity: f64,
    pub log_negativity: f64,
    pub entropy: f64,
    pub min_eigenvalue: f64,
    pub residual: f64,
    pub relative_residual: f64,
    pub hermiticity_correction: f64,
    pub trace_correction: f64,
    pub method: KernelMethod,
    pub steady: SteadyState,
}

/// Steady state and observables around a given displacement.
pub fn exact_point(params: &DimerParams, config: &FockConfig, options: &SteadyStateOptions) -> Result<ExactPoint, FockError> {
    let h = displaced_hamiltonian(params, config)?;
    let l = build_liouvillian(&h.matrix, config, params.gamma);
    let pre = NoJumpPreconditioner::new(&h.matrix, config, params.gamma)?;
    let steady = steady_state_preconditioned(&l, &pre, config, options)?;
    let ev = steady.rho.eigenvalues()?;
    let min_eigenvalue = ev.first().copied().unwrap_or(0.0);
    let entropy = entropy_from_spectrum(&ev)?;
    let (negativity, log_negativity) = negativity_exact(&steady.rho)?;
    Ok(ExactPoint {
        cutoff: config.cutoff,
        observables: observables(&steady.rho, config.displacement),
        negativity,
        log_negativity,
        entropy,
        min_eigenvalue,
        residual: steady.residual,
        relative_residual: steady.relative_residual(),
        hermiticity_correction: steady.hermiticity_correction,
        trace_correction: steady.trace_correction,
        method: steady.method,
        steady,
    })
}

/// Stable broken solution when one exists, else the stable symmetric one.
pub fn default_displacement(params: &DimerParams) -> Result<SemiclassicalSolution, FockError> {
    let sols = semiclassical::all_solutions(params)?;
    sols.iter()
        .find(|s| s.branch == semiclassical::Branch::BrokenPlus && s.stable)
        .or_else(|| sols.iter().find(|s| s.branch == semiclassical::Branch::Symmetric && s.stable))
        .or_else(|| sols.first())
        .cloned()
        .ok_or(FockError::Semiclassical(SolveError::NoConvergence { iterations: 0, residual: f64::NAN }))
}

#[derive(Debug, Clone)]
pub struct CutoffRow {
    pub point: ExactPoint,
    /// Largest relative change of `V`, `E_N` and `S` from the previous cutoff.
    pub relative_change: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CutoffTable {
    pub rows: Vec<CutoffRow>,
    pub threshold: f64,
}

impl CutoffTable {
    /// Whether the last two cutoffs agree within the threshold.
    pub fn converged(&self) -> bool {
        self.rows.last().and_then(|r| r.relative_change).is_some_and(|c| c < self.threshold)
    }
}

fn relative_difference(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-12 {
        (a - b).abs()
    } else {
        (a - b).abs() / denom
    }
}

/// Observables recomputed at each cutoff (ascending) with successive relative changes.
pub fn cutoff_convergence(
    params: &DimerParams,
    displacement: (Complex64, Complex64),
    cutoffs: &[usize],
    threshold: f64,
    options: &SteadyStateOptions,
) -> Result<CutoffTable, FockError> {
    let mut rows: Vec<CutoffRow> = Vec::with_capacity(cutoffs.len());
    for &cutoff in cutoffs {
        let config = FockConfig::new(cutoff, displacement)?;
        let point = exact_point(params, &config, options)?;
        let relative_change = rows.last().map(|prev| {
            let p = &prev.point;
            relative_difference(p.observables.variance, point.observables.variance)
                .max(relative_difference(p.log_negativity, point.log_negativity))
                .max(relative_difference(p.entropy, point.entropy))
        });
        rows.push(CutoffRow { point, relative_change });
    }
    Ok(CutoffTable { rows, threshold })
}

/// Entropy of a product of thermal states with occupations `nbar`, for checks
/// against the Gaussian formula.
pub fn thermal_entropy(nbar: f64) -> f64 {
    entropy_function(nbar + 0.5)
}
