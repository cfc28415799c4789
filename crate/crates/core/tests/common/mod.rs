//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use bhdimer::fockspace::{build_operators, DensityMatrix, FockConfig};
use bhdimer::gaussian::{assemble_moment_system, CovarianceMatrix, MomentSet};
use bhdimer::numerics::eigvals_hermitian;
use bhdimer::semiclassical::SemiclassicalSolution;
use bhdimer::{Complex64, DimerParams, SparseMatrix};
use faer::linalg::solvers::Solve;
use faer::Mat;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn fig1(u: f64, uf: f64) -> DimerParams {
    DimerParams::from_rescaled(2.5, -1.5, 1.0, u, uf).unwrap()
}

/// Kernel of a small Liouvillian from a full dense SVD: the right singular
/// vector of the smallest singular value, reshaped row by row and trace-normalized.
pub fn dense_kernel(l: &SparseMatrix, d: usize) -> (Mat<Complex64>, f64, f64) {
    let dense = l.to_dense();
    let svd = dense.svd().expect("svd");
    let s = svd.S();
    let n = dense.nrows();
    let (kmin, smin) = (0..n).map(|k| (k, s[k].re)).min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let second = (0..n).filter(|&k| k != kmin).map(|k| s[k].re).fold(f64::INFINITY, f64::min);
    let v = svd.V();
    let tr: Complex64 = (0..d).map(|k| v[(k * d + k, kmin)]).sum();
    let rho = Mat::from_fn(d, d, |i, j| v[(i * d + j, kmin)] / tr);
    (rho, smin, second)
}

/// Classical RK4 integration of `d vec(rho)/dt = L vec(rho)`.
pub fn evolve_rk4(l: &SparseMatrix, rho0: &[Complex64], t_end: f64, dt: f64) -> Vec<Complex64> {
    let steps = (t_end / dt).round() as usize;
    let n = rho0.len();
    let mut y = rho0.to_vec();
    let mut k = vec![vec![c(0.0, 0.0); n]; 4];
    let mut tmp = vec![c(0.0, 0.0); n];
    for _ in 0..steps {
        l.matvec_into(&y, &mut k[0]);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k[0][i];
        }
        l.matvec_into(&tmp, &mut k[1]);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k[1][i];
        }
        l.matvec_into(&tmp, &mut k[2]);
        for i in 0..n {
            tmp[i] = y[i] + dt * k[2][i];
        }
        l.matvec_into(&tmp, &mut k[3]);
        for i in 0..n {
            y[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
    }
    y
}

pub fn trace_distance(a: &Mat<Complex64>, b: &Mat<Complex64>) -> f64 {
    let diff = a - b;
    0.5 * eigvals_hermitian(diff.as_ref()).unwrap().iter().map(|x| x.abs()).sum::<f64>()
}

/// Steady-state quadrature covariance from the Lyapunov equation
/// `A sigma + sigma A^T + gamma/2 I = 0`, with the drift `A` of the
/// linearized Heisenberg-Langevin equations written out from scratch.
pub fn lyapunov_covariance(sol: &SemiclassicalSolution) -> [[f64; 4]; 4] {
    let p = &sol.params;
    let i = c(0.0, 1.0);
    let (a1, a2) = (sol.alpha1, sol.alpha2);
    // d/dt (d1, d1^dag, d2, d2^dag)
    let e = |a: Complex64| c(-p.delta + 4.0 * p.u * a.norm_sqr(), -p.gamma / 2.0);
    let g = |a: Complex64| 2.0 * p.u * a * a;
    let jj = c(p.j, 0.0);
    let z = c(0.0, 0.0);
    let k = [
        [e(a1), g(a1), -jj, z],
        [-g(a1).conj(), -e(a1).conj(), z, jj],
        [-jj, z, e(a2), g(a2)],
        [z, jj, -g(a2).conj(), -e(a2).conj()],
    ];
    let drift_c = Mat::from_fn(4, 4, |r, col| -i * k[r][col]);
    // x = (d + d^dag)/sqrt2, p = -i (d - d^dag)/sqrt2
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let t = Mat::from_fn(4, 4, |r, col| {
        let (mr, mc) = (r / 2, col / 2);
        if mr != mc {
            return z;
        }
        match (r % 2, col % 2) {
            (0, _) => c(s, 0.0),
            (1, 0) => c(0.0, -s),
            _ => c(0.0, s),
        }
    });
    let t_inv = t.partial_piv_lu().solve(Mat::<Complex64>::identity(4, 4));
    let drift = &(&t * &drift_c) * &t_inv;
    for r in 0..4 {
        for col in 0..4 {
            assert!(drift[(r, col)].im.abs() < 1e-12, "drift must be real");
        }
    }
    // (I kron A + A kron I) vec(sigma) = -vec(D), row-major vec.
    let big = Mat::from_fn(16, 16, |r, col| {
        let (i1, j1) = (r / 4, r % 4);
        let (i2, j2) = (col / 4, col % 4);
        let mut v = 0.0;
        if j1 == j2 {
            v += drift[(i1, i2)].re;
        }
        if i1 == i2 {
            v += drift[(j1, j2)].re;
        }
        c(v, 0.0)
    });
    let rhs = Mat::from_fn(16, 1, |r, _| if r / 4 == r % 4 { c(-p.gamma / 2.0, 0.0) } else { z });
    let x = big.partial_piv_lu().solve(rhs);
    let mut sigma = [[0.0; 4]; 4];
    for r in 0..16 {
        sigma[r / 4][r % 4] = x[(r, 0)].re;
    }
    sigma
}

/// Long-time RK4 integration of the moment equations from the vacuum.
pub fn integrate_moments(sol: &SemiclassicalSolution, t_end: f64, dt: f64) -> [Complex64; 10] {
    let (m, src) = assemble_moment_system(sol);
    let i = c(0.0, 1.0);
    let f = |z: &[Complex64; 10]| {
        let mut out = [c(0.0, 0.0); 10];
        for r in 0..10 {
            let mut acc = src[r];
            for col in 0..10 {
                acc += m[(r, col)] * z[col];
            }
            out[r] = -i * acc;
        }
        out
    };
    let mut z = [c(0.0, 0.0); 10];
    let steps = (t_end / dt).round() as usize;
    for _ in 0..steps {
        let k1 = f(&z);
        let mut y = z;
        (0..10).for_each(|r| y[r] = z[r] + 0.5 * dt * k1[r]);
        let k2 = f(&y);
        (0..10).for_each(|r| y[r] = z[r] + 0.5 * dt * k2[r]);
        let k3 = f(&y);
        (0..10).for_each(|r| y[r] = z[r] + dt * k3[r]);
        let k4 = f(&y);
        (0..10).for_each(|r| z[r] += dt / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]));
    }
    z
}

/// Two-mode squeezed vacuum `sum_n (-tanh r)^n / cosh r |n, n>` on a truncated space.
pub fn tmsv_fock(r: f64, cutoff: usize) -> DensityMatrix {
    let cfg = FockConfig::vacuum_frame(cutoff).unwrap();
    let m = cfg.local_dim();
    let mut psi = vec![c(0.0, 0.0); cfg.dim()];
    for n in 0..m {
        psi[n * m + n] = c((-r.tanh()).powi(n as i32) / r.cosh(), 0.0);
    }
    DensityMatrix::from_pure(&psi, &cfg)
}

/// Covariance of the two-mode squeezed vacuum in closed form.
pub fn tmsv_covariance(r: f64) -> CovarianceMatrix {
    let (ch, sh) = ((2.0 * r).cosh() / 2.0, (2.0 * r).sinh() / 2.0);
    CovarianceMatrix {
        sigma: [[ch, 0.0, -sh, 0.0], [0.0, ch, 0.0, sh], [-sh, 0.0, ch, 0.0], [0.0, sh, 0.0, ch]],
    }
}

/// Product of thermal states with occupation `nbar` on each site.
pub fn thermal_fock(nbar: f64, cutoff: usize) -> DensityMatrix {
    let cfg = FockConfig::vacuum_frame(cutoff).unwrap();
    let m = cfg.local_dim();
    let x = nbar / (1.0 + nbar);
    let p: Vec<f64> = (0..m).map(|n| (1.0 - x) * x.powi(n as i32)).collect();
    let rho = Mat::from_fn(cfg.dim(), cfg.dim(), |r, k| if r == k { c(p[r / m] * p[r % m], 0.0) } else { c(0.0, 0.0) });
    DensityMatrix::from_matrix(rho, &cfg)
}

/// Moments read directly off a Fock-space state, for comparison with Gaussian formulas.
pub fn fock_moments(rho: &DensityMatrix) -> MomentSet {
    let cfg = FockConfig::vacuum_frame(rho.cutoff).unwrap();
    let ops = build_operators(&cfg);
    let dag = |a: &Mat<Complex64>| a.adjoint().to_owned();
    MomentSet {
        n1: rho.expect(&(&dag(&ops.d1) * &ops.d1)).re,
        n2: rho.expect(&(&dag(&ops.d2) * &ops.d2)).re,
        s1: rho.expect(&(&ops.d1 * &ops.d1)),
        s2: rho.expect(&(&ops.d2 * &ops.d2)),
        t: rho.expect(&(&dag(&ops.d1) * &ops.d2)),
        u: rho.expect(&(&ops.d1 * &ops.d2)),
    }
}

/// Symmetric preferred solution: the stable broken branch with positive
/// `Re(alpha1 + alpha2)` where one exists, otherwise the stable symmetric one.
pub fn preferred(params: &DimerParams) -> SemiclassicalSolution {
    bhdimer::fockspace::default_displacement(params).unwrap()
}
