//! Damped Newton minimisation with a banded Cholesky solve, and the
//! smallest generalized eigenvalue of a Hessian against the discrete
//! Laplacian (the finite-domain stability constant).

use crate::banded::{dirichlet_laplacian, BandedCholesky, BandedMatrix};
use crate::error::{Error, Result};
use std::time::{Duration, Instant};

/// Anything the solver can minimise: energy, gradient and banded Hessian
/// over a flat vector of free degrees of freedom.
pub trait EnergySystem {
    fn dof(&self) -> usize;
    fn bandwidth(&self) -> usize;
    fn energy(&self, u: &[f64]) -> f64;
    /// Accumulates the gradient into `out` (callers pass zeros).
    fn add_gradient(&self, u: &[f64], out: &mut [f64]);
    /// Accumulates the Hessian into `h` (callers pass zeros).
    fn add_hessian(&self, u: &[f64], h: &mut BandedMatrix);
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Sup-norm threshold on the gradient residual.
    pub grad_tol: f64,
    pub max_iter: u32,
    /// Backtracking shrink factor, in (0, 1).
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Attach the smallest generalized Hessian eigenvalue to the report.
    pub compute_min_eig: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-10, max_iter: 50, shrink: 0.5, armijo: 1e-4, compute_min_eig: false }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: u32,
    pub final_grad_norm: f64,
    pub final_energy: f64,
    pub wall_time: Duration,
    pub converged: bool,
    /// Smallest generalized eigenvalue of the final Hessian against the
    /// discrete Laplacian, if requested.
    pub min_hessian_eigenvalue: Option<f64>,
    /// Iterations that fell back to a steepest-descent step because the
    /// Hessian was not positive definite.
    pub gradient_steps: u32,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `energy(u) - load . u` starting from `init`.
///
/// Newton steps solve the banded system `H d = -r`; if the factorisation
/// hits a non-positive pivot, an escalating diagonal shift is tried and, as
/// a last resort, the step falls back to steepest descent. Backtracking
/// enforces Armijo decrease of the objective. Non-convergence is reported,
/// not raised.
pub fn minimize<S: EnergySystem + ?Sized>(
    sys: &S,
    load: &[f64],
    init: &[f64],
    opts: &SolveOptions,
) -> (Vec<f64>, SolveReport) {
    let n = sys.dof();
    assert_eq!(load.len(), n);
    assert_eq!(init.len(), n);
    let start = Instant::now();

    let mut u = init.to_vec();
    let objective = |u: &[f64]| sys.energy(u) - dot(load, u);
    let residual = |u: &[f64], r: &mut Vec<f64>| {
        r.fill(0.0);
        sys.add_gradient(u, r);
        for i in 0..n {
            r[i] -= load[i];
        }
    };

    let mut r = vec![0.0; n];
    residual(&u, &mut r);
    let mut rnorm = sup_norm(&r);
    let mut iterations = 0;
    let mut gradient_steps = 0;
    let mut hess = BandedMatrix::new(n, sys.bandwidth());

    while rnorm > opts.grad_tol && iterations < opts.max_iter {
        hess.fill_zero();
        sys.add_hessian(&u, &mut hess);

        // Newton direction, with a diagonal-shift fallback on indefiniteness
        let mut direction: Option<Vec<f64>> = None;
        let mut factor: Option<BandedCholesky> = None;
        match hess.cholesky() {
            Ok(f) => factor = Some(f),
            Err(_) => {
                let scale = hess.max_abs_diagonal().max(1.0);
                let mut shift = 1e-8 * scale;
                for _ in 0..8 {
                    let mut shifted = hess.clone();
                    shifted.add_diagonal(shift);
                    if let Ok(f) = shifted.cholesky() {
                        factor = Some(f);
                        break;
                    }
                    shift *= 100.0;
                }
            }
        }
        if let Some(f) = factor {
            let mut d: Vec<f64> = r.iter().map(|x| -x).collect();
            f.solve_in_place(&mut d);
            if dot(&r, &d) < 0.0 {
                direction = Some(d);
            }
        }
        let d = match direction {
            Some(d) => d,
            None => {
                gradient_steps += 1;
                r.iter().map(|x| -x).collect()
            }
        };

        // backtracking line search on the objective
        let phi0 = objective(&u);
        let slope = dot(&r, &d);
        let mut t = 1.0;
        let mut accepted = false;
        let trial = |u: &[f64], d: &[f64], t: f64| -> Vec<f64> {
            u.iter().zip(d).map(|(x, y)| x + t * y).collect()
        };
        while t >= 1e-14 {
            let cand = trial(&u, &d, t);
            let phi = objective(&cand);
            let decrease_ok = phi <= phi0 + opts.armijo * t * slope;
            // near convergence the predicted decrease drowns in rounding
            let at_noise_floor = (phi - phi0).abs() <= 8.0 * f64::EPSILON * (1.0 + phi0.abs());
            if decrease_ok || at_noise_floor {
                u = cand;
                accepted = true;
                break;
            }
            t *= opts.shrink;
        }
        iterations += 1;
        if !accepted {
            break; // stagnation: leave u unchanged and report
        }
        residual(&u, &mut r);
        rnorm = sup_norm(&r);
    }

    let converged = rnorm <= opts.grad_tol;
    let final_energy = objective(&u);
    let min_eig = if opts.compute_min_eig {
        let mut h = BandedMatrix::new(n, sys.bandwidth());
        sys.add_hessian(&u, &mut h);
        min_eigenvalue(&h, &dirichlet_laplacian(n)).ok()
    } else {
        None
    };
    let report = SolveReport {
        iterations,
        final_grad_norm: rnorm,
        final_energy,
        wall_time: start.elapsed(),
        converged,
        min_hessian_eigenvalue: min_eig,
        gradient_steps,
    };
    (u, report)
}

const EIG_REL_TOL: f64 = 1e-8;

/// Number of generalized eigenvalues of `(h, m)` below `sigma`, by the
/// inertia of `h - sigma m` (Sylvester's law). Nudges `sigma` on pivot
/// breakdown, which only occurs when `sigma` hits an eigenvalue.
fn count_below(h: &BandedMatrix, m: &BandedMatrix, sigma: f64, scale: f64) -> usize {
    let mut s = sigma;
    for _ in 0..6 {
        match h.shifted_by(s, m).ldlt() {
            Ok(f) => return f.negative_count(),
            Err(_) => s += 1e-12 * scale.max(s.abs()),
        }
    }
    // last resort: a slightly larger nudge
    h.shifted_by(s + 1e-9 * scale, m)
        .ldlt()
        .map(|f| f.negative_count())
        .unwrap_or(0)
}

/// Smallest generalized eigenvalue of the pencil `(h, m)` with `m` symmetric
/// positive definite (here: the discrete Laplacian, so the quotient is
/// measured against the gradient norm).
///
/// Bisection on the inertia brackets and isolates the lowest eigenvalue;
/// shifted inverse power iteration then polishes it to relative accuracy
/// `1e-8`. Deterministic fixed start vector.
pub fn min_eigenvalue(h: &BandedMatrix, m: &BandedMatrix) -> Result<f64> {
    let n = h.n();
    assert_eq!(n, m.n());
    if n == 0 {
        return Err(Error::Eigen("empty matrix".into()));
    }
    let scale = h.max_abs_diagonal().max(1.0);

    // upper bound: any Rayleigh quotient bounds the smallest eigenvalue
    let mut hv = vec![0.0; n];
    let mut mv = vec![0.0; n];
    let mut hi = f64::INFINITY;
    let probes: [Box<dyn Fn(usize) -> f64>; 2] = [
        Box::new(|_| 1.0),
        Box::new(move |i| (std::f64::consts::PI * (i + 1) as f64 / (n as f64 + 1.0)).sin()),
    ];
    for probe in &probes {
        let v: Vec<f64> = (0..n).map(|i| probe(i)).collect();
        h.mul_vec(&v, &mut hv);
        m.mul_vec(&v, &mut mv);
        let denom = dot(&v, &mv);
        if denom > 0.0 {
            hi = hi.min(dot(&v, &hv) / denom);
        }
    }
    if !hi.is_finite() {
        return Err(Error::Eigen("no valid Rayleigh probe".into()));
    }
    hi += 1e-12 * scale; // make the bound strict

    // lower bound: expand downward until no eigenvalue lies below
    let mut lo = if count_below(h, m, 0.0, scale) == 0 { 0.0 } else { -scale };
    let mut guard = 0;
    while count_below(h, m, lo, scale) > 0 {
        lo = if lo == 0.0 { -scale } else { lo * 2.0 };
        guard += 1;
        if guard > 80 {
            return Err(Error::Eigen("no lower spectral bound found".into()));
        }
    }

    // bisect until the lowest eigenvalue is isolated and tightly bracketed
    let mut iters = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if count_below(h, m, mid, scale) == 0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
        let width = hi - lo;
        let tight = width <= 1e-3 * hi.abs().max(1e-30);
        if (tight && count_below(h, m, hi, scale) == 1) || iters > 200 {
            break;
        }
        if width <= f64::EPSILON * hi.abs().max(scale) {
            break; // bracket exhausted at machine precision
        }
    }

    // polish with shifted inverse power iteration inside the bracket
    let sigma = 0.5 * (lo + hi);
    let shifted = h.shifted_by(sigma, m);
    let factor = match shifted.ldlt() {
        Ok(f) => f,
        Err(_) => {
            // sigma collided with the eigenvalue: the bracket midpoint is it
            return Ok(sigma);
        }
    };
    let mut v: Vec<f64> =
        (0..n).map(|i| (std::f64::consts::PI * (i + 1) as f64 / (n as f64 + 1.0)).sin()).collect();
    let mut lambda = sigma;
    for _ in 0..60 {
        m.mul_vec(&v, &mut mv);
        let mut w = mv.clone();
        factor.solve_in_place(&mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Eigen("inverse iteration produced a null vector".into()));
        }
        for x in &mut w {
            *x /= norm;
        }
        v = w;
        h.mul_vec(&v, &mut hv);
        m.mul_vec(&v, &mut mv);
        let next = dot(&v, &hv) / dot(&v, &mv);
        let done = (next - lambda).abs() <= EIG_REL_TOL * next.abs().max(1e-300) * 0.01;
        lambda = next;
        if done {
            break;
        }
    }
    // residual certificate
    h.mul_vec(&v, &mut hv);
    m.mul_vec(&v, &mut mv);
    let res: f64 = hv
        .iter()
        .zip(&mv)
        .map(|(a, b)| (a - lambda * b) * (a - lambda * b))
        .sum::<f64>()
        .sqrt();
    let hnorm: f64 = hv.iter().map(|x| x * x).sum::<f64>().sqrt();
    if res > 1e-6 * hnorm.max(scale) {
        return Err(Error::Eigen(format!(
            "residual {res:.3e} too large for lambda = {lambda:.12e}"
        )));
    }
    // the polished value must stay inside (a slightly slackened) bracket
    let slack = 1e-6 * hi.abs().max(1.0);
    if lambda < lo - slack || lambda > hi + slack {
        return Err(Error::Eigen(format!(
            "polished eigenvalue {lambda:.12e} escaped the bracket [{lo:.12e}, {hi:.12e}]"
        )));
    }
    Ok(lambda)
}
