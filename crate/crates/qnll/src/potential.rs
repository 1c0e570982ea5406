//! The EAM site potential, its analytic derivatives, and the Cauchy-Born
//! strain energy density with its linearisation.
//!
//! The site energy for a stencil `g = (g_{-2}, g_{-1}, g_1, g_2)` is
//!
//! ```text
//! V(g) = 1/2 * [phi(g_1) + phi(g_2) + phi(-g_{-1}) + phi(-g_{-2})]
//!        + Femb(psi(g_1) + psi(g_2) + psi(-g_{-1}) + psi(-g_{-2}))
//! ```
//!
//! with the Morse-like pair term `phi(r) = exp(-2a(r-1)) - 2 exp(-a(r-1))`,
//! the electron density `psi(r) = exp(-b r)` and the embedding function
//! `Femb(rho) = c [(rho - rho0)^2 + (rho - rho0)^4]`. Derivatives are coded
//! by hand; the Newton solver and the stress diagnostics rely on them being
//! exact and cheap.

/// Parameters of the EAM site potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EamParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rho0: f64,
}

impl Default for EamParams {
    /// Benchmark values `a = 4.4`, `b = 3`, `c = 5`, `rho0 = 2 exp(-b)`.
    fn default() -> Self {
        let b = 3.0;
        Self { a: 4.4, b, c: 5.0, rho0: 2.0 * (-b).exp() }
    }
}

/// Cauchy-Born density and its first two derivatives at a fixed strain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyBornCoeffs {
    /// `W(F)`
    pub w: f64,
    /// `W'(F)`
    pub wp: f64,
    /// `W''(F)`
    pub wpp: f64,
}

/// Homogeneous stencil `F * (-2, -1, 1, 2)`.
pub fn hom_stencil(strain: f64) -> [f64; 4] {
    [-2.0 * strain, -strain, strain, 2.0 * strain]
}

impl EamParams {
    fn phi(&self, r: f64) -> f64 {
        (-2.0 * self.a * (r - 1.0)).exp() - 2.0 * (-self.a * (r - 1.0)).exp()
    }

    fn phi_d(&self, r: f64) -> f64 {
        -2.0 * self.a * (-2.0 * self.a * (r - 1.0)).exp() + 2.0 * self.a * (-self.a * (r - 1.0)).exp()
    }

    fn phi_dd(&self, r: f64) -> f64 {
        4.0 * self.a * self.a * (-2.0 * self.a * (r - 1.0)).exp()
            - 2.0 * self.a * self.a * (-self.a * (r - 1.0)).exp()
    }

    fn psi(&self, r: f64) -> f64 {
        (-self.b * r).exp()
    }

    fn psi_d(&self, r: f64) -> f64 {
        -self.b * (-self.b * r).exp()
    }

    fn psi_dd(&self, r: f64) -> f64 {
        self.b * self.b * (-self.b * r).exp()
    }

    fn femb(&self, rho: f64) -> f64 {
        let d = rho - self.rho0;
        self.c * (d * d + d * d * d * d)
    }

    fn femb_d(&self, rho: f64) -> f64 {
        let d = rho - self.rho0;
        self.c * (2.0 * d + 4.0 * d * d * d)
    }

    fn femb_dd(&self, rho: f64) -> f64 {
        let d = rho - self.rho0;
        self.c * (2.0 + 12.0 * d * d)
    }

    /// Directed pair distances: `r_i = g_i` for the forward slots and
    /// `r_j = -g_j` for the backward slots, so that all four enter `phi`
    /// and `psi` the same way.
    fn directed(g: &[f64; 4]) -> [f64; 4] {
        [-g[0], -g[1], g[2], g[3]]
    }

    /// Site energy `V(g)` for a stencil in slot order `(-2, -1, 1, 2)`.
    pub fn v_site(&self, g: &[f64; 4]) -> f64 {
        let r = Self::directed(g);
        let pair = 0.5 * (self.phi(r[0]) + self.phi(r[1]) + self.phi(r[2]) + self.phi(r[3]));
        let rho = self.psi(r[0]) + self.psi(r[1]) + self.psi(r[2]) + self.psi(r[3]);
        pair + self.femb(rho)
    }

    /// Gradient of `V` with respect to the four stencil slots.
    pub fn v_grad(&self, g: &[f64; 4]) -> [f64; 4] {
        let r = Self::directed(g);
        let rho: f64 = r.iter().map(|&ri| self.psi(ri)).sum();
        let fd = self.femb_d(rho);
        let mut out = [0.0; 4];
        // d r_i / d g_i is -1 for the backward slots, +1 for the forward ones
        let sign = [-1.0, -1.0, 1.0, 1.0];
        for i in 0..4 {
            out[i] = sign[i] * (0.5 * self.phi_d(r[i]) + fd * self.psi_d(r[i]));
        }
        out
    }

    /// Hessian of `V` with respect to the stencil slots. Symmetric by
    /// construction.
    pub fn v_hess(&self, g: &[f64; 4]) -> [[f64; 4]; 4] {
        let r = Self::directed(g);
        let rho: f64 = r.iter().map(|&ri| self.psi(ri)).sum();
        let fd = self.femb_d(rho);
        let fdd = self.femb_dd(rho);
        let sign = [-1.0, -1.0, 1.0, 1.0];
        let psd: Vec<f64> = r.iter().map(|&ri| self.psi_d(ri)).collect();
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in i..4 {
                let mut v = fdd * (sign[i] * psd[i]) * (sign[j] * psd[j]);
                if i == j {
                    v += 0.5 * self.phi_dd(r[i]) + fd * self.psi_dd(r[i]);
                }
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        out
    }

    /// Cauchy-Born density `W(s) = V(s * R)`.
    pub fn w_value(&self, strain: f64) -> f64 {
        self.v_site(&hom_stencil(strain))
    }

    /// `W'(s)`, the contraction `sum_rho rho * V_rho(s * R)`.
    pub fn w_prime(&self, strain: f64) -> f64 {
        let grad = self.v_grad(&hom_stencil(strain));
        let rho = [-2.0, -1.0, 1.0, 2.0];
        let mut wp = 0.0;
        for i in 0..4 {
            wp += rho[i] * grad[i];
        }
        wp
    }

    /// `W''(s)`, the contraction `sum_{rho,zeta} rho zeta * V_{rho zeta}(s * R)`.
    pub fn w_second(&self, strain: f64) -> f64 {
        let hess = self.v_hess(&hom_stencil(strain));
        let rho = [-2.0, -1.0, 1.0, 2.0];
        let mut wpp = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                wpp += rho[i] * rho[j] * hess[i][j];
            }
        }
        wpp
    }

    /// `W`, `W'` and `W''` at a fixed strain, all via the same contractions
    /// as [`EamParams::w_value`] and friends, so nonlinear and linearised
    /// assembly paths agree identically at the expansion point.
    pub fn cauchy_born(&self, strain: f64) -> CauchyBornCoeffs {
        CauchyBornCoeffs {
            w: self.w_value(strain),
            wp: self.w_prime(strain),
            wpp: self.w_second(strain),
        }
    }
}

/// Linearised Cauchy-Born density `W_L(grad y) = W_F + W'_F e + W''_F e^2 / 2`
/// with `e = grad u = grad y - F`.
pub fn w_lin(grad_u: f64, cb: &CauchyBornCoeffs) -> f64 {
    cb.w + cb.wp * grad_u + 0.5 * cb.wpp * grad_u * grad_u
}

/// Derivative of the linearised density, `W'_F + W''_F e`.
pub fn dw_lin(grad_u: f64, cb: &CauchyBornCoeffs) -> f64 {
    cb.wp + cb.wpp * grad_u
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    // Reference value of V at the homogeneous stencil for F = 1 with default
    // parameters, evaluated once with 40-digit arithmetic.
    const V_HOM_F1: f64 = -1.0242810594638672;

    #[test]
    fn phi_at_unit_distance() {
        // phi(1) = exp(0) - 2 exp(0) = -1 for any a.
        for a in [1.0, 4.4, 9.0] {
            let p = EamParams { a, ..Default::default() };
            assert_eq!(p.phi(1.0), -1.0);
        }
    }

    #[test]
    fn embedding_vanishes_at_reference_density() {
        let p = EamParams::default();
        assert_eq!(p.femb(p.rho0), 0.0);
        assert_eq!(p.femb_d(p.rho0), 0.0);
    }

    #[test]
    fn v_site_homogeneous_reference_value() {
        let p = EamParams::default();
        let v = p.v_site(&hom_stencil(1.0));
        assert!((v - V_HOM_F1).abs() < 1e-14, "v = {v:.17}");
    }

    #[test]
    fn pair_gradient_vanishes_at_unit_stencil() {
        // With the embedding switched off (c = 0), a stencil whose directed
        // distances are all 1 sits at the minimum of phi, so the gradient is
        // exactly zero: phi'(1) = -2a + 2a = 0.
        let p = EamParams { c: 0.0, ..Default::default() };
        let g = [-1.0, -1.0, 1.0, 1.0];
        assert_eq!(p.v_grad(&g), [0.0; 4]);
    }

    fn fd_grad(p: &EamParams, g: &[f64; 4], h: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        for i in 0..4 {
            let mut gp = *g;
            let mut gm = *g;
            gp[i] += h;
            gm[i] -= h;
            out[i] = (p.v_site(&gp) - p.v_site(&gm)) / (2.0 * h);
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = EamParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            // random stencils with directed distances in [0.5, 2.5]
            let g = [
                -rng.gen_range(0.5..2.5),
                -rng.gen_range(0.5..2.5),
                rng.gen_range(0.5..2.5),
                rng.gen_range(0.5..2.5),
            ];
            let ana = p.v_grad(&g);
            let num = fd_grad(&p, &g, 1e-5);
            for i in 0..4 {
                let scale = ana[i].abs().max(1.0);
                assert!(
                    (ana[i] - num[i]).abs() <= 1e-6 * scale,
                    "slot {i}: {} vs {}",
                    ana[i],
                    num[i]
                );
            }
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradient() {
        let p = EamParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..40 {
            let g = [
                -rng.gen_range(0.5..2.5),
                -rng.gen_range(0.5..2.5),
                rng.gen_range(0.5..2.5),
                rng.gen_range(0.5..2.5),
            ];
            let ana = p.v_hess(&g);
            let h = 1e-5;
            for j in 0..4 {
                let mut gp = g;
                let mut gm = g;
                gp[j] += h;
                gm[j] -= h;
                let dp = p.v_grad(&gp);
                let dm = p.v_grad(&gm);
                for i in 0..4 {
                    let num = (dp[i] - dm[i]) / (2.0 * h);
                    let scale = ana[i][j].abs().max(1.0);
                    assert!(
                        (ana[i][j] - num).abs() <= 1e-5 * scale,
                        "({i},{j}): {} vs {num}",
                        ana[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_exactly_symmetric() {
        let p = EamParams::default();
        let g = [-2.2, -0.9, 1.1, 1.8];
        let h = p.v_hess(&g);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(h[i][j], h[j][i]);
            }
        }
    }

    #[test]
    fn cauchy_born_value_is_site_energy() {
        let p = EamParams::default();
        for f in [0.9, 1.0, 1.3] {
            let cb = p.cauchy_born(f);
            assert_eq!(cb.w, p.v_site(&hom_stencil(f)));
        }
    }

    #[test]
    fn cauchy_born_derivative_matches_finite_differences() {
        let p = EamParams::default();
        for f in [0.9, 1.0, 1.1] {
            let cb = p.cauchy_born(f);
            let h = 1e-6;
            let wp_num =
                (p.v_site(&hom_stencil(f + h)) - p.v_site(&hom_stencil(f - h))) / (2.0 * h);
            assert!((cb.wp - wp_num).abs() <= 1e-8 * cb.wp.abs().max(1.0));
            let wpp_num = (p.v_site(&hom_stencil(f + h)) - 2.0 * p.v_site(&hom_stencil(f))
                + p.v_site(&hom_stencil(f - h)))
                / (h * h);
            assert!((cb.wpp - wpp_num).abs() <= 1e-3 * cb.wpp.abs().max(1.0));
        }
    }

    #[test]
    fn homogeneous_state_is_stable_at_benchmark_strain() {
        let cb = EamParams::default().cauchy_born(1.0);
        assert!(cb.wpp > 0.0, "W''(1) = {}", cb.wpp);
        // magnitude recorded from the high-precision evaluation
        assert!((cb.wpp - 37.9975221514).abs() < 1e-6);
    }

    #[test]
    fn linearised_density_at_zero_strain_perturbation() {
        let cb = EamParams::default().cauchy_born(1.0);
        assert_eq!(w_lin(0.0, &cb), cb.w);
        assert_eq!(dw_lin(0.0, &cb), cb.wp);
    }

    #[test]
    fn linearised_density_derivative_is_affine() {
        let cb = EamParams::default().cauchy_born(1.0);
        for e in [1e-3, 0.02, 0.4] {
            assert_eq!(dw_lin(2.0 * e, &cb) - dw_lin(0.0, &cb), 2.0 * (dw_lin(e, &cb) - dw_lin(0.0, &cb)));
        }
    }

    #[test]
    fn taylor_remainder_is_cubic() {
        // (W(F+e) - W_L(e)) / e^3 stays bounded (tends to W'''(F)/6).
        let p = EamParams::default();
        let cb = p.cauchy_born(1.0);
        let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&e| (p.v_site(&hom_stencil(1.0 + e)) - w_lin(e, &cb)) / (e * e * e))
            .collect();
        for r in &ratios {
            assert!(r.is_finite());
        }
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &r| (l.min(r.abs()), h.max(r.abs())));
        assert!(hi / lo < 2.0, "cubic ratio drifted: {ratios:?}");
    }
}
