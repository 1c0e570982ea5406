//! Full-lattice assembly of the three energy models: total energy, gradient
//! (first variation), banded Hessian (second variation), stress fields and
//! the benchmark external force.
//!
//! All energies are measured relative to the homogeneous state `y^F`: the
//! atomistic site energy is `V(Dy) - V(F R)` and the continuum cell terms
//! subtract `W(F)`. The shift is constant on the admissible set, so
//! gradients and Hessians are unaffected, and `energy(y^F) = 0` for every
//! model.
//!
//! The QNL interface uses reconstructed stencils at the four sites
//! `±Kbar, ±(Kbar-1)`. The outer sites see the continuum on one side; their
//! energy is half the potential of the reflected stencil, e.g.
//! `1/2 V(-D_2 y, -D_1 y, D_1 y, D_2 y)` on the left. The half weight keeps
//! every bond counted exactly once against the atomistic neighbours, which
//! is what eliminates the ghost force. The inner sites replace only the
//! unreachable next-nearest difference by its local extrapolation, e.g.
//! `V(2 D_{-1} y, D_{-1} y, D_1 y, D_2 y)`. The Cauchy-Born integral then
//! covers exactly the cells of `[-N, -Kbar]` and `[Kbar, N]`.

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::lattice::{LatticeField, ProblemConfig, OFFSETS};
use crate::potential::{hom_stencil, CauchyBornCoeffs, EamParams};
use crate::solve::EnergySystem;

/// Which energy functional to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Truncated fully atomistic model.
    Atomistic,
    /// Quasinonlocal coupling with a nonlinear Cauchy-Born continuum.
    Qnl,
    /// QNL with the far field (`|x| >= L`) linearised around `F`.
    Qnll,
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Atomistic => "ATM",
            ModelKind::Qnl => "QNL",
            ModelKind::Qnll => "QNLL",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "atm" | "atomistic" => Ok(ModelKind::Atomistic),
            "qnl" => Ok(ModelKind::Qnl),
            "qnll" => Ok(ModelKind::Qnll),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

/// Reconstructed stencil: slot `s` of the potential argument is
/// `coef[s] * d[col[s]]` where `d` are the true differences at the site.
/// Every reconstruction used here reads exactly one true difference per
/// slot.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StencilMap {
    pub col: [usize; 4],
    pub coef: [f64; 4],
}

pub(crate) const MAP_BULK: StencilMap = StencilMap { col: [0, 1, 2, 3], coef: [1.0, 1.0, 1.0, 1.0] };
/// `(-D_2, -D_1, D_1, D_2)` at the left outer interface site `-Kbar`.
pub(crate) const MAP_LEFT_OUTER: StencilMap =
    StencilMap { col: [3, 2, 2, 3], coef: [-1.0, -1.0, 1.0, 1.0] };
/// `(2 D_{-1}, D_{-1}, D_1, D_2)` at the left inner site `-Kbar + 1`.
pub(crate) const MAP_LEFT_INNER: StencilMap =
    StencilMap { col: [1, 1, 2, 3], coef: [2.0, 1.0, 1.0, 1.0] };
/// `(D_{-2}, D_{-1}, D_1, 2 D_1)` at the right inner site `Kbar - 1`.
pub(crate) const MAP_RIGHT_INNER: StencilMap =
    StencilMap { col: [0, 1, 2, 2], coef: [1.0, 1.0, 1.0, 2.0] };
/// `(D_{-2}, D_{-1}, -D_{-1}, -D_{-2})` at the right outer site `Kbar`.
pub(crate) const MAP_RIGHT_OUTER: StencilMap =
    StencilMap { col: [0, 1, 1, 0], coef: [1.0, 1.0, -1.0, -1.0] };

/// One reconstructed site-energy term `weight * V(map(d))`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SiteTerm {
    pub site: i64,
    pub weight: f64,
    pub map: StencilMap,
}

/// The site terms of a model on a configuration, in ascending site order.
pub(crate) fn site_terms(model: ModelKind, cfg: &ProblemConfig) -> Vec<SiteTerm> {
    let mut terms = Vec::new();
    match model {
        ModelKind::Atomistic => {
            for site in -cfg.n()..=cfg.n() {
                terms.push(SiteTerm { site, weight: 1.0, map: MAP_BULK });
            }
        }
        ModelKind::Qnl | ModelKind::Qnll => {
            let kb = cfg.kbar();
            terms.push(SiteTerm { site: -kb, weight: 0.5, map: MAP_LEFT_OUTER });
            terms.push(SiteTerm { site: -kb + 1, weight: 1.0, map: MAP_LEFT_INNER });
            for site in -cfg.k()..=cfg.k() {
                terms.push(SiteTerm { site, weight: 1.0, map: MAP_BULK });
            }
            terms.push(SiteTerm { site: kb - 1, weight: 1.0, map: MAP_RIGHT_INNER });
            terms.push(SiteTerm { site: kb, weight: 0.5, map: MAP_RIGHT_OUTER });
        }
    }
    terms
}

/// Continuum treatment of the unit cell `(xi - 1, xi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CellKind {
    /// Covered by site terms; no continuum energy.
    Resolved,
    /// Cauchy-Born density `W`.
    Nonlinear,
    /// Linearised density `W_L`.
    Linear,
}

pub(crate) fn cell_kind(model: ModelKind, cfg: &ProblemConfig, xi: i64) -> CellKind {
    debug_assert!(xi > -cfg.n() && xi <= cfg.n());
    if model == ModelKind::Atomistic {
        return CellKind::Resolved;
    }
    let kb = cfg.kbar();
    let continuum = xi <= -kb || xi >= kb + 1;
    if !continuum {
        return CellKind::Resolved;
    }
    if model == ModelKind::Qnll && (xi <= -cfg.l() || xi >= cfg.l() + 1) {
        CellKind::Linear
    } else {
        CellKind::Nonlinear
    }
}

/// Local 5-point footprint of a site term: displacements at
/// `xi - 2 .. xi + 2`. Slot `i` of the true differences pairs position
/// `FOOT[i]` against the centre position 2.
const FOOT: [usize; 4] = [0, 1, 3, 4];

/// Assembles energy, gradient and Hessian of one model on the full lattice.
///
/// Free degrees of freedom are the displacements at sites `-N+1 .. N-1`;
/// the boundary sites are eliminated by the Dirichlet clamp.
#[derive(Debug, Clone)]
pub struct LatticeSystem {
    model: ModelKind,
    cfg: ProblemConfig,
    eam: EamParams,
    vhom: f64,
    cb: CauchyBornCoeffs,
    terms: Vec<SiteTerm>,
}

impl LatticeSystem {
    pub fn new(model: ModelKind, cfg: ProblemConfig, eam: EamParams) -> Result<Self> {
        let cb = eam.cauchy_born(cfg.strain());
        if model == ModelKind::Qnll && !(cb.wpp > 0.0) {
            return Err(Error::Config(format!(
                "W''(F) = {} is not positive; the linearised far field would be unstable",
                cb.wpp
            )));
        }
        let vhom = eam.v_site(&hom_stencil(cfg.strain()));
        let terms = site_terms(model, &cfg);
        Ok(Self { model, cfg, eam, vhom, cb, terms })
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.cfg
    }

    pub fn cauchy_born(&self) -> &CauchyBornCoeffs {
        &self.cb
    }

    /// Checks a displacement field against the domain and flattens it onto
    /// the free degrees of freedom.
    pub fn field_to_dof(&self, u: &LatticeField) -> Result<Vec<f64>> {
        let n = self.cfg.n();
        if u.lo() < -n || u.hi() > n {
            return Err(Error::Dimension(format!(
                "field spans [{}, {}] but the domain is [-{n}, {n}]",
                u.lo(),
                u.hi()
            )));
        }
        for b in [-n, n] {
            if let Some(v) = u.get(b) {
                if v != 0.0 {
                    return Err(Error::Dimension(format!(
                        "displacement at clamped site {b} must be zero, got {v}"
                    )));
                }
            }
        }
        let mut dof = vec![0.0; self.cfg.dof()];
        for (xi, v) in u.iter_sites() {
            if xi.abs() < n {
                dof[(xi + n - 1) as usize] = v;
            }
        }
        Ok(dof)
    }

    /// Expands free degrees of freedom to a field over `[-N, N]` with zeros
    /// at the clamped boundary.
    pub fn dof_to_field(&self, dof: &[f64]) -> LatticeField {
        let n = self.cfg.n();
        let mut values = vec![0.0; (2 * n + 1) as usize];
        values[1..=dof.len()].copy_from_slice(dof);
        LatticeField::new(-n, values)
    }

    #[inline]
    fn disp(&self, u: &[f64], xi: i64) -> f64 {
        let n = self.cfg.n();
        if xi.abs() >= n {
            0.0
        } else {
            u[(xi + n - 1) as usize]
        }
    }

    /// True differences `(D_{-2} y, D_{-1} y, D_1 y, D_2 y)` at a site.
    #[inline]
    fn differences(&self, u: &[f64], xi: i64) -> [f64; 4] {
        let f = self.cfg.strain();
        let u0 = self.disp(u, xi);
        let mut d = [0.0; 4];
        for (i, rho) in OFFSETS.iter().enumerate() {
            d[i] = f * *rho as f64 + self.disp(u, xi + rho) - u0;
        }
        d
    }

    fn reconstructed(&self, map: &StencilMap, d: &[f64; 4]) -> [f64; 4] {
        let mut g = [0.0; 4];
        for s in 0..4 {
            g[s] = map.coef[s] * d[map.col[s]];
        }
        g
    }

    pub(crate) fn energy_dof(&self, u: &[f64]) -> f64 {
        let mut e = 0.0;
        for t in &self.terms {
            let d = self.differences(u, t.site);
            let g = self.reconstructed(&t.map, &d);
            e += t.weight * (self.eam.v_site(&g) - self.vhom);
        }
        let n = self.cfg.n();
        for xi in (-n + 1)..=n {
            let eps = self.disp(u, xi) - self.disp(u, xi - 1);
            match cell_kind(self.model, &self.cfg, xi) {
                CellKind::Resolved => {}
                CellKind::Nonlinear => {
                    e += self.eam.w_value(self.cfg.strain() + eps) - self.cb.w;
                }
                CellKind::Linear => {
                    e += self.cb.wp * eps + 0.5 * self.cb.wpp * eps * eps;
                }
            }
        }
        e
    }

    pub(crate) fn add_gradient_dof(&self, u: &[f64], out: &mut [f64]) {
        let n = self.cfg.n();
        let mut push = |xi: i64, v: f64, out: &mut [f64]| {
            if xi.abs() < n {
                out[(xi + n - 1) as usize] += v;
            }
        };
        for t in &self.terms {
            let d = self.differences(u, t.site);
            let g = self.reconstructed(&t.map, &d);
            let vg = self.eam.v_grad(&g);
            // chain rule back to the true differences
            let mut dv = [0.0; 4];
            for s in 0..4 {
                dv[t.map.col[s]] += t.weight * t.map.coef[s] * vg[s];
            }
            let mut centre = 0.0;
            for i in 0..4 {
                push(t.site + OFFSETS[i], dv[i], out);
                centre -= dv[i];
            }
            push(t.site, centre, out);
        }
        for xi in (-n + 1)..=n {
            let eps = self.disp(u, xi) - self.disp(u, xi - 1);
            let c = match cell_kind(self.model, &self.cfg, xi) {
                CellKind::Resolved => continue,
                CellKind::Nonlinear => self.eam.w_prime(self.cfg.strain() + eps),
                CellKind::Linear => self.cb.wp + self.cb.wpp * eps,
            };
            push(xi, c, out);
            push(xi - 1, -c, out);
        }
    }

    pub(crate) fn add_hessian_dof(&self, u: &[f64], h: &mut BandedMatrix) {
        let n = self.cfg.n();
        let free = |xi: i64| -> Option<usize> {
            if xi.abs() < n {
                Some((xi + n - 1) as usize)
            } else {
                None
            }
        };
        for t in &self.terms {
            let d = self.differences(u, t.site);
            let g = self.reconstructed(&t.map, &d);
            let vh = self.eam.v_hess(&g);
            // second derivatives with respect to the true differences
            let mut hd = [[0.0; 4]; 4];
            for s in 0..4 {
                for r in 0..4 {
                    hd[t.map.col[s]][t.map.col[r]] +=
                        t.weight * t.map.coef[s] * t.map.coef[r] * vh[s][r];
                }
            }
            // local 5x5 block over displacements at site-2 .. site+2
            let mut local = [[0.0; 5]; 5];
            for i in 0..4 {
                for j in 0..4 {
                    let v = hd[i][j];
                    if v == 0.0 {
                        continue;
                    }
                    local[FOOT[i]][FOOT[j]] += v;
                    local[FOOT[i]][2] -= v;
                    local[2][FOOT[j]] -= v;
                    local[2][2] += v;
                }
            }
            for p in 0..5 {
                let Some(ip) = free(t.site - 2 + p as i64) else { continue };
                for q in 0..=p {
                    let Some(iq) = free(t.site - 2 + q as i64) else { continue };
                    h.add(ip, iq, local[p][q]);
                }
            }
        }
        for xi in (-n + 1)..=n {
            let eps = self.disp(u, xi) - self.disp(u, xi - 1);
            let c = match cell_kind(self.model, &self.cfg, xi) {
                CellKind::Resolved => continue,
                CellKind::Nonlinear => self.eam.w_second(self.cfg.strain() + eps),
                CellKind::Linear => self.cb.wpp,
            };
            if let Some(i) = free(xi) {
                h.add(i, i, c);
            }
            if let Some(i) = free(xi - 1) {
                h.add(i, i, c);
            }
            if let (Some(i), Some(j)) = (free(xi), free(xi - 1)) {
                h.add(i, j, -c);
            }
        }
    }

    /// Total energy of the displacement field, relative to `y^F`.
    pub fn energy(&self, u: &LatticeField) -> Result<f64> {
        let dof = self.field_to_dof(u)?;
        Ok(self.energy_dof(&dof))
    }

    /// Gradient with respect to the free displacements, returned as a field
    /// over `[-N, N]` with zeros at the clamped sites.
    pub fn gradient(&self, u: &LatticeField) -> Result<LatticeField> {
        let dof = self.field_to_dof(u)?;
        let mut g = vec![0.0; dof.len()];
        self.add_gradient_dof(&dof, &mut g);
        Ok(self.dof_to_field(&g))
    }

    /// Banded Hessian over the free degrees of freedom.
    pub fn hessian(&self, u: &LatticeField) -> Result<BandedMatrix> {
        let dof = self.field_to_dof(u)?;
        let mut h = BandedMatrix::new(dof.len(), self.bandwidth());
        self.add_hessian_dof(&dof, &mut h);
        Ok(h)
    }

    /// Stress field: one sample per open unit interval `(xi-1, xi)`.
    ///
    /// The pairing `sum_cells sample * (v(xi) - v(xi-1))` reproduces the
    /// first variation against any admissible test field `v`.
    pub fn stress(&self, u: &LatticeField) -> Result<StressField> {
        let dof = self.field_to_dof(u)?;
        let n = self.cfg.n();
        let ncell = (2 * n) as usize;
        let mut samples = vec![0.0; ncell];
        let first_cell = -n + 1;
        {
            let mut spread = |cell: i64, v: f64, samples: &mut Vec<f64>| {
                let idx = cell - first_cell;
                debug_assert!(idx >= 0 && (idx as usize) < ncell);
                samples[idx as usize] += v;
            };
            for t in &self.terms {
                let d = self.differences(&dof, t.site);
                let g = self.reconstructed(&t.map, &d);
                let vg = self.eam.v_grad(&g);
                let mut dv = [0.0; 4];
                for s in 0..4 {
                    dv[t.map.col[s]] += t.weight * t.map.coef[s] * vg[s];
                }
                // bond (site, site+rho) spreads rho*chi = sign(rho) over its |rho| cells
                spread(t.site, -dv[1], &mut samples); // rho = -1: cell (site-1, site)
                spread(t.site - 1, -dv[0], &mut samples); // rho = -2
                spread(t.site, -dv[0], &mut samples);
                spread(t.site + 1, dv[2], &mut samples); // rho = +1: cell (site, site+1)
                spread(t.site + 1, dv[3], &mut samples); // rho = +2
                spread(t.site + 2, dv[3], &mut samples);
            }
        }
        for xi in (-n + 1)..=n {
            let eps = self.disp(&dof, xi) - self.disp(&dof, xi - 1);
            let c = match cell_kind(self.model, &self.cfg, xi) {
                CellKind::Resolved => continue,
                CellKind::Nonlinear => self.eam.w_prime(self.cfg.strain() + eps),
                CellKind::Linear => self.cb.wp + self.cb.wpp * eps,
            };
            samples[(xi - first_cell) as usize] += c;
        }
        Ok(StressField { first_cell, samples })
    }
}

impl EnergySystem for LatticeSystem {
    fn dof(&self) -> usize {
        self.cfg.dof()
    }

    fn bandwidth(&self) -> usize {
        4
    }

    fn energy(&self, u: &[f64]) -> f64 {
        self.energy_dof(u)
    }

    fn add_gradient(&self, u: &[f64], out: &mut [f64]) {
        self.add_gradient_dof(u, out)
    }

    fn add_hessian(&self, u: &[f64], h: &mut BandedMatrix) {
        self.add_hessian_dof(u, h)
    }
}

/// Piecewise-constant stress samples over the unit cells of `[-N, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    first_cell: i64,
    samples: Vec<f64>,
}

impl StressField {
    /// Index of the first cell; cell `xi` is the interval `(xi-1, xi)`.
    pub fn first_cell(&self) -> i64 {
        self.first_cell
    }

    pub fn last_cell(&self) -> i64 {
        self.first_cell + self.samples.len() as i64 - 1
    }

    pub fn sample(&self, cell: i64) -> f64 {
        let idx = cell - self.first_cell;
        assert!(idx >= 0 && (idx as usize) < self.samples.len(), "cell {cell} out of range");
        self.samples[idx as usize]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.samples.iter().enumerate().map(move |(i, &v)| (self.first_cell + i as i64, v))
    }

    fn difference(mut self, other: &StressField) -> StressField {
        assert_eq!(self.first_cell, other.first_cell);
        assert_eq!(self.samples.len(), other.samples.len());
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a -= b;
        }
        self
    }
}

/// Which model-to-model stress error to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressErrorKind {
    /// `T^qnl = S^qnl - S^a`: the coupling error. Vanishes on the interior
    /// of the atomistic region.
    Qnl,
    /// `T^qnll = S^qnll - S^qnl`: the linearisation error. Supported on the
    /// linear far field only.
    Qnll,
}

/// Stress error field of the given kind on a shared configuration.
pub fn stress_error(
    kind: StressErrorKind,
    cfg: ProblemConfig,
    eam: EamParams,
    u: &LatticeField,
) -> Result<StressField> {
    let (a, b) = match kind {
        StressErrorKind::Qnl => (ModelKind::Qnl, ModelKind::Atomistic),
        StressErrorKind::Qnll => (ModelKind::Qnll, ModelKind::Qnl),
    };
    let sa = LatticeSystem::new(a, cfg, eam)?.stress(u)?;
    let sb = LatticeSystem::new(b, cfg, eam)?.stress(u)?;
    Ok(sa.difference(&sb))
}

/// Dead load that makes a prescribed displacement an interior equilibrium:
/// the internal force of the infinite chain under `y(xi) = F xi + u(xi)`,
/// sampled on `[-N, N]`. The displacement closure must be defined wherever
/// a stencil reaches (`|xi| <= N + 2 r_cut`).
pub fn external_force_for(
    u_exact: &dyn Fn(i64) -> f64,
    cfg: &ProblemConfig,
    eam: &EamParams,
) -> LatticeField {
    let f = cfg.strain();
    let diff = |xi: i64| -> [f64; 4] {
        let u0 = u_exact(xi);
        let mut d = [0.0; 4];
        for (i, rho) in OFFSETS.iter().enumerate() {
            d[i] = f * *rho as f64 + u_exact(xi + rho) - u0;
        }
        d
    };
    LatticeField::from_fn(-cfg.n(), cfg.n(), |xi| {
        let mut force = 0.0;
        // force at xi: d/dy(xi) of sum_eta V(Dy(eta))
        let own = eam.v_grad(&diff(xi));
        for g in own {
            force -= g;
        }
        for (i, rho) in OFFSETS.iter().enumerate() {
            let neighbour = eam.v_grad(&diff(xi - rho));
            force += neighbour[i];
        }
        force
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::grad_l2_norm;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn cfg_small() -> ProblemConfig {
        ProblemConfig::new(16, 4, 8, 1.0, 1.2).unwrap()
    }

    fn random_admissible(cfg: &ProblemConfig, amp: f64, rng: &mut impl Rng) -> LatticeField {
        let n = cfg.n();
        LatticeField::from_fn(-n, n, |xi| {
            if xi.abs() >= n {
                0.0
            } else {
                amp * rng.gen_range(-1.0..1.0)
            }
        })
    }

    fn all_models() -> [ModelKind; 3] {
        [ModelKind::Atomistic, ModelKind::Qnl, ModelKind::Qnll]
    }

    #[test]
    fn atomistic_energy_vanishes_at_homogeneous_state() {
        for f in [0.9, 1.0, 1.4] {
            let cfg = ProblemConfig::new(12, 3, 6, f, 1.2).unwrap();
            let sys = LatticeSystem::new(ModelKind::Atomistic, cfg, EamParams::default()).unwrap();
            let u = LatticeField::zeros(-12, 25);
            assert_eq!(sys.energy(&u).unwrap(), 0.0);
        }
    }

    #[test]
    fn ghost_force_free_at_homogeneous_state() {
        // The defining property of the coupling: no spurious forces under
        // uniform strain, for QNL and QNLL alike.
        for f in [0.95, 1.0, 1.25] {
            let cfg = ProblemConfig::new(20, 4, 9, f, 1.2).unwrap();
            let u = LatticeField::zeros(-20, 41);
            for model in [ModelKind::Qnl, ModelKind::Qnll] {
                let sys = LatticeSystem::new(model, cfg, EamParams::default()).unwrap();
                let g = sys.gradient(&u).unwrap();
                let sup = g.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(sup <= 1e-12, "{model:?} ghost force {sup:.3e} at F = {f}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = cfg_small();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_admissible(&cfg, 0.05, &mut rng);
        for model in all_models() {
            let sys = LatticeSystem::new(model, cfg, EamParams::default()).unwrap();
            let dof = sys.field_to_dof(&u).unwrap();
            let mut grad = vec![0.0; dof.len()];
            sys.add_gradient_dof(&dof, &mut grad);
            let h = 1e-6;
            let mut num = vec![0.0; dof.len()];
            for i in 0..dof.len() {
                let mut up = dof.clone();
                let mut dn = dof.clone();
                up[i] += h;
                dn[i] -= h;
                num[i] = (sys.energy_dof(&up) - sys.energy_dof(&dn)) / (2.0 * h);
            }
            let num_norm = num.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err = grad
                .iter()
                .zip(&num)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err <= 1e-6 * num_norm.max(1.0), "{model:?}: fd error {err:.3e}");
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradient() {
        let cfg = cfg_small();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_admissible(&cfg, 0.05, &mut rng);
        for model in all_models() {
            let sys = LatticeSystem::new(model, cfg, EamParams::default()).unwrap();
            let dof = sys.field_to_dof(&u).unwrap();
            let mut hess = BandedMatrix::new(dof.len(), 4);
            sys.add_hessian_dof(&dof, &mut hess);
            let h = 1e-5;
            for k in (0..dof.len()).step_by(5) {
                let mut up = dof.clone();
                let mut dn = dof.clone();
                up[k] += h;
                dn[k] -= h;
                let mut gp = vec![0.0; dof.len()];
                let mut gn = vec![0.0; dof.len()];
                sys.add_gradient_dof(&up, &mut gp);
                sys.add_gradient_dof(&dn, &mut gn);
                for i in 0..dof.len() {
                    let num = (gp[i] - gn[i]) / (2.0 * h);
                    let ana = hess.get(i, k);
                    assert!(
                        (ana - num).abs() <= 1e-5 * ana.abs().max(1.0),
                        "{model:?} H[{i},{k}] = {ana} vs {num}"
                    );
                }
            }
        }
    }

    #[test]
    fn hessians_of_qnl_and_qnll_agree_at_homogeneous_state() {
        let cfg = cfg_small();
        let u = LatticeField::zeros(-16, 33);
        let hq = LatticeSystem::new(ModelKind::Qnl, cfg, EamParams::default())
            .unwrap()
            .hessian(&u)
            .unwrap();
        let hl = LatticeSystem::new(ModelKind::Qnll, cfg, EamParams::default())
            .unwrap()
            .hessian(&u)
            .unwrap();
        for i in 0..cfg.dof() {
            for j in i.saturating_sub(4)..=i {
                assert!(
                    (hq.get(i, j) - hl.get(i, j)).abs() <= 1e-12,
                    "entry ({i},{j}) differs"
                );
            }
        }
    }

    #[test]
    fn linear_region_hessian_rows_do_not_depend_on_the_state() {
        let cfg = cfg_small();
        let sys = LatticeSystem::new(ModelKind::Qnll, cfg, EamParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u1 = random_admissible(&cfg, 0.05, &mut rng);
        let u2 = random_admissible(&cfg, 0.05, &mut rng);
        let h1 = sys.hessian(&u1).unwrap();
        let h2 = sys.hessian(&u2).unwrap();
        // rows of sites whose full interaction footprint lies in the linear
        // region |xi| > L: here L = 8, so sites with |xi| >= 11
        let n = cfg.n();
        for xi in (-n + 1)..n {
            if xi.abs() < cfg.l() + 3 {
                continue;
            }
            let i = (xi + n - 1) as usize;
            for j in i.saturating_sub(4)..=i {
                assert_eq!(h1.get(i, j), h2.get(i, j), "row of site {xi}");
            }
        }
    }

    #[test]
    fn qnll_with_maximal_l_reduces_to_qnl() {
        let cfg = ProblemConfig::new(14, 3, 14, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = random_admissible(&cfg, 0.08, &mut rng);
        let qnl = LatticeSystem::new(ModelKind::Qnl, cfg, EamParams::default()).unwrap();
        let qnll = LatticeSystem::new(ModelKind::Qnll, cfg, EamParams::default()).unwrap();
        assert_eq!(qnl.energy(&u).unwrap(), qnll.energy(&u).unwrap());
        assert_eq!(qnl.gradient(&u).unwrap(), qnll.gradient(&u).unwrap());
        let hq = qnl.hessian(&u).unwrap();
        let hl = qnll.hessian(&u).unwrap();
        for i in 0..cfg.dof() {
            for j in i.saturating_sub(4)..=i {
                assert_eq!(hq.get(i, j), hl.get(i, j));
            }
        }
    }

    #[test]
    fn qnl_with_maximal_kbar_matches_atm_away_from_the_boundary() {
        // Kbar = N: no continuum left. On fields supported well inside the
        // domain the interface reconstructions see homogeneous data only, so
        // QNL and ATM coincide.
        let n = 14;
        let cfg = ProblemConfig::new(n, n - 2, n, 1.0, 1.0).unwrap();
        assert_eq!(cfg.kbar(), n);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = LatticeField::from_fn(-n, n, |xi| {
            if xi.abs() <= n - 5 {
                0.05 * rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        });
        let atm = LatticeSystem::new(ModelKind::Atomistic, cfg, EamParams::default()).unwrap();
        let qnl = LatticeSystem::new(ModelKind::Qnl, cfg, EamParams::default()).unwrap();
        assert!((atm.energy(&u).unwrap() - qnl.energy(&u).unwrap()).abs() <= 1e-14);
        let ga = atm.gradient(&u).unwrap();
        let gq = qnl.gradient(&u).unwrap();
        for (a, b) in ga.values().iter().zip(gq.values()) {
            assert!((a - b).abs() <= 1e-13);
        }
    }

    #[test]
    fn stress_is_cauchy_born_derivative_at_homogeneous_state() {
        let cfg = cfg_small();
        let u = LatticeField::zeros(-16, 33);
        let wp = EamParams::default().cauchy_born(1.0).wp;
        for model in all_models() {
            let sys = LatticeSystem::new(model, cfg, EamParams::default()).unwrap();
            let s = sys.stress(&u).unwrap();
            for (cell, v) in s.iter_cells() {
                assert!((v - wp).abs() <= 1e-12, "{model:?} cell {cell}: {v} vs {wp}");
            }
        }
    }

    #[test]
    fn stress_pairing_reproduces_the_first_variation() {
        let cfg = cfg_small();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_admissible(&cfg, 0.05, &mut rng);
        for model in all_models() {
            let sys = LatticeSystem::new(model, cfg, EamParams::default()).unwrap();
            let grad = sys.gradient(&u).unwrap();
            let stress = sys.stress(&u).unwrap();
            for _ in 0..20 {
                let v = random_admissible(&cfg, 1.0, &mut rng);
                let lhs: f64 = grad.iter_sites().map(|(xi, g)| g * v.disp(xi)).sum();
                let rhs: f64 = stress
                    .iter_cells()
                    .map(|(cell, s)| s * (v.disp(cell) - v.disp(cell - 1)))
                    .sum();
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0),
                    "{model:?}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn stress_errors_vanish_at_homogeneous_state() {
        let cfg = cfg_small();
        let u = LatticeField::zeros(-16, 33);
        for kind in [StressErrorKind::Qnl, StressErrorKind::Qnll] {
            let t = stress_error(kind, cfg, EamParams::default(), &u).unwrap();
            for (_, v) in t.iter_cells() {
                assert!(v.abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn coupling_stress_error_vanishes_inside_the_atomistic_core() {
        let cfg = cfg_small();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_admissible(&cfg, 0.08, &mut rng);
        let t = stress_error(StressErrorKind::Qnl, cfg, EamParams::default(), &u).unwrap();
        // Omega_a \ bar(Omega_a) = (-K + r_cut, K - r_cut)
        let k = cfg.k();
        for (cell, v) in t.iter_cells() {
            if cell - 1 >= -k + 2 && cell <= k - 2 {
                assert_eq!(v, 0.0, "cell {cell}");
            }
        }
    }

    #[test]
    fn linearisation_stress_error_is_supported_on_the_far_field() {
        let cfg = cfg_small();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let u = random_admissible(&cfg, 0.08, &mut rng);
        let t = stress_error(StressErrorKind::Qnll, cfg, EamParams::default(), &u).unwrap();
        let l = cfg.l();
        for (cell, v) in t.iter_cells() {
            let inside_linear = cell <= -l || cell - 1 >= l;
            if !inside_linear {
                assert_eq!(v, 0.0, "cell {cell}");
            }
        }
    }

    #[test]
    fn linearisation_stress_error_scales_quadratically() {
        let cfg = ProblemConfig::new(32, 4, 8, 1.0, 1.2).unwrap();
        let n = cfg.n();
        let mut ratios = Vec::new();
        for eps in [1e-1, 1e-2, 1e-3] {
            let u = LatticeField::from_fn(-n, n, |xi| {
                eps * (std::f64::consts::PI * xi as f64 / n as f64).sin()
            });
            // sin(pi*xi/N) vanishes at +-N, so u is admissible
            let t = stress_error(StressErrorKind::Qnll, cfg, EamParams::default(), &u).unwrap();
            let sup = t.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            ratios.push(sup / (eps * eps));
        }
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
        assert!(hi / lo < 1.5, "quadratic scaling violated: {ratios:?}");
    }

    #[test]
    fn external_force_of_the_unperturbed_chain_is_zero() {
        let cfg = cfg_small();
        let f = external_force_for(&|_| 0.0, &cfg, &EamParams::default());
        for (_, v) in f.iter_sites() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn external_force_matches_clamped_gradient_on_a_wide_domain() {
        // Assembling the ATM gradient on a wider clamped domain and sampling
        // it inside [-N, N] must reproduce the infinite-lattice force there.
        let alpha = 1.2;
        let u_ex = move |xi: i64| {
            let x = xi as f64;
            0.1 * x * (1.0 + x * x).powf(-alpha / 2.0)
        };
        let cfg = ProblemConfig::new(12, 3, 6, 1.0, alpha).unwrap();
        let f = external_force_for(&u_ex, &cfg, &EamParams::default());

        let big = ProblemConfig::new(20, 3, 6, 1.0, alpha).unwrap();
        let sys = LatticeSystem::new(ModelKind::Atomistic, big, EamParams::default()).unwrap();
        let u_clamped = LatticeField::from_fn(-20, 20, |xi| if xi.abs() >= 20 { 0.0 } else { u_ex(xi) });
        let g = sys.gradient(&u_clamped).unwrap();
        for xi in -12..=12 {
            assert!(
                (f.disp(xi) - g.disp(xi)).abs() <= 1e-12,
                "site {xi}: {} vs {}",
                f.disp(xi),
                g.disp(xi)
            );
        }
    }

    #[test]
    fn external_force_decays_at_the_prescribed_rate() {
        let alpha = 1.2;
        let u_ex = move |xi: i64| {
            let x = xi as f64;
            0.1 * x * (1.0 + x * x).powf(-alpha / 2.0)
        };
        let cfg = ProblemConfig::new(2000, 4, 8, 1.0, alpha).unwrap();
        let f = external_force_for(&u_ex, &cfg, &EamParams::default());
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for xi in 20..=1000 {
            let v = f.disp(xi).abs();
            if v > 0.0 {
                xs.push((xi as f64).ln());
                ys.push(v.ln());
            }
        }
        let slope = crate::study::fit_loglog_slope_ln(&xs, &ys);
        assert!(
            (slope + alpha + 1.0).abs() <= 0.15,
            "force decay exponent {slope:.3} vs {}",
            -alpha - 1.0
        );
    }

    #[test]
    fn rejects_oversized_fields_and_nonzero_clamp() {
        let cfg = cfg_small();
        let sys = LatticeSystem::new(ModelKind::Qnl, cfg, EamParams::default()).unwrap();
        let wide = LatticeField::zeros(-20, 41);
        assert!(matches!(sys.energy(&wide), Err(Error::Dimension(_))));
        let mut bad = LatticeField::zeros(-16, 33);
        bad.values_mut()[0] = 0.5; // site -16 = -N
        assert!(matches!(sys.energy(&bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn gradient_norm_of_solution_scale_sanity() {
        // smoke: the gradient of a small random field is small but nonzero
        let cfg = cfg_small();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = random_admissible(&cfg, 1e-3, &mut rng);
        let sys = LatticeSystem::new(ModelKind::Qnll, cfg, EamParams::default()).unwrap();
        let g = sys.gradient(&u).unwrap();
        let norm = grad_l2_norm(&g);
        assert!(norm > 0.0 && norm < 1.0);
    }
}
