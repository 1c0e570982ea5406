//! Graded finite-element meshes for coarse graining the continuum region,
//! nodal interpolation, the trapezoidal load pairing, and coarse assembly
//! of the QNL/QNLL energies.
//!
//! Mesh nodes are lattice sites. The construction resolves every atom
//! through `L` (mesh-size function below one there), then grows elements
//! like `(|x| / L)^{2(alpha+1)/3}` out to the domain edge `N`, which is set
//! from `Kbar` and `alpha`. Nodes come out symmetric about the origin.

use crate::balance::step1_domain_half_width;
use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::lattice::{LatticeField, ProblemConfig, OFFSETS};
use crate::model::{cell_kind, site_terms, CellKind, ModelKind, SiteTerm};
use crate::potential::{hom_stencil, CauchyBornCoeffs, EamParams};
use crate::solve::EnergySystem;

/// Sorted integer nodes spanning `[-N, N]`, symmetric about zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mesh {
    nodes: Vec<i64>,
}

impl Mesh {
    pub(crate) fn from_nodes(nodes: Vec<i64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::MeshMismatch("mesh needs at least two nodes".into()));
        }
        for w in nodes.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::MeshMismatch(format!(
                    "nodes not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        let m = nodes.len();
        for i in 0..m {
            if nodes[i] != -nodes[m - 1 - i] {
                return Err(Error::MeshMismatch("mesh not symmetric about the origin".into()));
            }
        }
        Ok(Self { nodes })
    }

    /// The fully refined mesh: every site of `[-n, n]` is a node.
    pub fn unit(n: i64) -> Self {
        Self { nodes: (-n..=n).collect() }
    }

    pub fn nodes(&self) -> &[i64] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Domain half-width `N` (largest node).
    pub fn half_width(&self) -> i64 {
        *self.nodes.last().unwrap()
    }

    /// Size of element `j`, the interval `(nodes[j], nodes[j+1])`.
    pub fn h(&self, j: usize) -> i64 {
        self.nodes[j + 1] - self.nodes[j]
    }

    pub fn index_of_node(&self, site: i64) -> Option<usize> {
        self.nodes.binary_search(&site).ok()
    }

    /// Elements as `(left node, right node, size)` triples.
    pub fn elements(&self) -> impl Iterator<Item = (i64, i64, i64)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1], w[1] - w[0]))
    }

    /// Writes the dump format consumed by the CLI: a `# K L N alpha` header
    /// followed by one node index per line.
    pub fn dump(&self, k: i64, l: i64, alpha: f64) -> String {
        let mut out = format!("# {} {} {} {}\n", k, l, self.half_width(), alpha);
        for v in &self.nodes {
            out.push_str(&format!("{v}\n"));
        }
        out
    }
}

/// Mesh-size function `((|x|)/L)^{2(alpha+1)/3}` that grades the far field.
fn mesh_size(x: i64, l: i64, alpha: f64) -> f64 {
    (x.abs() as f64 / l as f64).powf(2.0 * (alpha + 1.0) / 3.0)
}

fn build_positive_nodes(kbar: i64, l: i64, n: i64, alpha: f64) -> Vec<i64> {
    let mut nodes: Vec<i64> = (0..=kbar).collect();
    // resolve every atom through L; the mesh-size function is below one
    // there, so the step clamps to a single lattice spacing
    let mut cur = kbar;
    while cur < l {
        let step = (mesh_size(cur, l, alpha).floor() as i64).max(1);
        cur = (cur + step).min(l);
        nodes.push(cur);
    }
    while cur < n {
        let step = (mesh_size(cur, l, alpha).floor() as i64).max(1);
        cur = (cur + step).min(n);
        nodes.push(cur);
    }
    nodes
}

/// Builds the graded mesh for atomistic half-width `K` (so `Kbar = K + 2`)
/// and nonlinear half-width `L`, choosing the domain half-width `N` from
/// `Kbar` and `alpha`. Returns the mesh and that `N`.
pub fn build_mesh(k: i64, l: i64, alpha: f64) -> Result<(Mesh, i64)> {
    let kbar = k + 2;
    let n = step1_domain_half_width(kbar, alpha)?;
    if l > n {
        return Err(Error::Config(format!("L > N after domain sizing ({l} > {n})")));
    }
    let mesh = build_mesh_with_domain(k, l, alpha, n)?;
    Ok((mesh, n))
}

/// Same construction with an explicitly prescribed domain half-width.
pub fn build_mesh_with_domain(k: i64, l: i64, alpha: f64, n: i64) -> Result<Mesh> {
    if !(alpha > 0.5) {
        return Err(Error::Config(format!("alpha must exceed 1/2, got {alpha}")));
    }
    let kbar = k + 2;
    if k < 0 || l < kbar {
        return Err(Error::Config(format!("need 0 <= K and L >= Kbar (K={k}, L={l})")));
    }
    if l > n {
        return Err(Error::Config(format!("L > N ({l} > {n})")));
    }
    let pos = build_positive_nodes(kbar, l, n, alpha);
    let mut nodes: Vec<i64> = pos.iter().rev().filter(|&&v| v != 0).map(|&v| -v).collect();
    nodes.extend(&pos);
    Mesh::from_nodes(nodes)
}

/// Values attached to mesh nodes (displacements, loads, test functions).
#[derive(Debug, Clone, PartialEq)]
pub struct MeshField {
    values: Vec<f64>,
}

impl MeshField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Samples a lattice field at the mesh nodes.
pub fn interpolate(mesh: &Mesh, u: &LatticeField) -> MeshField {
    MeshField::new(mesh.nodes().iter().map(|&v| u.disp(v)).collect())
}

/// Evaluates the piecewise-affine interpolant at every lattice site of
/// `[-N, N]`.
pub fn prolong(mesh: &Mesh, u_h: &MeshField) -> LatticeField {
    assert_eq!(u_h.len(), mesh.node_count());
    let n = mesh.half_width();
    let mut field = LatticeField::zeros(-n, (2 * n + 1) as usize);
    let vals = field.values_mut();
    for (j, (vl, vr, h)) in mesh.elements().enumerate() {
        let ul = u_h.values()[j];
        let ur = u_h.values()[j + 1];
        for xi in vl..=vr {
            let t = (xi - vl) as f64 / h as f64;
            vals[(xi + n) as usize] = ul + t * (ur - ul);
        }
    }
    field
}

/// Trapezoidal pairing `<f, g>_h = sum_T h_T/2 (f_l g_l + f_r g_r)`.
pub fn trapezoid_pair(mesh: &Mesh, f: &MeshField, g: &MeshField) -> f64 {
    assert_eq!(f.len(), mesh.node_count());
    assert_eq!(g.len(), mesh.node_count());
    let mut sum = 0.0;
    for (j, (_, _, h)) in mesh.elements().enumerate() {
        let fl = f.values()[j] * g.values()[j];
        let fr = f.values()[j + 1] * g.values()[j + 1];
        sum += 0.5 * h as f64 * (fl + fr);
    }
    sum
}

/// Per-node trapezoid weights: `w_j = (h_left + h_right) / 2`, so that
/// `<f, g>_h = sum_j w_j f_j g_j`.
pub fn load_weights(mesh: &Mesh) -> Vec<f64> {
    let m = mesh.node_count();
    let mut w = vec![0.0; m];
    for (j, (_, _, h)) in mesh.elements().enumerate() {
        w[j] += 0.5 * h as f64;
        w[j + 1] += 0.5 * h as f64;
    }
    w
}

/// Coarse-grained QNL/QNLL assembly: site terms at atomistic resolution
/// (every site through `Kbar` is a node), continuum energies element-wise
/// with the constant element gradient.
#[derive(Debug, Clone)]
pub struct CoarseSystem<'m> {
    model: ModelKind,
    cfg: ProblemConfig,
    mesh: &'m Mesh,
    eam: EamParams,
    vhom: f64,
    cb: CauchyBornCoeffs,
    terms: Vec<SiteTerm>,
    /// node index of site `-Kbar + i`
    site_node: Vec<usize>,
    /// half-width of the nonlinear continuum band used by the energy;
    /// defaults to the configuration's `L`
    nl_half_width: i64,
}

impl<'m> CoarseSystem<'m> {
    pub fn new(model: ModelKind, cfg: ProblemConfig, mesh: &'m Mesh, eam: EamParams) -> Result<Self> {
        if model == ModelKind::Atomistic {
            return Err(Error::Config("coarse graining applies to QNL and QNLL only".into()));
        }
        if mesh.half_width() != cfg.n() {
            return Err(Error::MeshMismatch(format!(
                "mesh spans [-{}, {}] but the configuration has N = {}",
                mesh.half_width(),
                mesh.half_width(),
                cfg.n()
            )));
        }
        let kbar = cfg.kbar();
        let mut site_node = Vec::with_capacity((2 * kbar + 1) as usize);
        for site in -kbar..=kbar {
            match mesh.index_of_node(site) {
                Some(idx) => site_node.push(idx),
                None => {
                    return Err(Error::MeshMismatch(format!(
                        "site {site} inside the interface zone is not a mesh node"
                    )))
                }
            }
        }
        let cb = eam.cauchy_born(cfg.strain());
        if model == ModelKind::Qnll && !(cb.wpp > 0.0) {
            return Err(Error::Config(format!(
                "W''(F) = {} is not positive; the linearised far field would be unstable",
                cb.wpp
            )));
        }
        let vhom = eam.v_site(&hom_stencil(cfg.strain()));
        let sys = Self {
            model,
            cfg,
            mesh,
            eam,
            vhom,
            cb,
            terms: site_terms(model, &cfg),
            site_node,
            nl_half_width: cfg.l(),
        };
        sys.check_split_node(cfg.l())?;
        Ok(sys)
    }

    /// Overrides where the nonlinear continuum ends (used by the timing
    /// sweeps, which move the nonlinear/linear split across a fixed mesh).
    pub fn with_nonlinear_half_width(mut self, l: i64) -> Result<Self> {
        if l < self.cfg.kbar() || l > self.cfg.n() {
            return Err(Error::Config(format!(
                "nonlinear half-width {l} outside [Kbar, N] = [{}, {}]",
                self.cfg.kbar(),
                self.cfg.n()
            )));
        }
        self.check_split_node(l)?;
        self.nl_half_width = l;
        Ok(self)
    }

    fn check_split_node(&self, l: i64) -> Result<()> {
        if self.model == ModelKind::Qnll && self.mesh.index_of_node(l).is_none() {
            return Err(Error::MeshMismatch(format!(
                "nonlinear/linear split at {l} is not a mesh node"
            )));
        }
        Ok(())
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.cfg
    }

    pub fn nl_half_width(&self) -> i64 {
        self.nl_half_width
    }

    /// Degrees of freedom are the interior nodes.
    pub fn field_to_dof(&self, u_h: &MeshField) -> Result<Vec<f64>> {
        if u_h.len() != self.mesh.node_count() {
            return Err(Error::Dimension(format!(
                "mesh field has {} values for {} nodes",
                u_h.len(),
                self.mesh.node_count()
            )));
        }
        let last = u_h.len() - 1;
        for b in [0, last] {
            if u_h.values()[b] != 0.0 {
                return Err(Error::Dimension(format!(
                    "displacement at clamped node {} must be zero",
                    self.mesh.nodes()[b]
                )));
            }
        }
        Ok(u_h.values()[1..last].to_vec())
    }

    pub fn dof_to_field(&self, dof: &[f64]) -> MeshField {
        let mut values = vec![0.0; self.mesh.node_count()];
        values[1..=dof.len()].copy_from_slice(dof);
        MeshField::new(values)
    }

    #[inline]
    fn node_value(&self, u: &[f64], node_idx: usize) -> f64 {
        if node_idx == 0 || node_idx == self.mesh.node_count() - 1 {
            0.0
        } else {
            u[node_idx - 1]
        }
    }

    #[inline]
    fn site_value(&self, u: &[f64], site: i64) -> f64 {
        let idx = (site + self.cfg.kbar()) as usize;
        self.node_value(u, self.site_node[idx])
    }

    /// True differences at an interface-zone site, computed only for the
    /// slots a reconstruction actually reads (the others never leave
    /// `[-Kbar, Kbar]` for the terms used here).
    fn differences_for(&self, u: &[f64], term: &SiteTerm) -> [f64; 4] {
        let f = self.cfg.strain();
        let u0 = self.site_value(u, term.site);
        let mut d = [0.0; 4];
        for s in 0..4 {
            let col = term.map.col[s];
            if d[col] == 0.0 {
                let rho = OFFSETS[col];
                d[col] = f * rho as f64 + self.site_value(u, term.site + rho) - u0;
            }
        }
        d
    }

    fn element_kind(&self, vl: i64, vr: i64) -> CellKind {
        let kbar = self.cfg.kbar();
        if vr <= -kbar || vl >= kbar {
            if self.model == ModelKind::Qnll && (vr <= -self.nl_half_width || vl >= self.nl_half_width)
            {
                CellKind::Linear
            } else {
                CellKind::Nonlinear
            }
        } else {
            CellKind::Resolved
        }
    }

    fn energy_dof(&self, u: &[f64]) -> f64 {
        let mut e = 0.0;
        for t in &self.terms {
            let d = self.differences_for(u, t);
            let mut g = [0.0; 4];
            for s in 0..4 {
                g[s] = t.map.coef[s] * d[t.map.col[s]];
            }
            e += t.weight * (self.eam.v_site(&g) - self.vhom);
        }
        let f = self.cfg.strain();
        for (j, (vl, vr, h)) in self.mesh.elements().enumerate() {
            let eps = (self.node_value(u, j + 1) - self.node_value(u, j)) / h as f64;
            match self.element_kind(vl, vr) {
                CellKind::Resolved => {}
                CellKind::Nonlinear => e += h as f64 * (self.eam.w_value(f + eps) - self.cb.w),
                CellKind::Linear => {
                    e += h as f64 * (self.cb.wp * eps + 0.5 * self.cb.wpp * eps * eps)
                }
            }
        }
        e
    }

    fn add_gradient_dof(&self, u: &[f64], out: &mut [f64]) {
        let last = self.mesh.node_count() - 1;
        let mut push = |idx: usize, v: f64, out: &mut [f64]| {
            if idx > 0 && idx < last {
                out[idx - 1] += v;
            }
        };
        for t in &self.terms {
            let d = self.differences_for(u, t);
            let mut g = [0.0; 4];
            for s in 0..4 {
                g[s] = t.map.coef[s] * d[t.map.col[s]];
            }
            let vg = self.eam.v_grad(&g);
            let mut dv = [0.0; 4];
            for s in 0..4 {
                dv[t.map.col[s]] += t.weight * t.map.coef[s] * vg[s];
            }
            let centre = (t.site + self.cfg.kbar()) as usize;
            let mut acc = 0.0;
            for i in 0..4 {
                if dv[i] != 0.0 {
                    let idx = (t.site + OFFSETS[i] + self.cfg.kbar()) as usize;
                    push(self.site_node[idx], dv[i], out);
                    acc -= dv[i];
                }
            }
            push(self.site_node[centre], acc, out);
        }
        let f = self.cfg.strain();
        for (j, (vl, vr, h)) in self.mesh.elements().enumerate() {
            let eps = (self.node_value(u, j + 1) - self.node_value(u, j)) / h as f64;
            let c = match self.element_kind(vl, vr) {
                CellKind::Resolved => continue,
                CellKind::Nonlinear => self.eam.w_prime(f + eps),
                CellKind::Linear => self.cb.wp + self.cb.wpp * eps,
            };
            push(j + 1, c, out);
            push(j, -c, out);
        }
    }

    fn add_hessian_dof(&self, u: &[f64], hess: &mut BandedMatrix) {
        let last = self.mesh.node_count() - 1;
        let free = |idx: usize| -> Option<usize> {
            if idx > 0 && idx < last {
                Some(idx - 1)
            } else {
                None
            }
        };
        for t in &self.terms {
            let d = self.differences_for(u, t);
            let mut g = [0.0; 4];
            for s in 0..4 {
                g[s] = t.map.coef[s] * d[t.map.col[s]];
            }
            let vh = self.eam.v_hess(&g);
            let mut hd = [[0.0; 4]; 4];
            for s in 0..4 {
                for r in 0..4 {
                    hd[t.map.col[s]][t.map.col[r]] +=
                        t.weight * t.map.coef[s] * t.map.coef[r] * vh[s][r];
                }
            }
            // local block over node indices of site-2 .. site+2 and the site
            let centre = self.site_node[(t.site + self.cfg.kbar()) as usize];
            let mut local = [[0.0; 5]; 5];
            let foot = [0usize, 1, 3, 4];
            for i in 0..4 {
                for j in 0..4 {
                    let v = hd[i][j];
                    if v == 0.0 {
                        continue;
                    }
                    local[foot[i]][foot[j]] += v;
                    local[foot[i]][2] -= v;
                    local[2][foot[j]] -= v;
                    local[2][2] += v;
                }
            }
            let pos = |p: usize| -> Option<usize> {
                if p == 2 {
                    return Some(centre);
                }
                let off = p as i64 - 2;
                let site = t.site + off;
                if site.abs() > self.cfg.kbar() {
                    None // only reachable with zero coefficient
                } else {
                    Some(self.site_node[(site + self.cfg.kbar()) as usize])
                }
            };
            for p in 0..5 {
                for q in 0..=p {
                    let v = local[p][q];
                    if v == 0.0 {
                        continue;
                    }
                    let (Some(np), Some(nq)) = (pos(p), pos(q)) else { continue };
                    if let (Some(ip), Some(iq)) = (free(np), free(nq)) {
                        hess.add(ip, iq, v);
                    }
                }
            }
        }
        let f = self.cfg.strain();
        for (j, (vl, vr, h)) in self.mesh.elements().enumerate() {
            let eps = (self.node_value(u, j + 1) - self.node_value(u, j)) / h as f64;
            let c = match self.element_kind(vl, vr) {
                CellKind::Resolved => continue,
                CellKind::Nonlinear => self.eam.w_second(f + eps) / h as f64,
                CellKind::Linear => self.cb.wpp / h as f64,
            };
            if let Some(i) = free(j + 1) {
                hess.add(i, i, c);
            }
            if let Some(i) = free(j) {
                hess.add(i, i, c);
            }
            if let (Some(i), Some(k)) = (free(j + 1), free(j)) {
                hess.add(i, k, -c);
            }
        }
    }

    pub fn energy(&self, u_h: &MeshField) -> Result<f64> {
        let dof = self.field_to_dof(u_h)?;
        Ok(self.energy_dof(&dof))
    }

    pub fn gradient(&self, u_h: &MeshField) -> Result<MeshField> {
        let dof = self.field_to_dof(u_h)?;
        let mut g = vec![0.0; dof.len()];
        self.add_gradient_dof(&dof, &mut g);
        Ok(self.dof_to_field(&g))
    }

    pub fn hessian(&self, u_h: &MeshField) -> Result<BandedMatrix> {
        let dof = self.field_to_dof(u_h)?;
        let mut h = BandedMatrix::new(dof.len(), self.bandwidth());
        self.add_hessian_dof(&dof, &mut h);
        Ok(h)
    }
}

impl EnergySystem for CoarseSystem<'_> {
    fn dof(&self) -> usize {
        self.mesh.node_count() - 2
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

/// Cell kind on the full lattice, re-exported for the study runner.
pub(crate) fn lattice_cell_kind(model: ModelKind, cfg: &ProblemConfig, xi: i64) -> CellKind {
    cell_kind(model, cfg, xi)
}
