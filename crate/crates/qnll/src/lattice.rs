//! Index sets, region decomposition, finite-difference stencils and the
//! discrete norms shared by every model.
//!
//! The computational domain is the lattice `{-N, ..., N}`. It splits into an
//! atomistic core `{-K..K}`, two two-site interface layers at `±Kbar` and
//! `±(Kbar-1)` with `Kbar = K + r_cut`, and a continuum remainder. The
//! continuum is further split at `±L` into a nonlinear part (Cauchy-Born)
//! and a linear far field (quadratic expansion of the Cauchy-Born density).
//!
//! Displacements obey the Dirichlet clamp `u(xi) = 0` for `|xi| >= N`;
//! deformations are `y(xi) = F*xi + u(xi)`. Everything here is immutable
//! after construction.

use crate::error::{Error, Result};

/// Interaction cutoff in lattice units. Fixed; the interface reconstruction
/// and the bandwidth of every Hessian depend on it.
pub const R_CUT: i64 = 2;

/// The four interaction offsets `(-2, -1, 1, 2)`, in stencil slot order.
pub const OFFSETS: [i64; 4] = [-2, -1, 1, 2];

/// Global problem parameters and the region partition derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConfig {
    n: i64,
    k: i64,
    kbar: i64,
    l: i64,
    strain: f64,
    alpha: f64,
}

impl ProblemConfig {
    /// Validates `0 < K < Kbar <= L <= N` with `Kbar = K + 2` and builds the
    /// configuration. `strain` is the macroscopic strain `F`, `alpha` the
    /// decay exponent of the far field (must exceed 1/2).
    pub fn new(n: i64, k: i64, l: i64, strain: f64, alpha: f64) -> Result<Self> {
        if k < 1 {
            return Err(Error::Config(format!("K must be positive, got {k}")));
        }
        let kbar = k + R_CUT;
        if l < kbar {
            return Err(Error::Config(format!("L < Kbar ({l} < {kbar})")));
        }
        if n < l {
            return Err(Error::Config(format!("L > N ({l} > {n})")));
        }
        if !(strain > 0.0) {
            return Err(Error::Config(format!("strain must be positive, got {strain}")));
        }
        if !(alpha > 0.5) {
            return Err(Error::Config(format!("alpha must exceed 1/2, got {alpha}")));
        }
        Ok(Self { n, k, kbar, l, strain, alpha })
    }

    pub fn n(&self) -> i64 {
        self.n
    }

    pub fn k(&self) -> i64 {
        self.k
    }

    /// `Kbar = K + r_cut`, the outer edge of the interface layer.
    pub fn kbar(&self) -> i64 {
        self.kbar
    }

    /// Half-width of the nonlinear continuum region.
    pub fn l(&self) -> i64 {
        self.l
    }

    pub fn strain(&self) -> f64 {
        self.strain
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of free displacement degrees of freedom (sites `-N+1..N-1`).
    pub fn dof(&self) -> usize {
        (2 * self.n - 1) as usize
    }

    pub fn partition(&self) -> RegionPartition {
        RegionPartition::new(self)
    }

    /// Region of a lattice site, or `None` outside `[-N, N]`.
    pub fn region_of_site(&self, xi: i64) -> Option<Region> {
        let a = xi.abs();
        if a > self.n {
            None
        } else if a <= self.k {
            Some(Region::Atomistic)
        } else if a <= self.kbar {
            Some(Region::Interface)
        } else if a <= self.l {
            Some(Region::NonlinearContinuum)
        } else {
            Some(Region::LinearContinuum)
        }
    }
}

/// One of the four disjoint site sets covering `{-N..N}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Atomistic,
    Interface,
    NonlinearContinuum,
    LinearContinuum,
}

/// Explicit inclusive index ranges of the four regions, one `(lo, hi)` pair
/// per side (negative side first). Continuum ranges may be empty, encoded as
/// `lo > hi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPartition {
    pub atomistic: (i64, i64),
    pub interface_neg: (i64, i64),
    pub interface_pos: (i64, i64),
    pub nonlinear_neg: (i64, i64),
    pub nonlinear_pos: (i64, i64),
    pub linear_neg: (i64, i64),
    pub linear_pos: (i64, i64),
}

impl RegionPartition {
    fn new(cfg: &ProblemConfig) -> Self {
        let (n, k, kb, l) = (cfg.n, cfg.k, cfg.kbar, cfg.l);
        Self {
            atomistic: (-k, k),
            interface_neg: (-kb, -kb + 1),
            interface_pos: (kb - 1, kb),
            nonlinear_neg: (-l, -kb - 1),
            nonlinear_pos: (kb + 1, l),
            linear_neg: (-n, -l - 1),
            linear_pos: (l + 1, n),
        }
    }
}

/// Real values indexed by consecutive lattice sites `lo..lo+len-1`.
///
/// Displacement fields are read through [`LatticeField::disp`], which applies
/// the homogeneous extension `u = 0` outside the stored range; that is the
/// admissible continuation under the Dirichlet clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    lo: i64,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn new(lo: i64, values: Vec<f64>) -> Self {
        Self { lo, values }
    }

    pub fn zeros(lo: i64, len: usize) -> Self {
        Self { lo, values: vec![0.0; len] }
    }

    /// Builds a field on `lo..=hi` from a site function.
    pub fn from_fn(lo: i64, hi: i64, f: impl Fn(i64) -> f64) -> Self {
        assert!(hi >= lo);
        Self { lo, values: (lo..=hi).map(f).collect() }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    /// Last stored site index.
    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Stored value at `xi`, if inside the range.
    pub fn get(&self, xi: i64) -> Option<f64> {
        let i = xi - self.lo;
        if i >= 0 && (i as usize) < self.values.len() {
            Some(self.values[i as usize])
        } else {
            None
        }
    }

    /// Displacement read: stored value inside the range, zero outside.
    pub fn disp(&self, xi: i64) -> f64 {
        self.get(xi).unwrap_or(0.0)
    }

    pub fn iter_sites(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values.iter().enumerate().map(move |(i, &v)| (self.lo + i as i64, v))
    }
}

/// Finite-difference stencil `(D_rho y)(xi)` for `rho in (-2, -1, 1, 2)`,
/// with `D_rho y(xi) = y(xi + rho) - y(xi)`.
///
/// `y` is a deformation field; sites outside its stored range are extended
/// homogeneously as `y = strain * xi`, so the stencil is total.
pub fn stencil(y: &LatticeField, strain: f64, xi: i64) -> [f64; 4] {
    let yv = |s: i64| y.get(s).unwrap_or(strain * s as f64);
    let y0 = yv(xi);
    [yv(xi - 2) - y0, yv(xi - 1) - y0, yv(xi + 1) - y0, yv(xi + 2) - y0]
}

/// Discrete `L^2` norm of the piecewise-constant gradient of a displacement:
/// `sqrt(sum_xi (u(xi) - u(xi-1))^2)` over all jumps, including the two
/// boundary jumps against the zero extension.
pub fn grad_l2_norm(u: &LatticeField) -> f64 {
    let mut sum = 0.0;
    // jumps at lo (against 0), interior, and hi+1 (against 0)
    for xi in u.lo()..=u.hi() + 1 {
        let d = u.disp(xi) - u.disp(xi - 1);
        sum += d * d;
    }
    sum.sqrt()
}
