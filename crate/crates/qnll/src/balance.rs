//! Quasi-optimal region sizing: maps `(K, alpha)` to `(Kbar, L, N)` so that
//! interface, linearisation, coarsening and truncation errors decay at
//! matched rates. The `~` relations become exact ceilings with constant
//! one.

use crate::error::{Error, Result};
use crate::lattice::R_CUT;

/// Whether the plan targets the full-lattice or the coarse-grained method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    NoCoarse,
    Coarse,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "no-coarse" | "nocoarse" | "full" => Ok(Regime::NoCoarse),
            "coarse" | "cg" => Ok(Regime::Coarse),
            other => Err(Error::Config(format!("unknown regime '{other}'"))),
        }
    }
}

/// A balanced choice of region half-widths for one `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancePlan {
    pub k: i64,
    pub kbar: i64,
    pub l: i64,
    pub n: i64,
    pub regime: Regime,
    pub alpha: f64,
    /// Which branch of the sizing rules produced `L` and `N`.
    pub rule: &'static str,
}

impl BalancePlan {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:?},{},{}",
            self.k, self.kbar, self.l, self.n, self.regime, self.alpha, self.rule
        )
    }
}

/// Ceiling that tolerates floating-point noise at integer boundaries, so
/// that e.g. `6^3` sizes to 216 rather than 217.
pub(crate) fn ceil_snap(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as i64
    } else {
        x.ceil() as i64
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.5) {
        return Err(Error::Config(format!("alpha must exceed 1/2, got {alpha}")));
    }
    Ok(())
}

/// Domain half-width `N(base) = base^{(2 alpha - 1/2)/(alpha - 1/2)}`,
/// balancing truncation against the linearisation order of the far field.
fn truncation_balanced_n(base: i64, alpha: f64) -> i64 {
    ceil_snap((base as f64).powf((2.0 * alpha - 0.5) / (alpha - 0.5)))
}

/// Domain half-width `N = Kbar^{(alpha + 1/2)/(alpha - 1/2)}`, balancing
/// truncation against the coarsening order.
fn coarsening_balanced_n(kbar: i64, alpha: f64) -> i64 {
    ceil_snap((kbar as f64).powf((alpha + 0.5) / (alpha - 0.5)))
}

/// The mesh algorithm's domain rule: coarsening-balanced for `alpha >= 1`
/// (the boundary case takes this branch by continuity of the exponent),
/// truncation-balanced from `Kbar` for `1/2 < alpha < 1`.
pub(crate) fn step1_domain_half_width(kbar: i64, alpha: f64) -> Result<i64> {
    check_alpha(alpha)?;
    if alpha >= 1.0 {
        Ok(coarsening_balanced_n(kbar, alpha))
    } else {
        Ok(truncation_balanced_n(kbar, alpha))
    }
}

/// Balanced plan for the full-lattice (uncoarsened) QNLL method:
/// `L = Kbar^{1/2 + 5/(8 alpha - 2)}` below `alpha = 3/2`, `L = Kbar`
/// above, and `N = L^{(2 alpha - 1/2)/(alpha - 1/2)}`.
pub fn plan_no_coarse(k: i64, alpha: f64) -> Result<BalancePlan> {
    check_alpha(alpha)?;
    if k < 1 {
        return Err(Error::Config(format!("K must be positive, got {k}")));
    }
    let kbar = k + R_CUT;
    let (l, rule) = if alpha < 1.5 {
        let exponent = 0.5 + 5.0 / (8.0 * alpha - 2.0);
        (ceil_snap((kbar as f64).powf(exponent)).max(kbar), "L=Kbar^(1/2+5/(8a-2))")
    } else {
        (kbar, "L=Kbar")
    };
    let n = truncation_balanced_n(l, alpha).max(l);
    Ok(BalancePlan { k, kbar, l, n, regime: Regime::NoCoarse, alpha, rule })
}

/// Balanced plan for the coarse-grained QNLL method:
/// `L = Kbar^{1/2 + 3/(8 alpha - 2)}` below `alpha = 1` with
/// `N = L^{(2 alpha - 1/2)/(alpha - 1/2)}`, and `L = Kbar` with
/// `N = Kbar^{(alpha + 1/2)/(alpha - 1/2)}` from `alpha = 1` on (the same
/// domain rule the mesh algorithm applies).
pub fn plan_coarse(k: i64, alpha: f64) -> Result<BalancePlan> {
    check_alpha(alpha)?;
    if k < 1 {
        return Err(Error::Config(format!("K must be positive, got {k}")));
    }
    let kbar = k + R_CUT;
    let (l, n, rule) = if alpha < 1.0 {
        let exponent = 0.5 + 3.0 / (8.0 * alpha - 2.0);
        let l = ceil_snap((kbar as f64).powf(exponent)).max(kbar);
        (l, truncation_balanced_n(l, alpha).max(l), "L=Kbar^(1/2+3/(8a-2))")
    } else {
        (kbar, coarsening_balanced_n(kbar, alpha).max(kbar), "L=Kbar")
    };
    Ok(BalancePlan { k, kbar, l, n, regime: Regime::Coarse, alpha, rule })
}
