//! Benchmark studies: convergence sweeps against the analytic reference
//! solution, timing sweeps across the nonlinear/linear split, slope fits
//! and CSV output.
//!
//! The reference displacement is `u(xi) = (1/10) xi (1 + xi^2)^{-alpha/2}`,
//! a decaying far field with `|grad^j u| ~ |x|^{-alpha+1-j}`. The dead load
//! is the internal force of the infinite chain under that displacement, so
//! the reference is an interior equilibrium by construction and errors are
//! measured as `||grad y_model - grad y_ref||_{L2}` over the cells of
//! `[-N, N]`.

use crate::balance::{plan_coarse, plan_no_coarse, BalancePlan, Regime};
use crate::error::{Error, Result};
use crate::lattice::{LatticeField, ProblemConfig};
use crate::mesh::{build_mesh_with_domain, load_weights, CoarseSystem, Mesh, MeshField};
use crate::model::{external_force_at, LatticeSystem, ModelKind};
use crate::potential::EamParams;
use crate::solve::{minimize, SolveOptions};

/// Benchmark displacement with decay exponent `alpha`.
pub fn benchmark_disp(alpha: f64, xi: i64) -> f64 {
    let x = xi as f64;
    0.1 * x * (1.0 + x * x).powf(-alpha / 2.0)
}

/// Cell jump `u(xi) - u(xi - 1)` of the benchmark displacement.
fn benchmark_jump(alpha: f64, xi: i64) -> f64 {
    benchmark_disp(alpha, xi) - benchmark_disp(alpha, xi - 1)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_loglog_slope_ln(&lx, &ly)
}

/// Least-squares slope on already-logged data.
pub fn fit_loglog_slope_ln(lx: &[f64], ly: &[f64]) -> f64 {
    assert_eq!(lx.len(), ly.len());
    assert!(lx.len() >= 2, "need at least two points for a slope");
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in lx.iter().zip(ly) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// `||grad y_sol - grad y_ref||_{L2}` for a full-lattice solution.
pub fn lattice_grad_error(u: &LatticeField, n: i64, alpha: f64) -> f64 {
    let mut sum = 0.0;
    for xi in (-n + 1)..=n {
        let d = (u.disp(xi) - u.disp(xi - 1)) - benchmark_jump(alpha, xi);
        sum += d * d;
    }
    sum.sqrt()
}

/// Same error for a coarse solution, streamed element by element without
/// materialising the prolonged field.
pub fn coarse_grad_error(mesh: &Mesh, u_h: &MeshField, alpha: f64) -> f64 {
    assert_eq!(u_h.len(), mesh.node_count());
    let mut sum = 0.0;
    for (j, (vl, vr, h)) in mesh.elements().enumerate() {
        let slope = (u_h.values()[j + 1] - u_h.values()[j]) / h as f64;
        for xi in vl + 1..=vr {
            let d = slope - benchmark_jump(alpha, xi);
            sum += d * d;
        }
    }
    sum.sqrt()
}

/// `||grad y_a - grad y_b||_{L2}` between two lattice solutions.
pub fn lattice_grad_diff(a: &LatticeField, b: &LatticeField, n: i64) -> f64 {
    let mut sum = 0.0;
    for xi in (-n + 1)..=n {
        let d = (a.disp(xi) - a.disp(xi - 1)) - (b.disp(xi) - b.disp(xi - 1));
        sum += d * d;
    }
    sum.sqrt()
}

/// Gradient difference of two coarse solutions on the same mesh.
pub fn coarse_grad_diff(mesh: &Mesh, a: &MeshField, b: &MeshField) -> f64 {
    let mut sum = 0.0;
    for (j, (_, _, h)) in mesh.elements().enumerate() {
        let sa = (a.values()[j + 1] - a.values()[j]) / h as f64;
        let sb = (b.values()[j + 1] - b.values()[j]) / h as f64;
        let d = sa - sb;
        sum += d * d * h as f64;
    }
    sum.sqrt()
}

/// Interpolation-error proxy on the continuum elements: the Riemann upper
/// bound of `||h u''||_{L2}` for the decay envelope `|u''(x)| = |x|^{-alpha-1}`,
/// i.e. `sqrt(sum_T h_T (h_T max_T |x|^{-alpha-1})^2)`.
pub fn curvature_proxy(mesh: &Mesh, kbar: i64, alpha: f64) -> f64 {
    let mut sum = 0.0;
    for (vl, vr, h) in mesh.elements() {
        let near = vl.abs().min(vr.abs());
        if near < kbar {
            continue;
        }
        let env = (near as f64).powf(-alpha - 1.0);
        sum += h as f64 * (h as f64 * env) * (h as f64 * env);
    }
    sum.sqrt()
}

pub const CSV_HEADER: &str = "model,K,Kbar,L,N,dof,err_gradL2,wall_time_s,nl_fraction";

/// One record of a convergence or timing sweep.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub model: String,
    pub k: i64,
    pub kbar: i64,
    pub l: i64,
    pub n: i64,
    pub dof: usize,
    pub err_grad_l2: f64,
    pub wall_time_s: f64,
    pub nl_fraction: f64,
}

impl StudyRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:e},{:e},{}",
            self.model,
            self.k,
            self.kbar,
            self.l,
            self.n,
            self.dof,
            self.err_grad_l2,
            self.wall_time_s,
            self.nl_fraction
        )
    }
}

pub fn rows_to_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// QNL-vs-QNLL solution distance at one `K`, with the QNL error for scale.
#[derive(Debug, Clone)]
pub struct DiffRow {
    pub k: i64,
    pub l: i64,
    pub n: i64,
    pub diff_grad_l2: f64,
    pub qnl_err: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergeOutcome {
    pub rows: Vec<StudyRow>,
    pub diffs: Vec<DiffRow>,
}

#[derive(Debug, Clone, Copy)]
pub struct StudyOptions {
    pub eam: EamParams,
    pub solve: SolveOptions,
    /// Force `L = Kbar` regardless of the balancing rule (the
    /// efficiency-first scheme used to expose the unbalanced error).
    pub force_minimal_l: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { eam: EamParams::default(), solve: SolveOptions::default(), force_minimal_l: false }
    }
}

fn plan_for(regime: Regime, k: i64, alpha: f64, force_minimal_l: bool) -> Result<BalancePlan> {
    let mut plan = match regime {
        Regime::NoCoarse => plan_no_coarse(k, alpha)?,
        Regime::Coarse => plan_coarse(k, alpha)?,
    };
    if force_minimal_l {
        plan.l = plan.kbar;
        plan.rule = "L=Kbar (forced)";
    }
    Ok(plan)
}

/// Runs the convergence sweep: one balanced plan per `K`, the benchmark
/// load, a Newton solve per requested model, and the error against the
/// analytic reference. Non-converged solves keep their row with a NaN
/// error.
pub fn converge_study(
    alpha: f64,
    k_list: &[i64],
    regime: Regime,
    models: &[ModelKind],
    opts: &StudyOptions,
) -> Result<ConvergeOutcome> {
    let mut out = ConvergeOutcome::default();
    for &k in k_list {
        let plan = plan_for(regime, k, alpha, opts.force_minimal_l)?;
        let cfg = ProblemConfig::new(plan.n, plan.k, plan.l, 1.0, alpha)?;
        match regime {
            Regime::NoCoarse => {
                let mut per_model: Vec<(ModelKind, LatticeField)> = Vec::new();
                let load: Vec<f64> = ((-plan.n + 1)..plan.n)
                    .map(|xi| external_force_at(&|s| benchmark_disp(alpha, s), cfg.strain(), &opts.eam, xi))
                    .collect();
                for &model in models {
                    let sys = LatticeSystem::new(model, cfg, opts.eam)?;
                    let init = vec![0.0; sys.config().dof()];
                    let (u, rep) = minimize(&sys, &load, &init, &opts.solve);
                    if !rep.converged {
                        eprintln!(
                            "warning: {} K={k} did not converge (residual {:.3e})",
                            model.label(),
                            rep.final_grad_norm
                        );
                    }
                    let field = sys.dof_to_field(&u);
                    let err = if rep.converged {
                        lattice_grad_error(&field, plan.n, alpha)
                    } else {
                        f64::NAN
                    };
                    let c_sites = (plan.n - plan.kbar) as f64;
                    let nl_sites = (plan.l - plan.kbar) as f64;
                    out.rows.push(StudyRow {
                        model: model.label().to_string(),
                        k: plan.k,
                        kbar: plan.kbar,
                        l: plan.l,
                        n: plan.n,
                        dof: cfg.dof(),
                        err_grad_l2: err,
                        wall_time_s: rep.wall_time.as_secs_f64(),
                        nl_fraction: if model == ModelKind::Qnl { 1.0 } else { nl_sites / c_sites },
                    });
                    per_model.push((model, field));
                }
                record_diff(&mut out, &plan, &per_model, |a, b| lattice_grad_diff(a, b, plan.n));
            }
            Regime::Coarse => {
                let mesh = build_mesh_with_domain(plan.k, plan.l, alpha, plan.n)?;
                let weights = load_weights(&mesh);
                let f_nodes: Vec<f64> = mesh
                    .nodes()
                    .iter()
                    .map(|&v| external_force_at(&|s| benchmark_disp(alpha, s), cfg.strain(), &opts.eam, v))
                    .collect();
                let interior = mesh.node_count() - 2;
                let load: Vec<f64> =
                    (1..=interior).map(|j| weights[j] * f_nodes[j]).collect();
                let mut per_model: Vec<(ModelKind, MeshField)> = Vec::new();
                for &model in models {
                    let sys = CoarseSystem::new(model, cfg, &mesh, opts.eam)?;
                    let init = vec![0.0; interior];
                    let (u, rep) = minimize(&sys, &load, &init, &opts.solve);
                    if !rep.converged {
                        eprintln!(
                            "warning: {} K={k} did not converge (residual {:.3e})",
                            model.label(),
                            rep.final_grad_norm
                        );
                    }
                    let field = sys.dof_to_field(&u);
                    let err = if rep.converged {
                        coarse_grad_error(&mesh, &field, alpha)
                    } else {
                        f64::NAN
                    };
                    let (nl_nodes, c_nodes) = continuum_node_counts(&mesh, plan.kbar, plan.l);
                    out.rows.push(StudyRow {
                        model: model.label().to_string(),
                        k: plan.k,
                        kbar: plan.kbar,
                        l: plan.l,
                        n: plan.n,
                        dof: interior,
                        err_grad_l2: err,
                        wall_time_s: rep.wall_time.as_secs_f64(),
                        nl_fraction: if model == ModelKind::Qnl {
                            1.0
                        } else {
                            nl_nodes as f64 / c_nodes as f64
                        },
                    });
                    per_model.push((model, field));
                }
                record_diff(&mut out, &plan, &per_model, |a, b| coarse_grad_diff(&mesh, a, b));
            }
        }
    }
    Ok(out)
}

fn record_diff<F, T>(out: &mut ConvergeOutcome, plan: &BalancePlan, per_model: &[(ModelKind, T)], diff: F)
where
    F: Fn(&T, &T) -> f64,
{
    let qnl = per_model.iter().find(|(m, _)| *m == ModelKind::Qnl);
    let qnll = per_model.iter().find(|(m, _)| *m == ModelKind::Qnll);
    if let (Some((_, a)), Some((_, b))) = (qnl, qnll) {
        let qnl_err = out
            .rows
            .iter()
            .rev()
            .find(|r| r.model == "QNL" && r.k == plan.k)
            .map(|r| r.err_grad_l2)
            .unwrap_or(f64::NAN);
        out.diffs.push(DiffRow {
            k: plan.k,
            l: plan.l,
            n: plan.n,
            diff_grad_l2: diff(a, b),
            qnl_err,
        });
    }
}

/// Continuum and nonlinear-continuum node counts `(N_nl, N_c)` of a mesh.
pub fn continuum_node_counts(mesh: &Mesh, kbar: i64, l: i64) -> (usize, usize) {
    let mut nl = 0;
    let mut c = 0;
    for &v in mesh.nodes() {
        if v.abs() > kbar {
            c += 1;
            if v.abs() <= l {
                nl += 1;
            }
        }
    }
    (nl, c)
}

/// One row of the timing sweep.
#[derive(Debug, Clone)]
pub struct TimingRow {
    pub model: String,
    pub target_fraction: f64,
    /// Fraction actually realised on the node grid.
    pub fraction: f64,
    pub split: i64,
    pub dof: usize,
    pub median_wall_s: f64,
    pub err_grad_l2: f64,
}

/// Timing sweep on a fixed coarse mesh: the nonlinear/linear split moves so
/// that the nonlinear share of continuum nodes approximates each requested
/// fraction; a fraction of one runs the QNL model. Each row reports the
/// median wall time of five identical single-threaded solves.
pub fn timing_study(
    alpha: f64,
    k: i64,
    fractions: &[f64],
    opts: &StudyOptions,
) -> Result<Vec<TimingRow>> {
    for &f in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("nl fraction {f} outside (0, 1]")));
        }
    }
    let plan = plan_coarse(k, alpha)?;
    let cfg = ProblemConfig::new(plan.n, plan.k, plan.l, 1.0, alpha)?;
    let mesh = build_mesh_with_domain(plan.k, plan.l, alpha, plan.n)?;
    let weights = load_weights(&mesh);
    let f_nodes: Vec<f64> = mesh
        .nodes()
        .iter()
        .map(|&v| external_force_at(&|s| benchmark_disp(alpha, s), cfg.strain(), &opts.eam, v))
        .collect();
    let interior = mesh.node_count() - 2;
    let load: Vec<f64> = (1..=interior).map(|j| weights[j] * f_nodes[j]).collect();

    // candidate split positions: continuum nodes on the positive side
    let candidates: Vec<i64> =
        mesh.nodes().iter().cloned().filter(|&v| v >= plan.kbar).collect();
    let (_, c_nodes) = continuum_node_counts(&mesh, plan.kbar, plan.n);

    let mut rows = Vec::new();
    for &target in fractions {
        let qnl_row = (target - 1.0).abs() < 1e-12;
        let (model, split) = if qnl_row {
            (ModelKind::Qnl, plan.n)
        } else {
            let best = candidates
                .iter()
                .cloned()
                .min_by(|&a, &b| {
                    let fa = continuum_node_counts(&mesh, plan.kbar, a).0 as f64 / c_nodes as f64;
                    let fb = continuum_node_counts(&mesh, plan.kbar, b).0 as f64 / c_nodes as f64;
                    (fa - target).abs().partial_cmp(&(fb - target).abs()).unwrap()
                })
                .unwrap();
            (ModelKind::Qnll, best)
        };
        let sys = CoarseSystem::new(model, cfg, &mesh, opts.eam)?.with_nonlinear_half_width(split)?;
        let mut times = Vec::new();
        let mut err = f64::NAN;
        for _ in 0..5 {
            let init = vec![0.0; interior];
            let (u, rep) = minimize(&sys, &load, &init, &opts.solve);
            times.push(rep.wall_time.as_secs_f64());
            if rep.converged {
                err = coarse_grad_error(&mesh, &sys.dof_to_field(&u), alpha);
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let fraction = if qnl_row {
            1.0
        } else {
            continuum_node_counts(&mesh, plan.kbar, split).0 as f64 / c_nodes as f64
        };
        rows.push(TimingRow {
            model: model.label().to_string(),
            target_fraction: target,
            fraction,
            split,
            dof: interior,
            median_wall_s: times[2],
            err_grad_l2: err,
        });
    }
    Ok(rows)
}
