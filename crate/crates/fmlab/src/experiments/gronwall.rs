use std::collections::BTreeMap;
use std::path::Path;

use fmlab_core::fit::{linear_fit, DecayModel};
use fmlab_core::gronwall::{
    envelope_extract, kernel_norm, solve_recursion, window_points, DecaySequence, KernelNorms, WeightedKernel,
    RESIDUAL_TOL, TAIL_TOLERANCE,
};
use serde::Serialize;

use super::validation;
use crate::config::Config;
use crate::error::{HResult, HarnessError};
use crate::output::{num, Ctx};

#[derive(Serialize)]
struct SweepSummary {
    slope: f64,
    slope_stderr: f64,
    /// `‖A_μ‖_X μ^{2d}` at the largest μ.
    constant: f64,
    bound_holds: bool,
}

#[derive(Serialize)]
struct GronwallSummary {
    kernel: WeightedKernel,
    rate_source: String,
    norms: KernelNorms,
    iterations: usize,
    residual: f64,
    tau_x_norm: f64,
    neumann_bound: f64,
    envelope: DecayModel,
    sweep: Option<SweepSummary>,
}

fn linf(x: &[i64], y: &[i64]) -> i64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).max().unwrap_or(0)
}

/// Fitted decay rate from a decay profile's `fit.json`.
fn rate_from_fit(path: &Path) -> HResult<f64> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| validation(format!("numeric.tau_fit: {}: {e}", path.display())))?;
    v.pointer("/model/rate")
        .and_then(serde_json::Value::as_f64)
        .filter(|r| *r > 0.0)
        .ok_or_else(|| validation(format!("numeric.tau_fit: {} has no positive model.rate", path.display())))
}

pub fn run(cfg: &Config, ctx: &mut Ctx) -> HResult<()> {
    let dim = cfg.usize("numeric.dim");
    let scale = cfg.f64("numeric.scale");
    let radius = cfg.usize("numeric.radius");
    ctx.module_default("gronwall.tail_tolerance", TAIL_TOLERANCE);
    ctx.module_default("gronwall.residual_tolerance", RESIDUAL_TOL);

    let (kernel, rate_source) = ctx.stage("kernel", |ctx| {
        let (rate, source) = match cfg.opt_str("numeric.tau_fit") {
            Some(p) => {
                let mu = rate_from_fit(Path::new(&p))?;
                (mu * scale, format!("fitted moment decay {mu} per unit length from {p}"))
            }
            None => (cfg.f64("numeric.rate"), "numeric.rate".to_string()),
        };
        let k = ctx.core(WeightedKernel::new(dim, scale, rate, cfg.f64("numeric.kappa"), radius))?;
        Ok((k, source))
    })?;

    let solution = ctx.stage("recursion", |ctx| {
        let mu = kernel.mu();
        let b = match cfg.str("numeric.source").as_str() {
            "point" => DecaySequence::from_fn(dim, radius, mu, |x, y| {
                if x.iter().chain(y).all(|c| *c == 0) {
                    1.0
                } else {
                    0.0
                }
            }),
            _ => {
                let rate = cfg.opt_f64("numeric.source_rate").unwrap_or(2.0 * mu);
                if rate <= mu {
                    return Err(validation(format!(
                        "numeric.source_rate = {rate}: must exceed the kernel rate {mu}, otherwise the source has no finite weighted norm"
                    )));
                }
                DecaySequence::from_fn(dim, radius, mu, |x, y| (-rate * linf(x, y) as f64).exp())
            }
        };
        let sol = ctx.core(solve_recursion(&kernel, &b, cfg.usize("numeric.max_iterations")))?;
        ctx.check(
            "fixed_point_residual",
            sol.residual <= RESIDUAL_TOL,
            format!("residual {:e}", sol.residual),
        );
        let tx = sol.tau.x_norm();
        ctx.check(
            "neumann_series_bound",
            tx <= sol.neumann_bound * (1.0 + 1e-12),
            format!("‖τ‖_X = {tx}, bound {}", sol.neumann_bound),
        );
        Ok(sol)
    })?;

    let envelope = ctx.stage("envelope", |ctx| {
        let fit = ctx.core(envelope_extract(&solution.tau))?;
        let pts = window_points(dim, radius);
        let mut sup: BTreeMap<i64, f64> = BTreeMap::new();
        let n = pts.len();
        for (i, x) in pts.iter().enumerate() {
            for (j, y) in pts.iter().enumerate() {
                let e = sup.entry(linf(x, y)).or_insert(0.0);
                *e = e.max(solution.tau.values[i * n + j]);
            }
        }
        let rows: Vec<Vec<String>> = sup.iter().map(|(r, v)| vec![r.to_string(), num(*v), num(fit.eval(*r as f64))]).collect();
        ctx.write_csv("envelope.csv", "gronwall_envelope", &["r", "sup_tau", "fit"], &rows)?;
        Ok(fit)
    })?;

    let sweep = match cfg.opt_floats("numeric.mu_sweep") {
        None => None,
        Some(mus) => Some(ctx.stage("norm_sweep", |ctx| {
            let t = cfg.usize("numeric.sweep_radius");
            let mut rows = Vec::new();
            let mut norms = Vec::new();
            for &mu in &mus {
                let k = ctx.core(WeightedKernel::plain(dim, mu, t))?;
                let n = ctx.core(kernel_norm(&k, mu, t))?;
                let closed = (0.5 * mu).tanh().recip().powi(2 * dim as i32);
                ctx.check(
                    "linf_bound_above_closed_form",
                    n.linf_norm >= closed * (1.0 - 1e-12),
                    format!("mu = {mu}: bound {} vs exact {closed}", n.linf_norm),
                );
                rows.push(vec![num(mu), num(n.x_norm), num(n.linf_norm), num(n.x_tail), num(n.linf_tail), num(closed)]);
                norms.push((mu, n.x_norm));
            }
            ctx.write_csv(
                "norms.csv",
                "kernel_norms",
                &["mu", "x_norm", "linf_norm", "x_tail", "linf_tail", "linf_closed_form"],
                &rows,
            )?;
            if norms.len() < 2 {
                return Err(validation("numeric.mu_sweep: needs at least two rates".into()));
            }
            let x: Vec<f64> = norms.iter().map(|p| p.0.ln()).collect();
            let y: Vec<f64> = norms.iter().map(|p| p.1.ln()).collect();
            let line = ctx.core(linear_fit(&x, &y))?;
            let (mu_max, n_max) = norms.iter().cloned().fold((0.0, 0.0), |a, p| if p.0 > a.0 { p } else { a });
            let c = n_max * mu_max.powi(2 * dim as i32);
            let bound_holds = norms.iter().all(|(mu, n)| *n <= c * mu.powi(-2 * dim as i32) * (1.0 + 1e-9));
            Ok(SweepSummary {
                slope: line.slope,
                slope_stderr: line.slope_stderr,
                constant: c,
                bound_holds,
            })
        })?),
    };

    ctx.stage("write", |ctx| {
        let summary = GronwallSummary {
            kernel,
            rate_source,
            norms: solution.kernel,
            iterations: solution.iterations,
            residual: solution.residual,
            tau_x_norm: solution.tau.x_norm(),
            neumann_bound: solution.neumann_bound,
            envelope,
            sweep,
        };
        ctx.write_json("summary.json", &summary)
    })
}
