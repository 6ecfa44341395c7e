use std::path::Path;

use phadapt_core::driver::{run_adaptive, ADAPTIVE_EXACT, ADAPTIVE_EXACT_UNWEIGHTED};
use phadapt_core::{
    compare_strategies, qoi_local_residuals, solve_adjoint_exact, solve_adjoint_jacobi, solve_forward,
    stability_report, AdjointRhs, Vector,
};

use crate::config::Experiment;
use crate::output::{float, write_grid, write_trajectory, Summary, Table};
use crate::CliError;

/// Settings shared by every subcommand once the config has been resolved.
pub struct Context<'a> {
    pub exp: &'a Experiment,
    pub out: &'a Path,
    pub seed: Option<u64>,
    pub threads: usize,
}

impl Context<'_> {
    fn summary(&self, command: &str) -> Summary {
        let mut s = Summary::default();
        s.put("command", command);
        s.put("seed", self.seed.map_or_else(|| "none".to_string(), |v| v.to_string()));
        s.put("threads", self.threads);
        s
    }
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let e = ctx.exp;
    let traj = solve_forward(&e.sys, &e.grid, &e.input, &e.x0)?.trajectory;
    let res = qoi_local_residuals(&e.sys, &traj, &e.input)?;
    write_trajectory(&ctx.out.join("trajectory.csv"), &e.sys, &traj, &res.r)?;

    let mut s = ctx.summary("simulate");
    s.put("intervals", e.grid.intervals());
    s.put("H_initial", float(phadapt_core::hamiltonian(&e.sys, traj.x(0))?));
    s.put("H_final", float(phadapt_core::hamiltonian(&e.sys, traj.x(e.grid.intervals()))?));
    s.put("I_loc", float(res.sum_of_squares()));
    s.put("I_glob", float(res.sum().powi(2)));
    s.write(&ctx.out.join("summary.txt"))?;
    Ok(())
}

pub fn adjoint_compare(ctx: &Context) -> Result<(), CliError> {
    let e = ctx.exp;
    let p = e.perturbation;
    let grid = &e.grid;
    let k = grid.nearest_node(p.time);
    let mut load = Vector::zeros(e.sys.state_dim());
    load[p.component] = p.magnitude;
    let rhs = AdjointRhs::point_load(grid.intervals() + 1, k, load);
    let exact = solve_adjoint_exact(&e.sys, grid, &rhs)?;
    let approx = solve_adjoint_jacobi(&e.sys, grid, &rhs)?;

    let gap = |i: usize| (exact.lambda.value(i) - approx.lambda.value(i)).norm();
    let mut table = Table::create(
        &ctx.out.join("adjoint.csv"),
        &["t", "lambda_norm", "lambda_approx_norm", "diff_norm"],
    )?;
    for (i, t) in grid.nodes().iter().enumerate() {
        table.row([
            float(*t),
            float(exact.lambda.value(i).norm()),
            float(approx.lambda.value(i).norm()),
            float(gap(i)),
        ])?;
    }
    table.finish()?;

    // The gap is measured against the node just before the load.
    let start = k.saturating_sub(1);
    let ratio = |i: usize| {
        let g0 = gap(start);
        if g0 == 0.0 {
            0.0
        } else {
            gap(i) / g0
        }
    };
    let earlier = grid.nearest_node(grid.nodes()[start] - 1.0);

    let mut s = ctx.summary("adjoint-compare");
    s.put("load_node", k);
    s.put("load_time", float(grid.nodes()[k]));
    s.put("load_component", p.component);
    s.put("load_magnitude", float(p.magnitude));
    s.put("gap_before_load", float(gap(start)));
    s.put("gap_one_unit_earlier", float(gap(earlier)));
    s.put("gap_at_zero", float(gap(0)));
    s.put("ratio_one_unit_earlier", float(ratio(earlier)));
    s.put("ratio_at_zero", float(ratio(0)));

    let report = stability_report(&e.sys, grid)?;
    let spectrum: Vec<String> = report
        .eigenvalues_of_a
        .iter()
        .map(|z| format!("{:.6e}{:+.6e}i", z.re, z.im))
        .collect();
    s.put("spectrum", spectrum.join(" "));
    s.put("hurwitz", report.is_hurwitz);
    let max_factor = report.contraction_factors.iter().map(|(_, f)| *f).fold(0.0, f64::max);
    s.put("max_contraction_factor", float(max_factor));
    s.put("analytic_omega", float(report.analytic_omega));
    s.put("fitted_omega", float(report.fitted_omega));
    s.put("fitted_c", float(report.fitted_c));
    s.write(&ctx.out.join("summary.txt"))?;
    Ok(())
}

pub fn adapt(ctx: &Context) -> Result<(), CliError> {
    let e = ctx.exp;
    let run = run_adaptive(&e.sys, &e.input, &e.x0, e.horizon, &e.run)?;

    let mut table = Table::create(
        &ctx.out.join("records.csv"),
        &[
            "iter",
            "M",
            "estimator_total",
            "qoi",
            "I_loc",
            "I_loc_reference",
            "I_loc_reference_gap",
            "max_error",
            "wall_ms",
        ],
    )?;
    for r in &run.iterations {
        table.row([
            r.iter.to_string(),
            r.intervals.to_string(),
            float(r.estimator_total),
            float(r.qoi),
            float(r.i_loc),
            float(r.i_loc_reference),
            float(r.i_loc_reference_gap()),
            float(r.max_error),
            float(r.wall_ms),
        ])?;
    }
    table.finish()?;

    let grid = &run.final_grid;
    write_grid(&ctx.out.join("grid.csv"), grid)?;
    let res = qoi_local_residuals(&e.sys, &run.final_trajectory, &e.input)?;
    write_trajectory(&ctx.out.join("trajectory.csv"), &e.sys, &run.final_trajectory, &res.r)?;

    if let Some(ind) = &run.final_indicators {
        let mut table = Table::create(&ctx.out.join("indicators.csv"), &["interval", "t_left", "t_right", "eta"])?;
        for (i, eta) in ind.eta.iter().enumerate() {
            let nodes = grid.nodes();
            table.row([(i + 1).to_string(), float(nodes[i]), float(nodes[i + 1]), float(*eta)])?;
        }
        table.finish()?;
    }
    if let Some(adj) = &run.final_adjoint {
        let mut header = vec!["t".to_string()];
        header.extend((1..=e.sys.state_dim()).map(|k| format!("lambda_{k}")));
        let mut table = Table::create(&ctx.out.join("adjoint.csv"), &header)?;
        for (t, lam) in adj.lambda.grid().nodes().iter().zip(adj.lambda.values()) {
            let mut row = vec![float(*t)];
            row.extend(lam.iter().map(|v| float(*v)));
            table.row(row)?;
        }
        table.finish()?;
    }

    let mut s = ctx.summary("adapt");
    s.put("adjoint_mode", variant_name(&e.run.adjoint_mode));
    s.put("qoi", variant_name(&e.run.qoi.kind));
    s.put("rho", float(e.run.qoi.rho));
    s.put("theta", float(e.run.theta));
    s.put("stop_reason", variant_name(&run.stop_reason));
    s.put("iterations", run.iterations.len());
    s.put("final_intervals", grid.intervals());
    if let Some(last) = run.iterations.last() {
        s.put("final_estimator_total", float(last.estimator_total));
        s.put("final_I_loc", float(last.i_loc));
        s.put("final_I_loc_reference_gap", float(last.i_loc_reference_gap()));
        s.put("final_max_error", float(last.max_error));
    }
    s.write(&ctx.out.join("summary.txt"))?;
    Ok(())
}

pub fn compare(ctx: &Context) -> Result<(), CliError> {
    let e = ctx.exp;
    let cmp = compare_strategies(&e.sys, &e.input, &e.x0, e.horizon, &e.run)?;

    let mut header = vec!["M".to_string()];
    header.extend(cmp.strategies.iter().map(|s| format!("I_loc_{s}")));
    header.extend(cmp.strategies.iter().map(|s| format!("max_error_{s}")));
    let mut table = Table::create(&ctx.out.join("compare.csv"), &header)?;
    for row in &cmp.rows {
        let mut cells = vec![row.intervals.to_string()];
        cells.extend(row.points.iter().map(|p| p.map_or_else(String::new, |p| float(p.i_loc))));
        cells.extend(row.points.iter().map(|p| p.map_or_else(String::new, |p| float(p.max_error))));
        table.row(cells)?;
    }
    table.finish()?;

    let mut s = ctx.summary("compare");
    s.put("strategies", cmp.strategies.join(" "));
    let lowest: Vec<String> = cmp
        .matched_rows()
        .map(|row| format!("{}:{}", row.intervals, cmp.lowest_i_loc(row).unwrap_or("none")))
        .collect();
    s.put("lowest_i_loc_by_M", lowest.join(" "));
    match cmp.final_matched() {
        Some(row) => {
            s.put("final_matched_M", row.intervals);
            s.put("final_lowest_i_loc", cmp.lowest_i_loc(row).unwrap_or("none"));
        }
        None => s.put("final_matched_M", "none"),
    }
    if let Some(t) = cmp.trade_off() {
        s.put("trade_off_M", t.intervals);
        s.put(
            "trade_off",
            format!(
                "{ADAPTIVE_EXACT} max_error {} I_loc {} vs {ADAPTIVE_EXACT_UNWEIGHTED} max_error {} I_loc {}",
                float(t.weighted.max_error),
                float(t.weighted.i_loc),
                float(t.unweighted.max_error),
                float(t.unweighted.i_loc),
            ),
        );
        s.put("trade_off_expected_direction", t.is_expected_direction());
    }
    s.write(&ctx.out.join("summary.txt"))?;
    Ok(())
}

/// A serde unit variant as it is spelled in config files.
fn variant_name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}
