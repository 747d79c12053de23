use std::fmt::Write as _;
use std::path::Path;

use mixtype::coeffs::{check_alpha, check_condition7, CoefficientSet, ConditionReport};
use mixtype::multiplier::{boundary_form_report_with, build_abc, interior_form_report_with};
use mixtype::nonlinear::{
    solve_darboux, solve_prescribed_curvature, Equation, GraphSurface, IterationReport,
    ManufacturedSurface, MetricData, NonlinearParams,
};
use mixtype::operators::{aux_solve_report, m_residual, AssembleOptions};
use mixtype::solver::{
    adjoint_samples, energy_certificate, mms_convergence, solve_linear_with, LinearProblem,
    Manufactured, SmoothSample, SolveOptions,
};
use mixtype::{make_grid, Error, Field, GridSpec};

use crate::config::{RhsSpec, RunConfig};
use crate::output::Output;
use crate::{Command, EXIT_FAIL, EXIT_PASS, EXIT_USAGE};

/// Minimum observed L² order accepted by `mms`.
const MMS_MIN_ORDER: f64 = 1.5;
/// Relative residual below which a linear solve counts as exact.
const SOLVE_RESIDUAL_TOL: f64 = 1e-8;
const AUX_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
enum Failure {
    /// Bad input data: exit 2.
    #[error("{0}")]
    Input(String),
    /// The computation refused or broke down: exit 1.
    #[error(transparent)]
    Compute(Error),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_)
            | Error::Parse(_)
            | Error::ShapeMismatch { .. }
            | Error::GridMismatch { .. }
            | Error::InvalidGrid { .. }
            | Error::NonFinite { .. } => Failure::Input(e.to_string()),
            e => Failure::Compute(e),
        }
    }
}

pub fn execute(cmd: Command, cfg: &RunConfig, config_path: Option<&Path>) -> i32 {
    let mut out = match Output::create(&cfg.output) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", cfg.output.display());
            return EXIT_USAGE;
        }
    };
    let manifest = |out: &Output, status: &str| manifest(cmd, cfg, config_path, out, status);
    // Written up front so an aborted run still records its inputs.
    if let Err(e) = out.write("run.manifest", &manifest(&out, "running")) {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let result = match cmd {
        Command::Check => check(cfg, &mut out),
        Command::Multiplier => multiplier(cfg, &mut out),
        Command::Solve => solve(cfg, &mut out),
        Command::Mms => mms(cfg, &mut out),
        Command::Energy => energy(cfg, &mut out),
        Command::Aux => aux(cfg, &mut out),
        Command::Ma => nonlinear(cfg, &mut out, Equation::Curvature),
        Command::Darboux => nonlinear(cfg, &mut out, Equation::Darboux),
    };
    let code = match result {
        Ok(()) if out.failed() => EXIT_FAIL,
        Ok(()) => EXIT_PASS,
        Err(Failure::Compute(e)) => {
            out.error(e.to_string());
            EXIT_FAIL
        }
        Err(e) => {
            out.error(e.to_string());
            EXIT_USAGE
        }
    };
    let status = match code {
        EXIT_PASS => "pass",
        EXIT_FAIL => "fail",
        _ => "error",
    };
    let finish = out.write_summary().and_then(|()| {
        let text = manifest(&out, status);
        out.write("run.manifest", &text)
    });
    if let Err(e) = finish {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    code
}

fn manifest(
    cmd: Command,
    cfg: &RunConfig,
    config_path: Option<&Path>,
    out: &Output,
    status: &str,
) -> String {
    let grids: Vec<String> = cfg.grids.iter().map(|g| g.to_string()).collect();
    let mut outputs: Vec<&str> = out.written().iter().map(String::as_str).collect();
    for name in ["summary.txt", "run.manifest"] {
        if !outputs.contains(&name) {
            outputs.push(name);
        }
    }
    let fields: Vec<(&str, String)> = vec![
        ("command", cmd.name().into()),
        ("status", status.into()),
        ("mixtype_version", mixtype::VERSION.into()),
        ("cli_version", env!("CARGO_PKG_VERSION").into()),
        ("target", format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS)),
        ("config", config_path.map_or("none".into(), |p| p.display().to_string())),
        ("preset", cfg.preset.to_string()),
        ("eps", cfg.eps.to_string()),
        ("alpha", cfg.alpha.to_string()),
        ("lambda", cfg.lambda.to_string()),
        ("m", cfg.m.to_string()),
        ("psi", cfg.psi.to_string()),
        ("rhs", cfg.rhs.to_string()),
        ("enforce", cfg.enforce.to_string()),
        ("upwind", cfg.upwind.to_string()),
        ("n", cfg.n.to_string()),
        ("grids", grids.join(",")),
        ("seed", cfg.seed.to_string()),
        ("samples", cfg.samples.to_string()),
        ("slack", cfg.slack.to_string()),
        ("rho", cfg.rho.to_string()),
        ("alpha0", cfg.alpha0.to_string()),
        ("theta", cfg.theta.to_string()),
        ("tol", cfg.tol.to_string()),
        ("max_iter", cfg.max_iter.to_string()),
        ("amplitude", cfg.amplitude.to_string()),
        ("eps_prime", cfg.eps_prime.to_string()),
        ("curvature", cfg.curvature.as_ref().map_or("manufactured".into(), |p| p.display().to_string())),
        ("outputs", outputs.join(",")),
    ];
    fields.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn square(cfg: &RunConfig) -> Result<GridSpec, Failure> {
    Ok(make_grid(cfg.n, cfg.n)?)
}

fn coefficients(cfg: &RunConfig, g: GridSpec) -> Result<CoefficientSet, Failure> {
    Ok(cfg.preset.build(g, cfg.eps, cfg.alpha)?)
}

fn read_field(path: &Path, g: GridSpec) -> Result<Field, Failure> {
    let file = std::fs::File::open(path)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let f = Field::read_csv(file)?;
    if *f.grid() != g {
        return Err(Failure::Input(format!(
            "{}: grid {}x{} does not match the run grid {}x{}",
            path.display(),
            f.grid().nx(),
            f.grid().ny(),
            g.nx(),
            g.ny()
        )));
    }
    Ok(f)
}

fn metric_csv(rows: &[(&str, String)]) -> String {
    let mut s = String::from("metric,value\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

fn condition_line(r: &ConditionReport) -> String {
    format!(
        "min margin {:.4e} at ({:.4}, {:.4})",
        r.pointwise_min_margin, r.argmin_location.0, r.argmin_location.1
    )
}

fn check(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    let cs = coefficients(cfg, square(cfg)?)?;
    let reports = [check_condition7(&cs), check_alpha(&cs)];
    let mut csv = format!("{}\n", ConditionReport::csv_header());
    for r in &reports {
        let _ = writeln!(csv, "{}", r.csv_row());
    }
    out.write("conditions.csv", &csv)?;
    for r in &reports {
        out.check(&r.condition_name, r.passed, condition_line(r));
    }
    Ok(())
}

fn multiplier(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    let g = square(cfg)?;
    let cs = coefficients(cfg, g)?;
    let mt = build_abc(&cs, cfg.lambda, cfg.m)?;
    let mut fields = String::from("x,y,phi,a,b,c\n");
    for j in 0..g.rows() {
        for i in 0..g.nx() {
            let _ = writeln!(
                fields,
                "{},{},{},{},{},{}",
                g.x(i),
                g.y(j),
                mt.phi.at(i, j),
                mt.a.at(i, j),
                mt.b.at(i, j),
                mt.c.at(i, j)
            );
        }
    }
    out.write("multiplier.csv", &fields)?;
    let interior = interior_form_report_with(&mt, &cs, cfg.slack);
    out.write("interior_forms.csv", &interior.to_csv())?;
    let boundary = boundary_form_report_with(&mt, &cs, cfg.slack);
    out.write("boundary_forms.csv", &boundary.to_csv())?;
    for (scope, report) in [("interior", &interior), ("boundary", &boundary)] {
        for (label, e) in &report.entries {
            out.check(
                &format!("{scope} {label}"),
                e.passed,
                format!("min {:.4e}, max {:.4e}, bound {:.4e}", e.min, e.max, e.claimed_bound),
            );
        }
    }
    Ok(())
}

fn solve_options(cfg: &RunConfig) -> SolveOptions {
    SolveOptions {
        m: cfg.m,
        enforce_conditions: cfg.enforce,
        assemble: AssembleOptions { upwind: cfg.upwind, ..AssembleOptions::default() },
    }
}

fn solve(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    let g = square(cfg)?;
    let cs = coefficients(cfg, g)?;
    let manufactured = Manufactured::cubic_sine();
    let f = match &cfg.rhs {
        RhsSpec::Manufactured => manufactured.rhs(&cs),
        RhsSpec::Smooth => SmoothSample::random(cfg.seed, 0).field(g),
        RhsSpec::Csv(path) => read_field(path, g)?,
    };
    let report = solve_linear_with(&LinearProblem::new(cs, f)?, &solve_options(cfg))?;
    out.write("solution.csv", &report.u.to_csv_string())?;
    let mut rows = vec![
        ("unknowns", report.stats.unknowns.to_string()),
        ("nnz", report.stats.nnz.to_string()),
        ("residual_norm", report.residual_norm.to_string()),
        ("relative_residual", report.relative_residual.to_string()),
        ("apriori_ratio", report.apriori_ratio.to_string()),
    ];
    if cfg.rhs == RhsSpec::Manufactured {
        let exact = manufactured.sample(g);
        let err = (&report.u - &exact).l2_norm();
        rows.push(("error_l2", err.to_string()));
        rows.push(("relative_error_l2", (err / exact.l2_norm()).to_string()));
    }
    out.write("solve.csv", &metric_csv(&rows))?;
    for w in &report.stats.warnings {
        out.note(format!("not enforced: {w}"));
    }
    out.check(
        "residual",
        report.relative_residual <= SOLVE_RESIDUAL_TOL,
        format!("relative residual {:.3e}", report.relative_residual),
    );
    out.note(format!("a priori ratio ||u||/||f|| = {:.4e}", report.apriori_ratio));
    if let Some((_, e)) = rows.iter().find(|(k, _)| *k == "relative_error_l2") {
        out.note(format!("relative L2 error against u* = {e}"));
    }
    Ok(())
}

fn mms(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    let grids = cfg
        .grids
        .iter()
        .map(|&n| make_grid(n, n))
        .collect::<mixtype::Result<Vec<_>>>()?;
    let table = mms_convergence(
        |g| cfg.preset.build(g, cfg.eps, cfg.alpha),
        &Manufactured::cubic_sine(),
        &grids,
        &solve_options(cfg),
    )?;
    out.write("convergence.csv", &table.to_csv())?;
    let order = table.min_order().unwrap_or(f64::NAN);
    out.check(
        "observed order",
        order >= MMS_MIN_ORDER,
        format!("min L2 order {order:.3} (required {MMS_MIN_ORDER})"),
    );
    if let Some(last) = table.rows.last() {
        out.note(format!("finest relative L2 error {:.3e}", last.relative_l2));
    }
    Ok(())
}

fn energy(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    let g = square(cfg)?;
    let cs = coefficients(cfg, g)?;
    let mt = build_abc(&cs, cfg.lambda, cfg.m)?;
    let samples = adjoint_samples(g, cfg.alpha, cfg.samples, cfg.seed);
    let cert = energy_certificate(&cs, &mt, &samples)?;
    let mut csv = String::from("sample,c_v,dual_ratio\n");
    for (k, (c, d)) in cert.ratios.iter().zip(&cert.dual_ratios).enumerate() {
        let _ = writeln!(csv, "{k},{c},{d}");
    }
    out.write("energy_samples.csv", &csv)?;
    out.write("energy.csv", &cert.report.to_csv())?;
    let negative = cert.ratios.iter().filter(|&&r| r <= 0.0).count();
    out.check(
        "c_v > 0",
        cert.all_positive,
        format!("min c_v {:.4e}, {negative} of {} non-positive", cert.min_ratio, cert.ratios.len()),
    );
    Ok(())
}

fn aux(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    let g = square(cfg)?;
    let cs = coefficients(cfg, g)?;
    let mt = build_abc(&cs, cfg.lambda, cfg.m)?;
    let mut csv = String::from("sample,iterations,contraction_ratio,m_residual\n");
    let (mut worst_ratio, mut worst_resid) = (0.0f64, 0.0f64);
    for k in 0..cfg.samples as u64 {
        let v = SmoothSample::random(cfg.seed, k).field(g);
        let r = match aux_solve_report(&v, &mt) {
            Ok(r) => r,
            Err(e) => {
                // Keep the rows computed so far.
                out.write("aux.csv", &csv)?;
                return Err(e.into());
            }
        };
        let resid = m_residual(&r.u, &v, &mt)?;
        let _ = writeln!(csv, "{k},{},{},{resid}", r.iterations, r.contraction_ratio);
        worst_ratio = worst_ratio.max(r.contraction_ratio);
        worst_resid = worst_resid.max(resid);
    }
    out.write("aux.csv", &csv)?;
    out.check("contraction", worst_ratio < 1.0, format!("max ratio {worst_ratio:.4e}"));
    out.check(
        "M residual",
        worst_resid <= AUX_RESIDUAL_TOL,
        format!("max {worst_resid:.3e} (tolerance {AUX_RESIDUAL_TOL:e})"),
    );
    Ok(())
}

fn nonlinear(cfg: &RunConfig, out: &mut Output, eq: Equation) -> Result<(), Failure> {
    let g = make_grid(cfg.n + 1, cfg.n)?;
    let params = NonlinearParams {
        theta: cfg.theta,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        alpha0: cfg.alpha0,
        eps_prime: cfg.eps_prime,
        ..NonlinearParams::default()
    };
    let (k, z0, case) = match &cfg.curvature {
        Some(path) => {
            let k = read_field(path, g)?;
            (k, GraphSurface::new(Field::zeros(g), cfg.rho, 1.0)?, None)
        }
        None => {
            let case = ManufacturedSurface::cubic(g, cfg.rho, cfg.amplitude, eq)?;
            (case.k.clone(), case.initial.clone(), Some(case))
        }
    };
    let psi = (cfg.psi != 0.0).then(|| Field::constant(g, cfg.psi));
    let report: IterationReport = match eq {
        Equation::Curvature => solve_prescribed_curvature(&k, &z0, psi.as_ref(), &params)?,
        Equation::Darboux => {
            solve_darboux(&k, &MetricData::identity(g), &z0, psi.as_ref(), &params)?
        }
    };
    out.write("iterations.csv", &report.to_csv())?;
    out.write("surface.csv", &report.final_z.z.to_csv_string())?;
    let last = report.residual_history.last().copied().unwrap_or(f64::NAN);
    let mut rows = vec![
        ("iterations", report.iterations.to_string()),
        ("converged", report.converged.to_string()),
        ("final_residual", last.to_string()),
    ];
    if let Some(case) = &case {
        rows.push(("error_max", case.error(&report.final_z).to_string()));
    }
    out.write("nonlinear.csv", &metric_csv(&rows))?;
    out.check(
        "converged",
        report.converged,
        format!("{} iterations, residual {last:.3e} (tol {:e})", report.iterations, cfg.tol),
    );
    if let Some(case) = &case {
        out.note(format!("max error against z* {:.3e}", case.error(&report.final_z)));
    }
    Ok(())
}
