//! Linear solves, manufactured-solution studies and the energy certificate.

use std::sync::Arc;
use std::time::Instant;

use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coeffs::{check_alpha, check_condition7, CoefficientSet};
use crate::error::{Error, Result};
use crate::grid::{dx1, dy1, inner_product, Field, GridSpec};
use crate::multiplier::{interior_forms, FormEntry, FormReport, MultiplierTriple};
use crate::norms::{negative_norm, sobolev_norm, sobolev_norm_total, NormOrder};
use crate::operators::{
    apply_l, apply_lstar, assemble_l_with, aux_solve, AssembleOptions, BoundarySpec,
    DiscreteOperator,
};

#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub cs: CoefficientSet,
    pub f: Field,
    pub boundary: BoundarySpec,
}

impl LinearProblem {
    pub fn new(cs: CoefficientSet, f: Field) -> Result<Self> {
        cs.grid().ensure_same(f.grid())?;
        let boundary = BoundarySpec::Oblique(cs.alpha);
        Ok(Self { cs, f, boundary })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Order `m` in the measured ratio `‖u‖_{H^m} / ‖f‖_{H^{m+1}}`.
    pub m: usize,
    /// Refuse inputs failing the interior coefficient condition or the α-condition.
    pub enforce_conditions: bool,
    pub assemble: AssembleOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { m: 0, enforce_conditions: true, assemble: AssembleOptions::default() }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolverStats {
    pub unknowns: usize,
    pub nnz: usize,
    pub factor_seconds: f64,
    pub solve_seconds: f64,
    /// Condition failures tolerated because enforcement was off.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: Field,
    /// `‖Lu - f‖` over all rows (boundary rows carry zero data).
    pub residual_norm: f64,
    pub relative_residual: f64,
    pub apriori_ratio: f64,
    pub stats: SolverStats,
}

/// Factorized `L_ε`, reusable across right-hand sides.
pub struct LinearSolver {
    op: DiscreteOperator,
    lu: Lu<usize, f64>,
    stats: SolverStats,
}

impl LinearSolver {
    pub fn new(cs: &CoefficientSet, opts: &SolveOptions) -> Result<Self> {
        let mut warnings = Vec::new();
        for report in [check_condition7(cs), check_alpha(cs)] {
            if !report.passed {
                let msg = format!(
                    "{} fails: margin {:.3e} at ({:.3}, {:.3})",
                    report.condition_name,
                    report.pointwise_min_margin,
                    report.argmin_location.0,
                    report.argmin_location.1
                );
                if opts.enforce_conditions {
                    return Err(Error::Precondition(msg));
                }
                warnings.push(msg);
            }
        }
        let op = assemble_l_with(cs, opts.assemble);
        let t0 = Instant::now();
        let lu = op
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::WellposednessSuspect(format!("{e:?}")))?;
        let stats = SolverStats {
            unknowns: op.grid().len(),
            nnz: op.nnz(),
            factor_seconds: t0.elapsed().as_secs_f64(),
            solve_seconds: 0.0,
            warnings,
        };
        Ok(Self { op, lu, stats })
    }

    pub fn operator(&self) -> &DiscreteOperator {
        &self.op
    }

    /// Solves `L u = f` with `f` replaced by zero on the boundary rows.
    pub fn solve(&self, f: &Field) -> Result<(Field, f64)> {
        let g = *self.op.grid();
        g.ensure_same(f.grid())?;
        let rhs = boundary_masked(f);
        let b = Mat::from_fn(g.len(), 1, |i, _| rhs.values()[i]);
        let x = self.lu.solve(&b);
        let vals: Vec<f64> = (0..g.len()).map(|i| x[(i, 0)]).collect();
        if let Some(n) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::WellposednessSuspect(format!(
                "non-finite solution at unknown {n} (singular pivot)"
            )));
        }
        let u = Field::from_values(g, vals)?;
        let resid = (&self.op.apply(&u)? - &rhs).l2_norm();
        Ok((u, resid))
    }
}

fn boundary_masked(f: &Field) -> Field {
    let g = f.grid();
    let mut out = f.clone();
    out.row_mut(0).fill(0.0);
    out.row_mut(g.ny()).fill(0.0);
    out
}

pub fn solve_linear(p: &LinearProblem) -> Result<SolveReport> {
    solve_linear_with(p, &SolveOptions::default())
}

pub fn solve_linear_with(p: &LinearProblem, opts: &SolveOptions) -> Result<SolveReport> {
    let solver = LinearSolver::new(&p.cs, opts)?;
    let t0 = Instant::now();
    let (u, residual_norm) = solver.solve(&p.f)?;
    let mut stats = solver.stats.clone();
    stats.solve_seconds = t0.elapsed().as_secs_f64();
    let fnorm = boundary_masked(&p.f).l2_norm();
    let denom = sobolev_norm_total(&p.f, opts.m + 1);
    let apriori_ratio = if denom == 0.0 { 0.0 } else { sobolev_norm_total(&u, opts.m) / denom };
    Ok(SolveReport {
        u,
        residual_norm,
        relative_residual: if fnorm == 0.0 { residual_norm } else { residual_norm / fnorm },
        apriori_ratio,
        stats,
    })
}

// ---------------------------------------------------------------------------
// Manufactured solutions

type Scalar2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Closed-form `u*` with the derivatives that `L_ε` needs.
#[derive(Clone)]
pub struct Manufactured {
    pub name: String,
    pub u: Scalar2,
    pub ux: Scalar2,
    pub uy: Scalar2,
    pub uxx: Scalar2,
    pub uyy: Scalar2,
}

impl std::fmt::Debug for Manufactured {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Manufactured").field("name", &self.name).finish()
    }
}

impl Manufactured {
    /// `u* = (1-y)(1+y)² sin(πx)`, compatible with both boundary conditions
    /// for every α.
    pub fn cubic_sine() -> Self {
        use std::f64::consts::PI;
        let g = |y: f64| (1.0 - y) * (1.0 + y).powi(2);
        let gy = |y: f64| (1.0 + y) * (1.0 - 3.0 * y);
        let gyy = |y: f64| -2.0 - 6.0 * y;
        Self {
            name: "cubic_sine".into(),
            u: Arc::new(move |x, y| g(y) * (PI * x).sin()),
            ux: Arc::new(move |x, y| PI * g(y) * (PI * x).cos()),
            uy: Arc::new(move |x, y| gy(y) * (PI * x).sin()),
            uxx: Arc::new(move |x, y| -PI * PI * g(y) * (PI * x).sin()),
            uyy: Arc::new(move |x, y| gyy(y) * (PI * x).sin()),
        }
    }

    pub fn zero() -> Self {
        let z: Scalar2 = Arc::new(|_, _| 0.0);
        Self {
            name: "zero".into(),
            u: z.clone(),
            ux: z.clone(),
            uy: z.clone(),
            uxx: z.clone(),
            uyy: z,
        }
    }

    pub fn sample(&self, grid: GridSpec) -> Field {
        Field::from_fn(grid, |x, y| (self.u)(x, y))
    }

    /// `f = L_ε u*` from the analytic derivatives.
    pub fn rhs(&self, cs: &CoefficientSet) -> Field {
        let g = *cs.grid();
        let mut f = Field::zeros(g);
        for j in 0..g.rows() {
            for i in 0..g.nx() {
                let (x, y) = (g.x(i), g.y(j));
                let v = cs.eps
                    * (cs.k.at(i, j) * (self.uxx)(x, y)
                        + cs.a.at(i, j) * (self.ux)(x, y)
                        + cs.b.at(i, j) * (self.uy)(x, y))
                    + (self.uyy)(x, y);
                f.set(i, j, v);
            }
        }
        f
    }

    /// Largest violation of `u(x,1) = 0` and `(αu_x + u_y)(x,-1) = 0`.
    pub fn boundary_violation(&self, grid: GridSpec, alpha: f64) -> f64 {
        (0..grid.nx())
            .map(|i| {
                let x = grid.x(i);
                let top = (self.u)(x, 1.0).abs();
                let bottom = (alpha * (self.ux)(x, -1.0) + (self.uy)(x, -1.0)).abs();
                top.max(bottom)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub error_l2: f64,
    pub relative_l2: f64,
    pub error_h01: f64,
    /// `log(e_prev / e) / log(h_prev / h)`; absent on the first row.
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("nx,ny,h,error_l2,relative_l2,error_h01,observed_order\n");
        for r in &self.rows {
            let ord = r.observed_order.map_or(String::new(), |o| o.to_string());
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.nx, r.ny, r.h, r.error_l2, r.relative_l2, r.error_h01, ord
            ));
        }
        s
    }

    pub fn min_order(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.observed_order).reduce(f64::min)
    }
}

/// Solves `L u = L u*` on each grid and tabulates the error against `u*`.
pub fn mms_convergence(
    build: impl Fn(GridSpec) -> Result<CoefficientSet>,
    u_star: &Manufactured,
    grids: &[GridSpec],
    opts: &SolveOptions,
) -> Result<ConvergenceTable> {
    if let Some(&finest) = grids.iter().max_by_key(|g| g.len()) {
        let alpha = build(finest)?.alpha;
        let viol = u_star.boundary_violation(finest, alpha);
        if viol > 1e-8 {
            return Err(Error::IncompatibleBoundary(viol));
        }
    }
    let mut table = ConvergenceTable::default();
    for &g in grids {
        let cs = build(g)?;
        let f = u_star.rhs(&cs);
        let solver = LinearSolver::new(&cs, opts)?;
        let (u, _) = solver.solve(&f)?;
        let exact = u_star.sample(g);
        let err = &u - &exact;
        let error_l2 = err.l2_norm();
        let norm = exact.l2_norm();
        let h = g.hx().max(g.hy());
        let observed_order = table.rows.last().and_then(|prev: &ConvergenceRow| {
            (prev.error_l2 > 0.0 && error_l2 > 0.0)
                .then(|| (prev.error_l2 / error_l2).ln() / (prev.h / h).ln())
        });
        table.rows.push(ConvergenceRow {
            nx: g.nx(),
            ny: g.ny(),
            h,
            error_l2,
            relative_l2: if norm == 0.0 { error_l2 } else { error_l2 / norm },
            error_h01: sobolev_norm(&err, NormOrder::new(0, 1)?)?,
            observed_order,
        });
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Random smooth test fields

/// Smooth random field `(1 - y) P(y) F(x)` with low Fourier modes in `F` and a
/// cubic `P`. Its coefficients are grid independent, so the same sample can be
/// evaluated on every refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothSample {
    pub cos: [f64; 4],
    pub sin: [f64; 4],
    pub poly: [f64; 4],
}

impl SmoothSample {
    pub fn random(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut draw = || rng.gen_range(-1.0..1.0);
        Self {
            cos: [draw(), draw(), draw(), draw()],
            sin: [0.0, draw(), draw(), draw()],
            poly: [draw(), draw(), draw(), draw()],
        }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        use std::f64::consts::PI;
        let fx: f64 = (0..4)
            .map(|k| {
                let t = PI * k as f64 * x;
                self.cos[k] * t.cos() + self.sin[k] * t.sin()
            })
            .sum();
        let p = self.poly[0] + y * (self.poly[1] + y * (self.poly[2] + y * self.poly[3]));
        (1.0 - y) * p * fx
    }

    pub fn field(&self, grid: GridSpec) -> Field {
        Field::from_fn(grid, |x, y| self.value(x, y))
    }

    /// Sample corrected to satisfy `αv_x - v_y = 0` on `y = -1` exactly for
    /// the discrete bottom row of `L*`.
    pub fn adjoint_field(&self, grid: GridSpec, alpha: f64) -> Field {
        project_bottom(self.field(grid), alpha, -1.0)
    }

    /// Sample corrected to satisfy `αu_x + u_y = 0` on `y = -1` exactly for
    /// the discrete bottom row of `L`.
    pub fn primal_field(&self, grid: GridSpec, alpha: f64) -> Field {
        project_bottom(self.field(grid), alpha, 1.0)
    }
}

/// Adds `χ(y) h(x)` with `χ = (1 - y²)/2`, which vanishes on both boundary
/// rows and has `∂_y χ = 1` at `y = -1` under the one-sided stencil.
fn project_bottom(mut v: Field, alpha: f64, sigma: f64) -> Field {
    let g = *v.grid();
    let defect: Vec<f64> = {
        let vx = dx1(&v);
        let vy = dy1(&v);
        (0..g.nx()).map(|i| alpha * vx.at(i, 0) + sigma * vy.at(i, 0)).collect()
    };
    for j in 0..g.rows() {
        let chi = 0.5 * (1.0 - g.y(j) * g.y(j));
        for (i, d) in defect.iter().enumerate() {
            let val = v.at(i, j) - sigma * chi * d;
            v.set(i, j, val);
        }
    }
    v
}

// ---------------------------------------------------------------------------
// Energy certificate

#[derive(Debug, Clone)]
pub struct EnergyCertificate {
    /// `c_v = (L*v, u) / ‖u‖²_{(m,1)}` per nonzero sample.
    pub ratios: Vec<f64>,
    pub min_ratio: f64,
    pub all_positive: bool,
    /// `‖v‖_{(-m-1,0)} / ‖L*v‖_{(-m,-1)}` per nonzero sample.
    pub dual_ratios: Vec<f64>,
    pub report: FormReport,
}

/// For each `v`: `u = aux_solve(v)`, then `(L*v, u)` against `‖u‖²_{(m,1)}`.
pub fn energy_certificate(
    cs: &CoefficientSet,
    mt: &MultiplierTriple,
    v_samples: &[Field],
) -> Result<EnergyCertificate> {
    let m = mt.m as i32;
    let primal = NormOrder::new(m, 1)?;
    let dual_v = NormOrder::new(-(m + 1), 0)?;
    let dual_l = NormOrder::new(-m, -1)?;
    let per_sample: Vec<Option<(f64, f64)>> = v_samples
        .par_iter()
        .map(|v| -> Result<Option<(f64, f64)>> {
            if v.max_abs() == 0.0 {
                return Ok(None);
            }
            let u = aux_solve(v, mt)?;
            let lv = apply_lstar(cs, v)?;
            let pairing = inner_product(&lv, &u)?;
            let un = sobolev_norm(&u, primal)?;
            let dual = negative_norm(v, dual_v)? / negative_norm(&lv, dual_l)?;
            Ok(Some((pairing / (un * un), dual)))
        })
        .collect::<Result<_>>()?;
    let (ratios, dual_ratios): (Vec<f64>, Vec<f64>) = per_sample.into_iter().flatten().unzip();
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let all_positive = ratios.iter().all(|&r| r > 0.0);
    let mut report = FormReport::default();
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    report.push(
        "c_v",
        FormEntry { min: min_ratio, max: max_ratio, claimed_bound: 0.0, passed: all_positive },
    );
    let (dmin, dmax) = dual_ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
    report.push(
        "dual_constant",
        FormEntry { min: dmin, max: dmax, claimed_bound: 0.0, passed: dmax.is_finite() },
    );
    Ok(EnergyCertificate { ratios, min_ratio, all_positive, dual_ratios, report })
}

/// Seeded adjoint-admissible samples on one grid.
pub fn adjoint_samples(grid: GridSpec, alpha: f64, count: usize, seed: u64) -> Vec<Field> {
    (0..count as u64)
        .map(|k| SmoothSample::random(seed, k).adjoint_field(grid, alpha))
        .collect()
}

// ---------------------------------------------------------------------------
// Energy identity

/// `|LHS - RHS|` of the multiplier identity for
/// `(au_x + bu_y + cu, L_ε u)`, with all boundary terms kept so `u` need not
/// satisfy any boundary condition.
pub fn identity18_residual(cs: &CoefficientSet, mt: &MultiplierTriple, u: &Field) -> Result<f64> {
    let g = *cs.grid();
    g.ensure_same(u.grid())?;
    let (ux, uy) = (dx1(u), dy1(u));
    let mult = &(&(&mt.a * &ux) + &(&mt.b * &uy)) + &(&mt.c * u);
    let lhs = inner_product(&mult, &apply_l(cs, u)?)?;

    let forms = interior_forms(mt, cs);
    let eps = cs.eps;
    let density = {
        let t1 = &(&forms.ux2 * &(&ux * &ux)).scale(0.5) + &(&forms.mixed * &(&ux * &uy));
        let t2 = &(&forms.uy2 * &(&uy * &uy)).scale(0.5) + &(&forms.u2 * &(u * u)).scale(0.5);
        (&t1 + &t2).scale(eps)
    };
    let interior = inner_product(&density, &Field::constant(g, 1.0))?;

    let cy = dy1(&mt.c);
    let edge = |j: usize| -> f64 {
        let s: f64 = (0..g.nx())
            .map(|i| {
                let (a, b, c) = (mt.a.at(i, j), mt.b.at(i, j), mt.c.at(i, j));
                let (k, bb) = (cs.k.at(i, j), cs.b.at(i, j));
                let (px, py, p) = (ux.at(i, j), uy.at(i, j), u.at(i, j));
                a * px * py - 0.5 * eps * b * k * px * px + 0.5 * b * py * py + c * p * py
                    - 0.5 * cy.at(i, j) * p * p
                    + 0.5 * eps * c * bb * p * p
            })
            .sum();
        s * g.hx()
    };
    let rhs = interior + edge(g.ny()) - edge(0);
    Ok((lhs - rhs).abs())
}

/// Boundary expression of the uniqueness argument:
/// `∫_{y=1} ½bu_y² + ∫_{y=-1} ½[εbK + 2αa - α²b]u_x² + ½[c_y - αc_x - εcB]u²`.
pub fn uniqueness_boundary_expression(
    cs: &CoefficientSet,
    mt: &MultiplierTriple,
    u: &Field,
) -> Result<f64> {
    let g = *cs.grid();
    g.ensure_same(u.grid())?;
    let (ux, uy) = (dx1(u), dy1(u));
    let (cx, cy) = (dx1(&mt.c), dy1(&mt.c));
    let (alpha, eps) = (cs.alpha, cs.eps);
    let top: f64 = (0..g.nx()).map(|i| 0.5 * mt.b.at(i, g.ny()) * uy.at(i, g.ny()).powi(2)).sum();
    let bottom: f64 = (0..g.nx())
        .map(|i| {
            let (a, b, c) = (mt.a.at(i, 0), mt.b.at(i, 0), mt.c.at(i, 0));
            let qx = eps * b * cs.k.at(i, 0) + 2.0 * alpha * a - alpha * alpha * b;
            let q0 = cy.at(i, 0) - alpha * cx.at(i, 0) - eps * c * cs.b.at(i, 0);
            0.5 * qx * ux.at(i, 0).powi(2) + 0.5 * q0 * u.at(i, 0).powi(2)
        })
        .sum();
    Ok(g.hx() * (top + bottom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::Preset;
    use crate::grid::make_grid;
    use crate::multiplier::build_abc;

    fn tricomi(n: usize) -> CoefficientSet {
        Preset::Tricomi.build(make_grid(n, n).unwrap(), 0.01, 0.2).unwrap()
    }

    #[test]
    fn zero_rhs_zero_solution() {
        let cs = tricomi(16);
        let p = LinearProblem::new(cs.clone(), Field::zeros(*cs.grid())).unwrap();
        let r = solve_linear(&p).unwrap();
        assert_eq!(r.u.max_abs(), 0.0);
    }

    #[test]
    fn right_inverse() {
        let cs = tricomi(32);
        let f = Field::from_fn(*cs.grid(), |x, y| (std::f64::consts::PI * x).sin() * (1.0 + y));
        let r = solve_linear(&LinearProblem::new(cs, f).unwrap()).unwrap();
        assert!(r.relative_residual < 1e-10, "{}", r.relative_residual);
        assert!(r.apriori_ratio.is_finite() && r.apriori_ratio > 0.0);
    }

    #[test]
    fn enforcement_rejects_flipped_tricomi() {
        let g = make_grid(16, 16).unwrap();
        let cs = CoefficientSet::new(
            Field::from_fn(g, |_, y| -y),
            Field::zeros(g),
            Field::zeros(g),
            0.01,
            0.2,
        )
        .unwrap();
        let p = LinearProblem::new(cs, Field::constant(g, 1.0)).unwrap();
        assert!(matches!(solve_linear(&p), Err(Error::Precondition(_))));
        let opts = SolveOptions { enforce_conditions: false, ..Default::default() };
        let r = solve_linear_with(&p, &opts).unwrap();
        assert!(!r.stats.warnings.is_empty());
    }

    #[test]
    fn alpha_condition_override() {
        // α² = 4e-4 < ε: the α-condition fails, the discrete problem still solves.
        let cs = Preset::Tricomi.build(make_grid(32, 32).unwrap(), 0.01, 0.02).unwrap();
        let f = Manufactured::cubic_sine().rhs(&cs);
        let p = LinearProblem::new(cs, f).unwrap();
        assert!(solve_linear(&p).is_err());
        let opts = SolveOptions { enforce_conditions: false, ..Default::default() };
        let r = solve_linear_with(&p, &opts).unwrap();
        assert_eq!(r.stats.warnings.len(), 1);
        assert!(r.relative_residual < 1e-10);
    }

    #[test]
    fn manufactured_boundary_compatible() {
        let g = make_grid(64, 64).unwrap();
        let u = Manufactured::cubic_sine();
        for alpha in [0.0, 0.02, 3.0] {
            assert!(u.boundary_violation(g, alpha) < 1e-14);
        }
        let bad = Manufactured { u: Arc::new(|x, _| x.cos()), ..Manufactured::zero() };
        let err = mms_convergence(
            |g| Preset::Tricomi.build(g, 0.01, 0.2),
            &bad,
            &[g],
            &SolveOptions::default(),
        );
        assert!(matches!(err, Err(Error::IncompatibleBoundary(_))));
    }

    #[test]
    fn zero_manufactured_has_zero_error() {
        let grids = [make_grid(16, 16).unwrap(), make_grid(32, 32).unwrap()];
        let t = mms_convergence(
            |g| Preset::Tricomi.build(g, 0.01, 0.2),
            &Manufactured::zero(),
            &grids,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(t.rows.iter().all(|r| r.error_l2 == 0.0));
    }

    #[test]
    fn projected_samples_satisfy_discrete_conditions() {
        let cs = tricomi(16);
        let s = SmoothSample::random(7, 3);
        let v = s.adjoint_field(*cs.grid(), cs.alpha);
        let lstar = crate::operators::assemble_lstar(&cs).apply(&v).unwrap();
        assert!(lstar.row(0).iter().all(|r| r.abs() < 1e-10));
        assert!(lstar.row(16).iter().all(|r| r.abs() < 1e-12));
        let u = s.primal_field(*cs.grid(), cs.alpha);
        let l = crate::operators::assemble_l(&cs).apply(&u).unwrap();
        assert!(l.row(0).iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn identity_residual_zero_field() {
        let cs = tricomi(16);
        let mt = build_abc(&cs, 10.0, 0).unwrap();
        let u = Field::zeros(*cs.grid());
        assert_eq!(identity18_residual(&cs, &mt, &u).unwrap(), 0.0);
    }

    #[test]
    fn samples_are_reproducible() {
        assert_eq!(SmoothSample::random(1, 5), SmoothSample::random(1, 5));
        assert_ne!(SmoothSample::random(1, 5), SmoothSample::random(1, 6));
    }
}
