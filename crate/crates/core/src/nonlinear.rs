//! Prescribed Gaussian curvature and Darboux equations, solved locally by a
//! damped frozen-coefficient iteration around the linear solver.
//!
//! Heights are stored in normalized units: on the physical patch
//! `(X, Y) = ρ(x, y)` the graph is `Z = ρ² ζ(x, y)`, so `Z_XX = ζ_xx` and
//! `∇Z = ρ∇ζ`. The linearization then has the `L_ε` form with `ε = ρ`.

use crate::coeffs::{check_condition7prime, CoefficientSet};
use crate::error::{Error, Result};
use crate::grid::{dx1, dx2, dy1, dy2, l2_norm_band, Field, GridSpec};
use crate::operators::{AssembleOptions, BoundaryOrder};
use crate::solver::{LinearSolver, SolveOptions};

/// Graph height `ζ = base·x²/2 + z`, with `z` periodic in x.
///
/// The quadratic part is kept analytic because it is not periodic.
#[derive(Debug, Clone)]
pub struct GraphSurface {
    pub z: Field,
    pub domain_scale: f64,
    pub base: f64,
}

impl GraphSurface {
    pub fn new(z: Field, domain_scale: f64, base: f64) -> Result<Self> {
        if !(domain_scale > 0.0 && domain_scale <= 1.0) {
            return Err(Error::Precondition(format!(
                "domain scale {domain_scale} outside (0, 1]"
            )));
        }
        Ok(Self { z, domain_scale, base })
    }

    pub fn grid(&self) -> &GridSpec {
        self.z.grid()
    }

    /// Full normalized height at the nodes.
    pub fn height(&self) -> Field {
        self.z.map_xy(|x, _, v| 0.5 * self.base * x * x + v)
    }

    fn jet(&self) -> Jet {
        let z = &self.z;
        let zy = dy1(z);
        Jet {
            zx: dx1(z).map_xy(|x, _, v| self.base * x + v),
            zy: zy.clone(),
            zxx: dx2(z).map(|v| self.base + v),
            zxy: dx1(&zy),
            zyy: dy2(z),
        }
    }
}

/// First and second derivatives of the normalized height.
struct Jet {
    zx: Field,
    zy: Field,
    zxx: Field,
    zxy: Field,
    zyy: Field,
}

/// `det ∂_ij ζ - K (1 + ρ²|∇ζ|²)²` at every node.
pub fn curvature_residual(z: &GraphSurface, k: &Field) -> Result<Field> {
    z.grid().ensure_same(k.grid())?;
    let j = z.jet();
    let r2 = z.domain_scale * z.domain_scale;
    let mut out = Field::zeros(*z.grid());
    for n in 0..out.values().len() {
        let (zx, zy) = (j.zx.values()[n], j.zy.values()[n]);
        let det = j.zxx.values()[n] * j.zyy.values()[n] - j.zxy.values()[n].powi(2);
        let g = 1.0 + r2 * (zx * zx + zy * zy);
        out.values_mut()[n] = det - k.values()[n] * g * g;
    }
    Ok(out)
}

/// Metric `h = h11 dx² + 2 h12 dx dy + h22 dy²` in grid coordinates.
#[derive(Debug, Clone)]
pub struct MetricData {
    pub h11: Field,
    pub h12: Field,
    pub h22: Field,
}

impl MetricData {
    pub fn new(h11: Field, h12: Field, h22: Field) -> Result<Self> {
        h11.grid().ensure_same(h12.grid())?;
        h11.grid().ensure_same(h22.grid())?;
        let g = *h11.grid();
        for j in 0..g.rows() {
            for i in 0..g.nx() {
                let (a, b, c) = (h11.at(i, j), h12.at(i, j), h22.at(i, j));
                if !(a > 0.0 && a * c - b * b > 0.0) {
                    return Err(Error::DegenerateMetric { i, j });
                }
            }
        }
        Ok(Self { h11, h12, h22 })
    }

    pub fn identity(grid: GridSpec) -> Self {
        Self {
            h11: Field::constant(grid, 1.0),
            h12: Field::zeros(grid),
            h22: Field::constant(grid, 1.0),
        }
    }

    pub fn det(&self) -> Field {
        &(&self.h11 * &self.h22) - &(&self.h12 * &self.h12)
    }
}

/// Christoffel symbols `Γ^k_ij` as `[k][ij]` with `ij ∈ {xx, xy, yy}`.
fn christoffel(h: &MetricData) -> [[Field; 3]; 2] {
    let g = *h.h11.grid();
    let d = [
        [dx1(&h.h11), dx1(&h.h12), dx1(&h.h22)],
        [dy1(&h.h11), dy1(&h.h12), dy1(&h.h22)],
    ];
    let det = h.det();
    let mut out: [[Field; 3]; 2] = std::array::from_fn(|_| std::array::from_fn(|_| Field::zeros(g)));
    // Metric component h_ab from indices in {0 = x, 1 = y}.
    let comp = |a: usize, b: usize| a + b;
    let pairs = [(0usize, 0usize), (0, 1), (1, 1)];
    for n in 0..g.len() {
        let dt = det.values()[n];
        let inv = [
            [h.h22.values()[n] / dt, -h.h12.values()[n] / dt],
            [-h.h12.values()[n] / dt, h.h11.values()[n] / dt],
        ];
        let dh = |l: usize, a: usize, b: usize| d[l][comp(a, b)].values()[n];
        for (slot, &(i, j)) in pairs.iter().enumerate() {
            let lowered: [f64; 2] =
                std::array::from_fn(|l| 0.5 * (dh(i, j, l) + dh(j, i, l) - dh(l, i, j)));
            for k in 0..2 {
                out[k][slot].values_mut()[n] = inv[k][0] * lowered[0] + inv[k][1] * lowered[1];
            }
        }
    }
    out
}

/// `∇_ij z = ∂_ij z - Γ^k_ij ∂_k z`, returned as `(xx, xy, yy)`.
pub fn covariant_hessian(z: &Field, h: &MetricData) -> Result<(Field, Field, Field)> {
    z.grid().ensure_same(h.h11.grid())?;
    let h = MetricData::new(h.h11.clone(), h.h12.clone(), h.h22.clone())?;
    let zy = dy1(z);
    let jet = Jet { zx: dx1(z), zy: zy.clone(), zxx: dx2(z), zxy: dx1(&zy), zyy: dy2(z) };
    let [xx, xy, yy] = covariant_from_jet(&jet, &christoffel(&h));
    Ok((xx, xy, yy))
}

fn covariant_from_jet(j: &Jet, gamma: &[[Field; 3]; 2]) -> [Field; 3] {
    let second = [&j.zxx, &j.zxy, &j.zyy];
    std::array::from_fn(|slot| {
        let corr = &(&gamma[0][slot] * &j.zx) + &(&gamma[1][slot] * &j.zy);
        second[slot] - &corr
    })
}

/// `det ∇_ij ζ - K det h (1 - ρ²|∇_h ζ|²)` at every node.
pub fn darboux_residual(z: &GraphSurface, k: &Field, h: &MetricData) -> Result<Field> {
    z.grid().ensure_same(k.grid())?;
    z.grid().ensure_same(h.h11.grid())?;
    Ok(DarbouxState::new(z, k, h).residual)
}

struct DarbouxState {
    jet: Jet,
    hess: [Field; 3],
    gamma: [[Field; 3]; 2],
    /// `|∇_h ζ|²`
    grad2: Field,
    residual: Field,
}

impl DarbouxState {
    fn new(z: &GraphSurface, k: &Field, h: &MetricData) -> Self {
        let jet = z.jet();
        let gamma = christoffel(h);
        let hess = covariant_from_jet(&jet, &gamma);
        let det = h.det();
        let r2 = z.domain_scale * z.domain_scale;
        let g = *z.grid();
        let mut grad2 = Field::zeros(g);
        let mut residual = Field::zeros(g);
        for n in 0..g.len() {
            let dt = det.values()[n];
            let (zx, zy) = (jet.zx.values()[n], jet.zy.values()[n]);
            let q = (h.h22.values()[n] * zx * zx - 2.0 * h.h12.values()[n] * zx * zy
                + h.h11.values()[n] * zy * zy)
                / dt;
            grad2.values_mut()[n] = q;
            let hd = hess[0].values()[n] * hess[2].values()[n] - hess[1].values()[n].powi(2);
            residual.values_mut()[n] = hd - k.values()[n] * dt * (1.0 - r2 * q);
        }
        Self { jet, hess, gamma, grad2, residual }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NonlinearParams {
    /// Damping `θ ∈ (0, 1]`.
    pub theta: f64,
    /// Stop once the interior L² residual is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// `α = ρ^{1/2} α₀` in the oblique condition.
    pub alpha0: f64,
    /// Constant vector field `V` for the geometric precondition.
    pub v: (f64, f64),
    /// `ε` used in the geometric precondition.
    pub eps_prime: f64,
}

impl Default for NonlinearParams {
    fn default() -> Self {
        Self { theta: 1.0, tol: 1e-6, max_iter: 50, alpha0: 1.5, v: (0.0, 1.0), eps_prime: 0.01 }
    }
}

#[derive(Debug, Clone)]
pub struct IterationReport {
    /// Linear solves performed.
    pub iterations: usize,
    /// Interior residual before each solve and after the last one.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub final_z: GraphSurface,
}

impl IterationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,residual\n");
        for (i, r) in self.residual_history.iter().enumerate() {
            s.push_str(&format!("{i},{r}\n"));
        }
        s
    }
}

/// Smooth cutoff: 1 for `|x| <= 1/2`, 0 for `|x| >= 3/4`, `C³` in between.
pub fn cutoff(x: f64) -> f64 {
    let t = ((x.abs() - 0.5) / 0.25).clamp(0.0, 1.0);
    1.0 - t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3))
}

/// Interior-row L² norm used as the stopping measure.
fn interior_norm(r: &Field) -> f64 {
    l2_norm_band(r, 1.0 - 0.5 * r.grid().hy())
}

/// Frozen linearization divided by the `u_yy` coefficient.
struct Linearization {
    k: Field,
    a: Field,
    b: Field,
    /// Coefficient of the lagged `u_xy` on the right-hand side.
    cross: Field,
    /// `u_yy` coefficient the residual is divided by.
    lead: Field,
}

fn precondition(k: &Field, params: &NonlinearParams) -> Result<()> {
    let g = *k.grid();
    let v1 = Field::constant(g, params.v.0);
    let v2 = Field::constant(g, params.v.1);
    let r = check_condition7prime(k, (&v1, &v2), params.eps_prime)?;
    if !r.passed {
        return Err(Error::Precondition(format!(
            "geometric condition fails: margin {:.3e} at ({:.3}, {:.3})",
            r.pointwise_min_margin, r.argmin_location.0, r.argmin_location.1
        )));
    }
    if !(params.theta > 0.0 && params.theta <= 1.0) {
        return Err(Error::Precondition(format!("damping {} outside (0, 1]", params.theta)));
    }
    Ok(())
}

fn iterate(
    z0: &GraphSurface,
    psi: Option<&Field>,
    params: &NonlinearParams,
    residual: impl Fn(&GraphSurface) -> Result<Field>,
    linearize: impl Fn(&GraphSurface) -> Result<Linearization>,
) -> Result<IterationReport> {
    let g = *z0.grid();
    let rho = z0.domain_scale;
    let alpha = rho.sqrt() * params.alpha0;
    let opts = SolveOptions {
        m: 0,
        enforce_conditions: false,
        assemble: AssembleOptions { upwind: false, boundary_order: BoundaryOrder::Third },
    };
    let chi = Field::from_fn(g, |x, _| cutoff(x));
    let tricomi = Field::from_fn(g, |_, y| y);
    let mut z = z0.clone();
    let mut history = Vec::new();
    let mut prev_u = Field::zeros(g);
    for n in 0..=params.max_iter {
        let r = residual(&z)?;
        let norm = interior_norm(&r);
        if !norm.is_finite() {
            return Err(Error::Nonlinear { iterations: n, reason: "residual is not finite".into() });
        }
        history.push(norm);
        if norm <= params.tol {
            return Ok(IterationReport { iterations: n, residual_history: history, converged: true, final_z: z });
        }
        if n == params.max_iter {
            break;
        }
        let mut lin = linearize(&z)?;
        if let Some(psi) = psi {
            // Extra first-order structure in the model operator only; the
            // fixed points stay the zeros of the residual.
            lin.a = &lin.a + &(psi * &lin.k);
        }
        let blend = |f: &Field, outside: Option<&Field>| {
            let mut out = &chi * f;
            if let Some(o) = outside {
                out = &out + &(&chi.map(|c| 1.0 - c) * o);
            }
            out
        };
        let cs = CoefficientSet::new(
            blend(&lin.k, Some(&tricomi)),
            blend(&lin.a, None),
            blend(&lin.b, None),
            rho,
            alpha,
        )?;
        let lagged = &lin.cross * &dx1(&dy1(&prev_u));
        let rhs = &(&r.scale(-1.0) / &lin.lead) + &lagged;
        let solver = LinearSolver::new(&cs, &opts)?;
        let (u, _) = solver.solve(&rhs)?;
        z.z = &z.z + &u.scale(params.theta);
        prev_u = u;
    }
    Ok(IterationReport {
        iterations: params.max_iter,
        residual_history: history,
        converged: false,
        final_z: z,
    })
}

fn positive_lead(lead: &Field) -> Result<()> {
    let (i, j) = lead.argmin();
    if lead.at(i, j) <= 1e-8 {
        return Err(Error::Nonlinear {
            iterations: 0,
            reason: format!("u_yy coefficient {:.3e} not positive at node ({i}, {j})", lead.at(i, j)),
        });
    }
    Ok(())
}

/// Damped frozen-coefficient iteration for `det ∂_ij z = K(1 + |∇z|²)²`.
///
/// `psi` adds `ψ K` to the first-order x coefficient of the model operator.
pub fn solve_prescribed_curvature(
    k: &Field,
    z0: &GraphSurface,
    psi: Option<&Field>,
    params: &NonlinearParams,
) -> Result<IterationReport> {
    z0.grid().ensure_same(k.grid())?;
    if let Some(p) = psi {
        z0.grid().ensure_same(p.grid())?;
    }
    precondition(k, params)?;
    let rho = z0.domain_scale;
    let r2 = rho * rho;
    iterate(
        z0,
        psi,
        params,
        |z| curvature_residual(z, k),
        |z| {
            let j = z.jet();
            positive_lead(&j.zxx)?;
            let g = *z.grid();
            let mut lin = Linearization {
                k: Field::zeros(g),
                a: Field::zeros(g),
                b: Field::zeros(g),
                cross: Field::zeros(g),
                lead: j.zxx.clone(),
            };
            for n in 0..g.len() {
                let (zx, zy) = (j.zx.values()[n], j.zy.values()[n]);
                let lead = j.zxx.values()[n];
                let gg = 1.0 + r2 * (zx * zx + zy * zy);
                let s = -4.0 * rho * k.values()[n] * gg / lead;
                lin.k.values_mut()[n] = j.zyy.values()[n] / (rho * lead);
                lin.a.values_mut()[n] = s * zx;
                lin.b.values_mut()[n] = s * zy;
                lin.cross.values_mut()[n] = 2.0 * j.zxy.values()[n] / lead;
            }
            Ok(lin)
        },
    )
}

/// Same iteration for `det ∇_ij z = K det h (1 - |∇_h z|²)`.
pub fn solve_darboux(
    k: &Field,
    h: &MetricData,
    z0: &GraphSurface,
    psi: Option<&Field>,
    params: &NonlinearParams,
) -> Result<IterationReport> {
    z0.grid().ensure_same(k.grid())?;
    if let Some(p) = psi {
        z0.grid().ensure_same(p.grid())?;
    }
    let h = MetricData::new(h.h11.clone(), h.h12.clone(), h.h22.clone())?;
    precondition(k, params)?;
    let rho = z0.domain_scale;
    let r2 = rho * rho;
    let check_gradient = |st: &DarbouxState, n: usize| -> Result<()> {
        let worst = st.grad2.max() * r2;
        if worst >= 1.0 {
            return Err(Error::Nonlinear {
                iterations: n,
                reason: format!("1 - |∇_h z|² = {:.3e} is not positive", 1.0 - worst),
            });
        }
        Ok(())
    };
    iterate(
        z0,
        psi,
        params,
        |z| {
            let st = DarbouxState::new(z, k, &h);
            check_gradient(&st, 0)?;
            Ok(st.residual)
        },
        |z| {
            let st = DarbouxState::new(z, k, &h);
            let lead = st.hess[0].clone();
            positive_lead(&lead)?;
            let g = *z.grid();
            let det = h.det();
            let mut lin = Linearization {
                k: Field::zeros(g),
                a: Field::zeros(g),
                b: Field::zeros(g),
                cross: Field::zeros(g),
                lead: lead.clone(),
            };
            for n in 0..g.len() {
                let (h11, h12, h22) = (st.hess[0].values()[n], st.hess[1].values()[n], st.hess[2].values()[n]);
                let dt = det.values()[n];
                let (zx, zy) = (st.jet.zx.values()[n], st.jet.zy.values()[n]);
                let (m11, m12, m22) = (h.h11.values()[n], h.h12.values()[n], h.h22.values()[n]);
                // h^{kj} ζ_j
                let up = [(m22 * zx - m12 * zy) / dt, (-m12 * zx + m11 * zy) / dt];
                let gk = 2.0 * r2 * k.values()[n] * dt;
                let first: [f64; 2] = std::array::from_fn(|c| {
                    let gm = |slot: usize| st.gamma[c][slot].values()[n];
                    -h22 * gm(0) - h11 * gm(2) + 2.0 * h12 * gm(1) + gk * up[c]
                });
                lin.k.values_mut()[n] = h22 / (rho * h11);
                lin.a.values_mut()[n] = first[0] / (rho * h11);
                lin.b.values_mut()[n] = first[1] / (rho * h11);
                lin.cross.values_mut()[n] = 2.0 * h12 / h11;
            }
            Ok(lin)
        },
    )
}

/// Which nonlinear equation a manufactured case targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equation {
    Curvature,
    Darboux,
}

/// Manufactured case `Z* = X²/2 + Y³/6` on the patch of scale `ρ`, with
/// `K*` computed from `Z*` and the initial guess perturbed by
/// `amplitude·(1 - y²)(1 + y)² sin(πx)` in normalized units.
#[derive(Debug, Clone)]
pub struct ManufacturedSurface {
    pub k: Field,
    pub exact: GraphSurface,
    pub initial: GraphSurface,
}

impl ManufacturedSurface {
    pub fn cubic(grid: GridSpec, rho: f64, amplitude: f64, eq: Equation) -> Result<Self> {
        let k = Field::from_fn(grid, |x, y| {
            let (xx, yy) = (rho * x, rho * y);
            let grad2 = xx * xx + yy.powi(4) / 4.0;
            match eq {
                Equation::Curvature => yy / (1.0 + grad2).powi(2),
                Equation::Darboux => yy / (1.0 - grad2),
            }
        });
        let eta = Field::from_fn(grid, |_, y| rho * y.powi(3) / 6.0);
        let bump = Field::from_fn(grid, |x, y| {
            (1.0 - y * y) * (1.0 + y).powi(2) * (std::f64::consts::PI * x).sin()
        });
        let exact = GraphSurface::new(eta.clone(), rho, 1.0)?;
        let initial = GraphSurface::new(&eta + &bump.scale(amplitude), rho, 1.0)?;
        Ok(Self { k, exact, initial })
    }

    /// `max |ζ - ζ*|` in normalized units.
    pub fn error(&self, z: &GraphSurface) -> f64 {
        (&z.z - &self.exact.z).max_abs()
    }
}
