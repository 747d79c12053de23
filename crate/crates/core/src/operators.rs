//! Sparse assembly of `L_ε` and its adjoint, the downward transport march and
//! the auxiliary operator `M`.

use std::collections::BTreeMap;
use std::io::Write;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{dx1, dx2, dy1, dy2, inner_product, Field, GridSpec};
use crate::multiplier::MultiplierTriple;

/// Condition imposed on `y = -1`. The top row is always `u = 0` and x is
/// always periodic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundarySpec {
    /// `αu_x + u_y = 0`
    Oblique(f64),
    /// `αv_x - v_y = 0`
    AdjointOblique(f64),
}

impl BoundarySpec {
    pub fn alpha(&self) -> f64 {
        match *self {
            BoundarySpec::Oblique(a) | BoundarySpec::AdjointOblique(a) => a,
        }
    }
}

/// Accuracy of the one-sided `∂_y` on the bottom row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryOrder {
    #[default]
    Second,
    Third,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AssembleOptions {
    /// One-sided first-order terms chosen by coefficient sign.
    pub upwind: bool,
    pub boundary_order: BoundaryOrder,
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: GridSpec,
    boundary: BoundarySpec,
    /// `(row, col, value)` sorted by row then column, without duplicates.
    triplets: Vec<(usize, usize, f64)>,
}

impl DiscreteOperator {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn boundary(&self) -> BoundarySpec {
        self.boundary
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    /// Largest number of nonzeros in any row.
    pub fn max_row_nnz(&self) -> usize {
        let mut counts = vec![0usize; self.grid.len()];
        for &(r, _, _) in &self.triplets {
            counts[r] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }

    pub fn apply(&self, u: &Field) -> Result<Field> {
        self.grid.ensure_same(u.grid())?;
        let mut out = vec![0.0; self.grid.len()];
        for &(r, c, v) in &self.triplets {
            out[r] += v * u.values()[c];
        }
        Field::from_values(self.grid, out)
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let n = self.grid.len();
        let t: Vec<Triplet<usize, usize, f64>> =
            self.triplets.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(n, n, &t)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.grid.len();
        let mut m = Mat::zeros(n, n);
        for &(r, c, v) in &self.triplets {
            m[(r, c)] += v;
        }
        m
    }

    /// Coordinate-list text: one `row col value` line per nonzero.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.grid.len();
        writeln!(w, "# {n} {n} {}", self.triplets.len())?;
        for &(r, c, v) in &self.triplets {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        Ok(())
    }
}

struct Assembler {
    grid: GridSpec,
    rows: Vec<BTreeMap<usize, f64>>,
}

impl Assembler {
    fn new(grid: GridSpec) -> Self {
        Self { grid, rows: vec![BTreeMap::new(); grid.len()] }
    }

    fn add(&mut self, i: usize, j: usize, di: isize, dj: isize, v: f64) {
        if v == 0.0 {
            return;
        }
        let g = self.grid;
        let col = g.idx(g.wrap(i, di), (j as isize + dj) as usize);
        *self.rows[g.idx(i, j)].entry(col).or_insert(0.0) += v;
    }

    /// First-order term `p ∂` along x (`axis_x`) or y, centered or upwind.
    fn first_order(&mut self, i: usize, j: usize, p: f64, h: f64, axis_x: bool, upwind: bool) {
        let step = |d: isize| if axis_x { (d, 0) } else { (0, d) };
        if upwind {
            let (fwd, back) = if p > 0.0 { (1, 0) } else { (0, -1) };
            let (a, b) = step(fwd);
            self.add(i, j, a, b, p / h);
            let (a, b) = step(back);
            self.add(i, j, a, b, -p / h);
        } else {
            let (a, b) = step(1);
            self.add(i, j, a, b, p / (2.0 * h));
            let (a, b) = step(-1);
            self.add(i, j, a, b, -p / (2.0 * h));
        }
    }

    /// Bottom row `α D_x u + σ D_y u = 0`.
    fn bottom(&mut self, alpha: f64, sigma: f64, order: BoundaryOrder) {
        let g = self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        for i in 0..g.nx() {
            self.add(i, 0, 1, 0, alpha / (2.0 * hx));
            self.add(i, 0, -1, 0, -alpha / (2.0 * hx));
            let w: &[f64] = match order {
                BoundaryOrder::Second => &[-3.0 / (2.0 * hy), 4.0 / (2.0 * hy), -1.0 / (2.0 * hy)],
                BoundaryOrder::Third => &[
                    -11.0 / (6.0 * hy),
                    18.0 / (6.0 * hy),
                    -9.0 / (6.0 * hy),
                    2.0 / (6.0 * hy),
                ],
            };
            for (dj, &wk) in w.iter().enumerate() {
                self.add(i, 0, 0, dj as isize, sigma * wk);
            }
        }
    }

    fn top(&mut self) {
        let g = self.grid;
        for i in 0..g.nx() {
            self.add(i, g.ny(), 0, 0, 1.0);
        }
    }

    fn finish(self, boundary: BoundarySpec) -> DiscreteOperator {
        let triplets = self
            .rows
            .into_iter()
            .enumerate()
            .flat_map(|(r, row)| row.into_iter().map(move |(c, v)| (r, c, v)))
            .collect();
        DiscreteOperator { grid: self.grid, boundary, triplets }
    }
}

/// Interior rows of `εK ∂_xx + ∂_yy + p ∂_x + q ∂_y + r`.
fn interior(
    asm: &mut Assembler,
    cs: &CoefficientSet,
    p: &Field,
    q: &Field,
    r: Option<&Field>,
    upwind: bool,
) {
    let g = asm.grid;
    let (hx, hy) = (g.hx(), g.hy());
    for j in 1..g.ny() {
        for i in 0..g.nx() {
            let cxx = cs.eps * cs.k.at(i, j) / (hx * hx);
            let cyy = 1.0 / (hy * hy);
            asm.add(i, j, 1, 0, cxx);
            asm.add(i, j, -1, 0, cxx);
            asm.add(i, j, 0, 1, cyy);
            asm.add(i, j, 0, -1, cyy);
            let centre = -2.0 * cxx - 2.0 * cyy + r.map_or(0.0, |r| r.at(i, j));
            asm.add(i, j, 0, 0, centre);
            asm.first_order(i, j, p.at(i, j), hx, true, upwind);
            asm.first_order(i, j, q.at(i, j), hy, false, upwind);
        }
    }
}

pub fn assemble_l(cs: &CoefficientSet) -> DiscreteOperator {
    assemble_l_with(cs, AssembleOptions::default())
}

pub fn assemble_l_with(cs: &CoefficientSet, opts: AssembleOptions) -> DiscreteOperator {
    let mut asm = Assembler::new(*cs.grid());
    let p = cs.a.scale(cs.eps);
    let q = cs.b.scale(cs.eps);
    interior(&mut asm, cs, &p, &q, None, opts.upwind);
    asm.bottom(cs.alpha, 1.0, opts.boundary_order);
    asm.top();
    asm.finish(BoundarySpec::Oblique(cs.alpha))
}

/// First-order and zeroth-order coefficients of `L*`.
fn adjoint_lower_order(cs: &CoefficientSet) -> (Field, Field, Field) {
    let kx = dx1(&cs.k);
    let p = (&kx.scale(2.0) - &cs.a).scale(cs.eps);
    let q = cs.b.scale(-cs.eps);
    let r = (&(&dx2(&cs.k) - &dx1(&cs.a)) - &dy1(&cs.b)).scale(cs.eps);
    (p, q, r)
}

pub fn assemble_lstar(cs: &CoefficientSet) -> DiscreteOperator {
    assemble_lstar_with(cs, AssembleOptions::default())
}

pub fn assemble_lstar_with(cs: &CoefficientSet, opts: AssembleOptions) -> DiscreteOperator {
    let mut asm = Assembler::new(*cs.grid());
    let (p, q, r) = adjoint_lower_order(cs);
    interior(&mut asm, cs, &p, &q, Some(&r), opts.upwind);
    asm.bottom(cs.alpha, -1.0, opts.boundary_order);
    asm.top();
    asm.finish(BoundarySpec::AdjointOblique(cs.alpha))
}

/// `L_ε u` at every node, boundary rows included, via [`crate::grid::differentiate`]
/// stencils.
pub fn apply_l(cs: &CoefficientSet, u: &Field) -> Result<Field> {
    cs.grid().ensure_same(u.grid())?;
    let e = cs.eps;
    let kxx = &cs.k * &dx2(u);
    let first = &(&cs.a * &dx1(u)) + &(&cs.b * &dy1(u));
    Ok(&(&kxx + &first).scale(e) + &dy2(u))
}

/// `L*_ε v` at every node.
pub fn apply_lstar(cs: &CoefficientSet, v: &Field) -> Result<Field> {
    cs.grid().ensure_same(v.grid())?;
    let (p, q, r) = adjoint_lower_order(cs);
    let second = &(&cs.k * &dx2(v)).scale(cs.eps) + &dy2(v);
    let lower = &(&(&p * &dx1(v)) + &(&q * &dy1(v))) + &(&r * v);
    Ok(&second + &lower)
}

/// `(L*v, u) - (v, Lu) - ε∫_{y=-1} B u v`.
///
/// For `𝓑u = 0` and `𝓑*v = 0` the continuous value is zero; the last term is
/// the part of the boundary remainder that the adjoint condition leaves when
/// `B ≠ 0`.
pub fn adjoint_defect(cs: &CoefficientSet, u: &Field, v: &Field) -> Result<f64> {
    let lhs = inner_product(&apply_lstar(cs, v)?, u)?;
    let rhs = inner_product(v, &apply_l(cs, u)?)?;
    let g = cs.grid();
    let bottom: f64 = (0..g.nx()).map(|i| cs.b.at(i, 0) * u.at(i, 0) * v.at(i, 0)).sum();
    Ok(lhs - rhs - cs.eps * g.hx() * bottom)
}

// ---------------------------------------------------------------------------
// Transport march

/// Values at the half rows `y_{j+1/2}`, `j = 0..ny`, one `Vec` per row.
type HalfRows = Vec<Vec<f64>>;

fn half_rows(f: &Field) -> HalfRows {
    let g = f.grid();
    (0..g.ny())
        .map(|j| f.row(j).iter().zip(f.row(j + 1)).map(|(a, b)| 0.5 * (a + b)).collect())
        .collect()
}

fn check_direction(b: &Field) -> Result<()> {
    let (min, max) = (b.min(), b.max());
    if min > 0.0 || max < 0.0 {
        Ok(())
    } else {
        Err(Error::BadTransportDirection { min, max })
    }
}

/// Solves `a w_x + b w_y + c w = rhs`, `w(x,1) = 0`, marching down from the
/// top row.
///
/// Box scheme: every equation is imposed at the half row `y_{j+1/2}` with
/// averaged `w` and a centered periodic `∂_x`; each step is a cyclic
/// tridiagonal solve for the lower row.
pub fn transport_solve(a: &Field, b: &Field, c: &Field, rhs: &Field) -> Result<Field> {
    transport_solve_with_top(a, b, c, rhs, None)
}

/// [`transport_solve`] with optional nonzero data on `y = 1`.
pub fn transport_solve_with_top(
    a: &Field,
    b: &Field,
    c: &Field,
    rhs: &Field,
    top: Option<&[f64]>,
) -> Result<Field> {
    let g = *a.grid();
    for f in [b, c, rhs] {
        g.ensure_same(f.grid())?;
    }
    check_direction(b)?;
    let coef = HalfCoefficients::new(a, b, c);
    if let Some(t) = top {
        if t.len() != g.nx() {
            return Err(Error::ShapeMismatch { expected: g.nx(), found: t.len() });
        }
    }
    Ok(march(&coef, &half_rows(rhs), top))
}

struct HalfCoefficients {
    grid: GridSpec,
    a: HalfRows,
    b: HalfRows,
    c: HalfRows,
}

impl HalfCoefficients {
    fn new(a: &Field, b: &Field, c: &Field) -> Self {
        Self { grid: *a.grid(), a: half_rows(a), b: half_rows(b), c: half_rows(c) }
    }
}

fn march(coef: &HalfCoefficients, rhs: &HalfRows, top: Option<&[f64]>) -> Field {
    let g = coef.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let mut w = Field::zeros(g);
    if let Some(t) = top {
        w.row_mut(ny).copy_from_slice(t);
    }
    let mut lower = vec![0.0; nx];
    let mut diag = vec![0.0; nx];
    let mut upper = vec![0.0; nx];
    let mut r = vec![0.0; nx];
    for j in (0..ny).rev() {
        let (a, b, c) = (&coef.a[j], &coef.b[j], &coef.c[j]);
        let above = w.row(j + 1).to_vec();
        for i in 0..nx {
            let s = a[i] / (4.0 * hx);
            lower[i] = -s;
            upper[i] = s;
            diag[i] = -b[i] / hy + 0.5 * c[i];
            let d_above = s * (above[(i + 1) % nx] - above[(i + nx - 1) % nx]);
            r[i] = rhs[j][i] - d_above - (b[i] / hy + 0.5 * c[i]) * above[i];
        }
        let sol = solve_cyclic(&lower, &diag, &upper, &r);
        w.row_mut(j).copy_from_slice(&sol);
    }
    w
}

/// Solves the periodic tridiagonal system
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = r[i]`.
///
/// Sherman–Morrison around the Thomas algorithm, falling back to a dense LU
/// when the residual shows the pivots were unsafe.
pub(crate) fn solve_cyclic(lower: &[f64], diag: &[f64], upper: &[f64], r: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let fast = cyclic_thomas(lower, diag, upper, r);
    let resid = |x: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let v = lower[i] * x[(i + n - 1) % n] + diag[i] * x[i] + upper[i] * x[(i + 1) % n]
                    - r[i];
                v * v
            })
            .sum::<f64>()
            .sqrt()
    };
    let scale = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    if let Some(x) = fast {
        if x.iter().all(|v| v.is_finite()) && resid(&x) <= 1e-12 * scale {
            return x;
        }
    }
    let mut m = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, (i + n - 1) % n)] += lower[i];
        m[(i, i)] += diag[i];
        m[(i, (i + 1) % n)] += upper[i];
    }
    let rhs = Mat::from_fn(n, 1, |i, _| r[i]);
    let x = m.partial_piv_lu().solve(&rhs);
    (0..n).map(|i| x[(i, 0)]).collect()
}

fn cyclic_thomas(lower: &[f64], diag: &[f64], upper: &[f64], r: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let alpha = upper[n - 1];
    let beta = lower[0];
    let gamma = if diag[0] != 0.0 { -diag[0] } else { 1.0 };
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;
    let x = thomas(lower, &bb, upper, r)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(lower, &bb, upper, &u)?;
    let denom = 1.0 + z[0] + beta * z[n - 1] / gamma;
    if denom.abs() < 1e-300 {
        return None;
    }
    let fact = (x[0] + beta * x[n - 1] / gamma) / denom;
    Some(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], r: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 {
        return None;
    }
    cp[0] = upper[0] / piv;
    dp[0] = r[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * cp[i - 1];
        if piv == 0.0 {
            return None;
        }
        cp[i] = upper[i] / piv;
        dp[i] = (r[i] - lower[i] * dp[i - 1]) / piv;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// Auxiliary operator

/// Periodic centered difference of one row.
fn d_row(row: &[f64], hx: f64) -> Vec<f64> {
    let n = row.len();
    let inv = 1.0 / (2.0 * hx);
    (0..n).map(|i| (row[(i + 1) % n] - row[(i + n - 1) % n]) * inv).collect()
}

fn d_pow(row: &[f64], hx: f64, k: usize) -> Vec<f64> {
    let mut out = row.to_vec();
    for _ in 0..k {
        out = d_row(&out, hx);
    }
    out
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn axpy(acc: &mut [f64], t: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += t * v;
    }
}

/// Circulant inverse of `Σ_s (-1)^s λ^{-s} D^{2s}` for the centered `D`.
///
/// Its symbol is `Σ_s λ^{-s} (sin(πk h)/h)^{2s} >= 1`.
fn recovery_kernel(nx: usize, hx: f64, lambda: f64, m: usize) -> Vec<f64> {
    let sym: Vec<f64> = (0..nx)
        .map(|k| {
            let s = (std::f64::consts::PI * k as f64 * hx).sin() / hx;
            (0..=m).map(|p| (s * s / lambda).powi(p as i32)).sum()
        })
        .collect();
    (0..nx)
        .map(|n| {
            let t = 2.0 * std::f64::consts::PI * n as f64 / nx as f64;
            sym.iter()
                .enumerate()
                .map(|(k, s)| (t * k as f64).cos() / s)
                .sum::<f64>()
                / nx as f64
        })
        .collect()
}

fn convolve(kernel: &[f64], w: &[f64]) -> Vec<f64> {
    let n = w.len();
    (0..n)
        .map(|i| (0..n).map(|k| kernel[k] * w[(i + n - k) % n]).sum())
        .collect()
}

/// Lagged commutator `Σ_{s>=1} (-1)^s λ^{-s} [D^s(a D^{s+1} ū) - a D^{2s+1} ū]`,
/// the discrete form of the Leibniz terms in `∂_x^l a`.
fn commutator(a: &[f64], ubar: &[f64], hx: f64, lambda: f64, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; ubar.len()];
    for s in 1..=m {
        let t = (-1.0f64).powi(s as i32) * lambda.powi(-(s as i32));
        let inner = mul(a, &d_pow(ubar, hx, s + 1));
        axpy(&mut out, t, &d_pow(&inner, hx, s));
        axpy(&mut out, -t, &mul(a, &d_pow(ubar, hx, 2 * s + 1)));
    }
    out
}

#[derive(Debug, Clone)]
pub struct AuxReport {
    pub u: Field,
    pub iterations: usize,
    /// Successive increment ratios `‖u_{i+1} - u_i‖ / ‖u_i - u_{i-1}‖`.
    pub ratios: Vec<f64>,
    /// Largest ratio above the round-off floor, 0 when the first step is exact.
    pub contraction_ratio: f64,
}

pub const AUX_TOL: f64 = 1e-10;
pub const AUX_MAX_ITER: usize = 200;
const NON_CONTRACTION_RUN: usize = 5;

pub fn aux_solve(v: &Field, mt: &MultiplierTriple) -> Result<Field> {
    aux_solve_report(v, mt).map(|r| r.u)
}

/// Fixed-point solve of `Mu = v`, `u(x,1) = 0`: transport for
/// `w = Σ (-1)^s λ^{-s} ∂_x^{2s} u`, then Fourier recovery of `u`.
pub fn aux_solve_report(v: &Field, mt: &MultiplierTriple) -> Result<AuxReport> {
    let g = *mt.grid();
    g.ensure_same(v.grid())?;
    check_direction(&mt.b)?;
    if !mt.b.is_x_independent(1e-12) {
        return Err(Error::XDependentCoefficient("b"));
    }
    if !mt.c.is_x_independent(1e-12) {
        return Err(Error::XDependentCoefficient("c"));
    }
    let (nx, ny, hx) = (g.nx(), g.ny(), g.hx());
    let coef = HalfCoefficients::new(&mt.a, &mt.b, &mt.c);
    let vbar = half_rows(v);
    let kernel = recovery_kernel(nx, hx, mt.lambda, mt.m);
    let recover = |w: &Field| -> Field {
        let mut u = Field::zeros(g);
        for j in 0..g.rows() {
            let row = if mt.m == 0 { w.row(j).to_vec() } else { convolve(&kernel, w.row(j)) };
            u.row_mut(j).copy_from_slice(&row);
        }
        u
    };

    let mut u = Field::zeros(g);
    let mut first = 0.0;
    let mut prev_step = 0.0;
    let mut ratios = Vec::new();
    let mut run = 0;
    for it in 1..=AUX_MAX_ITER {
        let rhs: HalfRows = if it == 1 || mt.m == 0 {
            vbar.clone()
        } else {
            let ubar = half_rows(&u);
            (0..ny)
                .map(|j| {
                    let comm = commutator(&coef.a[j], &ubar[j], hx, mt.lambda, mt.m);
                    vbar[j].iter().zip(&comm).map(|(v, c)| v - c).collect()
                })
                .collect()
        };
        let next = recover(&march(&coef, &rhs, None));
        let step = (&next - &u).l2_norm();
        u = next;
        if it == 1 {
            first = step;
            if first == 0.0 || mt.m == 0 {
                return Ok(AuxReport { u, iterations: 1, ratios, contraction_ratio: 0.0 });
            }
        } else {
            let ratio = step / prev_step;
            ratios.push(ratio);
            run = if ratio >= 1.0 { run + 1 } else { 0 };
            if run >= NON_CONTRACTION_RUN {
                return Err(Error::NonContraction { ratio, iterations: it });
            }
        }
        if step <= AUX_TOL * first {
            let floor = 1e-12 * first;
            let mut contraction = 0.0f64;
            let mut last = first;
            for &r in &ratios {
                let s = last * r;
                if s > floor {
                    contraction = contraction.max(r);
                }
                last = s;
            }
            return Ok(AuxReport { u, iterations: it, ratios, contraction_ratio: contraction });
        }
        prev_step = step;
    }
    let ratio = ratios.last().copied().unwrap_or(f64::NAN);
    Err(Error::NonContraction { ratio, iterations: AUX_MAX_ITER })
}

/// Box-scheme discretization of `M` evaluated on the half rows, flattened
/// row by row.
pub fn apply_m_half(u: &Field, mt: &MultiplierTriple) -> Result<Vec<f64>> {
    let g = *mt.grid();
    g.ensure_same(u.grid())?;
    let hx = g.hx();
    let hy = g.hy();
    let coef = HalfCoefficients::new(&mt.a, &mt.b, &mt.c);
    let ubar = half_rows(u);
    let mut out = Vec::with_capacity(g.ny() * g.nx());
    for (j, ub) in ubar.iter().enumerate() {
        let du: Vec<f64> = u.row(j + 1).iter().zip(u.row(j)).map(|(t, b)| (t - b) / hy).collect();
        let mut acc = vec![0.0; g.nx()];
        for s in 0..=mt.m {
            let t = (-1.0f64).powi(s as i32) * mt.lambda.powi(-(s as i32));
            let ta = mul(&coef.a[j], &d_pow(ub, hx, s + 1));
            let tb = mul(&coef.b[j], &d_pow(&du, hx, s));
            let tc = mul(&coef.c[j], &d_pow(ub, hx, s));
            for term in [ta, tb, tc] {
                axpy(&mut acc, t, &d_pow(&term, hx, s));
            }
        }
        out.extend(acc);
    }
    Ok(out)
}

/// `‖M_h u - v̄‖ / ‖v̄‖` on the half rows.
pub fn m_residual(u: &Field, v: &Field, mt: &MultiplierTriple) -> Result<f64> {
    let mu = apply_m_half(u, mt)?;
    let vbar: Vec<f64> = half_rows(v).into_iter().flatten().collect();
    let num: f64 = mu.iter().zip(&vbar).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = vbar.iter().map(|b| b * b).sum();
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::Preset;
    use crate::grid::make_grid;
    use crate::multiplier::build_abc;
    use std::f64::consts::PI;

    fn tricomi(n: usize, eps: f64) -> CoefficientSet {
        Preset::Tricomi.build(make_grid(n, n).unwrap(), eps, 0.02).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let cs = tricomi(8, 0.01);
        let l = assemble_l(&cs);
        let u = Field::zeros(*cs.grid());
        assert_eq!(l.apply(&u).unwrap().max_abs(), 0.0);
        assert!(l.max_row_nnz() <= 9);
    }

    #[test]
    fn tricomi_operator_matches_symbolic() {
        let mut errs = Vec::new();
        for n in [64, 128] {
            let g = make_grid(n, n).unwrap();
            let cs = Preset::Tricomi.build(g, 0.5, 0.02).unwrap();
            let bump = |y: f64| (1.0 - y * y).powi(4);
            let u = Field::from_fn(g, |x, y| (PI * x).sin() * bump(y));
            let lu = assemble_l(&cs).apply(&u).unwrap();
            let exact = |x: f64, y: f64| {
                let s = (PI * x).sin();
                let b2 = -8.0 * (1.0 - y * y).powi(3) + 48.0 * y * y * (1.0 - y * y).powi(2);
                0.5 * y * (-PI * PI * s) * bump(y) + s * b2
            };
            let mut e: f64 = 0.0;
            for j in 1..g.ny() {
                for i in 0..g.nx() {
                    e = e.max((lu.at(i, j) - exact(g.x(i), g.y(j))).abs());
                }
            }
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn boundary_rows_on_compatible_field() {
        let g = make_grid(64, 64).unwrap();
        let cs = Preset::Tricomi.build(g, 0.01, 0.7).unwrap();
        let u = Field::from_fn(g, |x, y| (1.0 - y) * (1.0 + y).powi(2) * (PI * x).sin());
        let lu = assemble_l(&cs).apply(&u).unwrap();
        let bottom = lu.row(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let top = lu.row(g.ny()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(bottom < 10.0 * g.hy() * g.hy(), "{bottom}");
        assert_eq!(top, 0.0);
    }

    #[test]
    fn adjoint_equals_primal_for_tricomi() {
        let cs = tricomi(8, 0.01);
        let l = assemble_l(&cs);
        let ls = assemble_lstar(&cs);
        let g = cs.grid();
        for (x, y) in l.triplets().iter().zip(ls.triplets()) {
            if x.0 >= g.nx() {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn adjoint_coefficients_with_a_equal_kx() {
        let g = make_grid(16, 16).unwrap();
        let cs = Preset::Wedge.build(g, 0.01, 0.02).unwrap();
        let (p, _, r) = adjoint_lower_order(&cs);
        let kx = dx1(&cs.k);
        for n in 0..g.len() {
            assert!((p.values()[n] - 0.01 * kx.values()[n]).abs() < 1e-14);
        }
        // K_xx - (K_x)_x differs only by the two stencils.
        assert!(r.max_abs() < 1.0);
    }

    #[test]
    fn transport_constant_rhs() {
        let g = make_grid(8, 16).unwrap();
        let zero = Field::zeros(g);
        let one = Field::constant(g, 1.0);
        let w = transport_solve(&zero, &one, &zero, &one).unwrap();
        for j in 0..g.rows() {
            assert!((w.at(2, j) - (g.y(j) - 1.0)).abs() < 1e-14);
        }
        let w = transport_solve(&zero, &one, &one, &one).unwrap();
        let err = (0..g.rows())
            .map(|j| (w.at(0, j) - (1.0 - (1.0 - g.y(j)).exp())).abs())
            .fold(0.0, f64::max);
        assert!(err < 2.0 * g.hy() * g.hy(), "{err}");
    }

    #[test]
    fn transport_characteristics() {
        let mut errs = Vec::new();
        for n in [32, 64] {
            let g = make_grid(n, n).unwrap();
            let one = Field::constant(g, 1.0);
            let zero = Field::zeros(g);
            let top: Vec<f64> = (0..n).map(|i| (PI * g.x(i)).sin()).collect();
            let w = transport_solve_with_top(&one, &one, &zero, &zero, Some(&top)).unwrap();
            let exact = Field::from_fn(g, |x, y| (PI * (x - (y - 1.0))).sin());
            errs.push((&w - &exact).max_abs());
        }
        assert!(errs[1] < 0.05 && errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn transport_rejects_sign_change() {
        let g = make_grid(8, 8).unwrap();
        let b = Field::from_fn(g, |_, y| y);
        let z = Field::zeros(g);
        assert!(matches!(
            transport_solve(&z, &b, &z, &z),
            Err(Error::BadTransportDirection { .. })
        ));
    }

    #[test]
    fn cyclic_solver_matches_dense() {
        let n = 7;
        let lower: Vec<f64> = (0..n).map(|i| 0.3 + 0.1 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.2 + 0.05 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 - 0.3).collect();
        let r: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = solve_cyclic(&lower, &diag, &upper, &r);
        for i in 0..n {
            let v = lower[i] * x[(i + n - 1) % n] + diag[i] * x[i] + upper[i] * x[(i + 1) % n];
            assert!((v - r[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn recovery_inverts_w_map() {
        let nx = 16;
        let hx = 2.0 / nx as f64;
        let u: Vec<f64> = (0..nx).map(|i| ((i * i) as f64 * 0.37).sin()).collect();
        let lambda = 3.0;
        let mut w = u.clone();
        axpy(&mut w, -1.0 / lambda, &d_pow(&u, hx, 2));
        axpy(&mut w, 1.0 / (lambda * lambda), &d_pow(&u, hx, 4));
        let back = convolve(&recovery_kernel(nx, hx, lambda, 2), &w);
        for (a, b) in u.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn aux_m0_is_single_transport() {
        let cs = tricomi(16, 1e-4);
        let mt = build_abc(&cs, 10.0, 0).unwrap();
        let g = *cs.grid();
        let v = Field::from_fn(g, |x, y| (1.0 - y) * (PI * x).cos());
        let r = aux_solve_report(&v, &mt).unwrap();
        assert_eq!(r.iterations, 1);
        let w = transport_solve(&mt.a, &mt.b, &mt.c, &v).unwrap();
        assert_eq!((&w - &r.u).max_abs(), 0.0);
        assert!(m_residual(&r.u, &v, &mt).unwrap() < 1e-12);
    }

    #[test]
    fn aux_rejects_x_dependent_b() {
        let cs = tricomi(8, 1e-4);
        let mut mt = build_abc(&cs, 10.0, 1).unwrap();
        mt.b = Field::from_fn(*cs.grid(), |x, _| 2.0 + x.sin());
        let v = Field::zeros(*cs.grid());
        assert!(matches!(aux_solve(&v, &mt), Err(Error::XDependentCoefficient("b"))));
    }
}
