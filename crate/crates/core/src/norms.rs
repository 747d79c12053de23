//! Discrete anisotropic Sobolev norms `H^(m,l)` and their duals `H^(-m,-l)`.
//!
//! Derivatives inside the norms are compact forward differences: periodic in
//! x, and on the `ny` cells in y. The `t`-th y-difference lives on `ny + 1 - t`
//! points and is weighted by `hy`; the undifferentiated term uses the trapezoid
//! weights of [`inner_product`](crate::grid::inner_product). With this choice
//! the discrete Gram matrix factors as `Gy ⊗ Gx`, which is what makes the
//! negative norm a pair of small dense solves.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::grid::{inner_product_unchecked, Field, GridSpec};

/// Highest |order| accepted by [`negative_norm`].
pub const MAX_NEGATIVE_ORDER: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NormOrder {
    pub m: i32,
    pub l: i32,
}

impl NormOrder {
    pub fn new(m: i32, l: i32) -> Result<Self> {
        if (m >= 0 && l >= 0) || (m <= 0 && l <= 0) {
            Ok(Self { m, l })
        } else {
            Err(Error::InvalidOrder {
                m,
                l,
                reason: "mixed signs",
            })
        }
    }

    pub fn is_positive(&self) -> bool {
        self.m >= 0 && self.l >= 0
    }

    /// The dual order `(-m, -l)`.
    pub fn dual(&self) -> Self {
        Self {
            m: -self.m,
            l: -self.l,
        }
    }

    fn abs(&self) -> (usize, usize) {
        (self.m.unsigned_abs() as usize, self.l.unsigned_abs() as usize)
    }
}

/// Row-major block of `rows × nx` values.
struct Block {
    rows: usize,
    nx: usize,
    data: Vec<f64>,
}

impl Block {
    fn from_field(u: &Field) -> Self {
        Self {
            rows: u.grid().rows(),
            nx: u.grid().nx(),
            data: u.values().to_vec(),
        }
    }

    fn forward_x(&self, hx: f64) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for j in 0..self.rows {
            let row = &self.data[j * self.nx..(j + 1) * self.nx];
            for i in 0..self.nx {
                data[j * self.nx + i] = (row[(i + 1) % self.nx] - row[i]) / hx;
            }
        }
        Self { data, ..*self }
    }

    fn forward_y(&self, hy: f64) -> Self {
        let rows = self.rows - 1;
        let mut data = vec![0.0; rows * self.nx];
        for j in 0..rows {
            for i in 0..self.nx {
                data[j * self.nx + i] =
                    (self.data[(j + 1) * self.nx + i] - self.data[j * self.nx + i]) / hy;
            }
        }
        Self {
            rows,
            nx: self.nx,
            data,
        }
    }

    fn sum_sq_rows(&self, weight: impl Fn(usize) -> f64) -> f64 {
        (0..self.rows)
            .map(|j| {
                weight(j)
                    * self.data[j * self.nx..(j + 1) * self.nx]
                        .iter()
                        .map(|v| v * v)
                        .sum::<f64>()
            })
            .sum()
    }
}

/// Sum of `∫ (∂x^s ∂y^t u)²` over the pairs `s <= m`, `t <= l` accepted by `keep`.
fn derivative_energies(u: &Field, m: usize, l: usize, keep: impl Fn(usize, usize) -> bool) -> f64 {
    let g = *u.grid();
    let (hx, hy) = (g.hx(), g.hy());
    let mut total = 0.0;
    let mut by = Block::from_field(u);
    for t in 0..=l {
        if t > 0 {
            by = by.forward_y(hy);
        }
        let mut bxy = Block {
            rows: by.rows,
            nx: by.nx,
            data: by.data.clone(),
        };
        for s in 0..=m {
            if s > 0 {
                bxy = bxy.forward_x(hx);
            }
            if !keep(s, t) {
                continue;
            }
            let e = if t == 0 {
                bxy.sum_sq_rows(|j| g.row_weight(j))
            } else {
                bxy.sum_sq_rows(|_| hy)
            };
            total += hx * e;
        }
    }
    total
}

/// `‖u‖_(m,l)` for `m, l >= 0`.
pub fn sobolev_norm(u: &Field, ord: NormOrder) -> Result<f64> {
    if !ord.is_positive() {
        return Err(Error::InvalidOrder {
            m: ord.m,
            l: ord.l,
            reason: "sobolev_norm needs nonnegative orders; use negative_norm",
        });
    }
    let (m, l) = ord.abs();
    Ok(derivative_energies(u, m, l, |_, _| true).sqrt())
}

/// Isotropic `‖u‖_{H^k}`: all mixed differences with `s + t <= k`.
pub fn sobolev_norm_total(u: &Field, k: usize) -> f64 {
    derivative_energies(u, k, k, |s, t| s + t <= k).sqrt()
}

/// Factored one-dimensional Gram matrices of the discrete `H^(m,l)` product.
pub struct GramFactor {
    grid: GridSpec,
    order: (usize, usize),
    gx: faer::linalg::solvers::Llt<f64>,
    gy: faer::linalg::solvers::Llt<f64>,
}

fn power_gram(n: usize, order: usize, periodic: bool, h: f64, base: &[f64]) -> Mat<f64> {
    // Gram = diag(base) + Σ_{t=1..order} h (Δ^t)ᵀ Δ^t.
    let mut g = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        g[(k, k)] = base[k];
    }
    // Δ^t as dense rows (rows_t × n).
    let mut delta: Mat<f64> = Mat::identity(n, n);
    for _ in 0..order {
        let rows = delta.nrows();
        let next_rows = if periodic { rows } else { rows - 1 };
        let next = Mat::from_fn(next_rows, n, |r, c| {
            let up = if periodic { (r + 1) % rows } else { r + 1 };
            (delta[(up, c)] - delta[(r, c)]) / h
        });
        delta = next;
        let dtd = delta.transpose() * &delta;
        g += dtd * faer::Scale(h);
    }
    g
}

impl GramFactor {
    pub fn new(grid: GridSpec, m: usize, l: usize) -> Result<Self> {
        let (nx, rows) = (grid.nx(), grid.rows());
        let gx = power_gram(nx, m, true, grid.hx(), &vec![grid.hx(); nx]);
        let wy: Vec<f64> = (0..rows).map(|j| grid.row_weight(j)).collect();
        let gy = power_gram(rows, l, false, grid.hy(), &wy);
        let gx = gx
            .llt(Side::Lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let gy = gy
            .llt(Side::Lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self {
            grid,
            order: (m, l),
            gx,
            gy,
        })
    }

    /// Cached factor for `(grid, m, l)`.
    pub fn shared(grid: GridSpec, m: usize, l: usize) -> Result<Arc<Self>> {
        type Cache = Mutex<HashMap<(GridSpec, usize, usize), Arc<GramFactor>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(f) = cache.lock().unwrap().get(&(grid, m, l)) {
            return Ok(f.clone());
        }
        let fresh = Arc::new(Self::new(grid, m, l)?);
        let mut map = cache.lock().unwrap();
        Ok(map.entry((grid, m, l)).or_insert(fresh).clone())
    }

    pub fn order(&self) -> (usize, usize) {
        self.order
    }

    /// Solves `(Gy ⊗ Gx) x = r` for a row-major block `r`.
    pub fn solve(&self, r: &Field) -> Field {
        let g = self.grid;
        let (nx, rows) = (g.nx(), g.rows());
        let rm = Mat::from_fn(rows, nx, |j, i| r.at(i, j));
        // X = Gy⁻¹ R Gx⁻¹ (both symmetric).
        let left = self.gy.solve(&rm);
        let x = self.gx.solve(left.transpose().to_owned());
        let mut out = Field::zeros(g);
        for j in 0..rows {
            for i in 0..nx {
                out.set(i, j, x[(i, j)]);
            }
        }
        out
    }
}

/// Quadrature-weighted field `M v`.
pub fn mass_apply(v: &Field) -> Field {
    let g = *v.grid();
    let mut out = v.clone();
    for j in 0..g.rows() {
        let w = g.weight(j);
        for x in out.row_mut(j) {
            *x *= w;
        }
    }
    out
}

/// `‖v‖_(-m,-l) = sup_u |(u,v)| / ‖u‖_(m,l)` over the full discrete space,
/// evaluated as `sqrt(xᵀ M v)` with `G x = M v`.
pub fn negative_norm(v: &Field, ord: NormOrder) -> Result<f64> {
    if ord.m > 0 || ord.l > 0 {
        return Err(Error::InvalidOrder {
            m: ord.m,
            l: ord.l,
            reason: "negative_norm needs nonpositive orders",
        });
    }
    let (m, l) = ord.abs();
    if m > MAX_NEGATIVE_ORDER as usize || l > MAX_NEGATIVE_ORDER as usize {
        return Err(Error::InvalidOrder {
            m: ord.m,
            l: ord.l,
            reason: "negative orders are capped at 2",
        });
    }
    let mv = mass_apply(v);
    if m == 0 && l == 0 {
        return Ok(inner_product_unchecked(v, v).max(0.0).sqrt());
    }
    let factor = GramFactor::shared(*v.grid(), m, l)?;
    let x = factor.solve(&mv);
    let q: f64 = x.values().iter().zip(mv.values()).map(|(a, b)| a * b).sum();
    Ok(q.max(0.0).sqrt())
}

/// `‖u‖_(m,l) ‖v‖_(-m,-l) - |(u,v)|`, nonnegative up to rounding.
pub fn schwarz_gap(u: &Field, v: &Field, ord: NormOrder) -> Result<f64> {
    u.grid().ensure_same(v.grid())?;
    let pos = sobolev_norm(u, ord)?;
    let neg = negative_norm(v, ord.dual())?;
    Ok(pos * neg - inner_product_unchecked(u, v).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    #[test]
    fn order_sign_rules() {
        assert!(NormOrder::new(1, -1).is_err());
        assert!(NormOrder::new(0, 2).is_ok());
        assert!(NormOrder::new(-2, 0).is_ok());
        let u = Field::zeros(make_grid(8, 8).unwrap());
        assert!(sobolev_norm(&u, NormOrder::new(-1, 0).unwrap()).is_err());
        assert!(negative_norm(&u, NormOrder::new(-3, 0).unwrap()).is_err());
        assert!(negative_norm(&u, NormOrder::new(1, 0).unwrap()).is_err());
    }

    #[test]
    fn zero_order_is_l2() {
        let g = make_grid(12, 10).unwrap();
        let u = Field::from_fn(g, |x, y| (PI * x).sin() + y * y);
        let l2 = inner_product_unchecked(&u, &u).sqrt();
        assert_eq!(sobolev_norm(&u, NormOrder::new(0, 0).unwrap()).unwrap(), l2);
        let n = negative_norm(&u, NormOrder::new(0, 0).unwrap()).unwrap();
        assert!((n - l2).abs() < 1e-14 * l2);
    }

    #[test]
    fn sine_h1_norm() {
        let g = make_grid(128, 16).unwrap();
        let u = Field::from_fn(g, |x, _| (PI * x).sin());
        let n = sobolev_norm(&u, NormOrder::new(1, 0).unwrap()).unwrap();
        let exact = (2.0 + 2.0 * PI * PI).sqrt();
        assert!((n - exact).abs() < 2e-3, "{n} vs {exact}");
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let u = Field::zeros(make_grid(8, 8).unwrap());
        for (m, l) in [(0, 0), (1, 0), (2, 1)] {
            assert_eq!(sobolev_norm(&u, NormOrder::new(m, l).unwrap()).unwrap(), 0.0);
            assert_eq!(negative_norm(&u, NormOrder::new(-m, -l).unwrap()).unwrap(), 0.0);
        }
    }

    #[test]
    fn gram_quadratic_form_matches_difference_norm() {
        // Independent routes: Gram solve against a Gram *apply* via the
        // difference sums, using uᵀ G G⁻¹ M v = uᵀ M v.
        let g = make_grid(8, 6).unwrap();
        let u = Field::from_fn(g, |x, y| (PI * x).cos() * (1.0 + y) + 0.3 * y * y);
        let f = GramFactor::new(g, 1, 1).unwrap();
        let mu = mass_apply(&u);
        let x = f.solve(&mu);
        // x = G⁻¹ M u, so (u, x)_G = uᵀ M u.
        let lhs: f64 = inner_product_unchecked(&u, &u);
        let pos = sobolev_norm(&u, NormOrder::new(1, 1).unwrap()).unwrap();
        let neg = negative_norm(&u, NormOrder::new(-1, -1).unwrap()).unwrap();
        assert!(neg * pos >= lhs - 1e-12);
        assert!(x.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_mode_negative_norm() {
        let g = make_grid(64, 64).unwrap();
        for k in 1..=4 {
            let v = Field::from_fn(g, |x, _| (PI * k as f64 * x).sin());
            let l2 = v.l2_norm();
            let n = negative_norm(&v, NormOrder::new(-1, 0).unwrap()).unwrap();
            let expect = 1.0 / (1.0 + (PI * k as f64).powi(2)).sqrt();
            assert!(((n / l2) / expect - 1.0).abs() < 0.02, "k={k}");
        }
    }
}
