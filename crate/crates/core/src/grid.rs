//! Collocated grid on the periodic cylinder `{|x| < 1, |y| < 1}` with `x = ±1`
//! identified.
//!
//! Nodes are `x_i = -1 + i*hx` for `i = 0..nx` (cyclic, the seam column is not
//! duplicated) and `y_j = -1 + j*hy` for `j = 0..=ny`, so both `y = ±1` rows are
//! stored. Values are laid out row-major with one row per fixed `y`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Smallest admissible node count in either direction.
pub const MIN_NODES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Top,
    Bottom,
}

/// Builds a grid with `nx` periodic x-nodes and `ny` y-cells.
pub fn make_grid(nx: usize, ny: usize) -> Result<GridSpec> {
    GridSpec::new(nx, ny)
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < MIN_NODES || ny < MIN_NODES {
            return Err(Error::InvalidGrid { nx, ny });
        }
        Ok(Self { nx, ny })
    }

    /// Square grid helper used throughout the tests and the CLI.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of stored y-rows (`ny + 1`).
    #[inline]
    pub fn rows(&self) -> usize {
        self.ny + 1
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        2.0 / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        2.0 / self.ny as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.hx()
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        -1.0 + j as f64 * self.hy()
    }

    /// Flat index of node `(i, j)`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Cyclic x-index `i + di` modulo `nx`.
    #[inline]
    pub fn wrap(&self, i: usize, di: isize) -> usize {
        (i as isize + di).rem_euclid(self.nx as isize) as usize
    }

    /// Trapezoid weight of row `j` (without the `hx` factor).
    #[inline]
    pub fn row_weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.ny {
            0.5 * self.hy()
        } else {
            self.hy()
        }
    }

    /// Quadrature weight of node `(i, j)`: rectangle rule in x, trapezoid in y.
    #[inline]
    pub fn weight(&self, j: usize) -> f64 {
        self.hx() * self.row_weight(j)
    }

    /// Row index of the given boundary.
    #[inline]
    pub fn boundary_row(&self, side: Side) -> usize {
        match side {
            Side::Top => self.ny,
            Side::Bottom => 0,
        }
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                left: (self.nx, self.ny),
                right: (other.nx, other.ny),
            });
        }
        Ok(())
    }
}

/// Scalar function sampled at the nodes of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.rows() {
            let y = grid.y(j);
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), y));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                i: pos % grid.nx(),
                j: pos / grid.nx(),
            });
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.values[j * nx..(j + 1) * nx]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        let nx = self.grid.nx();
        &mut self.values[j * nx..(j + 1) * nx]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination with a field on the same grid.
    ///
    /// Panics if the grids differ; use [`GridSpec`] checks at API boundaries.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "field grids differ");
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Pointwise map with access to node coordinates.
    pub fn map_xy(&self, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let g = self.grid;
        let mut out = self.clone();
        for j in 0..g.rows() {
            let y = g.y(j);
            for i in 0..g.nx() {
                let k = g.idx(i, j);
                out.values[k] = f(g.x(i), y, self.values[k]);
            }
        }
        out
    }

    pub fn scale(&self, t: f64) -> Self {
        self.map(|v| t * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Flat index of the minimum entry.
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = k;
            }
        }
        (best % self.grid.nx(), best / self.grid.nx())
    }

    /// `true` if every entry in row `j` is independent of x (up to `tol`).
    pub fn is_x_independent(&self, tol: f64) -> bool {
        (0..self.grid.rows()).all(|j| {
            let row = self.row(j);
            row.iter().all(|v| (v - row[0]).abs() <= tol)
        })
    }

    pub fn l2_norm(&self) -> f64 {
        inner_product_unchecked(self, self).max(0.0).sqrt()
    }

    /// Writes the field as CSV: a `# nx=<nx> ny=<ny>` header, then one line per
    /// y-row (bottom to top) with `nx` comma-separated values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# nx={} ny={}", self.grid.nx(), self.grid.ny())?;
        let mut line = String::new();
        for j in 0..self.grid.rows() {
            line.clear();
            for (i, v) in self.row(j).iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                write!(line, "{v}").expect("write to String");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("ascii csv")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty field file".into()))??;
        let (nx, ny) = parse_header(&header)?;
        let grid = GridSpec::new(nx, ny)?;
        let mut values = Vec::with_capacity(grid.len());
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            for tok in line.split(',') {
                let v: f64 = tok.trim().parse().map_err(|_| {
                    Error::Parse(format!("line {}: bad number {:?}", lineno + 2, tok))
                })?;
                values.push(v);
            }
        }
        Self::from_values(grid, values)
    }
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let body = header
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse(format!("missing '# nx=.. ny=..' header: {header:?}")))?;
    let mut nx = None;
    let mut ny = None;
    for tok in body.split_whitespace() {
        if let Some(v) = tok.strip_prefix("nx=") {
            nx = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("ny=") {
            ny = v.parse().ok();
        }
    }
    match (nx, ny) {
        (Some(nx), Some(ny)) => Ok((nx, ny)),
        _ => Err(Error::Parse(format!("malformed header: {header:?}"))),
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &Field {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Div for &Field {
    type Output = Field;
    fn div(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a / b)
    }
}

impl Mul<&Field> for f64 {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        rhs.scale(self)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scale(-1.0)
    }
}

/// Finite-difference derivative of `u` along `axis`.
///
/// x-derivatives use centered periodic stencils. y-derivatives are centered in
/// the interior and one-sided second order on `y = ±1`.
pub fn differentiate(u: &Field, axis: Axis, order: u8) -> Field {
    match (axis, order) {
        (Axis::X, 1) => dx1(u),
        (Axis::X, 2) => dx2(u),
        (Axis::Y, 1) => dy1(u),
        (Axis::Y, 2) => dy2(u),
        (_, 0) => u.clone(),
        (axis, n) => {
            let mut out = u.clone();
            for _ in 0..n {
                out = differentiate(&out, axis, 1);
            }
            out
        }
    }
}

pub(crate) fn dx1(u: &Field) -> Field {
    let g = *u.grid();
    let inv = 1.0 / (2.0 * g.hx());
    let mut out = Field::zeros(g);
    let nx = g.nx();
    for j in 0..g.rows() {
        let row = u.row(j);
        let dst = out.row_mut(j);
        for i in 0..nx {
            dst[i] = (row[(i + 1) % nx] - row[(i + nx - 1) % nx]) * inv;
        }
    }
    out
}

pub(crate) fn dx2(u: &Field) -> Field {
    let g = *u.grid();
    let inv = 1.0 / (g.hx() * g.hx());
    let mut out = Field::zeros(g);
    let nx = g.nx();
    for j in 0..g.rows() {
        let row = u.row(j);
        let dst = out.row_mut(j);
        for i in 0..nx {
            dst[i] = (row[(i + 1) % nx] - 2.0 * row[i] + row[(i + nx - 1) % nx]) * inv;
        }
    }
    out
}

/// One-sided and centered first-derivative weights in y for row `j`, as
/// `(row offset, weight)` pairs (already divided by `hy`).
pub(crate) fn dy1_stencil(g: &GridSpec, j: usize) -> [(isize, f64); 3] {
    let inv = 1.0 / (2.0 * g.hy());
    if j == 0 {
        [(0, -3.0 * inv), (1, 4.0 * inv), (2, -inv)]
    } else if j == g.ny() {
        [(0, 3.0 * inv), (-1, -4.0 * inv), (-2, inv)]
    } else {
        [(-1, -inv), (1, inv), (0, 0.0)]
    }
}

pub(crate) fn dy2_stencil(g: &GridSpec, j: usize) -> [(isize, f64); 4] {
    let inv = 1.0 / (g.hy() * g.hy());
    if j == 0 {
        [(0, 2.0 * inv), (1, -5.0 * inv), (2, 4.0 * inv), (3, -inv)]
    } else if j == g.ny() {
        [(0, 2.0 * inv), (-1, -5.0 * inv), (-2, 4.0 * inv), (-3, -inv)]
    } else {
        [(-1, inv), (0, -2.0 * inv), (1, inv), (0, 0.0)]
    }
}

fn apply_y_stencil<const N: usize>(
    u: &Field,
    stencil: impl Fn(&GridSpec, usize) -> [(isize, f64); N],
) -> Field {
    let g = *u.grid();
    let mut out = Field::zeros(g);
    for j in 0..g.rows() {
        for (dj, w) in stencil(&g, j) {
            if w == 0.0 {
                continue;
            }
            let src = (j as isize + dj) as usize;
            let nx = g.nx();
            let (s, d) = (src * nx, j * nx);
            for i in 0..nx {
                out.values[d + i] += w * u.values[s + i];
            }
        }
    }
    out
}

pub(crate) fn dy1(u: &Field) -> Field {
    apply_y_stencil(u, dy1_stencil)
}

pub(crate) fn dy2(u: &Field) -> Field {
    apply_y_stencil(u, dy2_stencil)
}

/// Fourth-order first derivative in y: centered five-point stencil inside,
/// skewed five-point stencils on the two rows next to each boundary.
pub(crate) fn dy1_fourth(u: &Field) -> Field {
    const EDGE: [[f64; 5]; 2] = [
        [-25.0, 48.0, -36.0, 16.0, -3.0],
        [-3.0, -10.0, 18.0, -6.0, 1.0],
    ];
    let g = *u.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let inv = 1.0 / (12.0 * g.hy());
    let mut out = Field::zeros(g);
    for j in 0..g.rows() {
        let (base, w, sign): (usize, [f64; 5], f64) = if j < 2 {
            (0, EDGE[j], 1.0)
        } else if j > ny - 2 {
            (ny - 4, EDGE[ny - j], -1.0)
        } else {
            (j - 2, [1.0, -8.0, 0.0, 8.0, -1.0], 1.0)
        };
        for (k, &wk) in w.iter().enumerate() {
            // Upper-edge stencils are the lower ones mirrored.
            let src = if sign < 0.0 { ny - k } else { base + k };
            let c = sign * wk * inv;
            for i in 0..nx {
                out.values[j * nx + i] += c * u.values[src * nx + i];
            }
        }
    }
    out
}

/// Quadrature of `∫_Ω u v`: rectangle rule in x, trapezoid in y.
pub fn inner_product(u: &Field, v: &Field) -> Result<f64> {
    u.grid().ensure_same(v.grid())?;
    Ok(inner_product_unchecked(u, v))
}

pub(crate) fn inner_product_unchecked(u: &Field, v: &Field) -> f64 {
    let g = u.grid();
    let mut total = 0.0;
    for j in 0..g.rows() {
        let s: f64 = u.row(j).iter().zip(v.row(j)).map(|(a, b)| a * b).sum();
        total += g.row_weight(j) * s;
    }
    total * g.hx()
}

/// Periodic rectangle-rule integral of `w` along the row `y = ±1`.
///
/// No outward-normal sign is applied here.
pub fn boundary_integral(w: &Field, side: Side) -> f64 {
    let g = w.grid();
    g.hx() * w.row(g.boundary_row(side)).iter().sum::<f64>()
}

/// Difference quotient `(u(x, y+q) - u(x, y)) / q` on the rows where `y + q`
/// stays inside `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct DiffQuotient {
    pub field: Field,
    /// Rows `j` on which the quotient is defined; other rows hold zero.
    pub rows: std::ops::Range<usize>,
}

pub fn diff_quotient(u: &Field, q: f64) -> Result<DiffQuotient> {
    let g = *u.grid();
    let steps = q / g.hy();
    let k = steps.round();
    if q == 0.0 || (steps - k).abs() > 1e-9 * steps.abs().max(1.0) || k.abs() > g.ny() as f64 {
        return Err(Error::InvalidShift { q, hy: g.hy() });
    }
    let k = k as isize;
    let rows = if k > 0 {
        0..(g.rows() - k as usize)
    } else {
        (-k) as usize..g.rows()
    };
    let mut field = Field::zeros(g);
    let qq = k as f64 * g.hy();
    for j in rows.clone() {
        let src = (j as isize + k) as usize;
        for i in 0..g.nx() {
            field.set(i, j, (u.at(i, src) - u.at(i, j)) / qq);
        }
    }
    Ok(DiffQuotient { field, rows })
}

/// Trapezoid L² norm of `u` restricted to rows with `|y| <= ymax`.
pub fn l2_norm_band(u: &Field, ymax: f64) -> f64 {
    let g = u.grid();
    let tol = 1e-12;
    let rows: Vec<usize> = (0..g.rows())
        .filter(|&j| g.y(j).abs() <= ymax + tol)
        .collect();
    if rows.len() < 2 {
        return 0.0;
    }
    let (first, last) = (rows[0], *rows.last().unwrap());
    let mut total = 0.0;
    for &j in &rows {
        let w = if j == first || j == last {
            0.5 * g.hy()
        } else {
            g.hy()
        };
        total += w * u.row(j).iter().map(|v| v * v).sum::<f64>();
    }
    (total * g.hx()).sqrt()
}
