//! Multiplier data `(a, b, c, φ)` and certificates for the quadratic forms
//! that the energy identity produces.

use std::fmt;

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{dx1, dx2, dy1, dy1_fourth, dy2, Field, GridSpec};

/// Default slack applied to the leading term of each claimed lower bound.
pub const DEFAULT_SLACK: f64 = 0.5;
/// Tolerance for the mixed coefficient, which vanishes identically.
pub const MIXED_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct MultiplierTriple {
    pub a: Field,
    pub b: Field,
    pub c: Field,
    pub phi: Field,
    pub lambda: f64,
    pub m: usize,
}

impl MultiplierTriple {
    pub fn grid(&self) -> &GridSpec {
        self.a.grid()
    }
}

/// Solves `αφ_y - εαBφ = ε(A - K_x)`, `φ(x,-1) = 1` by RK4 up each column.
///
/// The `-εαBφ` sign makes the mixed `u_x u_y` coefficient vanish; see
/// [`interior_forms`].
pub fn solve_phi(cs: &CoefficientSet) -> Result<Field> {
    let g = *cs.grid();
    let source = &cs.a - &cs.k_x();
    if cs.alpha == 0.0 {
        return if source.max_abs() <= 1e-12 {
            Ok(Field::constant(g, 1.0))
        } else {
            Err(Error::DegenerateAlpha)
        };
    }
    let (nx, ny) = (g.nx(), g.ny());
    let h = g.hy();
    let eps = cs.eps;
    let gain = eps / cs.alpha;
    let mut phi = Field::zeros(g);
    for i in 0..nx {
        let s: Vec<f64> = (0..=ny).map(|j| source.at(i, j)).collect();
        let b: Vec<f64> = (0..=ny).map(|j| cs.b.at(i, j)).collect();
        let s_half = half_values(&s);
        let b_half = half_values(&b);
        let rhs = |bv: f64, sv: f64, p: f64| eps * bv * p + gain * sv;
        let mut p = 1.0;
        phi.set(i, 0, p);
        for j in 0..ny {
            let k1 = rhs(b[j], s[j], p);
            let k2 = rhs(b_half[j], s_half[j], p + 0.5 * h * k1);
            let k3 = rhs(b_half[j], s_half[j], p + 0.5 * h * k2);
            let k4 = rhs(b[j + 1], s[j + 1], p + h * k3);
            p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            phi.set(i, j + 1, p);
        }
    }
    Ok(phi)
}

/// Cubic interpolation of nodal values to the midpoints `j + 1/2`.
fn half_values(f: &[f64]) -> Vec<f64> {
    let n = f.len() - 1;
    (0..n)
        .map(|j| {
            if j == 0 {
                (5.0 * f[0] + 15.0 * f[1] - 5.0 * f[2] + f[3]) / 16.0
            } else if j == n - 1 {
                (f[n - 3] - 5.0 * f[n - 2] + 15.0 * f[n - 1] + 5.0 * f[n]) / 16.0
            } else {
                (-f[j - 1] + 9.0 * f[j] + 9.0 * f[j + 1] - f[j + 2]) / 16.0
            }
        })
        .collect()
}

/// `c = -ε^{1/2} + ε^{3/4}(3y + y²)`.
pub fn c_profile(eps: f64, y: f64) -> f64 {
    -eps.sqrt() + eps.powf(0.75) * (3.0 * y + y * y)
}

pub fn build_abc(cs: &CoefficientSet, lambda: f64, m: usize) -> Result<MultiplierTriple> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Precondition(format!("lambda = {lambda} must be positive")));
    }
    let g = *cs.grid();
    let phi = solve_phi(cs)?;
    Ok(MultiplierTriple {
        a: phi.scale(cs.alpha),
        b: Field::constant(g, 1.0),
        c: Field::from_fn(g, |_, y| c_profile(cs.eps, y)),
        phi,
        lambda,
        m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormEntry {
    pub min: f64,
    pub max: f64,
    pub claimed_bound: f64,
    pub passed: bool,
}

/// Ordered list of labelled form measurements.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FormReport {
    pub entries: Vec<(String, FormEntry)>,
}

impl FormReport {
    pub fn get(&self, label: &str) -> Option<&FormEntry> {
        self.entries.iter().find(|(l, _)| l == label).map(|(_, e)| e)
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|(_, e)| e.passed)
    }

    pub fn push(&mut self, label: impl Into<String>, entry: FormEntry) {
        self.entries.push((label.into(), entry));
    }

    fn lower_bound(&mut self, label: &str, f: &Field, bound: f64) {
        let min = f.min();
        self.push(
            label,
            FormEntry { min, max: f.max(), claimed_bound: bound, passed: min >= bound },
        );
    }

    pub fn csv_header() -> &'static str {
        "form,min,max,claimed_bound,passed"
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::csv_header());
        s.push('\n');
        for (l, e) in &self.entries {
            s.push_str(&format!("{l},{},{},{},{}\n", e.min, e.max, e.claimed_bound, e.passed));
        }
        s
    }
}

impl fmt::Display for FormReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, e) in &self.entries {
            writeln!(
                f,
                "{l:<14} min={:<12.5e} max={:<12.5e} bound={:<12.5e} {}",
                e.min,
                e.max,
                e.claimed_bound,
                if e.passed { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Coefficient fields of the interior quadratic form, each without the
/// overall `ε` and `1/2` factors.
#[derive(Debug, Clone)]
pub struct InteriorForms {
    /// `(bK)_y - 2cK - (aK)_x + 2aA`
    pub ux2: Field,
    /// `bA + aB - (bK)_x - ε⁻¹a_y`
    pub mixed: Field,
    /// `ε⁻¹(a_x - b_y - 2c) + 2bB`
    pub uy2: Field,
    /// `(cK)_xx + ε⁻¹c_yy - (cA)_x - (cB)_y`
    pub u2: Field,
}

/// Evaluates the four interior coefficients.
///
/// Integrating `(b u_y)(εB u_y)`-type terms by parts gives `+aB` in the mixed
/// coefficient; with the matching φ equation it cancels exactly. `a_y` uses a
/// fourth-order stencil so the cancellation is resolved past the RK4 error.
pub fn interior_forms(mt: &MultiplierTriple, cs: &CoefficientSet) -> InteriorForms {
    let (a, b, c) = (&mt.a, &mt.b, &mt.c);
    let (k, aa, bb) = (&cs.k, &cs.a, &cs.b);
    let inv = 1.0 / cs.eps;
    let bk = b * k;
    let ux2 = &(&dy1(&bk) - &(&(c * k).scale(2.0) + &dx1(&(a * k)))) + &(a * aa).scale(2.0);
    let mixed = &(&(&(b * aa) + &(a * bb)) - &dx1(&bk)) - &dy1_fourth(a).scale(inv);
    let uy2 = &(&(&dx1(a) - &dy1(b)) - &c.scale(2.0)).scale(inv) + &(b * bb).scale(2.0);
    let u2 = &(&dx2(&(c * k)) + &dy2(c).scale(inv)) - &(&dx1(&(c * aa)) + &dy1(&(c * bb)));
    InteriorForms { ux2, mixed, uy2, u2 }
}

pub fn interior_form_report(mt: &MultiplierTriple, cs: &CoefficientSet) -> FormReport {
    interior_form_report_with(mt, cs, DEFAULT_SLACK)
}

/// Interior report with the `O(·)` slack given as a fraction of each leading
/// term.
pub fn interior_form_report_with(
    mt: &MultiplierTriple,
    cs: &CoefficientSet,
    slack: f64,
) -> FormReport {
    let forms = interior_forms(mt, cs);
    let mut r = FormReport::default();
    r.lower_bound("u_x^2", &forms.ux2, 0.0);
    let worst = forms.mixed.max_abs();
    r.push(
        "u_x*u_y",
        FormEntry {
            min: forms.mixed.min(),
            max: forms.mixed.max(),
            claimed_bound: 0.0,
            passed: worst <= MIXED_TOL,
        },
    );
    r.lower_bound("u_y^2", &forms.uy2, slack * cs.eps.powf(-0.5));
    r.lower_bound("u^2", &forms.u2, slack * cs.eps.powf(-0.25));
    r
}

/// Per-node boundary form at `y = -1` in the variables `(u_x, u_y)`.
#[derive(Debug, Clone)]
pub struct BoundaryForms {
    pub determinant: Vec<f64>,
    pub min_eigenvalue: Vec<f64>,
    /// `c_y + ε(cB - (aB)_x)` on `y = -1`.
    pub c_term: Vec<f64>,
}

pub fn boundary_forms(mt: &MultiplierTriple, cs: &CoefficientSet) -> BoundaryForms {
    let g = *cs.grid();
    let (alpha, eps) = (cs.alpha, cs.eps);
    let cy = dy1(&mt.c);
    let ab_x = dx1(&(&mt.a * &cs.b));
    let mut out = BoundaryForms {
        determinant: Vec::with_capacity(g.nx()),
        min_eigenvalue: Vec::with_capacity(g.nx()),
        c_term: Vec::with_capacity(g.nx()),
    };
    for i in 0..g.nx() {
        let (a, b, k) = (mt.a.at(i, 0), mt.b.at(i, 0), cs.k.at(i, 0));
        let p = alpha * a + 0.5 * eps * b * k;
        let q = 0.5 * alpha * b;
        let r = 0.5 * b;
        // p r - q² expanded; with b = 1 and a = α the bracket rounds exactly
        // like α² + εK, so the sign agrees with the α-condition bit for bit.
        let det = 0.25 * b * ((2.0 * alpha * a - alpha * alpha * b) + eps * b * k);
        let mean = 0.5 * (p + r);
        let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
        out.determinant.push(det);
        out.min_eigenvalue.push(mean - rad);
        let c = mt.c.at(i, 0);
        out.c_term
            .push(cy.at(i, 0) + eps * (c * cs.b.at(i, 0) - ab_x.at(i, 0)));
    }
    out
}

pub fn boundary_form_report(mt: &MultiplierTriple, cs: &CoefficientSet) -> FormReport {
    boundary_form_report_with(mt, cs, DEFAULT_SLACK)
}

pub fn boundary_form_report_with(
    mt: &MultiplierTriple,
    cs: &CoefficientSet,
    slack: f64,
) -> FormReport {
    let bf = boundary_forms(mt, cs);
    let stats = |v: &[f64]| {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    };
    let mut r = FormReport::default();
    let (lo, hi) = stats(&bf.determinant);
    r.push("determinant", FormEntry { min: lo, max: hi, claimed_bound: 0.0, passed: lo > 0.0 });
    let (lo, hi) = stats(&bf.min_eigenvalue);
    r.push("min_eigenvalue", FormEntry { min: lo, max: hi, claimed_bound: 0.0, passed: lo > 0.0 });
    let (lo, hi) = stats(&bf.c_term);
    let bound = cs.eps.powf(0.75) * (1.0 - slack);
    r.push("c_term", FormEntry { min: lo, max: hi, claimed_bound: bound, passed: lo >= bound });
    r
}
