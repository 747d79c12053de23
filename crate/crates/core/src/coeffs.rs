//! Coefficient bundles `(K, A, B, ε, α)` and their admissibility checks.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{dx1, dy1, Field, GridSpec};

#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub k: Field,
    pub a: Field,
    pub b: Field,
    pub eps: f64,
    pub alpha: f64,
}

impl CoefficientSet {
    pub fn new(k: Field, a: Field, b: Field, eps: f64, alpha: f64) -> Result<Self> {
        k.grid().ensure_same(a.grid())?;
        k.grid().ensure_same(b.grid())?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Precondition(format!("eps = {eps} outside (0, 1)")));
        }
        if !alpha.is_finite() {
            return Err(Error::Precondition("alpha must be finite".into()));
        }
        Ok(Self { k, a, b, eps, alpha })
    }

    pub fn grid(&self) -> &GridSpec {
        self.k.grid()
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.k.clone(), self.a.clone(), self.b.clone(), eps, self.alpha)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.k.clone(), self.a.clone(), self.b.clone(), self.eps, alpha)
    }

    /// `true` when K vanishes or changes sign somewhere (informational).
    pub fn is_mixed_type(&self) -> bool {
        self.k.min() <= 0.0 && self.k.max() >= 0.0
    }

    /// Discrete `K_x`.
    pub fn k_x(&self) -> Field {
        dx1(&self.k)
    }
}

/// Closed-form coefficient families plus CSV-supplied K.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    /// `K = y`, `A = B = 0`.
    Tricomi,
    /// `K = sign(y) exp(-1/|y|)`, `A = B = 0`: sign change to infinite order.
    InfiniteOrder,
    /// `K = (y-|x|)₊³ - (-y-|x|)₊³`, vanishing on the wedge `|y| <= |x|`; `A = K_x`.
    Wedge,
    /// `K = y (1 + y²/2)`, `A = B = 0`.
    Chaplygin,
    /// `K = y + sin(πx)/10`, `A = K_x`, `B = 1/2`.
    Tilted,
    /// K read from a field CSV; `A = K_x`, `B = 0`.
    Csv(PathBuf),
}

impl Preset {
    /// Closed-form families in a fixed order.
    pub const BUILTIN: [Preset; 5] = [
        Preset::Tricomi,
        Preset::InfiniteOrder,
        Preset::Wedge,
        Preset::Chaplygin,
        Preset::Tilted,
    ];

    pub fn k_value(&self, x: f64, y: f64) -> Option<f64> {
        Some(match self {
            Preset::Tricomi => y,
            Preset::InfiniteOrder => {
                if y == 0.0 {
                    0.0
                } else {
                    y.signum() * (-1.0 / y.abs()).exp()
                }
            }
            Preset::Wedge => {
                let up = (y - x.abs()).max(0.0);
                let down = (-y - x.abs()).max(0.0);
                up.powi(3) - down.powi(3)
            }
            Preset::Chaplygin => y * (1.0 + 0.5 * y * y),
            Preset::Tilted => y + 0.1 * (std::f64::consts::PI * x).sin(),
            Preset::Csv(_) => return None,
        })
    }

    pub fn build(&self, grid: GridSpec, eps: f64, alpha: f64) -> Result<CoefficientSet> {
        let k = match self {
            Preset::Csv(path) => {
                let k = Field::read_csv(std::fs::File::open(path)?)?;
                k.grid().ensure_same(&grid)?;
                k
            }
            p => Field::from_fn(grid, |x, y| p.k_value(x, y).unwrap()),
        };
        let (a, b) = match self {
            Preset::Tricomi | Preset::InfiniteOrder | Preset::Chaplygin => {
                (Field::zeros(grid), Field::zeros(grid))
            }
            Preset::Wedge | Preset::Csv(_) => (dx1(&k), Field::zeros(grid)),
            Preset::Tilted => (dx1(&k), Field::constant(grid, 0.5)),
        };
        CoefficientSet::new(k, a, b, eps, alpha)
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Tricomi => f.write_str("tricomi"),
            Preset::InfiniteOrder => f.write_str("infinite_order"),
            Preset::Wedge => f.write_str("wedge"),
            Preset::Chaplygin => f.write_str("chaplygin"),
            Preset::Tilted => f.write_str("tilted"),
            Preset::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("csv:") {
            return Ok(Preset::Csv(PathBuf::from(path)));
        }
        match s {
            "tricomi" => Ok(Preset::Tricomi),
            "infinite_order" => Ok(Preset::InfiniteOrder),
            "wedge" => Ok(Preset::Wedge),
            "chaplygin" => Ok(Preset::Chaplygin),
            "tilted" => Ok(Preset::Tilted),
            other => Err(Error::Parse(format!(
                "unknown preset {other:?} (tricomi | infinite_order | wedge | chaplygin | tilted | csv:<path>)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub condition_name: String,
    pub pointwise_min_margin: f64,
    pub argmin_location: (f64, f64),
    pub passed: bool,
}

impl ConditionReport {
    fn from_margin(name: &str, margin: &Field, strict: bool) -> Self {
        let (i, j) = margin.argmin();
        let g = margin.grid();
        let min = margin.at(i, j);
        Self {
            condition_name: name.to_string(),
            pointwise_min_margin: min,
            argmin_location: (g.x(i), g.y(j)),
            passed: if strict { min > 0.0 } else { min >= 0.0 },
        }
    }

    pub fn csv_header() -> &'static str {
        "condition,min_margin,argmin_x,argmin_y,passed"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.condition_name,
            self.pointwise_min_margin,
            self.argmin_location.0,
            self.argmin_location.1,
            self.passed
        )
    }
}

/// Pointwise margin `K_y - αK_x + 2αA - ε^{1/4}(|K_x| + |K| + |A|)`.
pub fn condition7_margin(cs: &CoefficientSet) -> Field {
    let kx = dx1(&cs.k);
    let ky = dy1(&cs.k);
    let e4 = cs.eps.powf(0.25);
    let alpha = cs.alpha;
    let mut out = Field::zeros(*cs.grid());
    for (n, m) in out.values_mut().iter_mut().enumerate() {
        let (k, a, kx, ky) = (cs.k.values()[n], cs.a.values()[n], kx.values()[n], ky.values()[n]);
        *m = ky - alpha * kx + 2.0 * alpha * a - e4 * (kx.abs() + k.abs() + a.abs());
    }
    out
}

pub fn check_condition7(cs: &CoefficientSet) -> ConditionReport {
    ConditionReport::from_margin("condition7", &condition7_margin(cs), false)
}

/// `α² + ε min_x K(x, -1)`, required to be strictly positive.
pub fn alpha_margin(cs: &CoefficientSet) -> f64 {
    let kmin = cs.k.row(0).iter().copied().fold(f64::INFINITY, f64::min);
    cs.alpha * cs.alpha + cs.eps * kmin
}

pub fn check_alpha(cs: &CoefficientSet) -> ConditionReport {
    let row = cs.k.row(0);
    let (i, _) = row
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let margin = alpha_margin(cs);
    ConditionReport {
        condition_name: "alpha".into(),
        pointwise_min_margin: margin,
        argmin_location: (cs.grid().x(i), -1.0),
        passed: margin > 0.0,
    }
}

/// Margin `V¹K_x + V²K_y - ε(|∇K| + |K|)` of the geometric condition.
pub fn condition7prime_margin(k: &Field, v: (&Field, &Field), eps: f64) -> Result<Field> {
    k.grid().ensure_same(v.0.grid())?;
    k.grid().ensure_same(v.1.grid())?;
    let kx = dx1(k);
    let ky = dy1(k);
    let mut out = Field::zeros(*k.grid());
    for (n, m) in out.values_mut().iter_mut().enumerate() {
        let (kx, ky) = (kx.values()[n], ky.values()[n]);
        let grad = (kx * kx + ky * ky).sqrt();
        *m = v.0.values()[n] * kx + v.1.values()[n] * ky - eps * (grad + k.values()[n].abs());
    }
    Ok(out)
}

pub fn check_condition7prime(k: &Field, v: (&Field, &Field), eps: f64) -> Result<ConditionReport> {
    Ok(ConditionReport::from_margin(
        "condition7prime",
        &condition7prime_margin(k, v, eps)?,
        false,
    ))
}
