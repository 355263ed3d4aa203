//! Isoperimetric comparison spaces `C^m_{w,g,h}` and balance conditions.
//!
//! Given ambient warping `w`, a tangency bound `g` and a mean-curvature
//! bound `h`, the comparison space is the `W`-model with
//! `W(s) = Λ(r(s))^{1/(m-1)}`, where `s(r) = ∫_0^r 1/g` is the stretching
//! and `Λ` solves a first-order linear ODE started at the pole.
//!
//! The ODE is integrated for `z = ln(Λ / w^{m-1})`, which starts at
//! `z(0) = 0` and has a bounded right-hand side
//! `z' = m η_w (1 - g²)/g² - m h/g² - g'/g` that does not involve `z`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::moments::build_hierarchy_on;
use crate::quadrature::{self, uniform_grid, Knots, RadialGrid, RadialSamples};
use crate::warping::{self, ModelSpace, RadialProfile, WarpingDescriptor, WarpingFunction};
use crate::{Error, Execution, Result};

/// `|z|` beyond which `Λ / w^{m-1}` is no longer representable.
pub const Z_LIMIT: f64 = 700.0;
/// Floor of the balance tolerance, covering rounding in the margins.
const ROUNDING_FLOOR: f64 = 1e-12;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

// ---------------------------------------------------------------------------
// Radial functions

/// A scalar radial profile such as a tangency or mean-curvature bound.
#[derive(Clone)]
pub enum RadialFunction {
    Constant(f64),
    /// Monotone cubic interpolant through samples starting at `r = 0`.
    Tabulated { r: Vec<f64>, v: Vec<f64> },
    /// Closure with an optional analytic derivative.
    Custom { f: ScalarFn, df: Option<ScalarFn> },
}

impl fmt::Debug for RadialFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialFunction::Constant(c) => write!(f, "Constant({c})"),
            RadialFunction::Tabulated { r, .. } => write!(f, "Tabulated({} samples)", r.len()),
            RadialFunction::Custom { df, .. } => {
                write!(f, "Custom(derivative: {})", if df.is_some() { "yes" } else { "no" })
            }
        }
    }
}

impl RadialFunction {
    pub fn zero() -> Self {
        RadialFunction::Constant(0.0)
    }

    pub fn one() -> Self {
        RadialFunction::Constant(1.0)
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RadialFunction::Custom { f: Arc::new(f), df: None }
    }

    pub fn custom_with_derivative(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        RadialFunction::Custom { f: Arc::new(f), df: Some(Arc::new(df)) }
    }

    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::InvalidBounds("need at least three samples".into()));
        }
        if samples[0].0 != 0.0 {
            return Err(Error::InvalidBounds("samples must start at r = 0".into()));
        }
        if samples.iter().any(|(r, v)| !r.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidBounds("non-finite sample".into()));
        }
        if samples.windows(2).any(|p| p[1].0 <= p[0].0) {
            return Err(Error::InvalidBounds("sample radii must increase".into()));
        }
        let (r, v) = samples.iter().copied().unzip();
        Ok(RadialFunction::Tabulated { r, v })
    }

    pub fn from_descriptor(desc: &RadialFunctionDescriptor) -> Result<Self> {
        match desc {
            RadialFunctionDescriptor::Value(c) => Ok(RadialFunction::Constant(*c)),
            RadialFunctionDescriptor::Preset(Preset::Zero) => Ok(Self::zero()),
            RadialFunctionDescriptor::Preset(Preset::One) => Ok(Self::one()),
            RadialFunctionDescriptor::Kind(TaggedFunction::Constant { value }) => Ok(RadialFunction::Constant(*value)),
            RadialFunctionDescriptor::Kind(TaggedFunction::Tabulated { samples }) => {
                let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s[0], s[1])).collect();
                Self::tabulated(&pairs)
            }
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            RadialFunction::Constant(c) => *c,
            RadialFunction::Tabulated { r: xs, v } => {
                let x = r.clamp(0.0, xs[xs.len() - 1]);
                quadrature::hermite(xs.as_slice(), v, x).0
            }
            RadialFunction::Custom { f, .. } => f(r),
        }
    }

    /// Derivative, when one is available.
    pub fn derivative(&self, r: f64) -> Option<f64> {
        match self {
            RadialFunction::Constant(_) => Some(0.0),
            RadialFunction::Tabulated { r: xs, v } => {
                let x = r.clamp(0.0, xs[xs.len() - 1]);
                Some(quadrature::hermite(xs.as_slice(), v, x).1)
            }
            RadialFunction::Custom { df, .. } => df.as_ref().map(|d| d(r)),
        }
    }

    fn has_derivative(&self) -> bool {
        !matches!(self, RadialFunction::Custom { df: None, .. })
    }

    fn covers(&self, radius: f64) -> bool {
        match self {
            RadialFunction::Tabulated { r, .. } => r[r.len() - 1] >= radius * (1.0 - 1e-12),
            _ => true,
        }
    }

    /// Largest value on a uniform scan of `[0, radius]`.
    pub fn sup_on(&self, radius: f64, n: usize) -> f64 {
        (0..n).map(|i| self.eval(radius * i as f64 / (n - 1) as f64)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether the function equals one on a scan of `[0, radius]`.
    pub fn is_one_on(&self, radius: f64) -> bool {
        match self {
            RadialFunction::Constant(c) => *c == 1.0,
            _ => (0..=1024).all(|i| (self.eval(radius * i as f64 / 1024.0) - 1.0).abs() <= 1e-14),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Zero,
    One,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaggedFunction {
    Constant { value: f64 },
    Tabulated { samples: Vec<[f64; 2]> },
}

/// JSON form of a radial function: `"zero"`, `"one"`, a number,
/// `{"kind": "constant", "value": c}` or `{"kind": "tabulated", "samples": [[r, v], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RadialFunctionDescriptor {
    Value(f64),
    Preset(Preset),
    Kind(TaggedFunction),
}

/// Tangency lower bound `g` and radial mean-curvature bound `h`.
#[derive(Clone, Debug)]
pub struct BoundingFunctions {
    pub g: RadialFunction,
    pub h: RadialFunction,
}

impl BoundingFunctions {
    pub fn new(g: RadialFunction, h: RadialFunction) -> Self {
        Self { g, h }
    }

    /// `g ≡ 1`, `h ≡ 0`.
    pub fn trivial() -> Self {
        Self::new(RadialFunction::one(), RadialFunction::zero())
    }

    /// Checks `g(0) = 1`, `0 < g <= 1` and finiteness of `h` on `[0, radius]`.
    pub fn validate(&self, radius: f64) -> Result<()> {
        const SAMPLES: usize = 1024;
        for (name, f) in [("g", &self.g), ("h", &self.h)] {
            if !f.covers(radius) {
                return Err(Error::InvalidBounds(format!("tabulated {name} does not reach R = {radius}")));
            }
        }
        let g0 = self.g.eval(0.0);
        if (g0 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidBounds(format!("g(0) must be 1, got {g0}")));
        }
        for i in 0..=SAMPLES {
            let r = radius * i as f64 / SAMPLES as f64;
            let g = self.g.eval(r);
            if !(g > 0.0 && g <= 1.0 + 1e-12) {
                return Err(Error::InvalidBounds(format!("g({r}) = {g} outside (0, 1]")));
            }
            let h = self.h.eval(r);
            if !h.is_finite() {
                return Err(Error::InvalidBounds(format!("h({r}) = {h} is not finite")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Specification

/// The data `(w, g, h, m, R)` of a comparison space.
#[derive(Clone, Debug)]
pub struct ComparisonSpaceSpec {
    warping: WarpingFunction,
    bounds: BoundingFunctions,
    dim: usize,
    radius: f64,
}

impl ComparisonSpaceSpec {
    pub fn new(warping: WarpingFunction, bounds: BoundingFunctions, dim: usize, radius: f64) -> Result<Self> {
        let report = warping::validate_warping(&warping, dim);
        if !report.is_valid() {
            return Err(Error::InvalidWarping(format!("{:?}", report.violations)));
        }
        ModelSpace::new(dim, warping.clone(), radius)?;
        bounds.validate(radius)?;
        Ok(Self { warping, bounds, dim, radius })
    }

    pub fn from_descriptor(desc: &SpecDescriptor) -> Result<Self> {
        let bounds = BoundingFunctions::new(
            RadialFunction::from_descriptor(&desc.g)?,
            RadialFunction::from_descriptor(&desc.h)?,
        );
        Self::new(WarpingFunction::from_descriptor(&desc.w)?, bounds, desc.m, desc.radius)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_descriptor(&serde_json::from_str(text)?)
    }

    pub fn warping(&self) -> &WarpingFunction {
        &self.warping
    }

    pub fn bounds(&self) -> &BoundingFunctions {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// The ambient `w`-model ball `B^w_R`.
    pub fn base_space(&self) -> ModelSpace {
        ModelSpace::new(self.dim, self.warping.clone(), self.radius).expect("validated on construction")
    }
}

/// JSON form `{ "w": {...}, "g": ..., "h": ..., "m": 3, "R": 2.0 }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDescriptor {
    pub w: WarpingDescriptor,
    #[serde(default = "one_descriptor")]
    pub g: RadialFunctionDescriptor,
    #[serde(default = "zero_descriptor")]
    pub h: RadialFunctionDescriptor,
    pub m: usize,
    #[serde(rename = "R")]
    pub radius: f64,
}

fn one_descriptor() -> RadialFunctionDescriptor {
    RadialFunctionDescriptor::Preset(Preset::One)
}

fn zero_descriptor() -> RadialFunctionDescriptor {
    RadialFunctionDescriptor::Preset(Preset::Zero)
}

// ---------------------------------------------------------------------------
// Construction

/// `s(r) = ∫_0^r dt / g(t)` on the default grid over `[0, radius]`.
pub fn stretching(bounds: &BoundingFunctions, radius: f64) -> Result<RadialSamples> {
    stretching_on(bounds, uniform_grid(radius, quadrature::DEFAULT_NODES)?)
}

pub fn stretching_on(bounds: &BoundingFunctions, grid: RadialGrid) -> Result<RadialSamples> {
    bounds.validate(grid.radius())?;
    Ok(quadrature::cumulative_integral_fn(&grid, |t| 1.0 / bounds.g.eval(t)))
}

/// Radial data shared by the `W` warping and the balance checks.
#[derive(Debug)]
struct Construction {
    w: WarpingFunction,
    g: RadialFunction,
    h: RadialFunction,
    m: usize,
    grid: RadialGrid,
    stretch: Vec<f64>,
    z: Vec<f64>,
    regularization: f64,
}

impl Construction {
    fn eta_w(&self, r: f64) -> f64 {
        if r < self.regularization {
            1.0 / r + self.w.deriv2(r) / 3.0
        } else {
            self.w.deriv(r) / self.w.eval(r)
        }
    }

    /// `z'(r)`, with its limit `-(2m+1) g'(0) - m h(0)` at the pole.
    fn rhs(&self, r: f64) -> f64 {
        let m = self.m as f64;
        let g = self.g.eval(r);
        let dg = self.g.derivative(r).unwrap_or(0.0);
        if r <= 0.0 {
            return -(2.0 * m + 1.0) * dg - m * self.h.eval(0.0);
        }
        let g2 = g * g;
        m * self.eta_w(r) * (1.0 - g) * (1.0 + g) / g2 - m * self.h.eval(r) / g2 - dg / g
    }

    fn interval(&self, r: f64) -> usize {
        Knots::locate(&self.grid, r)
    }

    fn z_at(&self, r: f64) -> f64 {
        let i = self.interval(r);
        let r0 = self.grid.node(i);
        if r == r0 {
            return self.z[i];
        }
        self.z[i] + quadrature::integrate_fn(|t| self.rhs(t), r0, r, 1)
    }

    fn s_at(&self, r: f64) -> f64 {
        let i = self.interval(r);
        let r0 = self.grid.node(i);
        if r == r0 {
            return self.stretch[i];
        }
        self.stretch[i] + quadrature::integrate_fn(|t| 1.0 / self.g.eval(t), r0, r, 1)
    }

    fn s_end(&self) -> f64 {
        self.stretch[self.stretch.len() - 1]
    }

    /// `r(s)`: monotone-cubic inversion polished by Newton steps on `s' = 1/g`.
    fn r_of_s(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.s_end());
        let mut r = quadrature::invert_increasing(&self.grid, &self.stretch, s).unwrap_or(0.0);
        for _ in 0..3 {
            let step = (self.s_at(r) - s) * self.g.eval(r);
            r = (r - step).clamp(0.0, self.grid.radius());
            if step.abs() <= 1e-16 * (1.0 + r) {
                break;
            }
        }
        r
    }

    fn lambda(&self, r: f64) -> f64 {
        self.w.eval(r).powi(self.m as i32 - 1) * self.z_at(r).exp()
    }

    /// `W(s(r))` and `dW/ds` at `s(r)`.
    fn warp(&self, r: f64) -> (f64, f64) {
        let m1 = (self.m - 1) as f64;
        let e = (self.z_at(r) / m1).exp();
        let w = self.w.eval(r);
        let value = w * e;
        let slope = self.g.eval(r) * e * (self.w.deriv(r) + w * self.rhs(r) / m1);
        (value, slope)
    }
}

/// Warping `W` of the comparison space, parametrized by `s`.
#[derive(Debug, Clone)]
pub struct ComparisonWarping(Arc<Construction>);

impl RadialProfile for ComparisonWarping {
    fn value(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        self.0.warp(self.0.r_of_s(s)).0
    }

    fn first(&self, s: f64) -> f64 {
        self.0.warp(self.0.r_of_s(s)).1
    }

    fn second(&self, s: f64) -> f64 {
        let end = self.0.s_end();
        let d = 1e-5 * end;
        let (a, b) = ((s - d).max(0.0), (s + d).min(end));
        (self.first(b) - self.first(a)) / (b - a)
    }

    fn domain_end(&self) -> f64 {
        self.0.s_end()
    }
}

/// The compiled comparison space.
#[derive(Clone, Debug)]
pub struct ComparisonSpaceResult {
    /// `s(R)`.
    pub stretched_radius: f64,
    /// `W`-model ball of radius `s(R)`.
    pub w_model: ModelSpace,
    /// `Λ(r)` on the `r`-grid.
    pub lambda_profile: RadialSamples,
    /// `s(r)` on the `r`-grid.
    pub stretch: RadialSamples,
    /// `z(r) = ln(Λ / w^{m-1})` on the `r`-grid.
    pub log_ratio: RadialSamples,
    construction: Arc<Construction>,
}

impl ComparisonSpaceResult {
    pub fn grid(&self) -> &RadialGrid {
        self.stretch.grid()
    }

    /// `W(s(r))` at every node of the `r`-grid.
    pub fn warping_on_r_grid(&self) -> RadialSamples {
        let c = &self.construction;
        RadialSamples::from_raw(*self.grid(), self.grid().nodes().map(|r| c.warp(r).0).collect())
    }

    /// `η_W(s(r)) = W'/W` at every node of the `r`-grid, infinite at the pole.
    pub fn eta_on_r_grid(&self) -> Vec<f64> {
        let c = &self.construction;
        self.grid()
            .nodes()
            .map(|r| {
                let (v, d) = c.warp(r);
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    d / v
                }
            })
            .collect()
    }

    /// Rows `r,s,Lambda,W`.
    pub fn profile_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("r,s,Lambda,W\n");
        let warp = self.warping_on_r_grid();
        for (i, r) in self.grid().nodes().enumerate() {
            let _ = writeln!(
                out,
                "{:.15e},{:.15e},{:.15e},{:.15e}",
                r,
                self.stretch.values()[i],
                self.lambda_profile.values()[i],
                warp.values()[i]
            );
        }
        out
    }
}

/// Builds `C^m_{w,g,h}` on the default grid.
pub fn build_comparison_space(spec: &ComparisonSpaceSpec) -> Result<ComparisonSpaceResult> {
    build_comparison_space_on(spec, quadrature::DEFAULT_NODES)
}

pub fn build_comparison_space_on(spec: &ComparisonSpaceSpec, grid_n: usize) -> Result<ComparisonSpaceResult> {
    let grid = uniform_grid(spec.radius, grid_n)?;
    let g = &spec.bounds.g;
    if !g.has_derivative() {
        return Err(Error::NonSmoothBounds { r: 0.0 });
    }
    let mut construction = Construction {
        w: spec.warping.clone(),
        g: g.clone(),
        h: spec.bounds.h.clone(),
        m: spec.dim,
        grid,
        stretch: Vec::new(),
        z: Vec::new(),
        regularization: warping::REGULARIZATION * spec.radius,
    };
    for r in grid.nodes() {
        let f = construction.rhs(r);
        if !f.is_finite() {
            return Err(Error::NonSmoothBounds { r });
        }
    }
    let z = quadrature::cumulative_integral_fn(&grid, |t| construction.rhs(t));
    if let Some(i) = z.values().iter().position(|v| !(v.abs() <= Z_LIMIT)) {
        return Err(Error::OdeBlowup { r: grid.node(i) });
    }
    let stretch = stretching_on(&spec.bounds, grid)?;
    if let Some(i) = stretch.values().windows(2).position(|p| p[1] <= p[0]) {
        return Err(Error::NotMonotone(i + 1));
    }
    construction.z = z.values().to_vec();
    construction.stretch = stretch.values().to_vec();
    let construction = Arc::new(construction);

    let lambda_profile =
        RadialSamples::new(grid, grid.nodes().map(|r| construction.lambda(r)).collect())?;
    let stretched_radius = construction.s_end();
    let warping = WarpingFunction::new(ComparisonWarping(construction.clone()));
    let w_model = ModelSpace::new(spec.dim, warping, stretched_radius)?;
    Ok(ComparisonSpaceResult { stretched_radius, w_model, lambda_profile, stretch, log_ratio: z, construction })
}

// ---------------------------------------------------------------------------
// Balance

/// Outcome of the balance check `q_W (η_w - h) >= g/m`.
#[derive(Clone, Debug, Serialize)]
pub struct BalanceReport {
    pub balanced: bool,
    pub strict: bool,
    /// `min_r [q_W (η_w - h) - g/m]` over nodes away from the pole.
    pub worst_margin: f64,
    pub worst_radius: f64,
    /// Grid slack `10 h² max|z''|` plus a rounding floor.
    pub tolerance: f64,
    pub violating_radii: Vec<f64>,
    /// Radii where `η_w - h <= 0`.
    pub positivity_violations: Vec<f64>,
    #[serde(skip)]
    pub margins: Option<RadialSamples>,
}

/// Checks that the comparison space is `w`-balanced from below.
///
/// `q_W(s) = ∫_0^{r(s)} Λ/g / Λ(r(s))` is evaluated at the nodes of the
/// `r`-grid. The margin at the pole is its limit `1/m - g(0)/m = 0`; with
/// `strict` every other node must clear the tolerance.
pub fn balance_check(result: &ComparisonSpaceResult, spec: &ComparisonSpaceSpec, strict: bool) -> BalanceReport {
    let c = &result.construction;
    let grid = *result.grid();
    let m = spec.dim as f64;
    let g = &spec.bounds.g;
    let h = &spec.bounds.h;
    let weighted = quadrature::cumulative_integral_fn(&grid, |u| c.lambda(u) / g.eval(u));
    let rhs = RadialSamples::from_raw(grid, grid.nodes().map(|r| c.rhs(r)).collect());
    let z2 = quadrature::derivative(&rhs).max_abs();
    let tolerance = 10.0 * grid.step().powi(2) * z2 + ROUNDING_FLOOR;

    let mut margins = vec![0.0; grid.len()];
    let mut violating_radii = Vec::new();
    let mut positivity_violations = Vec::new();
    let (mut worst_margin, mut worst_radius) = (f64::INFINITY, 0.0);
    for (i, r) in grid.nodes().enumerate().skip(1) {
        let gap = c.eta_w(r) - h.eval(r);
        if !(gap > 0.0) {
            positivity_violations.push(r);
        }
        let q = weighted.values()[i] / result.lambda_profile.values()[i];
        let margin = q * gap - g.eval(r) / m;
        margins[i] = margin;
        let ok = if strict { margin > tolerance } else { margin >= -tolerance };
        if !ok {
            violating_radii.push(r);
        }
        if margin < worst_margin {
            worst_margin = margin;
            worst_radius = r;
        }
    }
    BalanceReport {
        balanced: violating_radii.is_empty() && positivity_violations.is_empty(),
        strict,
        worst_margin,
        worst_radius,
        tolerance,
        violating_radii,
        positivity_violations,
        margins: Some(RadialSamples::from_raw(grid, margins)),
    }
}

// ---------------------------------------------------------------------------
// Transplanted convexity

/// Outcome of the check `f_k'' - η_w f_k' >= 0` for `f_k = u^W_k ∘ s`.
#[derive(Clone, Debug, Serialize)]
pub struct ConvexityReport {
    pub skipped: bool,
    pub diagnostic: Option<String>,
    pub k_small: usize,
    pub holds: bool,
    pub worst_margin: f64,
    pub worst_radius: f64,
    pub worst_k: usize,
    pub tolerance: f64,
}

/// Builds the hierarchy on the `W`-model and checks the transplanted
/// inequality at interior nodes of the `s`-grid for `k = 1..=k_small`.
///
/// With `f(r) = G(s(r))` the chain rule gives
/// `f'' - η_w f' = (G'' - G' g') / g² - η_w G' / g`, so only grid
/// derivatives of `G` are needed and nothing is interpolated.
pub fn transplanted_convexity_check(
    result: &ComparisonSpaceResult,
    spec: &ComparisonSpaceSpec,
    k_small: usize,
) -> Result<ConvexityReport> {
    if k_small == 0 || k_small > 10 {
        return Err(Error::Precondition(format!("k_small must lie in 1..=10, got {k_small}")));
    }
    let balance = balance_check(result, spec, false);
    if !balance.balanced {
        return Ok(ConvexityReport {
            skipped: true,
            diagnostic: Some(format!(
                "comparison space is not balanced from below (worst margin {:.3e} at r = {:.4})",
                balance.worst_margin, balance.worst_radius
            )),
            k_small,
            holds: false,
            worst_margin: f64::NAN,
            worst_radius: f64::NAN,
            worst_k: 0,
            tolerance: f64::NAN,
        });
    }
    let c = &result.construction;
    let s_grid = uniform_grid(result.stretched_radius, result.grid().len())?;
    let hierarchy = build_hierarchy_on(&result.w_model, s_grid, k_small.max(2), Execution::Sequential)?;
    let radii: Vec<f64> = s_grid.nodes().map(|s| c.r_of_s(s)).collect();
    let hs2 = s_grid.step().powi(2);

    let mut worst = (f64::INFINITY, 0.0, 0usize);
    let mut tolerance = 0.0_f64;
    let mut holds = true;
    for k in 1..=k_small {
        let gk = hierarchy.normalized_function(k)?;
        let d1 = quadrature::derivative(gk);
        let d2 = quadrature::second_derivative(gk);
        let eps = 10.0 * hs2 * (1.0 + d2.max_abs());
        tolerance = tolerance.max(eps);
        for (j, &r) in radii.iter().enumerate().take(s_grid.len() - 1).skip(1) {
            let g = spec.bounds.g.eval(r);
            let dg = spec.bounds.g.derivative(r).unwrap_or(0.0);
            let (p1, p2) = (d1.values()[j], d2.values()[j]);
            let value = (p2 - p1 * dg) / (g * g) - c.eta_w(r) * p1 / g;
            if value < -eps {
                holds = false;
            }
            if value < worst.0 {
                worst = (value, r, k);
            }
        }
    }
    Ok(ConvexityReport {
        skipped: false,
        diagnostic: None,
        k_small,
        holds,
        worst_margin: worst.0,
        worst_radius: worst.1,
        worst_k: worst.2,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warping::{space_form_warping, validate_warping, CurvatureConstant};

    fn spec(b: f64, g: RadialFunction, h: RadialFunction, m: usize, radius: f64) -> ComparisonSpaceSpec {
        ComparisonSpaceSpec::new(space_form_warping(CurvatureConstant(b)), BoundingFunctions::new(g, h), m, radius)
            .unwrap()
    }

    #[test]
    fn stretching_examples() {
        let s = stretching(&BoundingFunctions::trivial(), 1.0).unwrap();
        assert!(s.grid().nodes().zip(s.values()).all(|(r, v)| (r - v).abs() <= 1e-12));
        let half = BoundingFunctions::new(RadialFunction::Constant(0.5), RadialFunction::zero());
        assert!(matches!(stretching(&half, 1.0), Err(Error::InvalidBounds(_))));
        let decay = BoundingFunctions::new(
            RadialFunction::custom_with_derivative(|r| 1.0 / (1.0 + r), |r| -1.0 / (1.0 + r).powi(2)),
            RadialFunction::zero(),
        );
        let s = stretching(&decay, 1.0).unwrap();
        assert!((s.last() - 1.5).abs() < 1e-13);
        assert!((s.at(0.5).unwrap() - 0.625).abs() < 1e-12);
    }

    #[test]
    fn degenerate_spaces_reproduce_the_base_warping() {
        for b in [-1.0, 0.0, 1.0] {
            let sp = spec(b, RadialFunction::one(), RadialFunction::zero(), 3, 1.0);
            let res = build_comparison_space(&sp).unwrap();
            let w = space_form_warping(CurvatureConstant(b));
            let warp = res.warping_on_r_grid();
            let worst = res
                .grid()
                .nodes()
                .zip(warp.values())
                .map(|(r, v)| (v - w.eval(r)).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-8, "b={b}: {worst}");
            assert!(res.grid().nodes().zip(res.stretch.values()).all(|(r, s)| (r - s).abs() <= 1e-10));
            assert!((res.w_model.warping().eval(0.7) - w.eval(0.7)).abs() <= 1e-8);
        }
    }

    #[test]
    fn euclidean_fixed_point() {
        let res = build_comparison_space(&spec(0.0, RadialFunction::one(), RadialFunction::zero(), 3, 1.0)).unwrap();
        for (r, l) in res.grid().nodes().zip(res.lambda_profile.values()) {
            assert!((l - r * r).abs() < 1e-14);
        }
        let w = res.w_model.warping();
        assert!((w.eval(0.3) - 0.3).abs() < 1e-14);
    }

    #[test]
    fn constant_mean_curvature_identity() {
        let (m, h) = (3usize, 0.1);
        let res = build_comparison_space(&spec(-1.0, RadialFunction::one(), RadialFunction::Constant(h), m, 2.0))
            .unwrap();
        let m1 = (m - 1) as f64;
        for (r, eta_w) in res.grid().nodes().zip(res.eta_on_r_grid()).skip(1).take(4095) {
            let expected = m1 / r.tanh() - m as f64 * h;
            assert!((m1 * eta_w - expected).abs() < 1e-6, "r={r}");
        }
    }

    #[test]
    fn w_model_is_normalized() {
        let sp = spec(
            -1.0,
            RadialFunction::custom_with_derivative(|r| 1.0 / (1.0 + r), |r| -1.0 / (1.0 + r).powi(2)),
            RadialFunction::Constant(0.05),
            3,
            1.0,
        );
        let res = build_comparison_space(&sp).unwrap();
        let w = res.w_model.warping();
        assert!(w.eval(0.0).abs() < 1e-12);
        assert!((w.deriv(0.0) - 1.0).abs() < 1e-6);
        assert!(validate_warping(w, 3).is_valid());
        assert!(res.stretched_radius > 1.0);
        assert!(res.lambda_profile.values()[1..].iter().all(|&l| l > 0.0));
    }

    #[test]
    fn custom_g_without_derivative_is_rejected() {
        let sp = spec(0.0, RadialFunction::custom(|r| 1.0 / (1.0 + r)), RadialFunction::zero(), 2, 1.0);
        assert!(matches!(build_comparison_space(&sp), Err(Error::NonSmoothBounds { .. })));
    }

    #[test]
    fn blowup_is_reported() {
        let sp = spec(0.0, RadialFunction::one(), RadialFunction::Constant(500.0), 3, 1.0);
        assert!(matches!(build_comparison_space(&sp), Err(Error::OdeBlowup { .. })));
    }

    #[test]
    fn hyperbolic_space_is_balanced() {
        let sp = spec(-1.0, RadialFunction::one(), RadialFunction::zero(), 3, 5.0);
        let res = build_comparison_space(&sp).unwrap();
        let report = balance_check(&res, &sp, true);
        assert!(report.balanced, "{report:?}");
        assert!(report.worst_margin > 0.0);
    }

    #[test]
    fn euclidean_space_is_balanced_but_not_strictly() {
        let sp = spec(0.0, RadialFunction::one(), RadialFunction::zero(), 3, 1.0);
        let res = build_comparison_space(&sp).unwrap();
        let report = balance_check(&res, &sp, false);
        assert!(report.balanced && report.worst_margin.abs() < 1e-12, "{report:?}");
        assert!(!balance_check(&res, &sp, true).balanced);
    }

    #[test]
    fn positivity_violation_is_reported() {
        // the built space is irrelevant here; the check reads h from the spec
        let base = spec(-1.0, RadialFunction::one(), RadialFunction::zero(), 3, 2.0);
        let res = build_comparison_space(&base).unwrap();
        let forced = ComparisonSpaceSpec {
            bounds: BoundingFunctions::new(
                RadialFunction::one(),
                RadialFunction::custom(|r: f64| if r > 0.0 { 1.0 / r.tanh() + 1.0 } else { 1e300 }),
            ),
            ..base
        };
        let report = balance_check(&res, &forced, false);
        assert!(!report.balanced);
        assert_eq!(report.positivity_violations.len(), 4096);
    }

    #[test]
    fn small_constant_mean_curvature_is_unbalanced_near_the_pole() {
        // q_W (η_w - h) = (1 - h r/(m+1))/m + O(r²) falls below 1/m for small r
        let sp = spec(-1.0, RadialFunction::one(), RadialFunction::Constant(0.1), 3, 2.0);
        let res = build_comparison_space(&sp).unwrap();
        let report = balance_check(&res, &sp, false);
        assert!(!report.balanced);
        assert!(report.worst_margin < 0.0 && report.worst_radius < 0.2);
        let convexity = transplanted_convexity_check(&res, &sp, 10).unwrap();
        assert!(convexity.skipped && convexity.diagnostic.is_some());
    }

    #[test]
    fn convexity_on_balanced_space_forms() {
        for b in [-1.0, 0.0] {
            let sp = spec(b, RadialFunction::one(), RadialFunction::zero(), 3, 1.5);
            let res = build_comparison_space_on(&sp, 1025).unwrap();
            let report = transplanted_convexity_check(&res, &sp, 10).unwrap();
            assert!(!report.skipped && report.holds, "b={b}: {report:?}");
        }
    }

    #[test]
    fn spec_from_json() {
        let sp = ComparisonSpaceSpec::from_json(
            r#"{ "w": { "kind": "space_form", "b": -1.0 }, "g": "one", "h": { "kind": "constant", "value": 0.1 }, "m": 3, "R": 2.0 }"#,
        )
        .unwrap();
        assert_eq!(sp.dim(), 3);
        assert_eq!(sp.bounds().h.eval(1.0), 0.1);
        let sp = ComparisonSpaceSpec::from_json(r#"{ "w": { "kind": "space_form", "b": 0 }, "h": 0.0, "m": 2, "R": 1 }"#)
            .unwrap();
        assert!(sp.bounds().g.is_one_on(1.0));
        assert!(ComparisonSpaceSpec::from_json(r#"{ "w": { "kind": "space_form", "b": 0 }, "m": 2, "R": 1, "x": 1 }"#)
            .is_err());
        assert!(ComparisonSpaceSpec::from_json(r#"{ "w": { "kind": "space_form", "b": 1 }, "m": 2, "R": 3.2 }"#)
            .is_err());
    }
}
