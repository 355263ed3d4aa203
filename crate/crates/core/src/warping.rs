//! Warping functions and the radial geometry of `w`-model spaces.
//!
//! A model space `M^m_w` is the warped product `[0, R) ×_w S^{m-1}`. All of
//! its radial geometry (mean curvature of distance spheres, radial sectional
//! curvature, sphere and ball volumes) is a functional of `w`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::quadrature::{self, Knots};
use crate::{Error, Result};

/// Computational window for space forms with `b <= 0`.
pub const DEFAULT_DOMAIN_CAP: f64 = 1.0e3;
/// Relative radius below which removable singularities use their limits.
pub const REGULARIZATION: f64 = 1.0e-6;
/// Default tolerance for the pole normalization `w(0) = 0`, `w'(0) = 1`.
pub const POLE_TOLERANCE: f64 = 1.0e-4;

/// A radial profile with two derivatives on `[0, domain_end]`.
///
/// Implementations must be cheap to evaluate and free of interior
/// mutability; model spaces are shared across worker threads.
pub trait RadialProfile: Send + Sync + fmt::Debug {
    fn value(&self, r: f64) -> f64;
    fn first(&self, r: f64) -> f64;
    fn second(&self, r: f64) -> f64;
    fn domain_end(&self) -> f64;
    /// `Some(b)` when the profile is the constant-curvature warping `w_b`.
    fn curvature_constant(&self) -> Option<f64> {
        None
    }
}

/// Shared handle to a warping profile.
#[derive(Clone, Debug)]
pub struct WarpingFunction(Arc<dyn RadialProfile>);

impl WarpingFunction {
    pub fn new(profile: impl RadialProfile + 'static) -> Self {
        Self(Arc::new(profile))
    }

    /// Registers an analytic triple `(w, w', w'')`.
    pub fn analytic<W, D1, D2>(w: W, dw: D1, d2w: D2, domain_end: f64) -> Self
    where
        W: Fn(f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(AnalyticWarping {
            w: Box::new(w),
            dw: Box::new(dw),
            d2w: Box::new(d2w),
            domain_end,
        })
    }

    /// Monotone cubic interpolant through `(r_i, w_i)` samples starting at `r = 0`.
    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self> {
        Ok(Self::new(TabulatedWarping::new(samples)?))
    }

    pub fn from_descriptor(desc: &WarpingDescriptor) -> Result<Self> {
        match desc {
            WarpingDescriptor::SpaceForm { b, cap } => {
                if !b.is_finite() {
                    return Err(Error::InvalidWarping(format!("curvature must be finite, got {b}")));
                }
                Ok(match cap {
                    Some(cap) => space_form_warping_capped(CurvatureConstant(*b), *cap),
                    None => space_form_warping(CurvatureConstant(*b)),
                })
            }
            WarpingDescriptor::Tabulated { samples } => {
                let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s[0], s[1])).collect();
                Self::tabulated(&pairs)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_descriptor(&serde_json::from_str(text)?)
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        self.0.value(r)
    }

    #[inline]
    pub fn deriv(&self, r: f64) -> f64 {
        self.0.first(r)
    }

    #[inline]
    pub fn deriv2(&self, r: f64) -> f64 {
        self.0.second(r)
    }

    pub fn domain_end(&self) -> f64 {
        self.0.domain_end()
    }

    pub fn curvature_constant(&self) -> Option<f64> {
        self.0.curvature_constant()
    }
}

/// JSON form of a warping profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarpingDescriptor {
    SpaceForm {
        b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
    Tabulated {
        samples: Vec<[f64; 2]>,
    },
}

/// Sectional curvature `b` of a simply connected space form.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct CurvatureConstant(pub f64);

#[derive(Debug, Clone, Copy)]
struct SpaceForm {
    b: f64,
    end: f64,
}

impl RadialProfile for SpaceForm {
    fn value(&self, r: f64) -> f64 {
        if self.b > 0.0 {
            let k = self.b.sqrt();
            (k * r).sin() / k
        } else if self.b < 0.0 {
            let k = (-self.b).sqrt();
            (k * r).sinh() / k
        } else {
            r
        }
    }

    fn first(&self, r: f64) -> f64 {
        if self.b > 0.0 {
            (self.b.sqrt() * r).cos()
        } else if self.b < 0.0 {
            ((-self.b).sqrt() * r).cosh()
        } else {
            1.0
        }
    }

    fn second(&self, r: f64) -> f64 {
        -self.b * self.value(r)
    }

    fn domain_end(&self) -> f64 {
        self.end
    }

    fn curvature_constant(&self) -> Option<f64> {
        Some(self.b)
    }
}

/// `w_b(r)`: `sin(√b r)/√b`, `r` or `sinh(√-b r)/√-b` with exact derivatives.
pub fn space_form_warping(b: CurvatureConstant) -> WarpingFunction {
    space_form_warping_capped(b, DEFAULT_DOMAIN_CAP)
}

/// Like [`space_form_warping`] with an explicit window for `b <= 0`.
pub fn space_form_warping_capped(b: CurvatureConstant, cap: f64) -> WarpingFunction {
    let b = b.0;
    let end = if b > 0.0 { PI / b.sqrt() } else { cap };
    WarpingFunction::new(SpaceForm { b, end })
}

type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

struct AnalyticWarping {
    w: ScalarFn,
    dw: ScalarFn,
    d2w: ScalarFn,
    domain_end: f64,
}

impl fmt::Debug for AnalyticWarping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticWarping").field("domain_end", &self.domain_end).finish()
    }
}

impl RadialProfile for AnalyticWarping {
    fn value(&self, r: f64) -> f64 {
        (self.w)(r)
    }
    fn first(&self, r: f64) -> f64 {
        (self.dw)(r)
    }
    fn second(&self, r: f64) -> f64 {
        (self.d2w)(r)
    }
    fn domain_end(&self) -> f64 {
        self.domain_end
    }
}

/// Warping given by samples; derivatives are those of the monotone cubic
/// Hermite interpolant.
#[derive(Debug, Clone)]
pub struct TabulatedWarping {
    r: Vec<f64>,
    w: Vec<f64>,
}

impl TabulatedWarping {
    pub fn new(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::InvalidWarping("need at least three samples".into()));
        }
        if samples[0].0 != 0.0 {
            return Err(Error::InvalidWarping(format!(
                "samples must start at r = 0, got {}",
                samples[0].0
            )));
        }
        if samples.iter().any(|(r, w)| !r.is_finite() || !w.is_finite()) {
            return Err(Error::InvalidWarping("non-finite sample".into()));
        }
        if let Some(i) = samples.windows(2).position(|p| p[1].0 <= p[0].0) {
            return Err(Error::InvalidWarping(format!("radii not increasing at sample {}", i + 1)));
        }
        let (r, w) = samples.iter().copied().unzip();
        Ok(Self { r, w })
    }

    fn clamp(&self, r: f64) -> f64 {
        r.clamp(0.0, self.domain_end())
    }
}

impl RadialProfile for TabulatedWarping {
    fn value(&self, r: f64) -> f64 {
        let r = self.clamp(r);
        let i = self.r.as_slice().locate(r);
        if r == self.r[i] {
            return self.w[i];
        }
        quadrature::hermite(self.r.as_slice(), &self.w, r).0
    }
    fn first(&self, r: f64) -> f64 {
        quadrature::hermite(self.r.as_slice(), &self.w, self.clamp(r)).1
    }
    fn second(&self, r: f64) -> f64 {
        quadrature::hermite(self.r.as_slice(), &self.w, self.clamp(r)).2
    }
    fn domain_end(&self) -> f64 {
        self.r[self.r.len() - 1]
    }
}

// ---------------------------------------------------------------------------
// Pointwise radial geometry

fn eta_with_threshold(w: &WarpingFunction, r: f64, threshold: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveRadius(r));
    }
    if r < threshold {
        // w = r + w'''(0) r^3/6 + ..., so w'/w = 1/r + w''(r)/3 + O(r^3)
        return Ok(1.0 / r + w.deriv2(r) / 3.0);
    }
    Ok(w.deriv(r) / w.eval(r))
}

/// Mean curvature `η_w = w'/w` of the distance sphere of radius `r`.
pub fn eta(w: &WarpingFunction, r: f64) -> Result<f64> {
    eta_with_threshold(w, r, REGULARIZATION * w.domain_end().min(1.0))
}

/// Radial sectional curvature `K_w(r) = -w''(r)/w(r)`.
pub fn curvature_profile(w: &WarpingFunction, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveRadius(r));
    }
    Ok(-w.deriv2(r) / w.eval(r))
}

/// Area `ω_{m-1}` of the unit `(m-1)`-sphere.
pub fn unit_sphere_area(m: usize) -> f64 {
    2.0 * PI.powf(m as f64 / 2.0) / gamma_half(m)
}

/// `Γ(m/2)` for a positive integer `m`.
fn gamma_half(m: usize) -> f64 {
    let (mut acc, mut x) = if m % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    let target = m as f64 / 2.0;
    while x < target - 0.25 {
        acc *= x;
        x += 1.0;
    }
    acc
}

// ---------------------------------------------------------------------------
// Model spaces

/// Dimension, warping and ball radius: the domain of every moment computation.
#[derive(Clone, Debug)]
pub struct ModelSpace {
    dim: usize,
    warping: WarpingFunction,
    radius: f64,
}

impl ModelSpace {
    pub fn new(dim: usize, warping: WarpingFunction, radius: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidSpace(format!("dimension must be at least 2, got {dim}")));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidSpace(format!("radius must be positive, got {radius}")));
        }
        let end = warping.domain_end();
        if radius > end * (1.0 + 1e-12) {
            return Err(Error::InvalidSpace(format!("radius {radius} exceeds the warping domain {end}")));
        }
        if let Some(b) = warping.curvature_constant() {
            if b > 0.0 && radius >= PI / b.sqrt() * (1.0 - 1e-12) {
                return Err(Error::InvalidSpace(format!(
                    "radius {radius} reaches the antipodal pole π/√b = {} where w_b vanishes",
                    PI / b.sqrt()
                )));
            }
        }
        let w_end = warping.eval(radius);
        if !(w_end.is_finite() && w_end > 0.0) {
            return Err(Error::InvalidSpace(format!("w({radius}) = {w_end} is not positive")));
        }
        Ok(Self { dim, warping, radius })
    }

    /// Geodesic ball of radius `radius` in the space form of curvature `b`.
    pub fn space_form(b: f64, dim: usize, radius: f64) -> Result<Self> {
        Self::new(dim, space_form_warping(CurvatureConstant(b)), radius)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn warping(&self) -> &WarpingFunction {
        &self.warping
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Same warping and dimension, different ball radius.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.dim, self.warping.clone(), radius)
    }

    pub fn regularization(&self) -> f64 {
        REGULARIZATION * self.radius
    }

    pub fn eta(&self, r: f64) -> Result<f64> {
        eta_with_threshold(&self.warping, r, self.regularization())
    }

    pub fn curvature(&self, r: f64) -> Result<f64> {
        curvature_profile(&self.warping, r)
    }

    /// `w^{m-1}(r)`, the radial density of the volume form up to `ω_{m-1}`.
    #[inline]
    pub fn density(&self, r: f64) -> f64 {
        self.warping.eval(r).powi(self.dim as i32 - 1)
    }

    /// `Vol(S^w_r) = ω_{m-1} w(r)^{m-1}` for `0 <= r <= R`.
    pub fn sphere_volume(&self, r: f64) -> f64 {
        unit_sphere_area(self.dim) * self.density(r)
    }

    /// `Vol(B^w_r) = ∫_0^r Vol(S^w_t) dt` for `0 <= r <= R`.
    pub fn ball_volume(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let panels = ((1024.0 * r / self.radius).ceil() as usize).clamp(16, 1024);
        unit_sphere_area(self.dim) * quadrature::integrate_fn(|t| self.density(t), 0.0, r, panels)
    }

    /// `q_w(t) = ∫_0^t w^{m-1} / w^{m-1}(t)`, with limit `t/m` at the pole.
    pub fn isoperimetric_quotient(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveRadius(t));
        }
        let m = self.dim as f64;
        if t < self.regularization() {
            return Ok(t / m);
        }
        let wt = self.warping.eval(t);
        let panels = ((1024.0 * t / self.radius).ceil() as usize).clamp(16, 1024);
        Ok(quadrature::integrate_fn(
            |s| (self.warping.eval(s) / wt).powi(self.dim as i32 - 1),
            0.0,
            t,
            panels,
        ))
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum WarpingViolation {
    Dimension { m: usize },
    ValueAtPole { value: f64 },
    SlopeAtPole { slope: f64 },
    NotPositive { r: f64, value: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<WarpingViolation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the pole normalization and positivity on a sampling grid.
pub fn validate_warping(w: &WarpingFunction, m: usize) -> ValidationReport {
    validate_warping_with_tolerance(w, m, POLE_TOLERANCE)
}

pub fn validate_warping_with_tolerance(w: &WarpingFunction, m: usize, tol: f64) -> ValidationReport {
    const SAMPLES: usize = 512;
    let mut violations = Vec::new();
    if m < 2 {
        violations.push(WarpingViolation::Dimension { m });
    }
    let w0 = w.eval(0.0);
    if !(w0.abs() <= tol) {
        violations.push(WarpingViolation::ValueAtPole { value: w0 });
    }
    let slope = w.deriv(0.0);
    if !((slope - 1.0).abs() <= tol) {
        violations.push(WarpingViolation::SlopeAtPole { slope });
    }
    let end = w.domain_end();
    // the endpoint is excluded: for b > 0 the window closes at the antipode
    for i in 1..SAMPLES {
        let r = end * i as f64 / SAMPLES as f64;
        let value = w.eval(r);
        if !(value > 0.0) {
            violations.push(WarpingViolation::NotPositive { r, value });
        }
    }
    ValidationReport { violations }
}
