//! Closed-form eigenvalue bounds and comparison reports.

use std::fmt::Write as _;

use serde::Serialize;

use crate::comparison::{
    balance_check, build_comparison_space_on, BoundingFunctions, ComparisonSpaceSpec, RadialFunction,
};
use crate::moments::{lambda1_sandwich_with, torsional_bounds_on, EigenEstimate, SandwichOptions};
use crate::quadrature::{self, uniform_grid};
use crate::warping::{curvature_profile, ModelSpace};
use crate::{Error, Execution, Result};

/// `√-b coth(R √-b)`, read as `1/R` when `b = 0`.
fn coth_term(b: f64, radius: f64) -> f64 {
    if b == 0.0 {
        1.0 / radius
    } else {
        let k = (-b).sqrt();
        k / (k * radius).tanh()
    }
}

fn check_curvature(b: f64) -> Result<()> {
    if b > 0.0 {
        Err(Error::PositiveCurvature(b))
    } else {
        Ok(())
    }
}

fn check_dimension(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::Precondition(format!("dimension must be at least 2, got {n}")))
    } else {
        Ok(())
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius.is_finite() && radius > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveRadius(radius))
    }
}

/// `(n-1)² |b| / 4`, the fundamental tone of `ℍ^n(b)`.
pub fn mckean_bound(n: usize, b: f64) -> Result<f64> {
    check_curvature(b)?;
    check_dimension(n)?;
    Ok(((n - 1) as f64).powi(2) * b.abs() / 4.0)
}

/// `¼ ((m-1) √-b coth(R√-b) - m h_sup)²` for minimal-type submanifolds with
/// bounded mean curvature; infeasible when the bracket is negative.
pub fn cheung_leung_bound(m: usize, b: f64, h_sup: f64, radius: f64) -> Result<f64> {
    check_curvature(b)?;
    check_dimension(m)?;
    check_radius(radius)?;
    let c = (m - 1) as f64 * coth_term(b, radius);
    let hm = m as f64 * h_sup;
    if c < hm {
        return Err(Error::InfeasibleHypothesis(format!(
            "(m-1)·√-b·coth(R√-b) = {c} is below m·sup h = {hm}"
        )));
    }
    Ok(0.25 * (c - hm).powi(2))
}

/// `¼ max(n/R, (n-1) √-b coth(R√-b))²`.
pub fn bessa_montenegro_bound(n: usize, b: f64, radius: f64) -> Result<f64> {
    check_curvature(b)?;
    check_dimension(n)?;
    check_radius(radius)?;
    let n_f = n as f64;
    Ok(0.25 * (n_f / radius).max((n_f - 1.0) * coth_term(b, radius)).powi(2))
}

/// `L_R² / 4` with `L_R = (m-1) inf η_w - m sup h` over `[0, R]`.
///
/// The infimum skips the pole, where `η_w` diverges to `+∞`.
pub fn l_r_bound(spec: &ComparisonSpaceSpec) -> Result<f64> {
    if !spec.bounds().g.is_one_on(spec.radius()) {
        return Err(Error::Precondition("the L_R bound needs g ≡ 1".into()));
    }
    let space = spec.base_space();
    let grid = uniform_grid(space.radius(), quadrature::DEFAULT_NODES)?;
    let mut inf_eta = f64::INFINITY;
    for r in grid.nodes().skip(1) {
        inf_eta = inf_eta.min(space.eta(r)?);
    }
    let sup_h = spec.bounds().h.sup_on(space.radius(), grid.len());
    let m = spec.dim() as f64;
    let l = (m - 1.0) * inf_eta - m * sup_h;
    if l < 0.0 {
        return Err(Error::InfeasibleHypothesis(format!(
            "(m-1)·inf η_w = {} is below m·sup h = {}",
            (m - 1.0) * inf_eta,
            m * sup_h
        )));
    }
    Ok(0.25 * l * l)
}

// ---------------------------------------------------------------------------
// Constellation bounds

/// Upper bound for `λ_1(D_R)` from a constellation bounded from below.
#[derive(Clone, Debug, Serialize)]
pub struct ExtrinsicUpper {
    pub stretched_radius: f64,
    pub estimate: EigenEstimate,
    /// `Vol(B^W_{s(R)}) / A_1(B^W_{s(R)})`, the end of the chain.
    pub chained_upper: f64,
}

/// Lower bound for `λ_1(D_R)` from a constellation bounded from above.
#[derive(Clone, Debug, Serialize)]
pub struct ExtrinsicLower {
    pub estimate: EigenEstimate,
    /// `L_R²/4` when its hypothesis holds.
    pub l_r_bound: Option<f64>,
}

fn balanced_w_model(spec: &ComparisonSpaceSpec, grid_n: usize) -> Result<ModelSpace> {
    let result = build_comparison_space_on(spec, grid_n)?;
    let balance = balance_check(&result, spec, false);
    if !balance.balanced {
        return Err(Error::InfeasibleHypothesis(format!(
            "comparison space is not balanced from below (worst margin {:.3e} at r = {:.4})",
            balance.worst_margin, balance.worst_radius
        )));
    }
    Ok(result.w_model)
}

/// Sandwich on `B^W_{s(R)}`, an upper bound for `λ_1(D_R)`.
pub fn extrinsic_upper(spec: &ComparisonSpaceSpec, options: &SandwichOptions) -> Result<ExtrinsicUpper> {
    let w_model = balanced_w_model(spec, options.grid_n)?;
    let estimate = lambda1_sandwich_with(&w_model, options)?;
    let (_, chained_upper) = torsional_bounds_on(&w_model, uniform_grid(w_model.radius(), options.grid_n)?)?;
    Ok(ExtrinsicUpper { stretched_radius: w_model.radius(), estimate, chained_upper })
}

/// Sandwich on `B^W_R` for `g ≡ 1`, a lower bound for `λ_1(D_R)`.
pub fn extrinsic_lower(spec: &ComparisonSpaceSpec, options: &SandwichOptions) -> Result<ExtrinsicLower> {
    if !spec.bounds().g.is_one_on(spec.radius()) {
        return Err(Error::Precondition("a constellation bounded from above needs g ≡ 1".into()));
    }
    let w_model = balanced_w_model(spec, options.grid_n)?;
    let estimate = lambda1_sandwich_with(&w_model, options)?;
    let l_r = match l_r_bound(spec) {
        Ok(v) => Some(v),
        Err(e) if e.is_infeasible() => None,
        Err(e) => return Err(e),
    };
    Ok(ExtrinsicLower { estimate, l_r_bound: l_r })
}

// ---------------------------------------------------------------------------
// Intrinsic ordering

#[derive(Clone, Debug, Serialize)]
pub struct OrderingReport {
    /// Sandwich on the space with the pointwise smaller radial curvature.
    pub lower_curvature: EigenEstimate,
    /// Sandwich on the space with the pointwise larger radial curvature.
    pub higher_curvature: EigenEstimate,
    /// `λ̂(lower curvature) - λ̂(higher curvature)`, nonnegative when ordered.
    pub margin: f64,
    /// Whether the arguments had to be swapped to put the smaller curvature first.
    pub swapped: bool,
    pub holds: bool,
}

/// Larger radial curvature means smaller `λ_1`.
///
/// The arguments may come in either order as long as one curvature profile
/// dominates the other on the grid.
pub fn intrinsic_ordering_check(
    space_lo: &ModelSpace,
    space_hi: &ModelSpace,
    options: &SandwichOptions,
) -> Result<OrderingReport> {
    if space_lo.dim() != space_hi.dim() || (space_lo.radius() - space_hi.radius()).abs() > 1e-12 * space_lo.radius()
    {
        return Err(Error::Precondition("spaces must share dimension and radius".into()));
    }
    let grid = uniform_grid(space_lo.radius(), 257)?;
    let (mut lo_le_hi, mut hi_le_lo) = (true, true);
    for r in grid.nodes().skip(1) {
        let a = curvature_profile(space_lo.warping(), r)?;
        let b = curvature_profile(space_hi.warping(), r)?;
        let slack = 1e-10 * (1.0 + a.abs().max(b.abs()));
        lo_le_hi &= a <= b + slack;
        hi_le_lo &= b <= a + slack;
    }
    let swapped = match (lo_le_hi, hi_le_lo) {
        (true, _) => false,
        (false, true) => true,
        (false, false) => return Err(Error::NotComparable("radial curvature profiles cross".into())),
    };
    let (lo, hi) = if swapped { (space_hi, space_lo) } else { (space_lo, space_hi) };
    let (a, b) = Execution::default().join(|| lambda1_sandwich_with(lo, options), || lambda1_sandwich_with(hi, options));
    let (lower_curvature, higher_curvature) = (a?, b?);
    let margin = lower_curvature.estimate - higher_curvature.estimate;
    let holds = margin >= -2.0 * options.tol * lower_curvature.estimate;
    Ok(OrderingReport { lower_curvature, higher_curvature, margin, swapped, holds })
}

// ---------------------------------------------------------------------------
// Reports and sweeps

/// Every bound available for a space-form ball next to the sandwich.
#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub curvature: f64,
    pub dim: usize,
    pub radius: f64,
    pub h_sup: f64,
    pub mckean: Option<f64>,
    pub cheung_leung: Option<f64>,
    pub bessa_montenegro: Option<f64>,
    pub l_r_bound: Option<f64>,
    pub torsional_lower: f64,
    pub torsional_upper: f64,
    pub lambda_estimate: EigenEstimate,
}

impl BoundsReport {
    /// Lower bounds stay below the sandwich, the torsional upper bound above it.
    pub fn is_consistent(&self) -> bool {
        let upper = self.lambda_estimate.upper;
        let lowers = [self.mckean, self.cheung_leung, self.bessa_montenegro, Some(self.torsional_lower)];
        lowers.iter().flatten().all(|&v| v <= upper) && self.torsional_upper >= self.lambda_estimate.lower
    }
}

fn optional(result: Result<f64>) -> Result<Option<f64>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_infeasible() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Bounds for the ball of radius `radius` in the space form of curvature `b`.
///
/// `h_sup` enters the Cheung-Leung and `L_R` bounds; the remaining values
/// describe the ambient ball itself.
pub fn bounds_report(b: f64, dim: usize, radius: f64, h_sup: f64, options: &SandwichOptions) -> Result<BoundsReport> {
    let space = ModelSpace::space_form(b, dim, radius)?;
    let lambda_estimate = lambda1_sandwich_with(&space, options)?;
    let (torsional_lower, torsional_upper) =
        torsional_bounds_on(&space, uniform_grid(radius, options.grid_n)?)?;
    let spec = ComparisonSpaceSpec::new(
        space.warping().clone(),
        BoundingFunctions::new(RadialFunction::one(), RadialFunction::Constant(h_sup)),
        dim,
        radius,
    )?;
    Ok(BoundsReport {
        curvature: b,
        dim,
        radius,
        h_sup,
        mckean: optional(mckean_bound(dim, b))?,
        cheung_leung: optional(cheung_leung_bound(dim, b, h_sup, radius))?,
        bessa_montenegro: optional(bessa_montenegro_bound(dim, b, radius))?,
        l_r_bound: optional(l_r_bound(&spec))?,
        torsional_lower,
        torsional_upper,
        lambda_estimate,
    })
}

/// One radius of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub radius: f64,
    pub mckean: Option<f64>,
    pub cheung_leung: Option<f64>,
    pub bessa_montenegro: Option<f64>,
    pub l_r: Option<f64>,
    pub torsional_lower: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

impl From<&BoundsReport> for SweepRow {
    fn from(r: &BoundsReport) -> Self {
        SweepRow {
            radius: r.radius,
            mckean: r.mckean,
            cheung_leung: r.cheung_leung,
            bessa_montenegro: r.bessa_montenegro,
            l_r: r.l_r_bound,
            torsional_lower: r.torsional_lower,
            lambda_lo: r.lambda_estimate.lower,
            lambda_hi: r.lambda_estimate.upper,
        }
    }
}

/// Bounds at each radius, in input order whatever the execution mode.
pub fn sweep_radii(
    b: f64,
    dim: usize,
    h_sup: f64,
    radii: &[f64],
    options: &SandwichOptions,
    execution: Execution,
) -> Result<Vec<SweepRow>> {
    execution
        .map_indexed(radii.len(), |i| bounds_report(b, dim, radii[i], h_sup, options).map(|r| SweepRow::from(&r)))
        .into_iter()
        .collect()
}

pub const SWEEP_HEADER: &str = "R,mckean,cheung_leung,bessa_montenegro,l_r,torsional_lower,lambda_lo,lambda_hi";

/// CSV with one row per radius; infeasible bounds are left empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    fn cell(v: Option<f64>) -> String {
        v.map(|x| format!("{x:.12e}")).unwrap_or_default()
    }
    let mut out = format!("{SWEEP_HEADER}\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.12e},{:.12e},{:.12e}",
            row.radius,
            cell(row.mckean),
            cell(row.cheung_leung),
            cell(row.bessa_montenegro),
            cell(row.l_r),
            row.torsional_lower,
            row.lambda_lo,
            row.lambda_hi
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warping::{space_form_warping, CurvatureConstant};

    fn spec(b: f64, h: f64, m: usize, radius: f64) -> ComparisonSpaceSpec {
        ComparisonSpaceSpec::new(
            space_form_warping(CurvatureConstant(b)),
            BoundingFunctions::new(RadialFunction::one(), RadialFunction::Constant(h)),
            m,
            radius,
        )
        .unwrap()
    }

    #[test]
    fn mckean_examples() {
        assert_eq!(mckean_bound(2, -1.0).unwrap(), 0.25);
        assert_eq!(mckean_bound(3, -4.0).unwrap(), 4.0);
        assert_eq!(mckean_bound(3, 0.0).unwrap(), 0.0);
        assert!(matches!(mckean_bound(3, 1.0), Err(Error::PositiveCurvature(_))));
    }

    #[test]
    fn cheung_leung_examples() {
        assert!((cheung_leung_bound(2, -1.0, 0.0, 40.0).unwrap() - 0.25).abs() < 1e-12);
        assert!((cheung_leung_bound(3, -1.0, 1.0 / 3.0, 40.0).unwrap() - 0.25).abs() < 1e-12);
        let err = cheung_leung_bound(2, 0.0, 1.0, 1.0).unwrap_err();
        assert!(err.is_infeasible());
    }

    #[test]
    fn bessa_montenegro_examples() {
        assert!((bessa_montenegro_bound(3, 0.0, 1.0).unwrap() - 2.25).abs() < 1e-15);
        assert!((bessa_montenegro_bound(2, -1.0, 40.0).unwrap() - 0.25).abs() < 1e-12);
        for r in [0.5, 1.0, 3.0] {
            let bm = bessa_montenegro_bound(3, -1.0, r).unwrap();
            assert!(bm >= cheung_leung_bound(3, -1.0, 0.0, r).unwrap());
            assert!(bm >= mckean_bound(3, -1.0).unwrap());
        }
    }

    #[test]
    fn l_r_examples() {
        let coth2 = 1.0 / 2.0f64.tanh();
        assert!((l_r_bound(&spec(-1.0, 0.0, 3, 2.0)).unwrap() - coth2 * coth2).abs() < 1e-12);
        assert!((l_r_bound(&spec(0.0, 0.0, 3, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        let forced = (2.0 / 2.0f64.tanh()) / 3.0 + 1.0;
        assert!(matches!(l_r_bound(&spec(-1.0, forced, 3, 2.0)), Err(Error::InfeasibleHypothesis(_))));
    }

    #[test]
    fn extrinsic_degenerate_cases() {
        let options = SandwichOptions { grid_n: 1025, ..SandwichOptions::default() };
        let sp = spec(-1.0, 0.0, 3, 1.0);
        let direct = lambda1_sandwich_with(&sp.base_space(), &options).unwrap();
        let upper = extrinsic_upper(&sp, &options).unwrap();
        assert!((upper.estimate.estimate / direct.estimate - 1.0).abs() < 1e-8);
        assert!(upper.chained_upper >= upper.estimate.upper);
        let lower = extrinsic_lower(&sp, &options).unwrap();
        assert!((lower.estimate.estimate / direct.estimate - 1.0).abs() < 1e-8);
        assert!(lower.l_r_bound.unwrap() <= lower.estimate.lower);
    }

    #[test]
    fn extrinsic_lower_guards() {
        let options = SandwichOptions { grid_n: 257, ..SandwichOptions::default() };
        let sp = ComparisonSpaceSpec::new(
            space_form_warping(CurvatureConstant(-1.0)),
            BoundingFunctions::new(
                RadialFunction::custom_with_derivative(|r| 1.0 / (1.0 + r), |r| -1.0 / (1.0 + r).powi(2)),
                RadialFunction::zero(),
            ),
            3,
            1.0,
        )
        .unwrap();
        assert!(matches!(extrinsic_lower(&sp, &options), Err(Error::Precondition(_))));
        assert!(extrinsic_upper(&spec(-1.0, 0.1, 3, 2.0), &options).unwrap_err().is_infeasible());
    }

    #[test]
    fn intrinsic_ordering() {
        let options = SandwichOptions { grid_n: 1025, ..SandwichOptions::default() };
        let hyp = ModelSpace::space_form(-1.0, 2, 1.0).unwrap();
        let flat = ModelSpace::space_form(0.0, 2, 1.0).unwrap();
        let cap = ModelSpace::space_form(1.0, 2, 1.0).unwrap();
        let r = intrinsic_ordering_check(&hyp, &flat, &options).unwrap();
        assert!(r.holds && !r.swapped && r.margin > 0.0);
        let r = intrinsic_ordering_check(&cap, &flat, &options).unwrap();
        assert!(r.holds && r.swapped && r.margin > 0.0);
        let r = intrinsic_ordering_check(&flat, &flat, &options).unwrap();
        assert!(r.holds && r.margin.abs() <= 2.0 * options.tol * r.lower_curvature.estimate);
        let bumpy = ModelSpace::new(
            2,
            crate::WarpingFunction::analytic(
                |r| r + r.powi(3) * (r - 0.5) / 3.0,
                |r| 1.0 + (4.0 * r.powi(3) - 1.5 * r * r) / 3.0,
                |r| (12.0 * r * r - 3.0 * r) / 3.0,
                1.0,
            ),
            1.0,
        )
        .unwrap();
        assert!(matches!(intrinsic_ordering_check(&bumpy, &flat, &options), Err(Error::NotComparable(_))));
    }

    #[test]
    fn sweep_is_ordered_and_deterministic() {
        let options = SandwichOptions { grid_n: 513, ..SandwichOptions::default() };
        let radii = [0.5, 1.0, 1.5, 2.0];
        let par = sweep_radii(-1.0, 2, 0.0, &radii, &options, Execution::Parallel).unwrap();
        let seq = sweep_radii(-1.0, 2, 0.0, &radii, &options, Execution::Sequential).unwrap();
        assert_eq!(par, seq);
        assert!(par.windows(2).all(|p| p[1].lambda_hi < p[0].lambda_hi));
        let csv = sweep_csv(&par);
        assert!(csv.starts_with(SWEEP_HEADER));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn report_is_consistent() {
        let options = SandwichOptions { grid_n: 1025, ..SandwichOptions::default() };
        let report = bounds_report(-1.0, 3, 2.0, 0.0, &options).unwrap();
        assert!(report.is_consistent(), "{report:?}");
        let report = bounds_report(1.0, 3, 1.0, 0.0, &options).unwrap();
        assert!(report.mckean.is_none() && report.cheung_leung.is_none());
        assert!(report.is_consistent());
    }
}
