//! Growth-rate characterization of `λ_1` from the moment spectrum.
//!
//! `λ_1` is the critical `η` for which `Σ (η/c)^n A_n / n!` stops converging.
//! Ratio and root tests on the computed moments both estimate it. The
//! constant `c` depends on whether the moments belong to `Δ` (the
//! probabilist's exit times of `B_{2t}`, `c = 1`) or to `Δ/2` (`c = 2`);
//! both readings are reported.

use serde::{Deserialize, Serialize};

use crate::moments::{EigenEstimate, MomentHierarchy};
use crate::{Error, Result};

/// Smallest hierarchy depth accepted by [`lambda1_growth`].
pub const MIN_DEPTH: usize = 10;
/// Relative gap above which [`reconcile`] flags a disagreement.
pub const GAP_THRESHOLD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Criterion read verbatim with `(η/2)^n`; targets `2 λ_1` for these moments.
    Analyst,
    /// Moments rescaled by `2^n`; targets `λ_1`.
    Probabilist,
}

impl Normalization {
    pub fn factor(self) -> f64 {
        match self {
            Normalization::Analyst => 2.0,
            Normalization::Probabilist => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthEstimate {
    /// `c n A_{n-1} / A_n`.
    pub ratio_estimate: f64,
    /// `c (n! / A_n)^{1/n}`.
    pub root_estimate: f64,
    pub n_used: usize,
    pub normalization: Normalization,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

fn root_at(hierarchy: &MomentHierarchy, n: usize, c: f64) -> f64 {
    c * ((ln_factorial(n) - hierarchy.log_moments()[n]) / n as f64).exp()
}

/// Both growth estimates at `n = k_max`.
pub fn lambda1_growth(hierarchy: &MomentHierarchy, normalization: Normalization) -> Result<GrowthEstimate> {
    let n = hierarchy.k_max();
    if n < MIN_DEPTH {
        return Err(Error::InsufficientDepth { k_max: n, required: MIN_DEPTH });
    }
    let c = normalization.factor();
    Ok(GrowthEstimate {
        ratio_estimate: c * hierarchy.moment_ratio(n)?,
        root_estimate: root_at(hierarchy, n, c),
        n_used: n,
        normalization,
    })
}

/// Root estimates for `n = 1..=k_max`.
pub fn root_sequence(hierarchy: &MomentHierarchy, normalization: Normalization) -> Vec<f64> {
    let c = normalization.factor();
    (1..=hierarchy.k_max()).map(|n| root_at(hierarchy, n, c)).collect()
}

/// One line of the growth report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthReportEntry {
    pub ratio: f64,
    pub root: f64,
    pub normalization: Normalization,
    /// `|ratio - λ̂| / λ̂` against the sandwich midpoint.
    pub gap_vs_sandwich: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconciliationReport {
    pub sandwich_midpoint: f64,
    pub probabilist: GrowthEstimate,
    pub analyst: GrowthEstimate,
    /// Probabilist ratio estimate against the midpoint.
    pub ratio_gap: f64,
    /// Probabilist root estimate against the midpoint.
    pub root_gap: f64,
    /// Analyst ratio estimate against twice the midpoint.
    pub analyst_gap_vs_double: f64,
    /// Any probabilist gap above [`GAP_THRESHOLD`].
    pub flagged: bool,
}

impl ReconciliationReport {
    pub fn entries(&self) -> Vec<GrowthReportEntry> {
        [self.probabilist, self.analyst]
            .into_iter()
            .map(|e| GrowthReportEntry {
                ratio: e.ratio_estimate,
                root: e.root_estimate,
                normalization: e.normalization,
                gap_vs_sandwich: relative_gap(e.ratio_estimate, self.sandwich_midpoint),
            })
            .collect()
    }
}

fn relative_gap(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference
}

/// Compares the growth estimates with a converged sandwich.
pub fn reconcile(hierarchy: &MomentHierarchy, sandwich: &EigenEstimate) -> Result<ReconciliationReport> {
    if !sandwich.converged {
        return Err(Error::Precondition("reconciliation needs a converged sandwich estimate".into()));
    }
    let probabilist = lambda1_growth(hierarchy, Normalization::Probabilist)?;
    let analyst = lambda1_growth(hierarchy, Normalization::Analyst)?;
    let mid = sandwich.estimate;
    let ratio_gap = relative_gap(probabilist.ratio_estimate, mid);
    let root_gap = relative_gap(probabilist.root_estimate, mid);
    Ok(ReconciliationReport {
        sandwich_midpoint: mid,
        probabilist,
        analyst,
        ratio_gap,
        root_gap,
        analyst_gap_vs_double: relative_gap(analyst.ratio_estimate, 2.0 * mid),
        flagged: ratio_gap > GAP_THRESHOLD || root_gap > GAP_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{build_hierarchy, lambda1_sandwich};
    use crate::ModelSpace;
    use std::f64::consts::PI;

    #[test]
    fn ratio_is_the_upper_quotient() {
        let h = build_hierarchy(&ModelSpace::space_form(0.0, 3, 1.0).unwrap(), 40).unwrap();
        let est = lambda1_growth(&h, Normalization::Probabilist).unwrap();
        assert_eq!(est.ratio_estimate, h.upper_quotients()[39]);
        assert!((est.ratio_estimate / (PI * PI) - 1.0).abs() < 1e-2);
        let analyst = lambda1_growth(&h, Normalization::Analyst).unwrap();
        assert_eq!(analyst.ratio_estimate, 2.0 * est.ratio_estimate);
    }

    #[test]
    fn shallow_hierarchies_are_rejected() {
        let h = build_hierarchy(&ModelSpace::space_form(0.0, 2, 1.0).unwrap(), 5).unwrap();
        assert!(matches!(
            lambda1_growth(&h, Normalization::Probabilist),
            Err(Error::InsufficientDepth { k_max: 5, required: 10 })
        ));
    }

    #[test]
    fn root_sequence_approaches_ratio() {
        let h = build_hierarchy(&ModelSpace::space_form(0.0, 2, 1.0).unwrap(), 200).unwrap();
        let ratio = lambda1_growth(&h, Normalization::Probabilist).unwrap().ratio_estimate;
        let gaps: Vec<f64> = root_sequence(&h, Normalization::Probabilist)
            .iter()
            .map(|r| (r - ratio).abs())
            .collect();
        assert!(gaps[19..].windows(2).all(|p| p[1] <= p[0]));
        assert!(gaps[199] < 0.01 * ratio);
    }

    #[test]
    fn reconcile_flat_disk() {
        let space = ModelSpace::space_form(0.0, 2, 1.0).unwrap();
        let h = build_hierarchy(&space, 200).unwrap();
        let s = lambda1_sandwich(&space, 1e-4, 200).unwrap();
        let report = reconcile(&h, &s).unwrap();
        assert!(!report.flagged && report.ratio_gap < 0.01);
        assert!(report.analyst_gap_vs_double < 0.01);
        let json = serde_json::to_value(report.entries()).unwrap();
        assert_eq!(json[0]["normalization"], "probabilist");
        assert!(json[0].get("gap_vs_sandwich").is_some());
        let mut unconverged = s.clone();
        unconverged.converged = false;
        assert!(matches!(reconcile(&h, &unconverged), Err(Error::Precondition(_))));
    }
}
