//! Exit-time moment hierarchy and the two-sided eigenvalue sandwich.
//!
//! The hierarchy `Δu_k + k u_{k-1} = 0`, `u_k|∂B = 0`, `u_0 = 1` is iterated
//! in normalized form `g_k = u_k / u_k(0)`; the raw moments grow like
//! `k! λ^{-k}` and are only ever handled through their logarithms.

use std::fmt::Write as _;

use serde::Serialize;

use crate::quadrature::{self, uniform_grid, RadialGrid, RadialSamples};
use crate::warping::{unit_sphere_area, ModelSpace};
use crate::{Error, Execution, Result};

/// Relative slack for comparing quotients that agree up to rounding.
const ROUNDING_SLACK: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Green operator

/// Radial Dirichlet Green operator of `-Δ` on a fixed grid,
/// `G(u)(r) = ∫_r^R I(t) / w^{m-1}(t) dt` with `I(t) = ∫_0^t w^{m-1} u`.
///
/// The inner integral is a product rule: on each interval `u` is replaced by
/// the cubic through four neighbouring nodes and integrated against the
/// density with Gauss-Legendre points. Near the pole the density vanishes
/// like `r^{m-1}`, where plain Simpson would lose relative accuracy.
#[derive(Clone, Debug)]
pub struct GreenOperator {
    grid: RadialGrid,
    /// First stencil node of each interval.
    start: Vec<usize>,
    /// Weights of the four stencil values on each interval.
    weights: Vec<[f64; 4]>,
    /// `w^{m-1}` at the nodes.
    density: Vec<f64>,
    execution: Execution,
}

impl GreenOperator {
    pub fn new(space: &ModelSpace, grid: RadialGrid) -> Result<Self> {
        if (grid.radius() - space.radius()).abs() > 1e-12 * space.radius() {
            return Err(Error::InvalidGrid(format!(
                "grid radius {} does not match the ball radius {}",
                grid.radius(),
                space.radius()
            )));
        }
        let n = grid.len();
        let h = grid.step();
        let mut start = Vec::with_capacity(n - 1);
        let mut weights = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let s = i.saturating_sub(1).min(n - 4);
            let x0 = grid.node(s);
            let mut c = [0.0; 4];
            for (x, wq) in quadrature::gauss_points(grid.node(i), grid.node(i + 1)) {
                let t = (x - x0) / h;
                let rho = wq * space.density(x);
                for (j, cj) in c.iter_mut().enumerate() {
                    *cj += rho * lagrange4(j, t);
                }
            }
            start.push(s);
            weights.push(c);
        }
        let density = grid.nodes().map(|r| space.density(r)).collect();
        Ok(Self { grid, start, weights, density, execution: Execution::Sequential })
    }

    /// Parallelizes the per-interval sums of [`GreenOperator::inner`].
    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    fn interval_sum(&self, u: &[f64], i: usize) -> f64 {
        let s = self.start[i];
        let c = &self.weights[i];
        c[0] * u[s] + c[1] * u[s + 1] + c[2] * u[s + 2] + c[3] * u[s + 3]
    }

    /// `I(r_i) = ∫_0^{r_i} w^{m-1} u` at every node.
    pub fn inner(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let pieces: Vec<f64> = if self.execution.is_parallel() {
            self.execution.map_indexed(n - 1, |i| self.interval_sum(u, i))
        } else {
            (0..n - 1).map(|i| self.interval_sum(u, i)).collect()
        };
        let mut out = Vec::with_capacity(n);
        let mut acc = 0.0;
        out.push(0.0);
        for p in pieces {
            acc += p;
            out.push(acc);
        }
        out
    }

    /// `G` from a precomputed inner integral.
    pub fn outer(&self, inner: &[f64]) -> RadialSamples {
        let mut quotient: Vec<f64> = inner.iter().zip(&self.density).map(|(i, d)| i / d).collect();
        quotient[0] = 0.0;
        quadrature::tail_integral(&RadialSamples::from_raw(self.grid, quotient))
    }

    pub fn apply(&self, u: &RadialSamples) -> RadialSamples {
        self.outer(&self.inner(u.values()))
    }
}

/// Cardinal cubic through the nodes `0, 1, 2, 3`.
#[inline]
fn lagrange4(j: usize, t: f64) -> f64 {
    match j {
        0 => -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        1 => t * (t - 2.0) * (t - 3.0) / 2.0,
        2 => -t * (t - 1.0) * (t - 3.0) / 2.0,
        _ => t * (t - 1.0) * (t - 2.0) / 6.0,
    }
}

/// `G(u)` for samples on a grid over `[0, R]` of `space`.
pub fn green_apply(space: &ModelSpace, u: &RadialSamples) -> Result<RadialSamples> {
    Ok(GreenOperator::new(space, *u.grid())?.apply(u))
}

// ---------------------------------------------------------------------------
// Hierarchy

/// One step of the normalized recursion.
struct Step {
    g: RadialSamples,
    inner: Vec<f64>,
    /// `c_k = G(g_{k-1})(0)`.
    center: f64,
    /// `a_k = ω ∫ w^{m-1} g_k`.
    mass: f64,
}

struct Iteration<'a> {
    op: &'a GreenOperator,
    omega: f64,
    prev_inner: Vec<f64>,
    k: usize,
}

impl<'a> Iteration<'a> {
    fn start(op: &'a GreenOperator, omega: f64) -> (Self, RadialSamples, f64) {
        let ones = RadialSamples::from_raw(op.grid, vec![1.0; op.grid.len()]);
        let inner = op.inner(ones.values());
        let mass = omega * inner[inner.len() - 1];
        (Self { op, omega, prev_inner: inner, k: 0 }, ones, mass)
    }

    fn next(&mut self) -> Result<Step> {
        self.k += 1;
        let k = self.k;
        let gu = self.op.outer(&self.prev_inner);
        let center = gu.first();
        if !(center.is_finite() && center > 0.0) {
            return Err(Error::NonFiniteIteration { k, value: center });
        }
        let g = gu.scaled(1.0 / center);
        if let Some(v) = g.values().iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIteration { k, value: *v });
        }
        let inner = self.op.inner(g.values());
        let mass = self.omega * inner[inner.len() - 1];
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::NonFiniteIteration { k, value: mass });
        }
        self.prev_inner = inner.clone();
        Ok(Step { g, inner, center, mass })
    }
}

/// Normalized moment functions and both quotient sequences.
///
/// Index `k` of the per-level vectors refers to level `k` (`0..=k_max`);
/// the quotient vectors start at `k = 1`.
#[derive(Clone, Debug)]
pub struct MomentHierarchy {
    space: ModelSpace,
    op: GreenOperator,
    k_max: usize,
    normalized: Vec<RadialSamples>,
    inner: Vec<Vec<f64>>,
    centers: Vec<f64>,
    masses: Vec<f64>,
    log_center: Vec<f64>,
    log_moments: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl MomentHierarchy {
    fn empty(space: &ModelSpace, op: GreenOperator) -> Self {
        let omega = unit_sphere_area(space.dim());
        let (it, ones, mass) = Iteration::start(&op, omega);
        let inner0 = it.prev_inner;
        Self {
            space: space.clone(),
            op,
            k_max: 0,
            normalized: vec![ones],
            inner: vec![inner0],
            centers: vec![f64::NAN],
            masses: vec![mass],
            log_center: vec![0.0],
            log_moments: vec![mass.ln()],
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    fn push(&mut self, step: Step) {
        let k = self.k_max + 1;
        let rho = 1.0 / step.center;
        let sigma = rho * self.masses[k - 1] / step.mass;
        let log_center = (k as f64).ln() + self.log_center[k - 1] + step.center.ln();
        self.log_moments.push(log_center + step.mass.ln());
        self.log_center.push(log_center);
        self.normalized.push(step.g);
        self.inner.push(step.inner);
        self.centers.push(step.center);
        self.masses.push(step.mass);
        self.lower.push(rho);
        self.upper.push(sigma);
        self.k_max = k;
    }

    pub fn space(&self) -> &ModelSpace {
        &self.space
    }

    pub fn grid(&self) -> &RadialGrid {
        self.op.grid()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `g_k`, `k = 0..=k_max`.
    pub fn normalized_function(&self, k: usize) -> Result<&RadialSamples> {
        self.normalized.get(k).ok_or(Error::IndexOutOfRange { k, k_max: self.k_max })
    }

    pub fn normalized_functions(&self) -> &[RadialSamples] {
        &self.normalized
    }

    /// `ln u_k(0)`, `k = 0..=k_max`.
    pub fn log_center_values(&self) -> &[f64] {
        &self.log_center
    }

    /// `ln A_k`, `k = 0..=k_max`; `A_0 = Vol(B_R)`.
    pub fn log_moments(&self) -> &[f64] {
        &self.log_moments
    }

    /// `ρ_k = k u_{k-1}(0) / u_k(0)` for `k = 1..=k_max`.
    pub fn lower_quotients(&self) -> &[f64] {
        &self.lower
    }

    /// `σ_k = k A_{k-1} / A_k` for `k = 1..=k_max`.
    pub fn upper_quotients(&self) -> &[f64] {
        &self.upper
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.k_max {
            Err(Error::IndexOutOfRange { k, k_max: self.k_max })
        } else {
            Ok(())
        }
    }

    /// `n A_{n-1} / A_n`, evaluated without leaving the normalized scale.
    pub fn moment_ratio(&self, n: usize) -> Result<f64> {
        self.check_index(n)?;
        Ok(self.upper[n - 1])
    }

    /// `ln A_k` via the volume integral of `u_k`.
    pub fn moment(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.log_moments[k])
    }

    /// `ln A_k` via the divergence theorem,
    /// `A_k = -ũ'_{k+1}(R) Vol(S_R) / (k+1) = -u_k(0) G(g_k)'(R) Vol(S_R)`,
    /// with a one-sided three-point boundary derivative.
    pub fn moment_from_boundary(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        let gk = self.op.outer(&self.inner[k]);
        let v = gk.values();
        let n = v.len();
        let slope = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * self.grid().step());
        let flux = -slope * self.space.sphere_volume(self.space.radius());
        Ok(self.log_center[k] + flux.ln())
    }

    /// Both routes to `A_k` and their relative disagreement.
    pub fn moment_check(&self, k: usize) -> Result<MomentCheck> {
        let log_volume = self.moment(k)?;
        let log_boundary = self.moment_from_boundary(k)?;
        Ok(MomentCheck {
            k,
            log_volume,
            log_boundary,
            relative_gap: (log_boundary - log_volume).exp_m1().abs(),
        })
    }

    /// `σ_k` recomputed from boundary-derivative moments, `1 <= k <= k_max`.
    pub fn upper_quotient_from_boundary(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        let current = self.moment_from_boundary(k)?;
        let previous = if k == 1 { self.log_moments[0] } else { self.moment_from_boundary(k - 1)? };
        Ok(k as f64 * (previous - current).exp())
    }

    /// `k u_{k-1}(r) / u_k(r) = ρ_k g_{k-1}(r) / g_k(r)`.
    ///
    /// At `r = R` both functions vanish and the value is the quotient of
    /// their boundary slopes.
    pub fn barta_quotient(&self, k: usize) -> Result<RadialSamples> {
        self.check_index(k)?;
        let prev = self.normalized[k - 1].values();
        let cur = self.normalized[k].values();
        let rho = self.lower[k - 1];
        let n = cur.len();
        let mut values: Vec<f64> = (0..n - 1).map(|i| rho * prev[i] / cur[i]).collect();
        let at_boundary = if k == 1 {
            // g_0 does not vanish on the boundary and the quotient blows up;
            // the last interior value keeps the samples finite
            values[n - 2]
        } else {
            let slope = |v: &[f64]| 3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3];
            rho * slope(prev) / slope(cur)
        };
        values.push(at_boundary);
        Ok(RadialSamples::from_raw(*self.grid(), values))
    }

    /// Rows `k,rho_k,sigma_k,ln_A_k`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,rho_k,sigma_k,ln_A_k\n");
        for k in 1..=self.k_max {
            let _ = writeln!(
                out,
                "{},{:.15e},{:.15e},{:.15e}",
                k,
                self.lower[k - 1],
                self.upper[k - 1],
                self.log_moments[k]
            );
        }
        out
    }
}

/// Volume and boundary routes to one moment.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentCheck {
    pub k: usize,
    pub log_volume: f64,
    pub log_boundary: f64,
    pub relative_gap: f64,
}

/// Builds `g_0..g_{k_max}` on the default grid.
pub fn build_hierarchy(space: &ModelSpace, k_max: usize) -> Result<MomentHierarchy> {
    build_hierarchy_on(space, uniform_grid(space.radius(), quadrature::DEFAULT_NODES)?, k_max, Execution::Sequential)
}

pub fn build_hierarchy_on(
    space: &ModelSpace,
    grid: RadialGrid,
    k_max: usize,
    execution: Execution,
) -> Result<MomentHierarchy> {
    if k_max < 2 {
        return Err(Error::Precondition(format!("k_max must be at least 2, got {k_max}")));
    }
    let op = GreenOperator::new(space, grid)?.with_execution(execution);
    let mut hierarchy = MomentHierarchy::empty(space, op.clone());
    let omega = unit_sphere_area(space.dim());
    let (mut it, _, _) = Iteration::start(&op, omega);
    for _ in 0..k_max {
        hierarchy.push(it.next()?);
    }
    Ok(hierarchy)
}

// ---------------------------------------------------------------------------
// Sandwich

/// Stopping rule and discretization of [`lambda1_sandwich_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SandwichOptions {
    pub tol: f64,
    pub k_max: usize,
    pub grid_n: usize,
    pub execution: Execution,
}

impl Default for SandwichOptions {
    fn default() -> Self {
        Self { tol: 1e-4, k_max: 200, grid_n: quadrature::DEFAULT_NODES, execution: Execution::Sequential }
    }
}

/// Two-sided estimate of `λ_1` with the normalized eigenfunction.
#[derive(Clone, Debug, Serialize)]
pub struct EigenEstimate {
    pub lower: f64,
    pub upper: f64,
    /// Midpoint of `[lower, upper]`.
    pub estimate: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_norm: f64,
    #[serde(skip)]
    pub eigenfunction: RadialSamples,
}

impl EigenEstimate {
    pub fn relative_width(&self) -> f64 {
        (self.upper - self.lower) / self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// `λ_1` on the default grid, see [`lambda1_sandwich_with`].
pub fn lambda1_sandwich(space: &ModelSpace, tol: f64, k_max: usize) -> Result<EigenEstimate> {
    lambda1_sandwich_with(space, &SandwichOptions { tol, k_max, ..SandwichOptions::default() })
}

/// Iterates the hierarchy until `σ_k - ρ_k <= tol ρ_k`.
///
/// Every step checks `ρ_{k-1} <= ρ_k <= σ_k <= σ_{k-1}` up to rounding.
pub fn lambda1_sandwich_with(space: &ModelSpace, options: &SandwichOptions) -> Result<EigenEstimate> {
    let grid = uniform_grid(space.radius(), options.grid_n)?;
    lambda1_sandwich_on(space, grid, options)
}

pub fn lambda1_sandwich_on(space: &ModelSpace, grid: RadialGrid, options: &SandwichOptions) -> Result<EigenEstimate> {
    if !(options.tol > 0.0) {
        return Err(Error::Precondition(format!("tol must be positive, got {}", options.tol)));
    }
    if options.k_max < 1 {
        return Err(Error::Precondition("k_max must be at least 1".into()));
    }
    let op = GreenOperator::new(space, grid)?.with_execution(options.execution);
    let omega = unit_sphere_area(space.dim());
    let (mut it, _, mut prev_mass) = Iteration::start(&op, omega);
    let (mut prev_rho, mut prev_sigma) = (0.0_f64, f64::INFINITY);
    let mut last = None;
    for k in 1..=options.k_max {
        let step = it.next()?;
        let rho = 1.0 / step.center;
        let sigma = rho * prev_mass / step.mass;
        prev_mass = step.mass;
        check_sandwich(k, prev_rho, rho, sigma, prev_sigma)?;
        prev_rho = rho;
        prev_sigma = sigma;
        let converged = sigma - rho <= options.tol * rho;
        last = Some((step.g, rho, sigma, k, converged));
        if converged {
            break;
        }
    }
    let (g, lower, upper, iterations, converged) = last.expect("at least one iteration");
    let estimate_value = 0.5 * (lower + upper);
    let residual_norm = eigen_residual(space, estimate_value, &g);
    let estimate = EigenEstimate {
        lower,
        upper,
        estimate: estimate_value,
        iterations,
        converged,
        residual_norm,
        eigenfunction: g,
    };
    if converged {
        Ok(estimate)
    } else {
        Err(Error::NotConverged(Box::new(estimate)))
    }
}

fn check_sandwich(k: usize, prev_rho: f64, rho: f64, sigma: f64, prev_sigma: f64) -> Result<()> {
    let slack = ROUNDING_SLACK * sigma.abs();
    if rho < prev_rho - slack {
        return Err(Error::MonotonicityViolated { k, detail: format!("ρ decreased from {prev_rho} to {rho}") });
    }
    if sigma > prev_sigma + slack {
        return Err(Error::MonotonicityViolated {
            k,
            detail: format!("σ increased from {prev_sigma} to {sigma}"),
        });
    }
    if rho > sigma + slack {
        return Err(Error::MonotonicityViolated { k, detail: format!("ρ = {rho} exceeds σ = {sigma}") });
    }
    Ok(())
}

/// Counts sandwich violations over a built hierarchy (zero when the
/// quotient sequences are monotone and ordered up to rounding).
pub fn sandwich_violations(hierarchy: &MomentHierarchy) -> Vec<Error> {
    let rho = hierarchy.lower_quotients();
    let sigma = hierarchy.upper_quotients();
    let mut violations = Vec::new();
    let (mut prev_rho, mut prev_sigma) = (0.0, f64::INFINITY);
    for k in 1..=hierarchy.k_max() {
        if let Err(e) = check_sandwich(k, prev_rho, rho[k - 1], sigma[k - 1], prev_sigma) {
            violations.push(e);
        }
        prev_rho = rho[k - 1];
        prev_sigma = sigma[k - 1];
    }
    violations
}

/// `max |g'' + (m-1) η_w g' + λ g| / max |g|` over nodes in `[0.05R, 0.95R]`.
pub fn eigen_residual(space: &ModelSpace, lambda: f64, g: &RadialSamples) -> f64 {
    let scale = g.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    let d1 = quadrature::derivative(g);
    let d2 = quadrature::second_derivative(g);
    let grid = g.grid();
    let (lo, hi) = (0.05 * grid.radius(), 0.95 * grid.radius());
    let m1 = (space.dim() - 1) as f64;
    let mut worst = 0.0_f64;
    for (i, r) in grid.nodes().enumerate() {
        if r < lo || r > hi || r <= 0.0 {
            continue;
        }
        let eta = space.eta(r).unwrap_or(f64::NAN);
        let res = d2.values()[i] + m1 * eta * d1.values()[i] + lambda * g.values()[i];
        worst = worst.max(res.abs());
    }
    worst / scale
}

/// `(1 / ∫_0^R q_w, Vol(B_R) / A_1)`, which bracket `λ_1`.
pub fn torsional_bounds(space: &ModelSpace) -> Result<(f64, f64)> {
    torsional_bounds_on(space, uniform_grid(space.radius(), quadrature::DEFAULT_NODES)?)
}

pub fn torsional_bounds_on(space: &ModelSpace, grid: RadialGrid) -> Result<(f64, f64)> {
    let op = GreenOperator::new(space, grid)?;
    let omega = unit_sphere_area(space.dim());
    let (mut it, _, volume) = Iteration::start(&op, omega);
    let step = it.next()?;
    // G(1)(0) = ∫ q_w and A_1 = u_1(0) a_1 with u_1(0) = c_1
    Ok((1.0 / step.center, volume / (step.center * step.mass)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(space: &ModelSpace, n: usize) -> RadialGrid {
        uniform_grid(space.radius(), n).unwrap()
    }

    #[test]
    fn green_of_constant_in_flat_balls() {
        for m in [2usize, 3, 5] {
            let space = ModelSpace::space_form(0.0, m, 1.0).unwrap();
            let ones = RadialSamples::from_fn(grid(&space, 257), |_| 1.0).unwrap();
            let gu = green_apply(&space, &ones).unwrap();
            for (r, v) in gu.grid().nodes().zip(gu.values()) {
                let exact = (1.0 - r * r) / (2.0 * m as f64);
                assert!((v - exact).abs() < 1e-13, "m={m} r={r}: {v} vs {exact}");
            }
            assert_eq!(gu.last(), 0.0);
        }
    }

    #[test]
    fn green_of_zero_is_zero() {
        let space = ModelSpace::space_form(-1.0, 3, 2.0).unwrap();
        let zero = RadialSamples::from_fn(grid(&space, 65), |_| 0.0).unwrap();
        assert_eq!(green_apply(&space, &zero).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn green_inverts_the_laplacian() {
        // u = cos(πr/2) on the flat 3-ball; -Δ G(u) = u, G(u)(1) = 0
        let space = ModelSpace::space_form(0.0, 3, 1.0).unwrap();
        let u = RadialSamples::from_fn(grid(&space, 1025), |r| (PI * r / 2.0).cos()).unwrap();
        let v = green_apply(&space, &u).unwrap();
        let d1 = quadrature::derivative(&v);
        let d2 = quadrature::second_derivative(&v);
        for i in (50..1000).step_by(97) {
            let r = v.grid().node(i);
            let lap = d2.values()[i] + 2.0 / r * d1.values()[i];
            assert!((lap + u.values()[i]).abs() < 1e-5, "r={r}");
        }
    }

    #[test]
    fn grid_radius_must_match() {
        let space = ModelSpace::space_form(0.0, 2, 1.0).unwrap();
        let u = RadialSamples::from_fn(uniform_grid(2.0, 33).unwrap(), |_| 1.0).unwrap();
        assert!(matches!(green_apply(&space, &u), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn first_quotients_of_flat_balls() {
        let disk = build_hierarchy(&ModelSpace::space_form(0.0, 2, 1.0).unwrap(), 2).unwrap();
        assert!((disk.lower_quotients()[0] - 4.0).abs() < 1e-12);
        let ball = build_hierarchy(&ModelSpace::space_form(0.0, 3, 1.0).unwrap(), 2).unwrap();
        assert!((ball.lower_quotients()[0] - 6.0).abs() < 1e-12);
        assert_eq!(ball.normalized_function(1).unwrap().last(), 0.0);
        assert!(build_hierarchy(&ModelSpace::space_form(0.0, 3, 1.0).unwrap(), 1).is_err());
    }

    #[test]
    fn torsional_rigidity() {
        let disk = build_hierarchy(&ModelSpace::space_form(0.0, 2, 1.0).unwrap(), 3).unwrap();
        let a1 = disk.moment(1).unwrap().exp();
        assert!((a1 / (PI / 8.0) - 1.0).abs() < 1e-10, "{a1}");
        let ball = build_hierarchy(&ModelSpace::space_form(0.0, 3, 1.0).unwrap(), 3).unwrap();
        let a1 = ball.moment(1).unwrap().exp();
        assert!((a1 / (4.0 * PI / 45.0) - 1.0).abs() < 1e-10, "{a1}");
        assert!(matches!(ball.moment(0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(ball.moment(4), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn moment_routes_agree() {
        for (b, m, r) in [(0.0, 2, 1.0), (-1.0, 3, 2.0), (1.0, 5, 1.0)] {
            let h = build_hierarchy(&ModelSpace::space_form(b, m, r).unwrap(), 8).unwrap();
            for k in 1..=8 {
                let check = h.moment_check(k).unwrap();
                assert!(check.relative_gap < 1e-6, "b={b} m={m} k={k}: {check:?}");
                let s = h.upper_quotient_from_boundary(k).unwrap();
                let s_ref = h.upper_quotients()[k - 1];
                assert!((s / s_ref - 1.0).abs() < 1e-6, "b={b} m={m} k={k}: {s} vs {s_ref}");
            }
        }
    }

    #[test]
    fn torsional_bounds_of_flat_balls() {
        let (lo, hi) = torsional_bounds(&ModelSpace::space_form(0.0, 2, 1.0).unwrap()).unwrap();
        assert!((lo - 4.0).abs() < 1e-12 && (hi - 8.0).abs() < 1e-9, "{lo} {hi}");
        let (lo, hi) = torsional_bounds(&ModelSpace::space_form(0.0, 3, 1.0).unwrap()).unwrap();
        assert!((lo - 6.0).abs() < 1e-12 && (hi - 15.0).abs() < 1e-9, "{lo} {hi}");
    }

    #[test]
    fn torsional_lower_matches_quotient_integral() {
        let space = ModelSpace::space_form(-1.0, 3, 1.5).unwrap();
        let (lo, _) = torsional_bounds(&space).unwrap();
        let integral = quadrature::integrate_fn(
            |t| if t == 0.0 { 0.0 } else { space.isoperimetric_quotient(t).unwrap() },
            0.0,
            1.5,
            64,
        );
        assert!((lo * integral - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sandwich_on_flat_ball() {
        let est = lambda1_sandwich(&ModelSpace::space_form(0.0, 3, 1.0).unwrap(), 1e-4, 200).unwrap();
        assert!(est.converged && est.contains(PI * PI), "{est:?}");
        assert!(est.relative_width() <= 1e-4);
        assert!(est.residual_norm < 1e-3);
    }

    #[test]
    fn sandwich_reports_non_convergence() {
        let space = ModelSpace::space_form(-1.0, 2, 10.0).unwrap();
        match lambda1_sandwich(&space, 1e-12, 3) {
            Err(Error::NotConverged(partial)) => {
                assert_eq!(partial.iterations, 3);
                assert!(partial.lower <= partial.upper);
            }
            other => panic!("{other:?}"),
        }
        assert!(lambda1_sandwich(&space, 0.0, 3).is_err());
    }

    #[test]
    fn hierarchy_shapes_and_sandwich_order() {
        let h = build_hierarchy(&ModelSpace::space_form(1.0, 3, 2.0).unwrap(), 20).unwrap();
        assert!(sandwich_violations(&h).is_empty());
        for g in h.normalized_functions() {
            assert!((g.first() - 1.0).abs() < 1e-15);
            assert!(g.values().windows(2).all(|p| p[1] <= p[0] + 1e-15));
        }
        assert_eq!(h.log_moments().len(), 21);
    }

    #[test]
    fn barta_quotients_increase_in_r() {
        let h = build_hierarchy(&ModelSpace::space_form(-1.0, 3, 2.0).unwrap(), 10).unwrap();
        for k in 1..=10 {
            let q = h.barta_quotient(k).unwrap();
            let v = q.values();
            let slack = 1e-9 * v[v.len() - 1];
            assert!(v.windows(2).all(|p| p[1] >= p[0] - slack), "k={k}");
            assert!(v[0] <= h.lower_quotients()[k - 1] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn residual_of_exact_eigenfunctions() {
        let cap = ModelSpace::space_form(1.0, 2, PI / 2.0).unwrap();
        let g = RadialSamples::from_fn(grid(&cap, 4097), f64::cos).unwrap();
        assert!(eigen_residual(&cap, 2.0, &g) < 1e-6);
        let ball = ModelSpace::space_form(0.0, 3, 1.0).unwrap();
        let g = RadialSamples::from_fn(grid(&ball, 4097), |r| if r == 0.0 { PI } else { (PI * r).sin() / r })
            .unwrap();
        assert!(eigen_residual(&ball, PI * PI, &g) < 1e-6);
        let zero = RadialSamples::from_fn(grid(&ball, 65), |_| 0.0).unwrap();
        assert_eq!(eigen_residual(&ball, 3.0, &zero), 0.0);
    }

    #[test]
    fn parallel_inner_sums_match() {
        let space = ModelSpace::space_form(-1.0, 4, 3.0).unwrap();
        let g = grid(&space, 513);
        let seq = GreenOperator::new(&space, g).unwrap();
        let par = seq.clone().with_execution(Execution::Parallel);
        let u = RadialSamples::from_fn(g, |r| (-r).exp()).unwrap();
        assert_eq!(seq.apply(&u), par.apply(&u));
    }

    #[test]
    fn csv_layout() {
        let h = build_hierarchy(&ModelSpace::space_form(0.0, 2, 1.0).unwrap(), 3).unwrap();
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k,rho_k,sigma_k,ln_A_k");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,"));
    }
}
