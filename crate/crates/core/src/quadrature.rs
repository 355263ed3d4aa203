//! Radial grids, cumulative integration and monotone interpolation.
//!
//! Everything downstream works on a uniform grid over `[0, R]`. Integrals
//! with an upper variable limit are realised as cumulative sums so that the
//! value at every node comes out of a single pass.

use crate::{Error, Result};

/// Smallest admissible node count.
pub const MIN_NODES: usize = 16;
/// Node count used when the caller does not choose one (2^12 + 1).
pub const DEFAULT_NODES: usize = 4097;

/// Uniformly spaced nodes `0 = r_0 < r_1 < ... < r_{N-1} = R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialGrid {
    radius: f64,
    count: usize,
}

/// Builds `n` equally spaced nodes covering `[0, radius]`.
pub fn uniform_grid(radius: f64, n: usize) -> Result<RadialGrid> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidGrid(format!("radius must be positive and finite, got {radius}")));
    }
    if n < MIN_NODES {
        return Err(Error::InvalidGrid(format!("need at least {MIN_NODES} nodes, got {n}")));
    }
    Ok(RadialGrid { radius, count: n })
}

impl RadialGrid {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.radius / (self.count - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.radius
        } else {
            self.radius * i as f64 / (self.count - 1) as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.node(i))
    }

    /// Index of the interval `[r_i, r_{i+1}]` containing `r` (clamped).
    #[inline]
    fn locate(&self, r: f64) -> usize {
        let i = (r / self.step()).floor();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.count - 2)
        }
    }

    /// Same grid with twice as many intervals.
    pub fn refined(&self) -> RadialGrid {
        RadialGrid { radius: self.radius, count: 2 * self.count - 1 }
    }
}

/// Values aligned with the nodes of a [`RadialGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct RadialSamples {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl RadialSamples {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidSamples(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSamples(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node. Non-finite results are rejected.
    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub(crate) fn from_raw(grid: RadialGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> RadialSamples {
        let values = self.grid.nodes().zip(&self.values).map(|(r, &v)| f(r, v)).collect();
        RadialSamples::from_raw(self.grid, values)
    }

    pub fn scaled(&self, factor: f64) -> RadialSamples {
        RadialSamples::from_raw(self.grid, self.values.iter().map(|v| v * factor).collect())
    }

    /// Monotone cubic interpolation, see [`interpolate`].
    pub fn at(&self, r: f64) -> Result<f64> {
        interpolate(self, r)
    }
}

// ---------------------------------------------------------------------------
// Integration

/// `F(r_i) = ∫_0^{r_i} f` at every node.
///
/// Even nodes use composite Simpson. Odd nodes add a single interval to the
/// preceding even node with the three-point rule that is exact for
/// quadratics, which keeps the local error at `O(h^4)`.
pub fn cumulative_integral(f: &RadialSamples) -> RadialSamples {
    let y = f.values();
    let n = y.len();
    let h = f.grid().step();
    let mut out = vec![0.0; n];
    let mut i = 1;
    while i < n {
        if i % 2 == 0 {
            out[i] = out[i - 2] + h / 3.0 * (y[i - 2] + 4.0 * y[i - 1] + y[i]);
        } else if i + 1 < n {
            out[i] = out[i - 1] + h / 12.0 * (5.0 * y[i - 1] + 8.0 * y[i] - y[i + 1]);
        } else {
            out[i] = out[i - 1] + h / 12.0 * (-y[i - 2] + 8.0 * y[i - 1] + 5.0 * y[i]);
        }
        i += 1;
    }
    RadialSamples::from_raw(*f.grid(), out)
}

/// `T(r_i) = ∫_{r_i}^R f`, sharing the accumulation of [`cumulative_integral`].
pub fn tail_integral(f: &RadialSamples) -> RadialSamples {
    let cumulative = cumulative_integral(f);
    let total = cumulative.last();
    let mut values: Vec<f64> = cumulative.values().iter().map(|c| total - c).collect();
    let last = values.len() - 1;
    values[last] = 0.0;
    RadialSamples::from_raw(*f.grid(), values)
}

const GAUSS_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_8,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_8,
];

/// Four-point Gauss-Legendre abscissae in `[a, b]` with their weights.
pub(crate) fn gauss_points(a: f64, b: f64) -> [(f64, f64); 4] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 4];
    for (slot, (x, w)) in out.iter_mut().zip(GAUSS_NODES.iter().zip(GAUSS_WEIGHTS.iter())) {
        *slot = (mid + half * x, half * w);
    }
    out
}

/// Composite four-point Gauss-Legendre rule for a function known in closed form.
pub fn integrate_fn(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let intervals = intervals.max(1);
    let h = (b - a) / intervals as f64;
    (0..intervals)
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = if i + 1 == intervals { b } else { lo + h };
            gauss_points(lo, hi).iter().map(|&(x, w)| w * f(x)).sum::<f64>()
        })
        .sum()
}

/// Cumulative integral of a closed-form integrand, one Gauss-Legendre panel
/// per grid interval.
///
/// Unlike [`cumulative_integral`] the integrand is never evaluated at a node,
/// and integrands vanishing to high order at the pole keep their relative
/// accuracy on the first intervals.
pub fn cumulative_integral_fn(grid: &RadialGrid, f: impl Fn(f64) -> f64) -> RadialSamples {
    let n = grid.len();
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..n - 1 {
        acc += gauss_points(grid.node(i), grid.node(i + 1))
            .iter()
            .map(|&(x, w)| w * f(x))
            .sum::<f64>();
        out.push(acc);
    }
    RadialSamples::from_raw(*grid, out)
}

// ---------------------------------------------------------------------------
// Differentiation

/// Second-order finite-difference first derivative (one-sided at the ends).
pub fn derivative(f: &RadialSamples) -> RadialSamples {
    let y = f.values();
    let n = y.len();
    let h = f.grid().step();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (y[i + 1] - y[i - 1]) / (2.0 * h);
    }
    d[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * h);
    RadialSamples::from_raw(*f.grid(), d)
}

/// Second-order finite-difference second derivative (one-sided at the ends).
pub fn second_derivative(f: &RadialSamples) -> RadialSamples {
    let y = f.values();
    let n = y.len();
    let h2 = f.grid().step().powi(2);
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (y[i + 1] - 2.0 * y[i] + y[i - 1]) / h2;
    }
    d[0] = (2.0 * y[0] - 5.0 * y[1] + 4.0 * y[2] - y[3]) / h2;
    d[n - 1] = (2.0 * y[n - 1] - 5.0 * y[n - 2] + 4.0 * y[n - 3] - y[n - 4]) / h2;
    RadialSamples::from_raw(*f.grid(), d)
}

// ---------------------------------------------------------------------------
// Monotone cubic Hermite interpolation

/// Abscissae of an interpolation table.
pub(crate) trait Knots {
    fn len(&self) -> usize;
    fn x(&self, i: usize) -> f64;
    /// Interval index `i` with `x_i <= x <= x_{i+1}`, clamped to the table.
    fn locate(&self, x: f64) -> usize;
}

impl Knots for RadialGrid {
    fn len(&self) -> usize {
        self.count
    }
    fn x(&self, i: usize) -> f64 {
        self.node(i)
    }
    fn locate(&self, x: f64) -> usize {
        RadialGrid::locate(self, x)
    }
}

impl Knots for [f64] {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }
    fn x(&self, i: usize) -> f64 {
        self[i]
    }
    fn locate(&self, x: f64) -> usize {
        let p = self.partition_point(|&v| v <= x);
        p.saturating_sub(1).min(<[f64]>::len(self) - 2)
    }
}

fn secant<K: Knots + ?Sized>(xs: &K, ys: &[f64], j: usize) -> f64 {
    (ys[j + 1] - ys[j]) / (xs.x(j + 1) - xs.x(j))
}

/// Node slope: three-point parabola estimate with the Hyman monotonicity
/// filter (`|d| <= 3 min |secant|`, zero at data extrema).
pub(crate) fn node_slope<K: Knots + ?Sized>(xs: &K, ys: &[f64], i: usize) -> f64 {
    let n = xs.len();
    if n == 2 {
        return secant(xs, ys, 0);
    }
    if i == 0 || i == n - 1 {
        let (s0, s1, h0, h1) = if i == 0 {
            (secant(xs, ys, 0), secant(xs, ys, 1), xs.x(1) - xs.x(0), xs.x(2) - xs.x(1))
        } else {
            (
                secant(xs, ys, n - 2),
                secant(xs, ys, n - 3),
                xs.x(n - 1) - xs.x(n - 2),
                xs.x(n - 2) - xs.x(n - 3),
            )
        };
        let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
        return if d * s0 <= 0.0 {
            0.0
        } else if d.abs() > 3.0 * s0.abs() {
            3.0 * s0
        } else {
            d
        };
    }
    let s0 = secant(xs, ys, i - 1);
    let s1 = secant(xs, ys, i);
    if s0 * s1 <= 0.0 {
        return 0.0;
    }
    let h0 = xs.x(i) - xs.x(i - 1);
    let h1 = xs.x(i + 1) - xs.x(i);
    let d = (h1 * s0 + h0 * s1) / (h0 + h1);
    let cap = 3.0 * s0.abs().min(s1.abs());
    if d.abs() > cap {
        cap.copysign(d)
    } else {
        d
    }
}

/// Value, first and second derivative of the Hermite interpolant at `x`.
pub(crate) fn hermite<K: Knots + ?Sized>(xs: &K, ys: &[f64], x: f64) -> (f64, f64, f64) {
    let i = xs.locate(x);
    let x0 = xs.x(i);
    let hi = xs.x(i + 1) - x0;
    let (y0, y1) = (ys[i], ys[i + 1]);
    let (d0, d1) = (node_slope(xs, ys, i), node_slope(xs, ys, i + 1));
    let t = (x - x0) / hi;
    let t2 = t * t;
    let t3 = t2 * t;
    let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * hi * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * hi * d1;
    let first = ((6.0 * t2 - 6.0 * t) * (y0 - y1)
        + (3.0 * t2 - 4.0 * t + 1.0) * hi * d0
        + (3.0 * t2 - 2.0 * t) * hi * d1)
        / hi;
    let second = ((12.0 * t - 6.0) * (y0 - y1) + (6.0 * t - 4.0) * hi * d0 + (6.0 * t - 2.0) * hi * d1)
        / (hi * hi);
    (value, first, second)
}

/// Monotone-preserving cubic interpolation of `f` at `r`, exact at nodes.
pub fn interpolate(f: &RadialSamples, r: f64) -> Result<f64> {
    let grid = f.grid();
    let end = grid.radius();
    let slack = 1e-12 * end;
    if !(r >= -slack && r <= end + slack) {
        return Err(Error::OutOfDomain { r, end });
    }
    let r = r.clamp(0.0, end);
    let i = grid.locate(r);
    if r == grid.node(i) {
        return Ok(f.values[i]);
    }
    if r == grid.node(i + 1) {
        return Ok(f.values[i + 1]);
    }
    Ok(hermite(grid, f.values(), r).0)
}

/// Finds `r` with `interpolate(f, r) = y` for strictly increasing samples.
///
/// Bracketing on the node values locates the interval; inside it the
/// monotone Hermite cubic is inverted with an Illinois false-position
/// iteration that falls back to bisection when it stalls.
pub fn invert_monotone(f: &RadialSamples, y: f64) -> Result<f64> {
    let v = f.values();
    if let Some(i) = v.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NotMonotone(i + 1));
    }
    invert_increasing(f.grid(), v, y)
}

/// [`invert_monotone`] without the monotonicity scan, for callers that
/// validated their samples once up front.
pub(crate) fn invert_increasing(grid: &RadialGrid, v: &[f64], y: f64) -> Result<f64> {
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let tol = 1e-12 * (1.0 + y.abs());
    if !(y >= lo - tol && y <= hi + tol) {
        return Err(Error::OutOfRange { y, lo, hi });
    }
    let y = y.clamp(lo, hi);
    let j = v.partition_point(|&x| x <= y).saturating_sub(1).min(v.len() - 2);
    if y == v[j] {
        return Ok(grid.node(j));
    }
    if y == v[j + 1] {
        return Ok(grid.node(j + 1));
    }
    let (mut a, mut b) = (grid.node(j), grid.node(j + 1));
    let (mut fa, mut fb) = (v[j] - y, v[j + 1] - y);
    let mut side = 0i8;
    for _ in 0..200 {
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let fc = hermite(grid, v, c).0 - y;
        if fc == 0.0 || (b - a) <= 4.0 * f64::EPSILON * b.abs().max(1e-300) {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
        if fc.abs() <= 1e-15 * (1.0 + y.abs()) {
            return Ok(c);
        }
    }
    Ok(0.5 * (a + b))
}
