//! Exact algebra of piecewise-constant rates and piecewise-linear functions.
//!
//! Two function families cover everything the queuing dynamics need:
//!
//! * [`StepFunction`] — right-continuous piecewise-constant rates on `[0, ∞)`
//!   (edge and path inflow/outflow rates).
//! * [`Pwl`] / [`MonotonePwl`] — continuous piecewise-linear functions with an
//!   explicit tail slope (cumulative flows, queue masses, exit times, arrival
//!   labels).
//!
//! All values are binary64. Breakpoints closer than [`X_MERGE_TOL`] are merged
//! during canonicalization, so equal functions built along different routes
//! compare equal.

use thiserror::Error;

/// Absolute tolerance for merging breakpoints on the time axis.
pub const X_MERGE_TOL: f64 = 1e-9;

/// Two slopes/values are considered equal within this scale-relative tolerance.
fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * f64::max(1.0, f64::max(a.abs(), b.abs()))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PwlError {
    #[error("breakpoints must be finite, strictly increasing and positive: {0}")]
    BadBreakpoints(String),
    #[error("expected {expected} values for {breakpoints} breakpoints, got {got}")]
    ValueCountMismatch {
        expected: usize,
        breakpoints: usize,
        got: usize,
    },
    #[error("negative rate {rate} at x = {at}")]
    NegativeRate { rate: f64, at: f64 },
    #[error("piecewise-linear points must have strictly increasing x: {0}")]
    BadPoints(String),
    #[error("function is not non-decreasing at x = {0}")]
    NotMonotone(f64),
}

// ---------------------------------------------------------------------------
// StepFunction
// ---------------------------------------------------------------------------

/// Right-continuous piecewise-constant function on `[0, ∞)`.
///
/// `values[i]` holds on `[breakpoints[i-1], breakpoints[i])` (with the
/// convention `breakpoints[-1] = 0`); `values[n]` is the explicit tail value
/// after the last breakpoint. Canonical form never has two adjacent intervals
/// with the same value.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, PwlError> {
        if values.len() != breakpoints.len() + 1 {
            return Err(PwlError::ValueCountMismatch {
                expected: breakpoints.len() + 1,
                breakpoints: breakpoints.len(),
                got: values.len(),
            });
        }
        // collisions within the merge tolerance are folded by canonicalization
        // (the later value wins); only genuine decreases are rejected
        let mut prev = 0.0;
        for &b in &breakpoints {
            if !b.is_finite() || b < prev - X_MERGE_TOL {
                return Err(PwlError::BadBreakpoints(format!(
                    "{b} after {prev} (must be finite and non-decreasing)"
                )));
            }
            prev = b;
        }
        let mut f = StepFunction {
            breakpoints,
            values,
        };
        f.canonicalize();
        Ok(f)
    }

    pub fn constant(value: f64) -> Self {
        StepFunction {
            breakpoints: Vec::new(),
            values: vec![value],
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `rate` on `[start, end)`, zero elsewhere. Empty if `end <= start`.
    pub fn block(start: f64, end: f64, rate: f64) -> Self {
        if end - start <= X_MERGE_TOL || rate == 0.0 {
            return Self::zero();
        }
        if start <= X_MERGE_TOL {
            StepFunction {
                breakpoints: vec![end],
                values: vec![rate, 0.0],
            }
        } else {
            StepFunction {
                breakpoints: vec![start, end],
                values: vec![0.0, rate, 0.0],
            }
        }
    }

    /// `rate` on `[start, ∞)`, zero before.
    pub fn from_onward(start: f64, rate: f64) -> Self {
        if rate == 0.0 {
            return Self::zero();
        }
        if start <= X_MERGE_TOL {
            Self::constant(rate)
        } else {
            StepFunction {
                breakpoints: vec![start],
                values: vec![0.0, rate],
            }
        }
    }

    fn canonicalize(&mut self) {
        // merge breakpoints that collide within tolerance (later value wins)
        let mut bps: Vec<f64> = Vec::with_capacity(self.breakpoints.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.values.len());
        vals.push(self.values[0]);
        for (i, &b) in self.breakpoints.iter().enumerate() {
            let v = self.values[i + 1];
            if let Some(&last) = bps.last() {
                if b - last <= X_MERGE_TOL {
                    *vals.last_mut().unwrap() = v;
                    continue;
                }
            } else if b <= X_MERGE_TOL {
                vals[0] = v;
                continue;
            }
            bps.push(b);
            vals.push(v);
        }
        // drop breakpoints across which the value does not change
        let mut out_b = Vec::with_capacity(bps.len());
        let mut out_v = vec![vals[0]];
        for (i, &b) in bps.iter().enumerate() {
            let v = vals[i + 1];
            if nearly_equal(v, *out_v.last().unwrap()) {
                continue;
            }
            out_b.push(b);
            out_v.push(v);
        }
        self.breakpoints = out_b;
        self.values = out_v;
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Right-continuous evaluation. `x` below 0 reads the first interval.
    pub fn value_at(&self, x: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        self.values[idx]
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= -1e-12)
    }

    pub fn is_zero(&self) -> bool {
        self.breakpoints.is_empty() && self.values[0] == 0.0
    }

    fn combine(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Self {
        let mut bps = Vec::with_capacity(self.breakpoints.len() + other.breakpoints.len());
        let (mut i, mut j) = (0, 0);
        while i < self.breakpoints.len() || j < other.breakpoints.len() {
            let a = self.breakpoints.get(i).copied().unwrap_or(f64::INFINITY);
            let b = other.breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
            let x = a.min(b);
            if a - x <= X_MERGE_TOL {
                i += 1;
            }
            if b - x <= X_MERGE_TOL {
                j += 1;
            }
            bps.push(x);
        }
        let mut vals = Vec::with_capacity(bps.len() + 1);
        vals.push(op(self.values[0], other.values[0]));
        for &x in &bps {
            vals.push(op(self.value_at(x), other.value_at(x)));
        }
        let mut f = StepFunction {
            breakpoints: bps,
            values: vals,
        };
        f.canonicalize();
        f
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a + b)
    }

    pub fn min(&self, other: &Self) -> Self {
        self.combine(other, f64::min)
    }

    /// Pointwise `min(f, cap)`.
    pub fn clamp_below(&self, cap: f64) -> Self {
        self.combine(&Self::constant(cap), f64::min)
    }

    /// Time shift to the right: `g(x) = f(x - dt)` for `x >= dt`, `fill` before.
    pub fn shift_right(&self, dt: f64, fill: f64) -> Self {
        if dt <= X_MERGE_TOL {
            return self.clone();
        }
        let mut bps = Vec::with_capacity(self.breakpoints.len() + 1);
        let mut vals = Vec::with_capacity(self.values.len() + 1);
        vals.push(fill);
        bps.push(dt);
        vals.push(self.values[0]);
        for (i, &b) in self.breakpoints.iter().enumerate() {
            bps.push(b + dt);
            vals.push(self.values[i + 1]);
        }
        let mut f = StepFunction {
            breakpoints: bps,
            values: vals,
        };
        f.canonicalize();
        f
    }

    /// Exact cumulative `F(x) = ∫_0^x f`, requiring a non-negative rate.
    pub fn integrate(&self) -> Result<MonotonePwl, PwlError> {
        if let Some((i, &v)) = self.values.iter().enumerate().find(|(_, v)| **v < -1e-12) {
            let at = if i == 0 { 0.0 } else { self.breakpoints[i - 1] };
            return Err(PwlError::NegativeRate { rate: v, at });
        }
        let mut points = Vec::with_capacity(self.breakpoints.len() + 1);
        points.push((0.0, 0.0));
        let mut acc = 0.0;
        let mut prev = 0.0;
        for (i, &b) in self.breakpoints.iter().enumerate() {
            acc += self.values[i].max(0.0) * (b - prev);
            points.push((b, acc));
            prev = b;
        }
        let tail = self.tail_value().max(0.0);
        MonotonePwl::new(points, tail)
    }

    /// Debug CSV (`interval_start,value`), one row per constant interval.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("interval_start,value\n");
        out.push_str(&format!("0,{}\n", self.values[0]));
        for (i, &b) in self.breakpoints.iter().enumerate() {
            out.push_str(&format!("{},{}\n", b, self.values[i + 1]));
        }
        out
    }

    /// Maximal intervals of strictly positive value, in order; the last end
    /// is `+∞` when the tail value is positive.
    pub fn positive_intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start: Option<f64> = None;
        for (i, &v) in self.values.iter().enumerate() {
            let a = if i == 0 { 0.0 } else { self.breakpoints[i - 1] };
            if v > 0.0 {
                if start.is_none() {
                    start = Some(a);
                }
            } else if let Some(s) = start.take() {
                out.push((s, a));
            }
        }
        if let Some(s) = start {
            out.push((s, f64::INFINITY));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Pwl / MonotonePwl
// ---------------------------------------------------------------------------

/// Continuous piecewise-linear function with an explicit tail slope.
///
/// Defined on `[x0, ∞)` where `x0` is the first point; evaluation below `x0`
/// extends the first value as a constant (all cumulative quantities are zero
/// before their domain starts, which is exactly this convention).
#[derive(Debug, Clone, PartialEq)]
pub struct Pwl {
    points: Vec<(f64, f64)>,
    final_slope: f64,
}

impl Pwl {
    pub fn new(points: Vec<(f64, f64)>, final_slope: f64) -> Result<Self, PwlError> {
        if points.is_empty() {
            return Err(PwlError::BadPoints("no points".into()));
        }
        // x must not decrease beyond the merge tolerance; collisions within
        // it are merged by canonicalization (first point wins)
        if !points[0].0.is_finite() {
            return Err(PwlError::BadPoints(format!("x = {}", points[0].0)));
        }
        for w in points.windows(2) {
            if !w[1].0.is_finite() || w[1].0 < w[0].0 - X_MERGE_TOL {
                return Err(PwlError::BadPoints(format!(
                    "x = {} after x = {}",
                    w[1].0, w[0].0
                )));
            }
        }
        if !final_slope.is_finite() {
            return Err(PwlError::BadPoints(format!("tail slope {final_slope}")));
        }
        let mut f = Pwl {
            points,
            final_slope,
        };
        f.canonicalize();
        Ok(f)
    }

    pub fn constant(x0: f64, y: f64) -> Self {
        Pwl {
            points: vec![(x0, y)],
            final_slope: 0.0,
        }
    }

    fn canonicalize(&mut self) {
        // merge x-collisions (keep the first occurrence)
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(self.points.len());
        for &(x, y) in &self.points {
            if let Some(&(lx, _)) = pts.last() {
                if x - lx <= X_MERGE_TOL {
                    continue;
                }
            }
            pts.push((x, y));
        }
        // drop interior points where the slope does not change
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for &(x, y) in &pts {
            if out.len() >= 2 {
                let (x0, y0) = out[out.len() - 2];
                let (x1, y1) = out[out.len() - 1];
                let s_prev = (y1 - y0) / (x1 - x0);
                let s_next = (y - y1) / (x - x1);
                if nearly_equal(s_prev, s_next) {
                    out.pop();
                }
            }
            out.push((x, y));
        }
        // drop trailing points collinear with the tail slope
        while out.len() >= 2 {
            let (x0, y0) = out[out.len() - 2];
            let (x1, y1) = out[out.len() - 1];
            let s = (y1 - y0) / (x1 - x0);
            if nearly_equal(s, self.final_slope) {
                out.pop();
            } else {
                break;
            }
        }
        self.points = out;
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn final_slope(&self) -> f64 {
        self.final_slope
    }

    pub fn domain_start(&self) -> f64 {
        self.points[0].0
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pts = &self.points;
        if x <= pts[0].0 {
            return pts[0].1;
        }
        let idx = pts.partition_point(|&(px, _)| px <= x);
        if idx == pts.len() {
            let (lx, ly) = pts[pts.len() - 1];
            return ly + (x - lx) * self.final_slope;
        }
        let (x0, y0) = pts[idx - 1];
        let (x1, y1) = pts[idx];
        y0 + (x - x0) * (y1 - y0) / (x1 - x0)
    }

    /// Slope on the segment containing `x` (right-sided at breakpoints).
    pub fn slope_at(&self, x: f64) -> f64 {
        let pts = &self.points;
        let idx = pts.partition_point(|&(px, _)| px <= x);
        if idx >= pts.len() {
            return self.final_slope;
        }
        if idx == 0 {
            return 0.0; // constant extension left of the domain
        }
        let (x0, y0) = pts[idx - 1];
        let (x1, y1) = pts[idx];
        (y1 - y0) / (x1 - x0)
    }

    pub fn min_value(&self) -> f64 {
        let m = self
            .points
            .iter()
            .map(|&(_, y)| y)
            .fold(f64::INFINITY, f64::min);
        if self.final_slope < 0.0 {
            f64::NEG_INFINITY
        } else {
            m
        }
    }

    /// Debug CSV (`x,y`), one row per vertex.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for &(x, y) in self.points() {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut xs: Vec<f64> = self
            .points
            .iter()
            .chain(other.points.iter())
            .map(|&(x, _)| x)
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup_by(|a, b| *a - *b <= X_MERGE_TOL);
        let points = xs
            .iter()
            .map(|&x| (x, self.eval(x) + other.eval(x)))
            .collect();
        let mut f = Pwl {
            points,
            final_slope: self.final_slope + other.final_slope,
        };
        f.canonicalize();
        f
    }
}

/// Non-decreasing continuous piecewise-linear function.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonePwl(Pwl);

impl MonotonePwl {
    pub fn new(points: Vec<(f64, f64)>, final_slope: f64) -> Result<Self, PwlError> {
        let inner = Pwl::new(points, final_slope)?;
        if final_slope < -1e-12 {
            return Err(PwlError::NotMonotone(f64::INFINITY));
        }
        for w in inner.points.windows(2) {
            if w[1].1 - w[0].1 < -1e-9 * f64::max(1.0, w[0].1.abs()) {
                return Err(PwlError::NotMonotone(w[1].0));
            }
        }
        Ok(MonotonePwl(inner))
    }

    pub fn identity() -> Self {
        MonotonePwl(Pwl {
            points: vec![(0.0, 0.0)],
            final_slope: 1.0,
        })
    }

    /// `x ↦ slope·x + intercept` on `[0, ∞)` (slope must be non-negative).
    pub fn affine(slope: f64, intercept: f64) -> Self {
        assert!(slope >= 0.0, "affine slope must be non-negative");
        MonotonePwl(Pwl {
            points: vec![(0.0, intercept)],
            final_slope: slope,
        })
    }

    pub fn constant(x0: f64, y: f64) -> Self {
        MonotonePwl(Pwl::constant(x0, y))
    }

    pub fn points(&self) -> &[(f64, f64)] {
        self.0.points()
    }

    pub fn final_slope(&self) -> f64 {
        self.0.final_slope()
    }

    pub fn domain_start(&self) -> f64 {
        self.0.domain_start()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.eval(x)
    }

    pub fn slope_at(&self, x: f64) -> f64 {
        self.0.slope_at(x)
    }

    /// Derivative as a right-continuous step function on `[0, ∞)`.
    ///
    /// Left of the domain start the function extends as a constant, so the
    /// derivative there is zero.
    pub fn differentiate(&self) -> StepFunction {
        let pts = self.0.points();
        let mut bps = Vec::new();
        let mut vals = Vec::new();
        if pts[0].0 > X_MERGE_TOL {
            vals.push(0.0);
            bps.push(pts[0].0);
        }
        for w in pts.windows(2) {
            vals.push((w[1].1 - w[0].1) / (w[1].0 - w[0].0));
            bps.push(w[1].0);
        }
        vals.push(self.0.final_slope());
        StepFunction::new(bps, vals).expect("derivative breakpoints are sorted")
    }

    /// `inf { x : f(x) >= y }`, or `None` if the function never reaches `y`.
    pub fn crossing_time(&self, y: f64) -> Option<f64> {
        let pts = self.0.points();
        if pts[0].1 >= y {
            return Some(pts[0].0);
        }
        for w in pts.windows(2) {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            if y1 >= y {
                return Some(x0 + (y - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        let (xl, yl) = *pts.last().unwrap();
        let s = self.0.final_slope();
        if s > 0.0 {
            Some(xl + (y - yl) / s)
        } else {
            None
        }
    }

    /// Composition `outer ∘ inner`: `x ↦ outer(inner(x))`.
    pub fn compose(outer: &Self, inner: &Self) -> Self {
        // candidate xs: inner's breakpoints plus preimages of outer's
        let mut xs: Vec<f64> = inner.points().iter().map(|&(x, _)| x).collect();
        for &(bx, _) in outer.points() {
            if let Some(x) = inner.crossing_time(bx) {
                xs.push(x);
            }
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup_by(|a, b| *a - *b <= X_MERGE_TOL);
        let points: Vec<(f64, f64)> = xs.iter().map(|&x| (x, outer.eval(inner.eval(x)))).collect();
        let final_slope = if inner.final_slope() > 0.0 {
            // for large x, inner exceeds every outer breakpoint
            outer.final_slope() * inner.final_slope()
        } else {
            0.0 // inner eventually constant, so is the composition
        };
        MonotonePwl(
            Pwl::new(points, final_slope).expect("composition of monotone functions is monotone"),
        )
    }

    /// Inverse `y ↦ inf { x : f(x) >= y }` with the left-endpoint convention
    /// on flat segments: a segment `[a, b] ↦ c` inverts to the point `c ↦ a`
    /// (the earliest particle).
    ///
    /// The true inverse jumps from `a` to `b` just above `c`; since the
    /// representation is continuous, the jump is realized as a connector of
    /// width `2·X_MERGE_TOL` on the `y` axis. A constant tail inverts to its
    /// left endpoint with slope 0.
    pub fn inverse(&self) -> Self {
        let eps = 2.0 * X_MERGE_TOL;
        let pts = self.0.points();
        // maximal flat runs as (y, first x, last x)
        let mut runs: Vec<(f64, f64, f64)> = Vec::with_capacity(pts.len());
        for &(x, y) in pts {
            match runs.last_mut() {
                Some(r) if y - r.0 <= X_MERGE_TOL => r.2 = x,
                _ => runs.push((y, x, x)),
            }
        }
        let tail = self.0.final_slope();
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(runs.len() * 2);
        for (i, &(y, xf, xl)) in runs.iter().enumerate() {
            out.push((y, xf));
            let continues = i + 1 < runs.len() || tail > 1e-12;
            if xl > xf + X_MERGE_TOL && continues {
                out.push((y + eps, xl));
            }
        }
        let final_slope = if tail > 1e-12 { 1.0 / tail } else { 0.0 };
        MonotonePwl(Pwl::new(out, final_slope).expect("inverse of monotone is monotone"))
    }

    /// Reparameterize a cumulative function by a monotone time map: returns
    /// `g` with `g(t) = mass(f⁻¹(t))`, i.e. `g(f(x)) = mass(x)`.
    ///
    /// Flat stretches of `f` are collapsed keeping the latest mass value; this
    /// is exact whenever `mass` is constant wherever `f` is flat, which holds
    /// for every self-consistent flow (an exit-time map is flat only while the
    /// edge receives no inflow).
    pub fn pullback(mass: &Self, f: &Self) -> Self {
        let mut xs: Vec<f64> = mass
            .points()
            .iter()
            .chain(f.points())
            .map(|&(x, _)| x)
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup_by(|a, b| *a - *b <= X_MERGE_TOL);
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(xs.len());
        for &x in &xs {
            let t = f.eval(x);
            let y = mass.eval(x);
            match pts.last_mut() {
                Some(p) if t - p.0 <= X_MERGE_TOL => p.1 = p.1.max(y),
                _ => pts.push((t, y)),
            }
        }
        let final_slope = if f.final_slope() > 1e-12 {
            mass.final_slope() / f.final_slope()
        } else {
            0.0
        };
        MonotonePwl(Pwl::new(pts, final_slope).expect("pullback of monotone is monotone"))
    }

    /// Extend the domain left to `new_start` with a constant segment.
    pub fn extend_left_constant(&self, new_start: f64) -> Self {
        let pts = self.0.points();
        if new_start >= pts[0].0 - X_MERGE_TOL {
            return self.clone();
        }
        let mut points = Vec::with_capacity(pts.len() + 1);
        points.push((new_start, pts[0].1));
        points.extend_from_slice(pts);
        MonotonePwl(Pwl::new(points, self.0.final_slope()).expect("constant extension"))
    }

    pub fn add(&self, other: &Self) -> Self {
        MonotonePwl(self.0.add(&other.0))
    }

    /// Debug CSV (`x,y`), one row per vertex.
    pub fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    /// Left-sided slope at `x`: the slope of the segment ending at `x` (or
    /// containing it), 0 left of the domain, the tail slope beyond it.
    pub fn slope_before(&self, x: f64) -> f64 {
        let pts = self.points();
        let idx = pts.partition_point(|&(px, _)| px < x - X_MERGE_TOL);
        if idx == 0 {
            return 0.0;
        }
        if idx >= pts.len() {
            return self.final_slope();
        }
        let (x0, y0) = pts[idx - 1];
        let (x1, y1) = pts[idx];
        (y1 - y0) / (x1 - x0)
    }

    /// Max pointwise |self - other| over both breakpoint sets and the tail.
    pub fn max_difference(&self, other: &Self, upto: f64) -> f64 {
        let mut xs: Vec<f64> = self
            .points()
            .iter()
            .chain(other.points())
            .map(|&(x, _)| x)
            .filter(|&x| x <= upto)
            .collect();
        xs.push(upto);
        xs.iter()
            .map(|&x| (self.eval(x) - other.eval(x)).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn integrate_constant_rate_is_identity_slope() {
        let f = StepFunction::constant(1.0).integrate().unwrap();
        assert_close(f.eval(0.0), 0.0, 0.0);
        assert_close(f.eval(2.5), 2.5, 1e-15);
        assert_close(f.final_slope(), 1.0, 0.0);
    }

    #[test]
    fn integrate_block_then_flat() {
        // rate = 2 on [0,1), 0 after -> F(1)=2, F(3)=2
        let r = StepFunction::block(0.0, 1.0, 2.0);
        let f = r.integrate().unwrap();
        assert_close(f.eval(1.0), 2.0, 1e-15);
        assert_close(f.eval(3.0), 2.0, 1e-15);
    }

    #[test]
    fn integrate_two_steps() {
        // rate = 1 on [0,1), 3 on [1,2), 0 after -> F(2) = 4
        let r = StepFunction::new(vec![1.0, 2.0], vec![1.0, 3.0, 0.0]).unwrap();
        let f = r.integrate().unwrap();
        assert_close(f.eval(2.0), 4.0, 1e-15);
        assert_close(f.eval(0.5), 0.5, 1e-15);
        assert_close(f.eval(1.5), 1.0 + 1.5, 1e-15);
    }

    #[test]
    fn integrate_rejects_negative_rate() {
        let r = StepFunction::new(vec![1.0], vec![1.0, -2.0]).unwrap();
        assert!(matches!(r.integrate(), Err(PwlError::NegativeRate { .. })));
    }

    #[test]
    fn compose_identity_is_noop() {
        let f = MonotonePwl::new(vec![(0.0, 0.0), (1.0, 2.0)], 0.5).unwrap();
        let g = MonotonePwl::compose(&MonotonePwl::identity(), &f);
        for &x in &[0.0, 0.3, 1.0, 5.0] {
            assert_close(g.eval(x), f.eval(x), 1e-12);
        }
        let h = MonotonePwl::compose(&f, &MonotonePwl::identity());
        for &x in &[0.0, 0.3, 1.0, 5.0] {
            assert_close(h.eval(x), f.eval(x), 1e-12);
        }
    }

    #[test]
    fn compose_affine() {
        // (θ ↦ θ + τ) ∘ (θ ↦ 2θ) = θ ↦ 2θ + τ
        let shift = MonotonePwl::affine(1.0, 3.0);
        let double = MonotonePwl::affine(2.0, 0.0);
        let g = MonotonePwl::compose(&shift, &double);
        for &x in &[0.0, 0.7, 2.0, 10.0] {
            assert_close(g.eval(x), 2.0 * x + 3.0, 1e-12);
        }
    }

    #[test]
    fn compose_two_segment_functions_matches_grid() {
        let outer = MonotonePwl::new(vec![(0.0, 0.0), (2.0, 1.0)], 3.0).unwrap();
        let inner = MonotonePwl::new(vec![(0.0, 0.5), (1.0, 3.0)], 0.25).unwrap();
        let g = MonotonePwl::compose(&outer, &inner);
        let mut x = 0.0;
        while x < 6.0 {
            assert_close(g.eval(x), outer.eval(inner.eval(x)), 1e-12);
            x += 0.01;
        }
    }

    #[test]
    fn inverse_of_shift() {
        let f = MonotonePwl::affine(1.0, 5.0);
        let inv = f.inverse();
        for &y in &[5.0, 6.0, 12.5] {
            assert_close(inv.eval(y), y - 5.0, 1e-12);
        }
    }

    #[test]
    fn inverse_slopes_reciprocal() {
        // slopes (1, 3) -> inverse slopes (1, 1/3)
        let f = MonotonePwl::new(vec![(0.0, 0.0), (1.0, 1.0)], 3.0).unwrap();
        let inv = f.inverse();
        assert_close(inv.eval(1.0), 1.0, 1e-12);
        assert_close(inv.eval(4.0), 2.0, 1e-12);
        assert_close(inv.final_slope(), 1.0 / 3.0, 1e-12);
    }

    #[test]
    fn inverse_flat_segment_left_endpoint() {
        // [1,2] -> 5 flat; inverse(5) = 1, values above the flat follow the
        // true branch
        let f = MonotonePwl::new(vec![(0.0, 4.0), (1.0, 5.0), (2.0, 5.0)], 2.0).unwrap();
        let inv = f.inverse();
        assert_close(inv.eval(5.0), 1.0, 1e-12);
        assert_close(inv.eval(7.0), 3.0, 1e-8);
        assert_close(inv.eval(4.5), 0.5, 1e-12);
    }

    #[test]
    fn pullback_skips_flat_stretches() {
        // mass accrues on [0,1), pauses, resumes on [2,3); exit map is flat
        // over the pause
        let mass =
            MonotonePwl::new(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 1.0), (3.0, 2.0)], 0.0).unwrap();
        let f =
            MonotonePwl::new(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 2.0), (3.0, 4.0)], 1.0).unwrap();
        let g = MonotonePwl::pullback(&mass, &f);
        assert_close(g.eval(1.0), 0.5, 1e-12); // x = 0.5, mass 0.5
        assert_close(g.eval(2.0), 1.0, 1e-12); // end of first segment
        assert_close(g.eval(3.0), 1.5, 1e-12); // x = 2.5 on the resumed branch
        assert_close(g.eval(4.0), 2.0, 1e-12);
    }

    #[test]
    fn clamp_and_min() {
        let r = StepFunction::constant(3.0);
        assert_eq!(r.clamp_below(1.0), StepFunction::constant(1.0));
        let a = StepFunction::block(0.0, 1.0, 2.0);
        let b = StepFunction::block(2.0, 3.0, 4.0);
        let sum = a.add(&b);
        assert_close(sum.value_at(0.5), 2.0, 0.0);
        assert_close(sum.value_at(1.5), 0.0, 0.0);
        assert_close(sum.value_at(2.5), 4.0, 0.0);
        // clamp of a 2-step function at a cap between its values
        let f = StepFunction::new(vec![1.0], vec![0.5, 2.0]).unwrap();
        let c = f.clamp_below(1.0);
        assert_close(c.value_at(0.5), 0.5, 0.0);
        assert_close(c.value_at(1.5), 1.0, 0.0);
    }

    #[test]
    fn crossing_time_on_segments_and_tail() {
        let f = MonotonePwl::new(vec![(0.0, 0.0), (1.0, 2.0)], 0.5).unwrap();
        assert_close(f.crossing_time(1.0).unwrap(), 0.5, 1e-12);
        assert_close(f.crossing_time(3.0).unwrap(), 3.0, 1e-12);
        let flat = MonotonePwl::constant(0.0, 1.0);
        assert_eq!(flat.crossing_time(2.0), None);
        assert_close(flat.crossing_time(1.0).unwrap(), 0.0, 0.0);
    }

    #[test]
    fn shift_right_fills_zero() {
        let r = StepFunction::constant(2.0).shift_right(1.5, 0.0);
        assert_close(r.value_at(1.0), 0.0, 0.0);
        assert_close(r.value_at(1.5), 2.0, 0.0);
    }

    #[test]
    fn csv_dumps() {
        let r = StepFunction::block(0.5, 1.0, 2.0);
        assert_eq!(r.to_csv(), "interval_start,value\n0,0\n0.5,2\n1,0\n");
        let f = MonotonePwl::new(vec![(0.0, 0.0), (1.0, 2.0)], 1.0).unwrap();
        assert_eq!(f.to_csv(), "x,y\n0,0\n1,2\n");
    }

    proptest! {
        #[test]
        fn canonical_form_survives_random_splits(
            seed_vals in proptest::collection::vec(0.0f64..4.0, 1..6),
            cuts in proptest::collection::vec(0.01f64..0.99, 1..5),
        ) {
            // build a step function, then re-express it with redundant
            // breakpoints; canonicalization must recover the original
            let n = seed_vals.len();
            let bps: Vec<f64> = (1..n).map(|i| i as f64).collect();
            let f = StepFunction::new(bps.clone(), seed_vals.clone()).unwrap();
            let mut bps2 = bps.clone();
            for (i, c) in cuts.iter().enumerate() {
                bps2.push(i as f64 + c); // interior duplicates of the same value
            }
            bps2.sort_by(|a, b| a.partial_cmp(b).unwrap());
            bps2.dedup_by(|a, b| (*a - *b).abs() <= X_MERGE_TOL);
            let vals2: Vec<f64> = std::iter::once(f.value_at(0.0))
                .chain(bps2.iter().map(|&b| f.value_at(b)))
                .collect();
            let g = StepFunction::new(bps2, vals2).unwrap();
            prop_assert_eq!(f, g);
        }

        #[test]
        fn integrate_differentiate_round_trip(
            vals in proptest::collection::vec(0.0f64..5.0, 1..6),
        ) {
            let n = vals.len();
            let bps: Vec<f64> = (1..n).map(|i| i as f64 * 0.7).collect();
            let r = StepFunction::new(bps, vals).unwrap();
            let f = r.integrate().unwrap();
            let d = f.differentiate();
            // compare at interval midpoints
            let mut xs = vec![0.0];
            xs.extend_from_slice(r.breakpoints());
            xs.push(xs.last().unwrap() + 1.0);
            for w in xs.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                prop_assert!((d.value_at(mid) - r.value_at(mid)).abs() < 1e-9);
            }
        }

        #[test]
        fn compose_associative_on_random_triples(
            a in 0.1f64..3.0, b in 0.0f64..2.0,
            c in 0.1f64..3.0, d in 0.0f64..2.0,
            e in 0.1f64..3.0, g in 0.0f64..2.0,
            knot in 0.5f64..2.0, rise in 0.0f64..3.0,
        ) {
            let f1 = MonotonePwl::new(vec![(0.0, b), (knot, b + rise)], a).unwrap();
            let f2 = MonotonePwl::affine(c, d);
            let f3 = MonotonePwl::affine(e, g);
            let left = MonotonePwl::compose(&MonotonePwl::compose(&f1, &f2), &f3);
            let right = MonotonePwl::compose(&f1, &MonotonePwl::compose(&f2, &f3));
            let mut x = 0.0;
            while x < 5.0 {
                prop_assert!((left.eval(x) - right.eval(x)).abs() <= 1e-9);
                x += 0.25;
            }
        }

        #[test]
        fn inverse_round_trip_on_strictly_increasing(
            s1 in 0.1f64..4.0, s2 in 0.1f64..4.0, s3 in 0.1f64..4.0,
            x1 in 0.2f64..1.5, x2 in 0.2f64..1.5,
        ) {
            let p1 = (0.0, 0.0);
            let p2 = (x1, s1 * x1);
            let p3 = (x1 + x2, s1 * x1 + s2 * x2);
            let f = MonotonePwl::new(vec![p1, p2, p3], s3).unwrap();
            let inv = f.inverse();
            let mut x = 0.0;
            while x < 4.0 {
                prop_assert!((inv.eval(f.eval(x)) - x).abs() <= 1e-9);
                x += 0.1;
            }
        }
    }
}
