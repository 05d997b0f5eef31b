//! Slowly varying potentials `V(x) = W(hx)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::grid::{Field, Grid};

/// Default amplitude of the bump profile.
pub const DEFAULT_BUMP_AMPLITUDE: f64 = 0.2;

/// Profile `W` and its first three derivatives sampled on a uniform table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialTable {
    pub x_start: f64,
    pub x_step: f64,
    /// Rows of `[W, W', W'', W''']`.
    pub samples: Vec<[f64; 4]>,
}

impl PotentialTable {
    /// Tabulates `derivs(x) = [W, W', W'', W''']` on `count` points of
    /// `[x_start, x_end]`.
    pub fn from_fn<F: Fn(f64) -> [f64; 4]>(x_start: f64, x_end: f64, count: usize, derivs: F) -> Result<Self> {
        if count < 2 || !(x_end > x_start) {
            return Err(config("potential table needs at least two points on a nonempty interval"));
        }
        let x_step = (x_end - x_start) / (count - 1) as f64;
        let samples = (0..count).map(|k| derivs(x_start + k as f64 * x_step)).collect();
        let table = Self {
            x_start,
            x_step,
            samples,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 || !(self.x_step > 0.0) || !self.x_start.is_finite() {
            return Err(config("potential table needs at least two rows and a positive step"));
        }
        if self.samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(config("potential table contains non-finite samples"));
        }
        let first = self.samples[0];
        let last = self.samples[self.samples.len() - 1];
        let edge = first.iter().chain(last.iter()).fold(0.0_f64, |m, v| m.max(v.abs()));
        if edge > 1e-12 {
            return Err(config("potential table must vanish with its derivatives at both ends"));
        }
        Ok(())
    }

    /// Derivative of order `k` at `x`: cubic Hermite interpolation from the
    /// order-`k` and order-`k+1` columns, linear for the top column; zero
    /// outside the table.
    fn eval(&self, x: f64, k: usize) -> f64 {
        let n = self.samples.len();
        let t = (x - self.x_start) / self.x_step;
        if !(0.0..=(n - 1) as f64).contains(&t) {
            return 0.0;
        }
        let i = (t.floor() as usize).min(n - 2);
        let s = t - i as f64;
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        if k == 3 {
            return a[3] + s * (b[3] - a[3]);
        }
        let h = self.x_step;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * a[k] + h10 * h * a[k + 1] + h01 * b[k] + h11 * h * b[k + 1]
    }
}

/// Shape of the profile `W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialShape {
    Zero,
    /// `β exp(-1/(1 - (x/w)²))` for `|x| < w`.
    Bump { amplitude: f64, width: f64 },
    /// `W(x) = x²`: a test hook for exact Taylor remainders, not compactly
    /// supported.
    Quadratic,
    Table(PotentialTable),
}

/// `W` and the scale `h` of `V(x) = W(hx)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub h: f64,
    pub shape: PotentialShape,
}

impl PotentialSpec {
    pub fn new(h: f64, shape: PotentialShape) -> Result<Self> {
        let spec = Self { h, shape };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero() -> Self {
        Self {
            h: 1.0,
            shape: PotentialShape::Zero,
        }
    }

    /// Default bump of amplitude `β` and unit width.
    pub fn bump(h: f64, amplitude: f64) -> Result<Self> {
        Self::new(
            h,
            PotentialShape::Bump {
                amplitude,
                width: 1.0,
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(config(format!("potential scale needs 0 < h <= 1, got {}", self.h)));
        }
        match &self.shape {
            PotentialShape::Bump { amplitude, width } => {
                if !amplitude.is_finite() || !(*width > 0.0 && width.is_finite()) {
                    return Err(config("bump needs finite amplitude and positive width"));
                }
            }
            PotentialShape::Table(t) => t.validate()?,
            PotentialShape::Zero | PotentialShape::Quadratic => {}
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        match &self.shape {
            PotentialShape::Zero => true,
            PotentialShape::Bump { amplitude, .. } => *amplitude == 0.0,
            _ => false,
        }
    }

    /// `[W, W', W'', W''']` at `x` (slow variable).
    pub fn derivatives(&self, x: f64) -> [f64; 4] {
        match &self.shape {
            PotentialShape::Zero => [0.0; 4],
            PotentialShape::Quadratic => [x * x, 2.0 * x, 2.0, 0.0],
            PotentialShape::Bump { amplitude, width } => {
                let z = x / width;
                if z.abs() >= 1.0 {
                    return [0.0; 4];
                }
                let d = 1.0 - z * z;
                let g = -1.0 / d;
                let g1 = -2.0 * z / (d * d);
                let g2 = -(2.0 + 6.0 * z * z) / (d * d * d);
                let g3 = -24.0 * z * (1.0 + z * z) / (d * d * d * d);
                let phi = amplitude * g.exp();
                [
                    phi,
                    phi * g1 / width,
                    phi * (g2 + g1 * g1) / (width * width),
                    phi * (g3 + 3.0 * g1 * g2 + g1 * g1 * g1) / (width * width * width),
                ]
            }
            PotentialShape::Table(t) => [t.eval(x, 0), t.eval(x, 1), t.eval(x, 2), t.eval(x, 3)],
        }
    }

    pub fn w(&self, x: f64) -> f64 {
        self.derivatives(x)[0]
    }

    pub fn w1(&self, x: f64) -> f64 {
        self.derivatives(x)[1]
    }

    pub fn w2(&self, x: f64) -> f64 {
        self.derivatives(x)[2]
    }

    pub fn w3(&self, x: f64) -> f64 {
        self.derivatives(x)[3]
    }

    /// `V(x) = W(hx)` at the nodes.
    pub fn sample(&self, grid: &Arc<Grid>) -> Field {
        grid.sample(|x| self.w(self.h * x))
    }

    /// Upper bound of `|W''|` over its support, by sampling.
    pub fn max_abs_w2(&self) -> f64 {
        let (lo, hi) = self.support().unwrap_or((-1.0, 1.0));
        (0..=4000)
            .map(|k| self.w2(lo + (hi - lo) * k as f64 / 4000.0).abs())
            .fold(0.0, f64::max)
    }

    /// Support of `W` in the slow variable, when compact.
    pub fn support(&self) -> Option<(f64, f64)> {
        match &self.shape {
            PotentialShape::Zero => Some((0.0, 0.0)),
            PotentialShape::Bump { width, .. } => Some((-width, *width)),
            PotentialShape::Quadratic => None,
            PotentialShape::Table(t) => Some((
                t.x_start,
                t.x_start + t.x_step * (t.samples.len() - 1) as f64,
            )),
        }
    }
}

/// Taylor remainder `W(h(y + a)) - W(ha) - h W'(ha) y` at the nodes.
pub fn e2_remainder(grid: &Arc<Grid>, a: f64, pot: &PotentialSpec) -> Field {
    let h = pot.h;
    let [w0, w1, _, _] = pot.derivatives(h * a);
    grid.sample(|y| pot.w(h * (y + a)) - w0 - h * w1 * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use proptest::prelude::*;

    fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let e = 1e-4;
        (f(x - 2.0 * e) - 8.0 * f(x - e) + 8.0 * f(x + e) - f(x + 2.0 * e)) / (12.0 * e)
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        for width in [1.0, 2.5] {
            let p = PotentialSpec::new(
                0.1,
                PotentialShape::Bump {
                    amplitude: 0.2,
                    width,
                },
            )
            .unwrap();
            for x in [-0.9, -0.4, 0.0, 0.3, 0.77] {
                let x = x * width;
                assert!((central(|t| p.w(t), x) - p.w1(x)).abs() < 1e-8);
                assert!((central(|t| p.w1(t), x) - p.w2(x)).abs() < 1e-7);
                assert!((central(|t| p.w2(t), x) - p.w3(x)).abs() < 1e-6);
            }
            assert_eq!(p.derivatives(1.2 * width), [0.0; 4]);
        }
    }

    #[test]
    fn validation() {
        assert!(PotentialSpec::bump(0.0, 0.2).is_err());
        assert!(PotentialSpec::bump(1.5, 0.2).is_err());
        assert!(PotentialSpec::new(0.1, PotentialShape::Bump { amplitude: 0.2, width: 0.0 }).is_err());
        assert!(PotentialTable::from_fn(0.0, 1.0, 10, |_| [1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn table_reproduces_bump() {
        let bump = PotentialSpec::bump(0.1, 0.2).unwrap();
        let table = PotentialTable::from_fn(-1.0, 1.0, 2001, |x| bump.derivatives(x)).unwrap();
        let tab = PotentialSpec::new(0.1, PotentialShape::Table(table)).unwrap();
        for x in [-0.95, -0.5, -0.123, 0.0, 0.4321, 0.8] {
            let a = bump.derivatives(x);
            let b = tab.derivatives(x);
            assert!((a[0] - b[0]).abs() < 1e-10);
            assert!((a[1] - b[1]).abs() < 1e-8);
            assert!((a[2] - b[2]).abs() < 1e-6);
            assert!((a[3] - b[3]).abs() < 1e-3);
        }
        assert_eq!(tab.w(3.0), 0.0);
    }

    #[test]
    fn e2_cases() {
        let g = make_grid(64, 32.0).unwrap();
        let quad = PotentialSpec::new(0.1, PotentialShape::Quadratic).unwrap();
        let e = e2_remainder(&g, 3.0, &quad);
        for (&y, &v) in g.nodes().iter().zip(e.values()) {
            assert!((v - 0.01 * y * y).abs() < 1e-12);
        }
        let zero = PotentialSpec::zero();
        assert_eq!(e2_remainder(&g, 1.0, &zero).max_abs(), 0.0);
    }

    proptest! {
        #[test]
        fn e2_taylor_bound(a in -15.0..15.0f64, h in 0.02..0.2f64) {
            let g = make_grid(256, 64.0).unwrap();
            let p = PotentialSpec::bump(h, 0.2).unwrap();
            let bound = 0.5 * h * h * p.max_abs_w2() * 1.0001;
            let e = e2_remainder(&g, a, &p);
            for (&y, &v) in g.nodes().iter().zip(e.values()) {
                prop_assert!(v.abs() <= bound * y * y + 1e-15);
            }
        }
    }
}
