//! Uniform periodic grids, sampled fields, Fourier multipliers and norms.
//!
//! Fourier conventions: the discrete transform of the nodal values is the
//! unnormalized DFT, so the continuum transform is approximated by
//! `spacing * dft` and Plancherel reads `∫|f|² ≈ (L / N²) Σ |dft_m|²`.
//!
//! At the Nyquist mode every symbol is replaced by its real part (the average
//! of its values at `±ξ_N`), so real fields stay real: `∂` and `H` vanish
//! there, `𝒟_γ⁻¹` becomes `(1 + γ²ξ_N²)⁻¹`, and even multipliers (`|ξ|^s`,
//! `⟨ξ⟩^s`) keep `|ξ_N| = π / spacing`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{config, usage, Result};

/// Smallest supported grid.
pub const MIN_POINTS: usize = 8;

/// Uniform periodic grid on `[-L/2, L/2)` with its wavenumber table.
pub struct Grid {
    n_points: usize,
    domain_length: f64,
    spacing: f64,
    nodes: Vec<f64>,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.n_points)
            .field("domain_length", &self.domain_length)
            .field("spacing", &self.spacing)
            .finish()
    }
}

/// Builds a grid with nodes `x_j = -L/2 + j L / N`.
pub fn make_grid(n_points: usize, domain_length: f64) -> Result<Arc<Grid>> {
    Grid::new(n_points, domain_length)
}

impl Grid {
    pub fn new(n_points: usize, domain_length: f64) -> Result<Arc<Self>> {
        if n_points < MIN_POINTS || !n_points.is_power_of_two() {
            return Err(config(format!(
                "grid size must be a power of two >= {MIN_POINTS}, got {n_points}"
            )));
        }
        if !(domain_length.is_finite() && domain_length > 0.0) {
            return Err(config(format!(
                "domain length must be positive, got {domain_length}"
            )));
        }
        let spacing = domain_length / n_points as f64;
        let nodes = (0..n_points)
            .map(|j| -0.5 * domain_length + j as f64 * spacing)
            .collect();
        let half = n_points / 2;
        let wavenumbers = (0..n_points)
            .map(|m| {
                let signed = if m < half {
                    m as f64
                } else {
                    m as f64 - n_points as f64
                };
                2.0 * PI * signed / domain_length
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Self {
            n_points,
            domain_length,
            spacing,
            nodes,
            wavenumbers,
            forward: planner.plan_fft_forward(n_points),
            inverse: planner.plan_fft_inverse(n_points),
        }))
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn nyquist_index(&self) -> usize {
        self.n_points / 2
    }

    /// Largest resolved `|ξ|`.
    pub fn nyquist_wavenumber(&self) -> f64 {
        PI / self.spacing
    }

    /// Grids are interchangeable when they discretize the same interval
    /// with the same number of points.
    pub fn same_as(&self, other: &Grid) -> bool {
        self.n_points == other.n_points && self.domain_length == other.domain_length
    }

    /// Wraps `x` into `[-L/2, L/2)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.domain_length;
        let mut y = (x + 0.5 * l).rem_euclid(l) - 0.5 * l;
        if y >= 0.5 * l {
            y -= l;
        }
        y
    }

    /// Unnormalized forward DFT of real nodal values.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.n_points);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Normalized inverse DFT, keeping the full complex result.
    pub fn inverse_complex(&self, mut spectrum: Vec<Complex64>) -> Vec<Complex64> {
        debug_assert_eq!(spectrum.len(), self.n_points);
        self.inverse.process(&mut spectrum);
        let scale = 1.0 / self.n_points as f64;
        for z in &mut spectrum {
            *z *= scale;
        }
        spectrum
    }

    /// Normalized inverse DFT, returning the real part.
    pub fn inverse(&self, spectrum: Vec<Complex64>) -> Vec<f64> {
        self.inverse_complex(spectrum).into_iter().map(|z| z.re).collect()
    }

    /// Applies the symbol `symbol(m, ξ_m)` to nodal values.
    pub fn apply_multiplier<F>(&self, values: &[f64], symbol: F) -> Vec<f64>
    where
        F: Fn(usize, f64) -> Complex64,
    {
        let mut spec = self.forward(values);
        for (m, z) in spec.iter_mut().enumerate() {
            *z *= symbol(m, self.wavenumbers[m]);
        }
        self.inverse(spec)
    }

    /// Symbol of `∂` (zero at Nyquist).
    pub fn derivative_symbol(&self, m: usize, xi: f64) -> Complex64 {
        if m == self.nyquist_index() {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, xi)
        }
    }

    /// Symbol of `H`, `i sgn ξ` (zero at ξ = 0 and at Nyquist).
    pub fn hilbert_symbol(&self, m: usize, xi: f64) -> Complex64 {
        if m == self.nyquist_index() || xi == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, xi.signum())
        }
    }

    /// Symbol of `𝒟_γ⁻¹`, `(1 + iγξ)⁻¹`; real part only at Nyquist.
    pub fn dgamma_inverse_symbol(&self, m: usize, xi: f64, gamma: f64) -> Complex64 {
        let z = 1.0 / Complex64::new(1.0, gamma * xi);
        if m == self.nyquist_index() {
            Complex64::new(z.re, 0.0)
        } else {
            z
        }
    }

    /// `|ξ|` including the Nyquist mode.
    pub fn abs_wavenumber(&self, m: usize) -> f64 {
        if m == self.nyquist_index() {
            self.nyquist_wavenumber()
        } else {
            self.wavenumbers[m].abs()
        }
    }

    /// Samples `f` at the nodes.
    pub fn sample<F: Fn(f64) -> f64>(self: &Arc<Self>, f: F) -> Field {
        Field::from_fn(self, f)
    }

    pub fn zeros(self: &Arc<Self>) -> Field {
        Field::zeros(self)
    }
}

/// Real function sampled on a grid. Values are always finite.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(usage(format!(
                "field has {} samples, grid has {}",
                values.len(),
                grid.n_points()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(usage("field contains non-finite samples"));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    /// Internal constructor for values produced by finite operations on
    /// finite inputs.
    pub(crate) fn from_vec(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_points());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &Arc<Grid>, f: F) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::from_vec(grid, values)
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::from_vec(grid, vec![0.0; grid.n_points()])
    }

    pub fn grid(&self) -> &Arc<Grid> {
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

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(usage("fields live on different grids"))
        }
    }

    /// L² inner product by the periodic trapezoid rule.
    pub fn dot(&self, other: &Field) -> f64 {
        debug_assert!(self.grid.same_as(&other.grid));
        self.grid.spacing()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoid quadrature of the samples.
    pub fn integral(&self) -> f64 {
        self.grid.spacing() * self.values.iter().sum::<f64>()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field {
        Field::from_vec(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination with the node coordinate.
    pub fn map_with_node<F: Fn(f64, f64) -> f64>(&self, f: F) -> Field {
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| f(x, v))
            .collect();
        Field::from_vec(&self.grid, values)
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &Field, f: F) -> Field {
        debug_assert!(self.grid.same_as(&other.grid));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Field::from_vec(&self.grid, values)
    }

    pub fn scale(&self, factor: f64) -> Field {
        self.map(|v| factor * v)
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &Field) -> Field {
        self.zip_with(other, |a, b| a + factor * b)
    }

    pub fn pointwise_mul(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a * b)
    }

    /// Reflection `y ↦ -y` on the grid (node `j` maps to node `N - j`).
    pub fn reflect(&self) -> Field {
        let n = self.values.len();
        let values = (0..n).map(|j| self.values[(n - j) % n]).collect();
        Field::from_vec(&self.grid, values)
    }

    pub fn even_part(&self) -> Field {
        self.zip_with(&self.reflect(), |a, b| 0.5 * (a + b))
    }

    pub fn odd_part(&self) -> Field {
        self.zip_with(&self.reflect(), |a, b| 0.5 * (a - b))
    }

    fn with_multiplier<F: Fn(usize, f64) -> Complex64>(&self, symbol: F) -> Field {
        Field::from_vec(&self.grid, self.grid.apply_multiplier(&self.values, symbol))
    }

    /// Largest imaginary part left by an inverse transform under `symbol`,
    /// relative to the field amplitude.
    pub fn imaginary_residue<F: Fn(usize, f64) -> Complex64>(&self, symbol: F) -> f64 {
        let mut spec = self.grid.forward(&self.values);
        for (m, z) in spec.iter_mut().enumerate() {
            *z *= symbol(m, self.grid.wavenumbers()[m]);
        }
        let out = self.grid.inverse_complex(spec);
        let amp = self.max_abs().max(f64::MIN_POSITIVE);
        out.iter().fold(0.0_f64, |m, z| m.max(z.im.abs())) / amp
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scale(-1.0)
    }
}

impl Mul<&Field> for f64 {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        rhs.scale(self)
    }
}

/// Hilbert transform, symbol `i sgn ξ`.
pub fn hilbert(f: &Field) -> Field {
    let grid = Arc::clone(f.grid());
    f.with_multiplier(|m, xi| grid.hilbert_symbol(m, xi))
}

/// Spectral derivative `∂_y`.
pub fn derivative(f: &Field) -> Field {
    let grid = Arc::clone(f.grid());
    f.with_multiplier(|m, xi| grid.derivative_symbol(m, xi))
}

/// Lowest order accepted by [`fractional_derivative`].
pub const MIN_FRACTIONAL_ORDER: f64 = -0.5;

/// `D^s`, symbol `|ξ|^s`. For `s < 0` the zero mode is set to 0.
pub fn fractional_derivative(f: &Field, s: f64) -> Result<Field> {
    if !s.is_finite() || s < MIN_FRACTIONAL_ORDER {
        return Err(config(format!(
            "fractional order {s} below the supported floor {MIN_FRACTIONAL_ORDER}"
        )));
    }
    let grid = Arc::clone(f.grid());
    Ok(f.with_multiplier(|m, _| {
        let k = grid.abs_wavenumber(m);
        let value = if k == 0.0 {
            if s == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            k.powf(s)
        };
        Complex64::new(value, 0.0)
    }))
}

/// `D = |ξ|`, the first-order case of [`fractional_derivative`].
pub fn abs_derivative(f: &Field) -> Field {
    let grid = Arc::clone(f.grid());
    f.with_multiplier(|m, _| Complex64::new(grid.abs_wavenumber(m), 0.0))
}

/// Bessel-type multiplier `⟨ξ⟩^s = (1 + ξ²)^{s/2}`.
pub fn bessel_multiplier(f: &Field, s: f64) -> Field {
    let grid = Arc::clone(f.grid());
    f.with_multiplier(|m, _| {
        let k = grid.abs_wavenumber(m);
        Complex64::new((1.0 + k * k).powf(0.5 * s), 0.0)
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(config(format!("regularization scale must be positive, got {gamma}")))
    }
}

/// `𝒟_γ = 1 + γ∂_y`.
pub fn dgamma(f: &Field, gamma: f64) -> Result<Field> {
    check_gamma(gamma)?;
    let grid = Arc::clone(f.grid());
    Ok(f.with_multiplier(|m, xi| 1.0 + gamma * grid.derivative_symbol(m, xi)))
}

/// `𝒟_γ⁻¹`, symbol `(1 + iγξ)⁻¹`.
pub fn dgamma_inverse(f: &Field, gamma: f64) -> Result<Field> {
    check_gamma(gamma)?;
    let grid = Arc::clone(f.grid());
    Ok(f.with_multiplier(|m, xi| grid.dgamma_inverse_symbol(m, xi, gamma)))
}

/// L² adjoint of `𝒟_γ⁻¹`, symbol `(1 - iγξ)⁻¹`.
pub fn dgamma_inverse_adjoint(f: &Field, gamma: f64) -> Result<Field> {
    check_gamma(gamma)?;
    let grid = Arc::clone(f.grid());
    Ok(f.with_multiplier(|m, xi| grid.dgamma_inverse_symbol(m, xi, gamma).conj()))
}

/// Translation `y ↦ f(y + shift)` by spectral interpolation.
pub fn translate(f: &Field, shift: f64) -> Field {
    let grid = Arc::clone(f.grid());
    f.with_multiplier(|m, xi| {
        if m == grid.nyquist_index() {
            Complex64::new((xi * shift).cos(), 0.0)
        } else {
            Complex64::from_polar(1.0, xi * shift)
        }
    })
}

/// `H^s` norm with weight `⟨ξ⟩^{2s}`; `s = 0` is the L² norm.
pub fn sobolev_norm(f: &Field, s: f64) -> f64 {
    let grid = f.grid();
    let spec = grid.forward(f.values());
    let n = grid.n_points() as f64;
    let weight = grid.domain_length() / (n * n);
    let sum: f64 = spec
        .iter()
        .enumerate()
        .map(|(m, z)| {
            let k = grid.abs_wavenumber(m);
            (1.0 + k * k).powf(s) * z.norm_sqr()
        })
        .sum();
    (weight * sum).sqrt()
}

/// Coarsest grid spacing at which unit cells count as resolved.
pub const MAX_LOCAL_SPACING: f64 = 0.25;

/// `sup_n ‖f‖_{L²(n, n+1)}` over the integer cells meeting the domain.
///
/// `f²` is interpolated linearly between nodes (periodically across the seam)
/// and integrated exactly over each cell.
pub fn local_sup_norm(f: &Field) -> Result<f64> {
    let grid = f.grid();
    if grid.spacing() > MAX_LOCAL_SPACING {
        return Err(config(format!(
            "grid spacing {} too coarse for unit-cell norms (max {MAX_LOCAL_SPACING})",
            grid.spacing()
        )));
    }
    Ok(cell_integrals_of_square(f)
        .into_iter()
        .fold(0.0_f64, |m, (_, v)| m.max(v))
        .sqrt())
}

/// `(n, ∫_{[n,n+1)} f²)` for every integer cell meeting `[-L/2, L/2)`.
pub(crate) fn cell_integrals_of_square(f: &Field) -> Vec<(i64, f64)> {
    let grid = f.grid();
    let h = grid.spacing();
    let x0 = -0.5 * grid.domain_length();
    let x_end = 0.5 * grid.domain_length();
    let sq: Vec<f64> = f.values().iter().map(|v| v * v).collect();
    let n = sq.len();
    // Cumulative integral at node j (node n is the periodic image of node 0).
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    for j in 0..n {
        let next = sq[(j + 1) % n];
        let last = cumulative[j];
        cumulative.push(last + 0.5 * h * (sq[j] + next));
    }
    let antiderivative = |x: f64| -> f64 {
        let t = ((x - x0) / h).clamp(0.0, n as f64);
        let j = (t.floor() as usize).min(n - 1);
        let frac = t - j as f64;
        let a = sq[j];
        let b = sq[(j + 1) % n];
        cumulative[j] + h * (a * frac + 0.5 * (b - a) * frac * frac)
    };
    let first = x0.floor() as i64;
    let last = (x_end.ceil() as i64) - 1;
    (first..=last)
        .map(|cell| {
            let a = (cell as f64).max(x0);
            let b = ((cell + 1) as f64).min(x_end);
            (cell, antiderivative(b) - antiderivative(a))
        })
        .collect()
}

/// `‖⟨y⟩^power f‖_{L²}`.
pub fn weighted_l2_norm(f: &Field, power: f64) -> f64 {
    let h = f.grid().spacing();
    let sum: f64 = f
        .grid()
        .nodes()
        .iter()
        .zip(f.values())
        .map(|(&y, &v)| (1.0 + y * y).powf(power) * v * v)
        .sum();
    (h * sum).sqrt()
}

/// Scale and center of the arctan localizer `g_{γ,y₀}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizerSpec {
    pub gamma: f64,
    pub y_center: f64,
}

impl LocalizerSpec {
    pub fn new(gamma: f64, y_center: f64) -> Result<Self> {
        let spec = Self { gamma, y_center };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !self.y_center.is_finite() {
            return Err(config(format!(
                "localizer needs 0 < γ <= 1 and finite center, got γ = {}, y₀ = {}",
                self.gamma, self.y_center
            )));
        }
        Ok(())
    }

    pub fn g(&self, y: f64) -> f64 {
        (self.gamma * (y - self.y_center)).atan() / self.gamma
    }

    pub fn g_prime(&self, y: f64) -> f64 {
        let z = self.gamma * (y - self.y_center);
        1.0 / (1.0 + z * z)
    }
}

/// Samples `(g_{γ,y₀}, g'_{γ,y₀})`.
pub fn localizer(spec: &LocalizerSpec, grid: &Arc<Grid>) -> Result<(Field, Field)> {
    spec.validate()?;
    Ok((grid.sample(|y| spec.g(y)), grid.sample(|y| spec.g_prime(y))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn q(y: f64) -> f64 {
        4.0 / (1.0 + y * y)
    }

    #[test]
    fn grid_arithmetic() {
        let g = make_grid(8, 8.0).unwrap();
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.nodes(), &[-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        let g = make_grid(8192, 1024.0).unwrap();
        assert_eq!(g.spacing(), 0.125);
        assert!((g.spacing() * g.n_points() as f64 - g.domain_length()).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(matches!(make_grid(7, 8.0), Err(Error::Config(_))));
        assert!(matches!(make_grid(4, 8.0), Err(Error::Config(_))));
        assert!(matches!(make_grid(8, 0.0), Err(Error::Config(_))));
        assert!(matches!(make_grid(8, -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn wavenumbers_antisymmetric_except_nyquist() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let k = g.wavenumbers();
        assert_eq!(k[0], 0.0);
        for m in 1..8 {
            assert_eq!(k[m], -k[16 - m]);
        }
        assert_eq!(k[8], -8.0);
    }

    #[test]
    fn hilbert_of_cosine_is_minus_sine() {
        let g = make_grid(64, 2.0 * PI).unwrap();
        let f = g.sample(|x| (3.0 * x).cos());
        let hf = hilbert(&f);
        for (&x, &v) in g.nodes().iter().zip(hf.values()) {
            assert!((v + (3.0 * x).sin()).abs() < 1e-13);
        }
        let one = g.sample(|_| 1.0);
        assert!(hilbert(&one).max_abs() < 1e-15);
    }

    #[test]
    fn hilbert_of_soliton_is_minus_y_q() {
        use crate::soliton::profile::periodic_y_q;
        let g = make_grid(8192, 1024.0).unwrap();
        let hq = hilbert(&g.sample(q));
        let periodic = g.sample(|y| -periodic_y_q(y, 1024.0));
        let err = (&hq - &periodic).norm_l2();
        assert!(err < 1e-4, "periodic err {err}");
        // Against the non-periodic -yQ the 1/y tail leaves an O(L^{-1/2}) gap.
        let raw = (&hq - &g.sample(|y| -y * q(y))).norm_l2();
        let g2 = make_grid(16384, 2048.0).unwrap();
        let raw2 = (&hilbert(&g2.sample(q)) - &g2.sample(|y| -y * q(y))).norm_l2();
        assert!(raw2 < raw && raw2 > 0.5 * raw, "{raw} {raw2}");
    }

    #[test]
    fn fractional_derivative_single_mode_and_identity() {
        let g = make_grid(64, 2.0 * PI).unwrap();
        let f = g.sample(|x| (5.0 * x).sin());
        let d = fractional_derivative(&f, 1.0).unwrap();
        for (&x, &v) in g.nodes().iter().zip(d.values()) {
            assert!((v - 5.0 * (5.0 * x).sin()).abs() < 1e-12);
        }
        let g = make_grid(1024, 128.0).unwrap();
        let qp = g.sample(|y| -8.0 * y / (1.0 + y * y).powi(2));
        let same = fractional_derivative(&qp, 0.0).unwrap();
        assert!((&same - &qp).max_abs() < 1e-13);
        assert!(matches!(fractional_derivative(&qp, -0.75), Err(Error::Config(_))));
    }

    #[test]
    fn abs_derivative_is_minus_hilbert_derivative() {
        let g = make_grid(2048, 256.0).unwrap();
        let f = g.sample(|y| (-0.05 * y * y).exp() * (1.0 + 0.5 * (0.8 * y).sin()));
        let lhs = fractional_derivative(&f, 1.0).unwrap();
        let rhs = -&hilbert(&derivative(&f));
        assert!((&lhs - &rhs).norm_l2() <= 1e-10 * lhs.norm_l2());
    }

    #[test]
    fn dgamma_inverse_pair() {
        let g = make_grid(256, 64.0).unwrap();
        let one = g.sample(|_| 1.0);
        let out = dgamma_inverse(&one, 0.3).unwrap();
        assert!((&out - &one).max_abs() < 1e-14);

        let f = g.sample(|y| (-0.1 * y * y).exp() * (1.0 + y).cos());
        let round = dgamma_inverse(&dgamma(&f, 0.2).unwrap(), 0.2).unwrap();
        assert!((&round - &f).norm_l2() <= 1e-10 * f.norm_l2());

        let k = 2.0 * PI * 5.0 / 64.0;
        let c = g.sample(|y| (k * y).cos());
        let gamma = 0.7;
        let out = dgamma_inverse(&c, gamma).unwrap();
        let amp = out.max_abs();
        let expected = (1.0 + gamma * gamma * k * k).powf(-0.5);
        assert!((amp - expected).abs() < 1e-3, "{amp} vs {expected}");
        assert!(matches!(dgamma_inverse(&c, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn soliton_norms() {
        let g = make_grid(8192, 1024.0).unwrap();
        let f = g.sample(q);
        let n0 = sobolev_norm(&f, 0.0);
        // Tail beyond |y| = 512 carries about 32/(3·512³) of the mass.
        assert!((n0 * n0 - 8.0 * PI).abs() / (8.0 * PI) < 1e-8);
        let qp = g.sample(|y| -8.0 * y / (1.0 + y * y).powi(2));
        let n1 = sobolev_norm(&qp, 0.0);
        assert!((n1 * n1 - 4.0 * PI).abs() / (4.0 * PI) < 1e-10);
        assert_eq!(sobolev_norm(&g.zeros(), 1.5), 0.0);
        assert!((weighted_l2_norm(&f, 0.0) - (8.0 * PI).sqrt()).abs() < 1e-6);
        assert_eq!(weighted_l2_norm(&g.zeros(), -1.0), 0.0);
    }

    #[test]
    fn plancherel_matches_trapezoid() {
        let g = make_grid(512, 64.0).unwrap();
        let f = g.sample(|y| (-(y - 1.0) * (y - 1.0) / 4.0).exp() * (2.0 * y).sin());
        let n0 = sobolev_norm(&f, 0.0);
        assert!((n0 - f.norm_l2()).abs() <= 1e-10 * n0);
    }

    #[test]
    fn weighted_norm_of_one() {
        // ∫_{-L/2}^{L/2} dy/(1+y²) = 2 arctan(L/2).
        let g = make_grid(8192, 1024.0).unwrap();
        let one = g.sample(|_| 1.0);
        let w = weighted_l2_norm(&one, -1.0);
        let exact = (2.0 * (512.0_f64).atan()).sqrt();
        assert!((w - exact).abs() < 1e-6, "{w} vs {exact}");
        assert!((w - PI.sqrt()).abs() < 2e-3);
    }

    #[test]
    fn local_sup_norm_of_soliton() {
        // Closed form: ∫₀¹ 16/(1+y²)² dy = 16 (1/4 + π/8) = 4 + 2π.
        let exact = (4.0 + 2.0 * PI).sqrt();
        // Independent composite Simpson oracle.
        let m = 2000;
        let hs = 1.0 / m as f64;
        let mut s = 0.0;
        for i in 0..=m {
            let y = i as f64 * hs;
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * q(y) * q(y);
        }
        let simpson = (s * hs / 3.0).sqrt();
        assert!((simpson - exact).abs() < 1e-10);
        let g = make_grid(8192, 1024.0).unwrap();
        let got = local_sup_norm(&g.sample(q)).unwrap();
        assert!((got - exact).abs() < 2e-3 * exact, "{got} vs {exact}");
        assert_eq!(local_sup_norm(&g.zeros()).unwrap(), 0.0);
    }

    #[test]
    fn local_sup_norm_single_cell_support() {
        let g = make_grid(4096, 512.0).unwrap();
        let bump = g.sample(|y| {
            if y > 5.0 && y < 6.0 {
                let t = (y - 5.5) * 2.0;
                (-1.0 / (1.0 - t * t)).exp()
            } else {
                0.0
            }
        });
        let local = local_sup_norm(&bump).unwrap();
        assert!((local - bump.norm_l2()).abs() < 1e-12);
        let coarse = make_grid(64, 64.0).unwrap();
        assert!(matches!(local_sup_norm(&coarse.zeros()), Err(Error::Config(_))));
    }

    #[test]
    fn localizer_properties() {
        let g = make_grid(1024, 256.0).unwrap();
        let spec = LocalizerSpec::new(0.1, 3.0).unwrap();
        assert_eq!(spec.g_prime(3.0), 1.0);
        for r in [0.5, 1.0, 7.0, 40.0] {
            assert!((spec.g(3.0 + r) + spec.g(3.0 - r)).abs() < 1e-12);
        }
        let (gf, gp) = localizer(&spec, &g).unwrap();
        assert!(gf.max_abs() <= PI / (2.0 * 0.1));
        assert!(gp.values().iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(LocalizerSpec::new(1.5, 0.0).is_err());
        assert!(LocalizerSpec::new(0.0, 0.0).is_err());
    }

    #[test]
    fn translate_moves_profile() {
        let g = make_grid(2048, 256.0).unwrap();
        let f = g.sample(|y| (-y * y).exp());
        let moved = translate(&f, 1.3);
        let expected = g.sample(|y| (-(y + 1.3) * (y + 1.3)).exp());
        assert!((&moved - &expected).max_abs() < 1e-12);
    }

    #[test]
    fn multipliers_keep_fields_real() {
        let g = make_grid(512, 64.0).unwrap();
        let f = g.sample(|y| (0.3 * y).sin() * (-0.01 * y * y).exp() + 0.1);
        let g2 = Arc::clone(&g);
        assert!(f.imaginary_residue(|m, xi| g2.hilbert_symbol(m, xi)) < 1e-12);
        assert!(f.imaginary_residue(|m, xi| g2.derivative_symbol(m, xi)) < 1e-12);
        assert!(f.imaginary_residue(|m, xi| g2.dgamma_inverse_symbol(m, xi, 0.4)) < 1e-12);
    }
}
