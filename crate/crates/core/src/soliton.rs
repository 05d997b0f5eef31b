//! The soliton family `Q_{a,c}(x) = c Q(c(x - a))`, `Q(y) = 4 / (1 + y²)`,
//! its derivatives, the eigenfunctions of the linearized operator and the
//! table of exact integrals.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::grid::{abs_derivative, Field, Grid};

/// Closed forms of the unit profile and the derivatives used elsewhere.
pub mod profile {
    use std::f64::consts::PI;

    pub fn q(y: f64) -> f64 {
        4.0 / (1.0 + y * y)
    }

    pub fn q_prime(y: f64) -> f64 {
        let d = 1.0 + y * y;
        -8.0 * y / (d * d)
    }

    pub fn q_second(y: f64) -> f64 {
        let d = 1.0 + y * y;
        (24.0 * y * y - 8.0) / (d * d * d)
    }

    pub fn q_third(y: f64) -> f64 {
        let d = 1.0 + y * y;
        96.0 * y * (1.0 - y * y) / (d * d * d * d)
    }

    /// `y Q(y)`, which equals `-H Q`.
    pub fn y_q(y: f64) -> f64 {
        y * q(y)
    }

    /// `(yQ)'`, the scaling generator at `c = 1`.
    pub fn y_q_prime(y: f64) -> f64 {
        let d = 1.0 + y * y;
        4.0 * (1.0 - y * y) / (d * d)
    }

    /// `(yQ)''`.
    pub fn y_q_second(y: f64) -> f64 {
        let d = 1.0 + y * y;
        -8.0 * y * (3.0 - y * y) / (d * d * d)
    }

    /// Sum of `Q(y + kL)` over all integers `k`.
    pub fn periodic_q(y: f64, period: f64) -> f64 {
        let w = 2.0 * PI / period;
        4.0 * (PI / period) * w.sinh() / (w.cosh() - (w * y).cos())
    }

    /// Symmetric sum of `(y + kL) Q(y + kL)` over all integers `k`; this is
    /// `-H` of [`periodic_q`] on the circle of length `period`.
    pub fn periodic_y_q(y: f64, period: f64) -> f64 {
        let w = 2.0 * PI / period;
        4.0 * (PI / period) * (w * y).sin() / (w.cosh() - (w * y).cos())
    }
}

/// Translation and scale of a soliton.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub a: f64,
    pub c: f64,
}

impl SolitonParams {
    pub fn new(a: f64, c: f64) -> Result<Self> {
        let p = Self { a, c };
        p.validate()?;
        Ok(p)
    }

    pub fn unit() -> Self {
        Self { a: 0.0, c: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) || !self.a.is_finite() {
            return Err(config(format!(
                "soliton needs finite a and c > 0, got a = {}, c = {}",
                self.a, self.c
            )));
        }
        Ok(())
    }

    /// Scaled coordinate `c (x - a)` with the minimum-image convention on `grid`.
    pub fn scaled_coordinate(&self, grid: &Grid, x: f64) -> f64 {
        self.c * grid.wrap(x - self.a)
    }
}

/// Samples `c Q(c(x - a))` at the nodes. The center is taken modulo the
/// period, so the profile is always centered at the nearest image of `a`.
pub fn soliton_field(grid: &Arc<Grid>, p: SolitonParams) -> Result<Field> {
    p.validate()?;
    Ok(grid.sample(|x| p.c * profile::q(p.scaled_coordinate(grid, x))))
}

/// Samples `scale * f(c (x - a))` for any profile function `f`.
pub fn scaled_profile<F: Fn(f64) -> f64>(
    grid: &Arc<Grid>,
    p: SolitonParams,
    scale: f64,
    f: F,
) -> Field {
    grid.sample(|x| scale * f(p.scaled_coordinate(grid, x)))
}

/// L² norm of `c Q_{a,c} - H ∂Q_{a,c} - ½ Q_{a,c}²`.
pub fn soliton_residual(p: SolitonParams, grid: &Arc<Grid>) -> Result<f64> {
    soliton_residual_with_speed(p, p.c, grid)
}

/// Same as [`soliton_residual`] but with the speed factor decoupled from the
/// profile scale; the defect is `(speed - c) Q_{a,c}` when they differ.
pub fn soliton_residual_with_speed(p: SolitonParams, speed: f64, grid: &Arc<Grid>) -> Result<f64> {
    let q = soliton_field(grid, p)?;
    // -H∂ = D.
    let dq = abs_derivative(&q);
    let defect = q.zip_with(&dq, |qv, dv| speed * qv + dv - 0.5 * qv * qv);
    Ok(defect.norm_l2())
}

/// Which eigenfunction of the linearized operator to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenSign {
    Plus,
    Minus,
}

/// `(e_±, λ_±)` with `e_± = Q + μ_± (yQ)'`, `μ_± = (∓√5 - 1)/2`,
/// `λ_± = (±√5 - 1)/2`.
pub fn eigenfunction_field(grid: &Arc<Grid>, sign: EigenSign) -> (Field, f64) {
    let s5 = 5.0_f64.sqrt();
    let (mix, lambda) = match sign {
        EigenSign::Plus => ((-s5 - 1.0) / 2.0, (s5 - 1.0) / 2.0),
        EigenSign::Minus => ((s5 - 1.0) / 2.0, (-s5 - 1.0) / 2.0),
    };
    let field = grid.sample(|y| profile::q(y) + mix * profile::y_q_prime(y));
    (field, lambda)
}

/// Exact integrals of the unit profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormTable {
    /// `‖Q‖²`
    pub norm_q_sq: f64,
    /// `‖(yQ)'‖²`
    pub norm_yq_prime_sq: f64,
    /// `⟨(yQ)', Q⟩`
    pub inner_yq_prime_q: f64,
    /// `‖Q + ((√5 - 1)/2)(yQ)'‖²`, the squared norm of `e₋`.
    pub norm_eminus_sq: f64,
    /// `∫ z² Q Q''`
    pub int_z2_q_qpp: f64,
    /// `cos²` of the angle between `e₋` and `(yQ)'`.
    pub cos2_beta: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    /// `‖Q‖²` in the mass normalization `½∫u²`.
    pub mass_q: f64,
    /// `E₀(Q) = -½∫Q H Q' - ⅙∫Q³`.
    pub energy_q: f64,
    /// `∫ Q³`
    pub int_q_cubed: f64,
}

impl ClosedFormTable {
    /// `‖∂Q_{a,c}‖² = 4π c³`.
    pub fn norm_q_prime_c_sq(&self, c: f64) -> f64 {
        4.0 * PI * c * c * c
    }
}

pub fn closed_form_table() -> ClosedFormTable {
    let s5 = 5.0_f64.sqrt();
    ClosedFormTable {
        norm_q_sq: 8.0 * PI,
        norm_yq_prime_sq: 4.0 * PI,
        inner_yq_prime_q: 4.0 * PI,
        norm_eminus_sq: 2.0 * (5.0 + s5) * PI,
        int_z2_q_qpp: 4.0 * PI,
        cos2_beta: 0.5 + s5 / 10.0,
        lambda_plus: (s5 - 1.0) / 2.0,
        lambda_minus: -(s5 + 1.0) / 2.0,
        mass_q: 4.0 * PI,
        energy_q: -2.0 * PI,
        int_q_cubed: 24.0 * PI,
    }
}

#[cfg(test)]
mod tests {
    use super::profile::*;
    use super::*;
    use crate::grid::{hilbert, make_grid};
    use proptest::prelude::*;

    fn central(f: fn(f64) -> f64, y: f64) -> f64 {
        let h = 1e-4;
        (f(y - 2.0 * h) - 8.0 * f(y - h) + 8.0 * f(y + h) - f(y + 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn sampled_values() {
        let g = make_grid(8, 8.0).unwrap();
        let q = soliton_field(&g, SolitonParams::unit()).unwrap();
        assert_eq!(q.values()[4], 4.0);
        assert_eq!(q.values()[5], 2.0);
        let q = soliton_field(&g, SolitonParams::new(3.0, 2.0).unwrap()).unwrap();
        assert_eq!(q.values()[7], 8.0);
        assert!(SolitonParams::new(0.0, 0.0).is_err());
        assert!(soliton_field(&g, SolitonParams { a: 0.0, c: -1.0 }).is_err());
    }

    #[test]
    fn derivative_closed_forms_match_finite_differences() {
        let derivs: [(fn(f64) -> f64, fn(f64) -> f64); 5] = [
            (q, q_prime),
            (q_prime, q_second),
            (q_second, q_third),
            (y_q, y_q_prime),
            (y_q_prime, y_q_second),
        ];
        for y in [-3.1, -0.7, 0.0, 0.4, 1.0, 2.5] {
            for (f, df) in derivs {
                assert!((central(f, y) - df(y)).abs() < 1e-9, "y = {y}");
            }
        }
    }

    #[test]
    fn residual_small_and_speed_defect() {
        let g = make_grid(8192, 1024.0).unwrap();
        let r = soliton_residual(SolitonParams::unit(), &g).unwrap();
        assert!(r <= 1e-3, "{r}");
        let r = soliton_residual(SolitonParams::new(5.0, 2.0).unwrap(), &g).unwrap();
        assert!(r <= 1e-3, "{r}");
        let r = soliton_residual_with_speed(SolitonParams::unit(), 2.0, &g).unwrap();
        assert!((r - (8.0 * PI).sqrt()).abs() < 1e-3, "{r}");
    }

    #[test]
    fn eigenpairs() {
        let g = make_grid(64, 32.0).unwrap();
        let (ep, lp) = eigenfunction_field(&g, EigenSign::Plus);
        let (em, lm) = eigenfunction_field(&g, EigenSign::Minus);
        assert!((lp - 0.618_033_988_749_895).abs() < 1e-12);
        assert!((lm + 1.618_033_988_749_895).abs() < 1e-12);
        assert!((&ep - &ep.reflect()).max_abs() < 1e-14);
        assert!((&em - &em.reflect()).max_abs() < 1e-14);
    }

    #[test]
    fn table_against_quadrature() {
        let t = closed_form_table();
        let g = make_grid(8192, 1024.0).unwrap();
        let q_f = g.sample(q);
        let yqp = g.sample(y_q_prime);
        let (em, _) = eigenfunction_field(&g, EigenSign::Minus);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(q_f.dot(&q_f), t.norm_q_sq) < 1e-6);
        assert!(rel(yqp.dot(&yqp), t.norm_yq_prime_sq) < 1e-6);
        assert!(rel(yqp.dot(&q_f), t.inner_yq_prime_q) < 1e-6);
        assert!(rel(em.dot(&em), t.norm_eminus_sq) < 1e-6);
        let cubed = q_f.map(|v| v * v * v).integral();
        assert!(rel(cubed, t.int_q_cubed) < 1e-6);
        let z2 = g.sample(|z| z * z * q(z) * q_second(z)).integral();
        assert!(rel(z2, t.int_z2_q_qpp) < 1e-6);
        let cos2 = em.dot(&yqp).powi(2) / (em.dot(&em) * yqp.dot(&yqp));
        assert!(rel(cos2, t.cos2_beta) < 1e-6);
        let p = SolitonParams::new(0.0, 1.7).unwrap();
        let qc = scaled_profile(&g, p, p.c * p.c, q_prime);
        assert!(rel(qc.dot(&qc), t.norm_q_prime_c_sq(1.7)) < 1e-6);
    }

    #[test]
    fn profile_identities() {
        let g = make_grid(8192, 1024.0).unwrap();
        let q_f = g.sample(q);
        let y_qp = g.sample(|y| y * q_prime(y));
        let rhs = q_f.map(|v| 0.5 * v * v - 2.0 * v);
        assert!((&y_qp - &rhs).max_abs() < 1e-13);
        let hq = hilbert(&q_f);
        let sum = &hq + &g.sample(|y| periodic_y_q(y, 1024.0));
        assert!(sum.norm_l2() < 1e-3, "{}", sum.norm_l2());
        let images = &g.sample(|y| periodic_q(y, 1024.0)) - &q_f;
        assert!(images.max_abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn scaled_field_peak(a in -20.0..20.0f64, c in 0.5..2.0f64) {
            let g = make_grid(256, 64.0).unwrap();
            let f = soliton_field(&g, SolitonParams::new(a, c).unwrap()).unwrap();
            prop_assert!(f.max_abs() <= 4.0 * c + 1e-12);
            prop_assert!(f.values().iter().all(|&v| v > 0.0));
        }
    }
}
