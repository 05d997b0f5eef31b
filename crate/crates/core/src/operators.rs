//! Linearized operators around the unit soliton, the projector onto the
//! translation mode, the dual variable, and the commutator-norm probe.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, usage, Error, Result};
use crate::grid::{abs_derivative, dgamma_inverse, dgamma_inverse_adjoint, make_grid, Field, Grid};
use crate::soliton::profile;

/// The operators acting on perturbations of the unit soliton.
///
/// * `L`: `1 + D - Q`
/// * `Lc`: `c + D - c Q(c y)`
/// * `Ltilde`: `2D + 1 - yQ' - Q`
/// * `P`: `v ↦ ⟨v, 𝓛Q''⟩ / ‖Q'‖² · Q'`
/// * `DgammaInvL`: `v ↦ 𝒟_γ⁻¹ 𝓛 v`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    L,
    Lc { c: f64 },
    Ltilde,
    P,
    DgammaInvL { gamma: f64 },
}

impl OperatorSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OperatorSpec::Lc { c } if !(c.is_finite() && c > 0.0) => {
                Err(config(format!("scaled operator needs c > 0, got {c}")))
            }
            OperatorSpec::DgammaInvL { gamma } if !(gamma.is_finite() && gamma > 0.0) => {
                Err(config(format!("dual operator needs γ > 0, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the operator is symmetric in L².
    pub fn is_self_adjoint(&self) -> bool {
        matches!(self, OperatorSpec::L | OperatorSpec::Lc { .. } | OperatorSpec::Ltilde)
    }

    /// The multiplication (potential) part of the self-adjoint kinds, so that
    /// the operator reads `kinetic_scale · D + shift + potential(y)`.
    pub(crate) fn local_parts(&self) -> Option<(f64, Box<dyn Fn(f64) -> f64 + Sync>)> {
        match *self {
            OperatorSpec::L => Some((1.0, Box::new(|y| 1.0 - profile::q(y)))),
            OperatorSpec::Lc { c } => Some((1.0, Box::new(move |y| c - c * profile::q(c * y)))),
            OperatorSpec::Ltilde => Some((
                2.0,
                Box::new(|y| 1.0 - y * profile::q_prime(y) - profile::q(y)),
            )),
            _ => None,
        }
    }
}

/// `‖Q'‖²`, used by the projector.
pub const NORM_Q_PRIME_SQ: f64 = 4.0 * PI;

/// `𝓛Q''`. Differentiating `𝓛Q' = 0` gives `𝓛Q'' = (Q')²`.
pub fn l_of_q_second(y: f64) -> f64 {
    let qp = profile::q_prime(y);
    qp * qp
}

/// `ℙv = ⟨v, 𝓛Q''⟩ / ‖Q'‖² · Q'`.
pub fn projector(f: &Field) -> Field {
    let grid = f.grid();
    let weight = grid.sample(l_of_q_second);
    let coefficient = f.dot(&weight) / NORM_Q_PRIME_SQ;
    grid.sample(|y| coefficient * profile::q_prime(y))
}

/// Applies `𝓛 = 1 + D - Q`.
pub fn apply_l(f: &Field) -> Field {
    let df = abs_derivative(f);
    let local = f.map_with_node(|y, v| (1.0 - profile::q(y)) * v);
    &df + &local
}

pub fn apply_operator(spec: &OperatorSpec, f: &Field) -> Result<Field> {
    spec.validate()?;
    Ok(match *spec {
        OperatorSpec::P => projector(f),
        OperatorSpec::DgammaInvL { gamma } => dgamma_inverse(&apply_l(f), gamma)?,
        OperatorSpec::L => apply_l(f),
        _ => {
            let (kinetic, potential) = spec.local_parts().expect("self-adjoint kind");
            let df = abs_derivative(f);
            let local = f.map_with_node(|y, v| potential(y) * v);
            df.zip_with(&local, |d, l| kinetic * d + l)
        }
    })
}

/// Like [`apply_operator`] but checks that `f` lives on `grid`.
pub fn apply_operator_on(spec: &OperatorSpec, grid: &Grid, f: &Field) -> Result<Field> {
    if !f.grid().same_as(grid) {
        return Err(usage("field and operator grids differ"));
    }
    apply_operator(spec, f)
}

/// `⟨(op) f, f⟩` for the self-adjoint kinds.
pub fn quadratic_form(spec: &OperatorSpec, f: &Field) -> Result<f64> {
    if !spec.is_self_adjoint() {
        return Err(usage(format!("quadratic form needs a self-adjoint kind, got {spec:?}")));
    }
    Ok(apply_operator(spec, f)?.dot(f))
}

/// Settings for randomized power iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerIterationConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for PowerIterationConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3000,
            tolerance: 1e-7,
            seed: 0x5eed,
        }
    }
}

/// Largest singular value of a real linear map given by its action and its
/// adjoint action, from power iteration on `AᵀA` with `trials` random starts.
/// Returns the largest converged estimate and the iterations used.
pub fn operator_norm<A, B>(
    n: usize,
    apply: A,
    apply_adjoint: B,
    trials: usize,
    cfg: &PowerIterationConfig,
) -> Result<(f64, usize)>
where
    A: Fn(&[f64]) -> Vec<f64> + Sync,
    B: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if trials == 0 {
        return Err(config("power iteration needs at least one trial"));
    }
    let results: Vec<Result<(f64, usize)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(trial as u64));
            let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            normalize(&mut x);
            let mut sigma = 0.0;
            for it in 1..=cfg.max_iterations {
                let ax = apply(&x);
                let next_sigma = norm(&ax);
                if next_sigma == 0.0 {
                    return Ok((0.0, it));
                }
                let mut y = apply_adjoint(&ax);
                if norm(&y) == 0.0 {
                    return Ok((next_sigma, it));
                }
                normalize(&mut y);
                let converged = (next_sigma - sigma).abs() <= cfg.tolerance * next_sigma;
                sigma = next_sigma;
                x = y;
                if converged {
                    return Ok((sigma, it));
                }
            }
            Err(Error::NotConverged {
                iterations: cfg.max_iterations,
                estimate: sigma,
            })
        })
        .collect();
    let mut best = 0.0_f64;
    let mut iterations = 0;
    let mut failure: Option<(usize, f64)> = None;
    for r in results {
        match r {
            Ok((s, it)) => {
                best = best.max(s);
                iterations = iterations.max(it);
            }
            Err(Error::NotConverged { iterations, estimate }) => {
                let worst = failure.map_or(estimate, |(_, e)| e.max(estimate));
                failure = Some((iterations, worst));
            }
            Err(e) => return Err(e),
        }
    }
    if let Some((iterations, estimate)) = failure {
        return Err(Error::NotConverged {
            iterations,
            estimate: estimate.max(best),
        });
    }
    Ok((best, iterations))
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) {
    let n = norm(x);
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Grid used for the commutator probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub n_points: usize,
    pub domain_length: f64,
}

impl ProbeGrid {
    /// Default: `N = 2048` points on a window of `16/γ`, so that the weight
    /// scale `1/γ` is resolved in space and the kernel scale `γ` roughly in
    /// frequency.
    pub fn for_gamma(gamma: f64) -> Self {
        Self {
            n_points: 2048,
            domain_length: 16.0 / gamma,
        }
    }
}

/// Result of [`commutator_probe`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorProbe {
    pub gamma: f64,
    /// Estimated L² operator norm.
    pub norm: f64,
    /// `norm / (γ ln γ⁻¹)`.
    pub ratio: f64,
    pub trials: usize,
    pub iterations: usize,
    pub grid: ProbeGrid,
}

/// Largest supported probe scale.
pub const MAX_PROBE_GAMMA: f64 = 0.5;

/// The map `f ↦ ⟨γy⟩⁻¹ 𝒟_γ⁻¹ 𝓛 (⟨γy⟩ f) - 𝓛 𝒟_γ⁻¹ f`, i.e. the commutator
/// `(⟨γy⟩⁻¹𝒟_γ⁻¹𝓛 - 𝓛𝒟_γ⁻¹⟨γy⟩⁻¹)` composed with multiplication by `⟨γy⟩`.
///
/// The map is sandwiched between projections onto `|ξ| <= ξ_N / 2`. On the
/// grid the symbol of `𝒟_γ⁻¹D` wraps from `-i/γ` to `+i/γ` across the Nyquist
/// mode, and that jump, commuted with the growing weight, produces a norm
/// that grows with the domain; restricting to the resolved band removes it.
#[derive(Clone, Debug)]
pub struct CommutatorOperator {
    grid: Arc<Grid>,
    gamma: f64,
    weight: Field,
}

impl CommutatorOperator {
    pub fn new(grid: &Arc<Grid>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= MAX_PROBE_GAMMA) {
            return Err(config(format!("probe needs 0 < γ <= {MAX_PROBE_GAMMA}, got {gamma}")));
        }
        let weight = grid.sample(|y| (1.0 + gamma * gamma * y * y).sqrt());
        Ok(Self {
            grid: Arc::clone(grid),
            gamma,
            weight,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn band_limit(&self, f: &Field) -> Field {
        let cutoff = 0.5 * self.grid.nyquist_wavenumber();
        let values = self.grid.apply_multiplier(f.values(), |_, xi| {
            if xi.abs() <= cutoff {
                1.0.into()
            } else {
                0.0.into()
            }
        });
        Field::from_vec(&self.grid, values)
    }

    pub fn apply(&self, f: &Field) -> Field {
        let f = &self.band_limit(f);
        let weighted = f.pointwise_mul(&self.weight);
        let first = dgamma_inverse(&apply_l(&weighted), self.gamma)
            .expect("validated γ")
            .zip_with(&self.weight, |v, w| v / w);
        let second = apply_l(&dgamma_inverse(f, self.gamma).expect("validated γ"));
        self.band_limit(&(&first - &second))
    }

    /// L² adjoint: `g ↦ ⟨γy⟩ 𝓛 𝒟_γ⁻ᵀ(⟨γy⟩⁻¹ g) - 𝒟_γ⁻ᵀ 𝓛 g`.
    pub fn apply_adjoint(&self, g: &Field) -> Field {
        let g = &self.band_limit(g);
        let unweighted = g.zip_with(&self.weight, |v, w| v / w);
        let first = apply_l(&dgamma_inverse_adjoint(&unweighted, self.gamma).expect("validated γ"))
            .pointwise_mul(&self.weight);
        let second = dgamma_inverse_adjoint(&apply_l(g), self.gamma).expect("validated γ");
        self.band_limit(&(&first - &second))
    }

    fn on_slice<F: Fn(&Field) -> Field>(&self, x: &[f64], op: F) -> Vec<f64> {
        op(&Field::from_vec(&self.grid, x.to_vec())).into_values()
    }

    /// Operator norm by randomized power iteration.
    pub fn norm(&self, trials: usize, cfg: &PowerIterationConfig) -> Result<(f64, usize)> {
        operator_norm(
            self.grid.n_points(),
            |x| self.on_slice(x, |f| self.apply(f)),
            |x| self.on_slice(x, |f| self.apply_adjoint(f)),
            trials,
            cfg,
        )
    }
}

/// Minimum number of random starts.
pub const MIN_PROBE_TRIALS: usize = 8;

/// Estimates the norm of the weighted commutator on the default probe grid
/// and its ratio to `γ ln γ⁻¹`.
pub fn commutator_probe(gamma: f64, trials: usize) -> Result<CommutatorProbe> {
    commutator_probe_with(gamma, trials, ProbeGrid::for_gamma(gamma), &PowerIterationConfig::default())
}

pub fn commutator_probe_with(
    gamma: f64,
    trials: usize,
    probe_grid: ProbeGrid,
    cfg: &PowerIterationConfig,
) -> Result<CommutatorProbe> {
    if trials < MIN_PROBE_TRIALS {
        return Err(config(format!("probe needs at least {MIN_PROBE_TRIALS} trials, got {trials}")));
    }
    let grid = make_grid(probe_grid.n_points, probe_grid.domain_length)?;
    let op = CommutatorOperator::new(&grid, gamma)?;
    let (norm, iterations) = op.norm(trials, cfg)?;
    Ok(CommutatorProbe {
        gamma,
        norm,
        ratio: norm / (gamma * gamma.recip().ln()),
        trials,
        iterations,
        grid: probe_grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{derivative, dgamma, fractional_derivative, make_grid};
    use crate::soliton::{eigenfunction_field, EigenSign};
    use faer::Mat;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn big() -> Arc<Grid> {
        make_grid(8192, 1024.0).unwrap()
    }

    fn smooth_random(grid: &Arc<Grid>, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<(f64, f64, f64)> = (0..6)
            .map(|_| {
                (
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-6.0..6.0),
                    rng.random_range(0.2..2.0),
                )
            })
            .collect();
        grid.sample(|y| {
            amps.iter()
                .map(|&(a, c, k)| a * (-(y - c) * (y - c) / 4.0).exp() * (k * y).cos())
                .sum()
        })
    }

    #[test]
    fn kernel_relations() {
        let g = big();
        let l = OperatorSpec::L;
        let qp = g.sample(profile::q_prime);
        assert!(apply_operator(&l, &qp).unwrap().norm_l2() < 1e-4);
        let yqp = g.sample(profile::y_q_prime);
        let q = g.sample(profile::q);
        let err = &apply_operator(&l, &yqp).unwrap() + &q;
        assert!(err.norm_l2() < 1e-3, "{}", err.norm_l2());
        let lq = apply_operator(&l, &q).unwrap();
        let expected = -&(&yqp + &q);
        assert!((&lq - &expected).norm_l2() < 1e-3);
        assert!(apply_operator(&OperatorSpec::P, &qp).unwrap().max_abs() < 1e-14);
        let lqpp = apply_operator(&l, &g.sample(profile::q_second)).unwrap();
        assert!((&lqpp - &g.sample(l_of_q_second)).norm_l2() < 1e-4);
    }

    #[test]
    fn scaled_operator_at_unit_scale() {
        let g = make_grid(1024, 128.0).unwrap();
        let f = smooth_random(&g, 3);
        let a = apply_operator(&OperatorSpec::L, &f).unwrap();
        let b = apply_operator(&OperatorSpec::Lc { c: 1.0 }, &f).unwrap();
        assert!((&a - &b).max_abs() < 1e-12);
        assert!(apply_operator(&OperatorSpec::Lc { c: 0.0 }, &f).is_err());
        assert!(apply_operator(&OperatorSpec::DgammaInvL { gamma: -1.0 }, &f).is_err());
        let other = make_grid(512, 128.0).unwrap();
        assert!(matches!(
            apply_operator_on(&OperatorSpec::L, &other, &f),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn eigen_quadratic_forms() {
        let g = big();
        let t = crate::soliton::closed_form_table();
        let (ep, _) = eigenfunction_field(&g, EigenSign::Plus);
        let rq = quadratic_form(&OperatorSpec::L, &ep).unwrap() / ep.dot(&ep);
        assert!((rq - t.lambda_plus).abs() < 1e-4, "{rq}");
        let (em, _) = eigenfunction_field(&g, EigenSign::Minus);
        let rq = quadratic_form(&OperatorSpec::L, &em).unwrap() / em.dot(&em);
        assert!((rq - t.lambda_minus).abs() < 1e-4, "{rq}");
        assert_eq!(quadratic_form(&OperatorSpec::L, &g.zeros()).unwrap(), 0.0);
        assert!(quadratic_form(&OperatorSpec::P, &ep).is_err());
    }

    #[test]
    fn ltilde_identity() {
        let g = make_grid(1024, 128.0).unwrap();
        let f = smooth_random(&g, 7);
        let lt = quadratic_form(&OperatorSpec::Ltilde, &f).unwrap();
        let l = quadratic_form(&OperatorSpec::L, &f).unwrap();
        let half = fractional_derivative(&f, 0.5).unwrap();
        let yqp = f.map_with_node(|y, v| y * profile::q_prime(y) * v * v).integral();
        assert!((lt - (l + half.dot(&half) - yqp)).abs() < 1e-10 * lt.abs().max(1.0));
    }

    #[test]
    fn parity_preserved() {
        let g = make_grid(2048, 256.0).unwrap();
        let f = smooth_random(&g, 11);
        for part in [f.even_part(), f.odd_part()] {
            let lf = apply_l(&part);
            let leak = if (&part - &part.reflect()).max_abs() < 1e-14 {
                lf.odd_part()
            } else {
                lf.even_part()
            };
            assert!(leak.norm_l2() <= 1e-10 * lf.norm_l2());
        }
    }

    #[test]
    fn dual_variable_orthogonality_transfer() {
        let g = big();
        let q = g.sample(profile::q);
        let qp = g.sample(profile::q_prime);
        let raw = smooth_random(&g, 5);
        // Remove the Q and Q' components (they are L²-orthogonal by parity).
        let v = raw.axpy(-raw.dot(&q) / q.dot(&q), &q);
        let v = v.axpy(-v.dot(&qp) / qp.dot(&qp), &qp);
        for gamma in [0.05, 0.2] {
            let psi = apply_operator(&OperatorSpec::DgammaInvL { gamma }, &v).unwrap();
            let t1 = g.sample(|y| profile::q_prime(y) - gamma * profile::q_second(y));
            let t2 = g.sample(|y| profile::y_q_prime(y) - gamma * profile::y_q_second(y));
            let scale = psi.norm_l2();
            assert!(psi.dot(&t1).abs() < 1e-4 * scale, "{}", psi.dot(&t1));
            assert!(psi.dot(&t2).abs() < 1e-3 * scale, "{}", psi.dot(&t2));
        }
    }

    #[test]
    fn conjugation_identity() {
        let g = make_grid(2048, 256.0).unwrap();
        let f = smooth_random(&g, 9);
        let gamma = 0.3;
        let lhs = dgamma_inverse(&apply_l(&dgamma(&f, gamma).unwrap()), gamma).unwrap();
        let qp = g.sample(profile::q_prime);
        let rhs = apply_l(&f).axpy(gamma, &dgamma_inverse(&f.pointwise_mul(&qp), gamma).unwrap());
        assert!((&lhs - &rhs).norm_l2() <= 1e-9 * lhs.norm_l2());
    }

    fn dense<F: Fn(&Field) -> Field>(grid: &Arc<Grid>, op: F) -> Mat<f64> {
        let n = grid.n_points();
        let mut m = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = op(&Field::from_vec(grid, e));
            for i in 0..n {
                m[(i, j)] = col.values()[i];
            }
        }
        m
    }

    #[test]
    fn commutator_adjoint_and_dense_oracle() {
        let g = make_grid(256, 64.0).unwrap();
        let op = CommutatorOperator::new(&g, 0.2).unwrap();
        let a = dense(&g, |f| op.apply(f));
        let at = dense(&g, |f| op.apply_adjoint(f));
        let mut diff = 0.0_f64;
        for i in 0..256 {
            for j in 0..256 {
                diff = diff.max((a[(i, j)] - at[(j, i)]).abs());
            }
        }
        assert!(diff < 1e-12, "{diff}");
        let svd = a.svd().unwrap();
        let top = svd.S().column_vector().iter().fold(0.0_f64, |m, &s| m.max(s));
        let (est, _) = op.norm(8, &PowerIterationConfig::default()).unwrap();
        assert!((est - top).abs() < 1e-5 * top, "{est} vs {top}");
    }

    #[test]
    fn zero_operator_probe() {
        let (n, _) = operator_norm(
            64,
            |x| vec![0.0; x.len()],
            |x| vec![0.0; x.len()],
            8,
            &PowerIterationConfig::default(),
        )
        .unwrap();
        assert_eq!(n, 0.0);
    }

    #[test]
    fn nonconvergence_reports_partial_estimate() {
        // A rotation has equal singular values; a zero tolerance never settles.
        let cfg = PowerIterationConfig {
            max_iterations: 5,
            tolerance: -1.0,
            seed: 1,
        };
        let r = operator_norm(2, |x| vec![-x[1], x[0]], |x| vec![x[1], -x[0]], 8, &cfg);
        match r {
            Err(Error::NotConverged { iterations, estimate }) => {
                assert_eq!(iterations, 5);
                assert!((estimate - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn probe_preconditions() {
        assert!(commutator_probe(0.7, 8).is_err());
        assert!(commutator_probe(0.1, 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn derivative_of_l_kernel(shift in -0.3..0.3f64) {
            // 𝓛 is linear: 𝓛(Q' + s f) = s 𝓛 f.
            let g = make_grid(1024, 128.0).unwrap();
            let f = smooth_random(&g, 1);
            let qp = derivative(&g.sample(profile::q));
            let lhs = apply_l(&qp.axpy(shift, &f));
            let rhs = apply_l(&qp).axpy(shift, &apply_l(&f));
            prop_assert!((&lhs - &rhs).max_abs() < 1e-10);
        }
    }
}
