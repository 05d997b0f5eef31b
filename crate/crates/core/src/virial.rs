//! Both sides of the local virial estimate for the linearized flow, and the
//! weighted-mass monotonicity functional.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, usage, Result};
use crate::evolution::{EvolutionState, LinearizedIntegrator};
use crate::grid::{bessel_multiplier, derivative, dgamma_inverse, Field, Grid, LocalizerSpec};
use crate::operators::apply_l;
use crate::potential::PotentialSpec;
use crate::soliton::profile;

/// Relative tolerance of the initial orthogonality check.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirialReport {
    pub gamma: f64,
    pub y0: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    /// `‖⟨D⟩^{1/2}((g')^{1/2} v)‖²` integrated over `[0, T]`.
    pub lhs: f64,
    /// `sup_t ‖v‖²_{L²}`
    pub rhs_norm: f64,
    pub g_remainder: f64,
    /// `lhs / (rhs_norm + |g_remainder|)`
    pub ratio: f64,
}

fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("snapshot spacing must be positive, got {dt}")))
    }
}

/// `‖⟨D⟩^{1/2}((g')^{1/2} v)‖²_{L²}` at one time.
pub fn local_smoothing_density(v: &Field, spec: &LocalizerSpec) -> Result<f64> {
    spec.validate()?;
    let weighted = v.map_with_node(|y, x| spec.g_prime(y).sqrt() * x);
    let smoothed = bessel_multiplier(&weighted, 0.5);
    Ok(smoothed.dot(&smoothed))
}

/// Time trapezoid of [`local_smoothing_density`] over uniformly spaced
/// snapshots.
pub fn local_smoothing_lhs(snapshots: &[Field], dt: f64, spec: &LocalizerSpec) -> Result<f64> {
    check_dt(dt)?;
    if snapshots.len() < 2 {
        return Err(usage("local smoothing needs at least two snapshots"));
    }
    let values = snapshots
        .iter()
        .map(|v| local_smoothing_density(v, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(trapezoid(&values, dt))
}

/// `∫∫ g_{γ,y₀} v ∂f + ∫∫ g_{γ,0} (D_γ⁻¹𝓛v)(D_γ⁻¹𝓛∂f)`, time trapezoid.
pub fn g_remainder(
    v_snapshots: &[Field],
    f_snapshots: &[Field],
    dt: f64,
    spec: &LocalizerSpec,
) -> Result<f64> {
    check_dt(dt)?;
    if v_snapshots.len() != f_snapshots.len() {
        return Err(usage(format!(
            "snapshot lists differ in length: {} vs {}",
            v_snapshots.len(),
            f_snapshots.len()
        )));
    }
    spec.validate()?;
    let values = v_snapshots
        .iter()
        .zip(f_snapshots)
        .map(|(v, f)| {
            v.check_same_grid(f)?;
            g_density(v, &ForcingTerms::new(f, spec.gamma)?, spec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(trapezoid(&values, dt))
}

/// `∂f` and `D_γ⁻¹𝓛∂f`, shared across snapshots when `f` is fixed.
struct ForcingTerms {
    df: Field,
    ldf: Field,
}

impl ForcingTerms {
    fn new(f: &Field, gamma: f64) -> Result<Self> {
        let df = derivative(f);
        let ldf = dgamma_inverse(&apply_l(&df), gamma)?;
        Ok(Self { df, ldf })
    }
}

fn g_density(v: &Field, forcing: &ForcingTerms, spec: &LocalizerSpec) -> Result<f64> {
    let centered = LocalizerSpec::new(spec.gamma, 0.0)?;
    let first = v.map_with_node(|y, x| spec.g(y) * x).dot(&forcing.df);
    let lv = dgamma_inverse(&apply_l(v), spec.gamma)?;
    let second = lv.map_with_node(|y, x| centered.g(y) * x).dot(&forcing.ldf);
    Ok(first + second)
}

/// A forced linearized run to be post-processed.
#[derive(Clone, Debug)]
pub struct VirialRun {
    pub initial: Field,
    /// Time-independent forcing `f`.
    pub forcing: Field,
    pub dt: f64,
    pub t_end: f64,
    /// Snapshots are kept every `snapshot_every` steps.
    pub snapshot_every: usize,
}

/// Snapshots of a finished run, uniformly spaced by `spacing`.
#[derive(Clone, Debug)]
pub struct VirialSnapshots {
    pub fields: Vec<Field>,
    pub spacing: f64,
}

fn orthogonality_defect(v: &Field) -> f64 {
    let grid = v.grid();
    let q = grid.sample(profile::q);
    let qp = grid.sample(profile::q_prime);
    let norm = v.norm_l2();
    if norm == 0.0 {
        return 0.0;
    }
    (v.dot(&q).abs() / q.norm_l2()).max(v.dot(&qp).abs() / qp.norm_l2()) / norm
}

impl VirialRun {
    pub fn validate(&self) -> Result<()> {
        self.initial.check_same_grid(&self.forcing)?;
        if !(self.t_end > 0.0) || self.snapshot_every == 0 {
            return Err(config("virial run needs T > 0 and a positive snapshot stride"));
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > 1e-9 || (steps.round() as usize) % self.snapshot_every != 0 {
            return Err(config("T must be a whole number of snapshot intervals"));
        }
        let defect = orthogonality_defect(&self.initial);
        if defect > ORTHOGONALITY_TOLERANCE {
            return Err(usage(format!(
                "initial data violates ⟨v,Q⟩ = ⟨v,Q'⟩ = 0 (relative defect {defect:.3e})"
            )));
        }
        Ok(())
    }

    pub fn evolve(&self) -> Result<VirialSnapshots> {
        self.validate()?;
        let grid = self.initial.grid();
        let integ = LinearizedIntegrator::new(grid, self.dt)?;
        let steps = (self.t_end / self.dt).round() as usize;
        let mut state = EvolutionState::new(self.initial.clone(), Arc::new(PotentialSpec::zero()));
        let mut fields = vec![state.field.clone()];
        for k in 1..=steps {
            state = integ.step(&state, &self.forcing)?;
            if k % self.snapshot_every == 0 {
                fields.push(state.field.clone());
            }
        }
        Ok(VirialSnapshots {
            fields,
            spacing: self.dt * self.snapshot_every as f64,
        })
    }
}

/// Reports for every `γ`, `y₀` and window `T/2`, `T`.
pub fn virial_reports(
    snaps: &VirialSnapshots,
    forcing: &Field,
    gammas: &[f64],
    y0s: &[f64],
) -> Result<Vec<VirialReport>> {
    let total = snaps.fields.len() - 1;
    if total < 2 || total % 2 != 0 {
        return Err(usage("virial windows need an even number of snapshot intervals"));
    }
    let windows = [total / 2, total];
    let mut jobs = Vec::with_capacity(gammas.len() * y0s.len() * 2);
    for &gamma in gammas {
        for &y0 in y0s {
            for w in windows {
                jobs.push((gamma, y0, w));
            }
        }
    }
    let sq_norms: Vec<f64> = snaps.fields.iter().map(|v| v.dot(v)).collect();
    jobs.par_iter()
        .map(|&(gamma, y0, w)| {
            let spec = LocalizerSpec::new(gamma, y0)?;
            let slice = &snaps.fields[..=w];
            let terms = ForcingTerms::new(forcing, gamma)?;
            let lhs = local_smoothing_lhs(slice, snaps.spacing, &spec)?;
            let densities = slice
                .iter()
                .map(|v| g_density(v, &terms, &spec))
                .collect::<Result<Vec<_>>>()?;
            let g = trapezoid(&densities, snaps.spacing);
            let rhs_norm = sq_norms[..=w].iter().cloned().fold(0.0, f64::max);
            let denom = rhs_norm + g.abs();
            Ok(VirialReport {
                gamma,
                y0,
                t_end: w as f64 * snaps.spacing,
                lhs,
                rhs_norm,
                g_remainder: g,
                ratio: if denom > 0.0 { lhs / denom } else { f64::NAN },
            })
        })
        .collect()
}

/// Runs the forced linearized flow once and reports all `(γ, y₀, T)` cases.
pub fn virial_sweep(run: &VirialRun, gammas: &[f64], y0s: &[f64]) -> Result<Vec<VirialReport>> {
    if gammas.is_empty() {
        return Ok(Vec::new());
    }
    let snaps = run.evolve()?;
    virial_reports(&snaps, &run.forcing, gammas, y0s)
}

/// Projects `f` onto the orthogonal complement of the given directions,
/// sequentially (the directions here are mutually orthogonal by parity).
pub fn project_out(f: &Field, directions: &[&Field]) -> Field {
    directions
        .iter()
        .fold(f.clone(), |acc, d| acc.axpy(-acc.dot(d) / d.dot(d), d))
}

/// Initial data and forcing that keep `⟨v,Q⟩ = ⟨v,Q'⟩ = 0` along the flow:
/// `v₀ ⊥ {Q, Q'}` and `f ⊥ {Q', Q''}`.
pub fn orthogonal_setup(grid: &Arc<Grid>, v0: &Field, f: &Field) -> (Field, Field) {
    let q = grid.sample(profile::q);
    let q1 = grid.sample(profile::q_prime);
    let q2 = grid.sample(profile::q_second);
    (project_out(v0, &[&q, &q1]), project_out(f, &[&q1, &q2]))
}

/// Parameters of the weighted mass `∫ v² (φ(y - y₀) - φ(-y₀))` with
/// `φ(y) = π/2 + arctan(y/A)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicitySpec {
    #[serde(rename = "A")]
    pub a_scale: f64,
    pub lambda: f64,
    pub y0: f64,
}

impl MonotonicitySpec {
    pub const DEFAULT_A: f64 = 10.0;

    pub fn new(a_scale: f64, lambda: f64, y0: f64) -> Result<Self> {
        let s = Self { a_scale, lambda, y0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_scale > 0.0) || !(self.lambda > 0.0 && self.lambda < 1.0) || !(self.y0 > 1.0) {
            return Err(config(format!(
                "monotonicity needs A > 0, 0 < λ < 1, y₀ > 1; got A = {}, λ = {}, y₀ = {}",
                self.a_scale, self.lambda, self.y0
            )));
        }
        Ok(())
    }

    pub fn phi(&self, y: f64) -> f64 {
        std::f64::consts::FRAC_PI_2 + (y / self.a_scale).atan()
    }
}

/// `∫ v² (φ(y - y₀ - shift) - φ(-y₀ - shift))`.
pub fn monotonicity_mass(v: &Field, spec: &MonotonicitySpec, shift: f64) -> Result<f64> {
    spec.validate()?;
    let base = spec.phi(-spec.y0 - shift);
    Ok(v
        .map_with_node(|y, x| x * x * (spec.phi(y - spec.y0 - shift) - base))
        .integral())
}

/// Comparison of the weighted mass at `t₀` (no shift) with its value at
/// time 0 shifted by `λ t₀`, plus the `p₃` term with unit constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    pub initial: f64,
    pub terminal: f64,
    pub correction: f64,
    /// `max(0, terminal - initial - correction) / |initial|`
    pub relative_violation: f64,
}

pub fn monotonicity_check(snaps: &VirialSnapshots, spec: &MonotonicitySpec) -> Result<MonotonicityCheck> {
    let n = snaps.fields.len();
    if n < 2 {
        return Err(usage("monotonicity check needs at least two snapshots"));
    }
    let t0 = (n - 1) as f64 * snaps.spacing;
    let initial = monotonicity_mass(&snaps.fields[0], spec, spec.lambda * t0)?;
    let terminal = monotonicity_mass(&snaps.fields[n - 1], spec, 0.0)?;
    let integrand: Vec<f64> = snaps
        .fields
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let t = k as f64 * snaps.spacing;
            v.dot(v) / (spec.y0 + spec.lambda * (t0 - t)).powi(2)
        })
        .collect();
    let correction = trapezoid(&integrand, snaps.spacing);
    let excess = (terminal - initial - correction).max(0.0);
    Ok(MonotonicityCheck {
        initial,
        terminal,
        correction,
        relative_violation: if initial != 0.0 { excess / initial.abs() } else { excess },
    })
}
