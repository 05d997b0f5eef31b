//! Sweep over `h` of near-soliton pBO runs compared with the exact
//! parameter trajectory.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PerturbationKind};
use crate::error::{usage, Error, Result};
use crate::evolution::{EvolutionState, PboIntegrator};
use crate::grid::{make_grid, sobolev_norm, Field, Grid};
use crate::modulation::{ModulationRow, Regime, TrackedSample, Tracker};
use crate::potential::{PotentialShape, PotentialSpec};
use crate::soliton::{eigenfunction_field, profile, soliton_field, EigenSign, SolitonParams};
use crate::trajectories::{
    convert_frame, integrate_exact, integrate_reference, interpolate, order_of, FittedOrder,
    StoppingTime, TrajectoryState, SCALE_WINDOW,
};

/// Residuals of the exact-trajectory equations along a tracked series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub t: f64,
    /// `ȧ - (c - W(ha) + ½h²W''(ha)c⁻²)`
    pub position: f64,
    /// `ċ - (hW'(ha)c + ½h³W'''(ha)c⁻¹)`
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualTable {
    pub rows: Vec<ResidualRow>,
    /// Trapezoid integrals of the absolute residuals over the rows.
    pub position_integral: f64,
    pub scale_integral: f64,
}

/// Samples needed by the five-point difference stencil.
const STENCIL: usize = 5;

/// Differentiates `(a, c)` with fourth-order central differences and
/// evaluates both residuals at every interior sample.
pub fn ode_residuals(track: &[TrackedSample], pot: &PotentialSpec) -> Result<ResidualTable> {
    if track.len() < STENCIL {
        return Err(usage(format!(
            "residuals need at least {STENCIL} samples, got {}",
            track.len()
        )));
    }
    if track.iter().any(|s| s.decomposition.regime != Regime::Symplectic) {
        return Err(usage("residuals need a symplectic track"));
    }
    let dt = track[1].time - track[0].time;
    if !(dt > 0.0) || track.windows(2).any(|w| ((w[1].time - w[0].time) - dt).abs() > 1e-9 * dt) {
        return Err(usage("residuals need uniformly spaced samples"));
    }
    let h = pot.h;
    let a: Vec<f64> = track.iter().map(|s| s.decomposition.params.a).collect();
    let c: Vec<f64> = track.iter().map(|s| s.decomposition.params.c).collect();
    let d = |v: &[f64], i: usize| (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * dt);
    let rows: Vec<ResidualRow> = (2..track.len() - 2)
        .map(|i| {
            let [w, w1, w2, w3] = pot.derivatives(h * a[i]);
            let ci = c[i];
            ResidualRow {
                t: track[i].time,
                position: d(&a, i) - (ci - w + 0.5 * h * h * w2 / (ci * ci)),
                scale: d(&c, i) - (h * w1 * ci + 0.5 * h * h * h * w3 / ci),
            }
        })
        .collect();
    let trapezoid = |f: fn(&ResidualRow) -> f64| -> f64 {
        rows.windows(2)
            .map(|w| 0.5 * (f(&w[0]).abs() + f(&w[1]).abs()) * (w[1].t - w[0].t))
            .sum()
    };
    Ok(ResidualTable {
        position_integral: trapezoid(|r| r.position),
        scale_integral: trapezoid(|r| r.scale),
        rows,
    })
}

/// Unnormalized perturbation shape. Gaussian centers and widths are drawn
/// from `seed`.
pub fn perturbation_shape(grid: &Arc<Grid>, kind: PerturbationKind, seed: u64) -> Option<Field> {
    match kind {
        PerturbationKind::None => None,
        PerturbationKind::EPlus => Some(eigenfunction_field(grid, EigenSign::Plus).0),
        PerturbationKind::QSecond => Some(grid.sample(profile::q_second)),
        PerturbationKind::Gaussian => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let center: f64 = rng.random_range(-2.0..2.0);
            let width: f64 = rng.random_range(1.5..3.0);
            Some(grid.sample(|y| (-(y - center) * (y - center) / (2.0 * width * width)).exp()))
        }
    }
}

/// `Q + p` with `p ⊥ {Q, yQ}` and `‖p‖_{H^{1/2}} = delta`, so the symplectic
/// decomposition of the data starts at `(0, 1)`.
pub fn admissible_initial_data(
    grid: &Arc<Grid>,
    kind: PerturbationKind,
    delta: f64,
    seed: u64,
) -> Result<Field> {
    let q = grid.sample(profile::q);
    let shape = match perturbation_shape(grid, kind, seed) {
        Some(p) if delta > 0.0 => p,
        _ => return Ok(q),
    };
    let mut basis: Vec<Field> = Vec::new();
    for dir in [q.clone(), grid.sample(profile::y_q)] {
        let v = basis.iter().fold(dir, |acc, e| acc.axpy(-acc.dot(e), e));
        let n = v.norm_l2();
        basis.push(v.scale(1.0 / n));
    }
    let p = basis.iter().fold(shape, |acc, e| acc.axpy(-acc.dot(e), e));
    let norm = sobolev_norm(&p, 0.5);
    if norm <= 1e-12 {
        return Err(Error::Experiment(format!(
            "perturbation {kind:?} vanishes after removing the soliton directions"
        )));
    }
    Ok(q.axpy(delta / norm, &p))
}

/// The potential for one sweep member.
pub fn member_potential(cfg: &ExperimentConfig, h: f64) -> Result<PotentialSpec> {
    let shape = if cfg.bump_amplitude == 0.0 {
        PotentialShape::Zero
    } else {
        PotentialShape::Bump {
            amplitude: cfg.bump_amplitude,
            width: cfg.bump_width,
        }
    };
    PotentialSpec::new(h, shape)
}

/// `T₀ = min(¼μ₀⁻¹h⁻¹ ln h⁻¹, S₀/h)` with `S₀` from the reference
/// trajectory, or the configured override.
pub fn window_length(cfg: &ExperimentConfig, pot: &PotentialSpec) -> Result<(f64, StoppingTime)> {
    let h = pot.h;
    let s_cap = 0.25 / cfg.mu0 * h.recip().ln();
    let reference = integrate_reference(pot, s_cap.max(cfg.dt_s), cfg.dt_s)?;
    let s0 = reference.stopping_time;
    let s = match s0 {
        StoppingTime::Reached(s0) => s_cap.min(s0),
        StoppingTime::NotReached => s_cap,
    };
    Ok((cfg.t_end.unwrap_or(s / h), s0))
}

/// Per-`h` outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub h: f64,
    pub t_end: f64,
    pub delta: f64,
    pub snapshots: usize,
    /// `sup_t ‖u - Q_{â,ĉ}‖_{H^{1/2}} e^{-μ₀ht}` against the exact trajectory.
    pub sup_remainder: f64,
    /// Same with the measured parameters, i.e. the symplectic remainder.
    pub sup_remainder_measured: f64,
    /// `sup_n ‖w‖_{L²_t L²(n, n+1)}` for the recentered remainder.
    pub sup_local: f64,
    /// `sup_local / (h^{3/2} ln h⁻¹)`
    pub local_ratio: f64,
    pub position_residual_integral: f64,
    pub scale_residual_integral: f64,
    pub sup_dev_position: f64,
    pub sup_dev_scale: f64,
    pub scale_range: (f64, f64),
    pub stopping_time: StoppingTime,
}

#[derive(Clone, Debug)]
pub struct SweepMember {
    pub record: SweepRecord,
    pub modulation: Vec<ModulationRow>,
    pub residuals: ResidualTable,
    /// Exact trajectory in the fast frame.
    pub exact: TrajectoryState,
    pub measured: TrajectoryState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub h: f64,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct TheoremSweep {
    pub members: Vec<SweepMember>,
    pub failures: Vec<SweepFailure>,
    pub remainder_order: FittedOrder,
    pub local_order: FittedOrder,
    pub position_residual_order: FittedOrder,
    pub scale_residual_order: FittedOrder,
}

/// Accumulates `∫ ‖w(t)‖²_{L²(n,n+1)} dt` for every unit cell by the
/// trapezoid rule.
struct LocalNorms {
    cells: Vec<f64>,
    previous: Option<(f64, Vec<f64>)>,
}

impl LocalNorms {
    fn new(grid: &Grid) -> Self {
        Self {
            cells: vec![0.0; grid.domain_length().ceil() as usize],
            previous: None,
        }
    }

    fn cell_masses(w: &Field, count: usize) -> Vec<f64> {
        let grid = w.grid();
        let half = 0.5 * grid.domain_length();
        let dx = grid.spacing();
        let mut out = vec![0.0; count];
        for (&y, &v) in grid.nodes().iter().zip(w.values()) {
            let k = ((y + half).floor() as usize).min(count - 1);
            out[k] += v * v * dx;
        }
        out
    }

    fn push(&mut self, t: f64, w: &Field) {
        let masses = Self::cell_masses(w, self.cells.len());
        if let Some((t0, prev)) = &self.previous {
            let dt = t - t0;
            for (acc, (a, b)) in self.cells.iter_mut().zip(prev.iter().zip(&masses)) {
                *acc += 0.5 * dt * (a + b);
            }
        }
        self.previous = Some((t, masses));
    }

    fn sup(&self) -> f64 {
        self.cells.iter().copied().fold(0.0, f64::max).sqrt()
    }
}

/// Evolves one member of the sweep and compares it with the exact
/// trajectory.
pub fn run_member(cfg: &ExperimentConfig, h: f64) -> Result<SweepMember> {
    let grid = make_grid(cfg.n_points, cfg.domain_length)?;
    let pot = Arc::new(member_potential(cfg, h)?);
    let (t_end, stopping_time) = window_length(cfg, &pot)?;
    let delta = cfg.delta_scale * h.powf(1.5);
    let u0 = admissible_initial_data(&grid, cfg.perturbation, delta, cfg.seed)?;

    // A little past the window so the last snapshot can be interpolated.
    let s_end = h * t_end + 4.0 * cfg.dt_s;
    let exact = convert_frame(&integrate_exact(&pot, s_end, cfg.dt_s)?, h)?;

    let integrator = PboIntegrator::new(&grid, Arc::clone(&pot), cfg.dt)?;
    let steps = (t_end / cfg.dt).round() as usize;
    let every = cfg.steps_per(cfg.snapshot_interval, cfg.dt).max(1);
    let mut tracker = Tracker::new(Regime::Symplectic, SolitonParams::unit());
    let mut track: Vec<TrackedSample> = Vec::new();
    let mut local = LocalNorms::new(&grid);
    let (mut sup_exact, mut sup_measured) = (0.0_f64, 0.0_f64);
    let (mut dev_a, mut dev_c) = (0.0_f64, 0.0_f64);
    let (mut c_min, mut c_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let state = integrator.prepare(EvolutionState::new(u0, Arc::clone(&pot)));
    integrator.evolve(state, steps, every, |s| {
        let sample = tracker.push(s.time, &s.field)?;
        let p = sample.decomposition.params;
        if p.c < SCALE_WINDOW.0 || p.c > SCALE_WINDOW.1 {
            return Err(Error::Experiment(format!(
                "scale c = {} left [{}, {}] at t = {}",
                p.c, SCALE_WINDOW.0, SCALE_WINDOW.1, s.time
            )));
        }
        let (a_hat, c_hat) = interpolate(&exact.samples, s.time).ok_or_else(|| {
            Error::Experiment(format!("exact trajectory stops before t = {}", s.time))
        })?;
        let envelope = (-cfg.mu0 * h * s.time).exp();
        let q_hat = soliton_field(&grid, SolitonParams::new(a_hat, c_hat)?)?;
        sup_exact = sup_exact.max(sobolev_norm(&(&s.field - &q_hat), 0.5) * envelope);
        let w = &sample.decomposition.remainder;
        sup_measured = sup_measured.max(sobolev_norm(w, 0.5) * envelope);
        local.push(s.time, w);
        dev_a = dev_a.max((p.a - a_hat).abs());
        dev_c = dev_c.max((p.c - c_hat).abs());
        c_min = c_min.min(p.c);
        c_max = c_max.max(p.c);
        track.push(sample);
        Ok(true)
    })?;

    let residuals = ode_residuals(&track, &pot)?;
    let modulation = track
        .iter()
        .map(ModulationRow::from_sample)
        .collect::<Result<Vec<_>>>()?;
    let sup_local = local.sup();
    let record = SweepRecord {
        h,
        t_end,
        delta,
        snapshots: track.len(),
        sup_remainder: sup_exact,
        sup_remainder_measured: sup_measured,
        sup_local,
        local_ratio: sup_local / (h.powf(1.5) * h.recip().ln()),
        position_residual_integral: residuals.position_integral,
        scale_residual_integral: residuals.scale_integral,
        sup_dev_position: dev_a,
        sup_dev_scale: dev_c,
        scale_range: (c_min, c_max),
        stopping_time,
    };
    let exact = TrajectoryState {
        samples: exact.samples.into_iter().filter(|p| p.time <= t_end).collect(),
        ..exact
    };
    Ok(SweepMember {
        record,
        modulation,
        residuals,
        exact,
        measured: TrajectoryState::measured(&track),
    })
}

fn fitted(members: &[SweepMember], value: fn(&SweepRecord) -> f64) -> Result<FittedOrder> {
    let points: Vec<(f64, f64)> = members.iter().map(|m| (m.record.h, value(&m.record))).collect();
    if points.len() < 3 || points.iter().any(|p| !(p.1 > 0.0)) {
        return Ok(FittedOrder::Undefined);
    }
    order_of(points)
}

/// Runs every `h` of the configuration concurrently. Failed members are
/// recorded and the rest of the sweep continues.
pub fn run_theorem_sweep(cfg: &ExperimentConfig) -> Result<TheoremSweep> {
    cfg.validate()?;
    let outcomes: Vec<(f64, Result<SweepMember>)> =
        cfg.h.par_iter().map(|&h| (h, run_member(cfg, h))).collect();
    let mut members = Vec::new();
    let mut failures = Vec::new();
    for (h, outcome) in outcomes {
        match outcome {
            Ok(m) => members.push(m),
            Err(e) => failures.push(SweepFailure {
                h,
                error: e.to_string(),
            }),
        }
    }
    if members.is_empty() {
        return Err(Error::Experiment(format!(
            "every sweep member failed: {}",
            failures
                .iter()
                .map(|f| format!("h = {}: {}", f.h, f.error))
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(TheoremSweep {
        remainder_order: fitted(&members, |r| r.sup_remainder)?,
        local_order: fitted(&members, |r| r.sup_local)?,
        position_residual_order: fitted(&members, |r| r.position_residual_integral)?,
        scale_residual_order: fitted(&members, |r| r.scale_residual_integral)?,
        members,
        failures,
    })
}
