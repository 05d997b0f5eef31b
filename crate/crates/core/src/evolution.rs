//! Time integration of the perturbed Benjamin–Ono flow
//! `u_t = ∂(Du + Vu - ½u²)` and of the linearized flow
//! `v_t = ∂(1 + D)v - ∂(Qv) + ℙv + ∂f`, both by fourth-order exponential
//! time differencing with the stiff dispersive symbol treated exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config, usage, Error, Result};
use crate::grid::{abs_derivative, sobolev_norm, Field, Grid};
use crate::operators::{l_of_q_second, NORM_Q_PRIME_SQ};
use crate::potential::PotentialSpec;
use crate::soliton::profile;

/// Default time step.
pub const DEFAULT_DT: f64 = 0.005;

/// The run aborts when `‖u‖_{H^{1/2}}` exceeds this multiple of its initial value.
pub const BLOW_UP_FACTOR: f64 = 10.0;

/// Contour points for the φ-function averages.
const CONTOUR_POINTS: usize = 32;

/// Solution snapshot.
#[derive(Clone, Debug)]
pub struct EvolutionState {
    pub time: f64,
    pub field: Field,
    pub potential: Arc<PotentialSpec>,
    /// `‖u(0)‖_{H^{1/2}}`, the reference for the blow-up guard.
    pub initial_hhalf: f64,
}

impl EvolutionState {
    pub fn new(field: Field, potential: Arc<PotentialSpec>) -> Self {
        let initial_hhalf = sobolev_norm(&field, 0.5);
        Self {
            time: 0.0,
            field,
            potential,
            initial_hhalf,
        }
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }
}

/// Conserved and monitored functionals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    /// `M₀ = ½∫u²`
    pub mass: f64,
    /// `E₀ = ½∫u Du - ⅙∫u³`
    pub energy0: f64,
    /// `E₁ = ½∫u_x² + ⅜∫u² Hu_x - (1/16)∫u⁴`
    pub energy1: f64,
    /// `E = E₀ + ½∫V u²`
    pub energy_perturbed: f64,
}

pub fn invariants(state: &EvolutionState) -> InvariantReport {
    let u = &state.field;
    let grid = u.grid();
    let du = abs_derivative(u);
    let ux = crate::grid::derivative(u);
    // H u_x = -D u.
    let v = state.potential.sample(grid);
    let mass = 0.5 * u.dot(u);
    let energy0 = 0.5 * u.dot(&du) - u.map(|x| x * x * x).integral() / 6.0;
    let energy1 = 0.5 * ux.dot(&ux) - 0.375 * u.pointwise_mul(u).dot(&du)
        - u.map(|x| x.powi(4)).integral() / 16.0;
    let potential_part = 0.5 * v.pointwise_mul(u).dot(u);
    InvariantReport {
        mass,
        energy0,
        energy1,
        energy_perturbed: energy0 + potential_part,
    }
}

/// ETDRK4 coefficients for a diagonal linear part.
#[derive(Clone, Debug)]
struct Etdrk4 {
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
}

impl Etdrk4 {
    /// Coefficients from contour averages over a circle of unit radius
    /// around each `dt·λ`.
    fn new(symbol: &[Complex64], dt: f64) -> Self {
        let n = symbol.len();
        let mut out = Self {
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        let roots: Vec<Complex64> = (0..CONTOUR_POINTS)
            .map(|j| {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64;
                Complex64::from_polar(1.0, 2.0 * theta)
            })
            .collect();
        let m = CONTOUR_POINTS as f64;
        for &lam in symbol {
            let z0 = lam * dt;
            out.e.push(z0.exp());
            out.e2.push((z0 * 0.5).exp());
            let (mut q, mut f1, mut f2, mut f3) = (Complex64::ZERO, Complex64::ZERO, Complex64::ZERO, Complex64::ZERO);
            for &r in &roots {
                let z = z0 + r;
                let ez = z.exp();
                let z2 = z * z;
                let z3 = z2 * z;
                q += ((z * 0.5).exp() - 1.0) / z;
                f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z2)) / z3;
                f2 += (2.0 + z + ez * (z - 2.0)) / z3;
                f3 += (-4.0 - 3.0 * z - z2 + ez * (4.0 - z)) / z3;
            }
            out.q.push(q * (dt / m));
            out.f1.push(f1 * (dt / m));
            out.f2.push(f2 * (dt / m));
            out.f3.push(f3 * (dt / m));
        }
        out
    }

    /// One step for `û' = Λû + N(û)` with the nonlinearity evaluated in
    /// Fourier space.
    fn step<F>(&self, v: &[Complex64], nonlinear: F) -> Result<Vec<Complex64>>
    where
        F: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
    {
        let n = v.len();
        let nv = nonlinear(v)?;
        let a: Vec<Complex64> = (0..n).map(|k| self.e2[k] * v[k] + self.q[k] * nv[k]).collect();
        let na = nonlinear(&a)?;
        let b: Vec<Complex64> = (0..n).map(|k| self.e2[k] * v[k] + self.q[k] * na[k]).collect();
        let nb = nonlinear(&b)?;
        let c: Vec<Complex64> = (0..n)
            .map(|k| self.e2[k] * a[k] + self.q[k] * (2.0 * nb[k] - nv[k]))
            .collect();
        let nc = nonlinear(&c)?;
        Ok((0..n)
            .map(|k| {
                self.e[k] * v[k]
                    + self.f1[k] * nv[k]
                    + 2.0 * self.f2[k] * (na[k] + nb[k])
                    + self.f3[k] * nc[k]
            })
            .collect())
    }
}

/// Mask of the modes kept by the 2/3 rule.
fn dealias_mask(grid: &Grid) -> Vec<f64> {
    let cutoff = 2.0 / 3.0 * grid.nyquist_wavenumber();
    (0..grid.n_points())
        .map(|m| {
            if m != grid.nyquist_index() && grid.wavenumbers()[m].abs() < cutoff {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Projects a field onto the modes kept by the 2/3 rule.
pub fn dealias(f: &Field) -> Field {
    let grid = f.grid();
    let mask = dealias_mask(grid);
    Field::from_vec(grid, grid.apply_multiplier(f.values(), |m, _| mask[m].into()))
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(config(format!("time step must be positive, got {dt}")))
    }
}

fn ensure_finite(values: &[Complex64], time: f64) -> Result<()> {
    if values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Evolution {
            time,
            reason: "non-finite values".into(),
        })
    }
}

/// `‖·‖_{H^{1/2}}` from an unnormalized spectrum.
fn hhalf_from_spectrum(grid: &Grid, spec: &[Complex64]) -> f64 {
    let n = grid.n_points() as f64;
    let sum: f64 = spec
        .iter()
        .enumerate()
        .map(|(m, z)| {
            let k = grid.abs_wavenumber(m);
            (1.0 + k * k).sqrt() * z.norm_sqr()
        })
        .sum();
    (grid.domain_length() / (n * n) * sum).sqrt()
}

/// Integrator for the perturbed flow with cached coefficients.
#[derive(Clone, Debug)]
pub struct PboIntegrator {
    grid: Arc<Grid>,
    potential: Arc<PotentialSpec>,
    dt: f64,
    scheme: Etdrk4,
    mask: Vec<f64>,
    v: Vec<f64>,
    derivative: Vec<Complex64>,
    seam_guard: bool,
}

impl PboIntegrator {
    pub fn new(grid: &Arc<Grid>, potential: Arc<PotentialSpec>, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        potential.validate()?;
        let derivative: Vec<Complex64> = (0..grid.n_points())
            .map(|m| grid.derivative_symbol(m, grid.wavenumbers()[m]))
            .collect();
        // ∂D has symbol iξ|ξ|.
        let symbol: Vec<Complex64> = (0..grid.n_points())
            .map(|m| derivative[m] * grid.abs_wavenumber(m))
            .collect();
        Ok(Self {
            grid: Arc::clone(grid),
            v: potential.sample(grid).into_values(),
            potential,
            dt,
            scheme: Etdrk4::new(&symbol, dt),
            mask: dealias_mask(grid),
            derivative,
            seam_guard: true,
        })
    }

    /// Disables the check that the peak stays within `L/4` of the center.
    pub fn without_seam_guard(mut self) -> Self {
        self.seam_guard = false;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `∂ P(Vu - ½u²)` in Fourier space.
    fn nonlinear(&self, spec: &[Complex64]) -> Result<Vec<Complex64>> {
        let u = self.grid.inverse(spec.to_vec());
        let w: Vec<f64> = u
            .iter()
            .zip(&self.v)
            .map(|(&x, &v)| v * x - 0.5 * x * x)
            .collect();
        let mut out = self.grid.forward(&w);
        for (m, z) in out.iter_mut().enumerate() {
            *z *= self.derivative[m] * self.mask[m];
        }
        Ok(out)
    }

    fn check_guards(&self, spec: &[Complex64], time: f64, initial_hhalf: f64) -> Result<()> {
        ensure_finite(spec, time)?;
        let norm = hhalf_from_spectrum(&self.grid, spec);
        if initial_hhalf > 0.0 && norm > BLOW_UP_FACTOR * initial_hhalf {
            return Err(Error::Evolution {
                time,
                reason: format!(
                    "H^1/2 norm {norm:.4e} exceeds {BLOW_UP_FACTOR}x its initial value {initial_hhalf:.4e}"
                ),
            });
        }
        Ok(())
    }

    fn check_seam(&self, u: &[f64], time: f64) -> Result<()> {
        if !self.seam_guard {
            return Ok(());
        }
        let (j, peak) = u
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(bj, bv), (j, &v)| if v.abs() > bv { (j, v.abs()) } else { (bj, bv) });
        let x = self.grid.nodes()[j];
        if peak > 0.0 && x.abs() > 0.25 * self.grid.domain_length() {
            return Err(Error::Evolution {
                time,
                reason: format!("peak at x = {x:.2} is within L/4 of the periodic seam"),
            });
        }
        Ok(())
    }

    /// Projects the initial data onto the dealiased band. The semi-discrete
    /// scheme conserves energy exactly on band-limited data.
    pub fn prepare(&self, state: EvolutionState) -> EvolutionState {
        let field = dealias(&state.field);
        EvolutionState { field, ..state }
    }

    pub fn step(&self, state: &EvolutionState) -> Result<EvolutionState> {
        let spec = self.grid.forward(state.field.values());
        let next = self.scheme.step(&spec, |s| self.nonlinear(s))?;
        let time = state.time + self.dt;
        self.check_guards(&next, time, state.initial_hhalf)?;
        let values = self.grid.inverse(next);
        self.check_seam(&values, time)?;
        Ok(EvolutionState {
            time,
            field: Field::from_vec(&self.grid, values),
            potential: Arc::clone(&self.potential),
            initial_hhalf: state.initial_hhalf,
        })
    }

    /// Advances `steps` steps, calling `observe` on the initial state and
    /// after every `every` steps. Stops early if `observe` returns false.
    pub fn evolve<F>(&self, state: EvolutionState, steps: usize, every: usize, mut observe: F) -> Result<EvolutionState>
    where
        F: FnMut(&EvolutionState) -> Result<bool>,
    {
        let every = every.max(1);
        if !observe(&state)? {
            return Ok(state);
        }
        let mut spec = self.grid.forward(state.field.values());
        let t0 = state.time;
        let initial = state.initial_hhalf;
        let mut current = state;
        for k in 1..=steps {
            spec = self.scheme.step(&spec, |s| self.nonlinear(s))?;
            let time = t0 + k as f64 * self.dt;
            self.check_guards(&spec, time, initial)?;
            if k % every == 0 || k == steps {
                let values = self.grid.inverse(spec.clone());
                self.check_seam(&values, time)?;
                current = EvolutionState {
                    time,
                    field: Field::from_vec(&self.grid, values),
                    potential: Arc::clone(&self.potential),
                    initial_hhalf: initial,
                };
                if k % every == 0 && !observe(&current)? {
                    return Ok(current);
                }
            }
        }
        Ok(current)
    }
}

/// One step of the perturbed flow. Builds the coefficients on every call;
/// use [`PboIntegrator`] for runs.
pub fn step_pbo(state: &EvolutionState, dt: f64) -> Result<EvolutionState> {
    PboIntegrator::new(state.field.grid(), Arc::clone(&state.potential), dt)?.step(state)
}

/// Integrator for the linearized flow around the unit soliton.
#[derive(Clone, Debug)]
pub struct LinearizedIntegrator {
    grid: Arc<Grid>,
    dt: f64,
    scheme: Etdrk4,
    q: Vec<f64>,
    q_prime: Vec<f64>,
    projector_weight: Vec<f64>,
    derivative: Vec<Complex64>,
}

impl LinearizedIntegrator {
    pub fn new(grid: &Arc<Grid>, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let derivative: Vec<Complex64> = (0..grid.n_points())
            .map(|m| grid.derivative_symbol(m, grid.wavenumbers()[m]))
            .collect();
        // ∂(1 + D) has symbol iξ(1 + |ξ|).
        let symbol: Vec<Complex64> = (0..grid.n_points())
            .map(|m| derivative[m] * (1.0 + grid.abs_wavenumber(m)))
            .collect();
        Ok(Self {
            grid: Arc::clone(grid),
            dt,
            scheme: Etdrk4::new(&symbol, dt),
            q: grid.sample(profile::q).into_values(),
            q_prime: grid.sample(profile::q_prime).into_values(),
            projector_weight: grid.sample(l_of_q_second).into_values(),
            derivative,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `-∂(Qv) + ℙv + ∂f` in Fourier space; `forcing_spec` is `f̂`.
    fn nonlinear(&self, spec: &[Complex64], forcing_spec: &[Complex64]) -> Vec<Complex64> {
        let v = self.grid.inverse(spec.to_vec());
        let h = self.grid.spacing();
        let coefficient =
            h * v.iter().zip(&self.projector_weight).map(|(a, b)| a * b).sum::<f64>() / NORM_Q_PRIME_SQ;
        let qv: Vec<f64> = v.iter().zip(&self.q).map(|(a, b)| a * b).collect();
        let qv_spec = self.grid.forward(&qv);
        let p: Vec<f64> = self.q_prime.iter().map(|x| coefficient * x).collect();
        let p_spec = self.grid.forward(&p);
        (0..spec.len())
            .map(|m| self.derivative[m] * (forcing_spec[m] - qv_spec[m]) + p_spec[m])
            .collect()
    }

    pub fn step(&self, state: &EvolutionState, forcing: &Field) -> Result<EvolutionState> {
        if !forcing.grid().same_as(&self.grid) {
            return Err(usage("forcing and state grids differ"));
        }
        let spec = self.grid.forward(state.field.values());
        let forcing_spec = self.grid.forward(forcing.values());
        let next = self
            .scheme
            .step(&spec, |s| Ok(self.nonlinear(s, &forcing_spec)))?;
        let time = state.time + self.dt;
        ensure_finite(&next, time)?;
        let norm = hhalf_from_spectrum(&self.grid, &next);
        if state.initial_hhalf > 0.0 && norm > BLOW_UP_FACTOR * state.initial_hhalf {
            return Err(Error::Evolution {
                time,
                reason: format!("H^1/2 norm {norm:.4e} exceeds {BLOW_UP_FACTOR}x its initial value"),
            });
        }
        Ok(EvolutionState {
            time,
            field: Field::from_vec(&self.grid, self.grid.inverse(next)),
            potential: Arc::clone(&state.potential),
            initial_hhalf: state.initial_hhalf,
        })
    }
}

/// One step of the linearized flow with a forcing held fixed over the step.
pub fn step_linearized(state: &EvolutionState, dt: f64, forcing: &Field) -> Result<EvolutionState> {
    LinearizedIntegrator::new(state.field.grid(), dt)?.step(state, forcing)
}

const CHECKPOINT_MAGIC: &[u8; 5] = b"BOSL1";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes `magic, version u32, N u64, L f64, t f64, N × f64`, little endian.
pub fn write_checkpoint(path: &Path, time: f64, field: &Field) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(field.len() as u64).to_le_bytes())?;
    w.write_all(&field.grid().domain_length().to_le_bytes())?;
    w.write_all(&time.to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint back as `(time, field)` on a freshly built grid.
pub fn read_checkpoint(path: &Path) -> Result<(f64, Field)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(usage(format!("{} is not a checkpoint", path.display())));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != CHECKPOINT_VERSION {
        return Err(usage(format!("unsupported checkpoint version {version}")));
    }
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let length = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let time = f64::from_le_bytes(b8);
    let grid = crate::grid::make_grid(n, length)?;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    Ok((time, Field::new(&grid, values)?))
}
