//! The six experiments behind the CLI subcommands. Each property check
//! writes its raw data into the experiment's output directory and returns
//! pass/fail checks plus a JSON payload for the summary.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, PerturbationKind};
use super::report::{write_timing, Check, OutputDir, RunSummary};
use super::sweep::{admissible_initial_data, member_potential, run_theorem_sweep};
use crate::error::Result;
use crate::evolution::{
    dealias, invariants, write_checkpoint, EvolutionState, LinearizedIntegrator, PboIntegrator,
};
use crate::grid::{hilbert, make_grid, Grid};
use crate::operators::{commutator_probe_with, OperatorSpec, PowerIterationConfig, ProbeGrid};
use crate::potential::PotentialSpec;
use crate::soliton::{
    closed_form_table, eigenfunction_field, profile, soliton_residual, EigenSign,
    SolitonParams,
};
use crate::spectral::{constrained_min_rayleigh, discretize, spectrum_below_continuum, RayleighNorm};
use crate::trajectories::{gronwall_sweep, integrate_exact, integrate_reference, write_trajectory_csv, FittedOrder};
use crate::virial::{monotonicity_check, orthogonal_setup, virial_reports, MonotonicitySpec, VirialRun};

/// Checks and summary payload produced by one property.
#[derive(Debug, Default)]
pub struct Section {
    pub checks: Vec<Check>,
    pub data: Value,
}

/// CLI subcommands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Identities,
    Spectrum,
    Evolve,
    Trajectories,
    TheoremSweep,
    Virial,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Identities,
        Experiment::Spectrum,
        Experiment::Evolve,
        Experiment::Trajectories,
        Experiment::TheoremSweep,
        Experiment::Virial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Identities => "identities",
            Experiment::Spectrum => "spectrum",
            Experiment::Evolve => "evolve",
            Experiment::Trajectories => "trajectories",
            Experiment::TheoremSweep => "theorem-sweep",
            Experiment::Virial => "virial",
        }
    }

    fn sections(self) -> &'static [(&'static str, Property)] {
        match self {
            Experiment::Identities => &[
                ("soliton_identities", soliton_identities),
                ("integral_table", integral_table),
            ],
            Experiment::Spectrum => &[("linear_spectrum", linear_spectrum), ("coercivity", coercivity)],
            Experiment::Evolve => &[
                ("conservation", conservation),
                ("linearized_structure", linearized_structure),
            ],
            Experiment::Trajectories => &[("trajectory_order", trajectory_order)],
            Experiment::TheoremSweep => &[("theorem_scaling", theorem_scaling)],
            Experiment::Virial => &[
                ("virial_uniformity", virial_uniformity),
                ("commutator_scaling", commutator_scaling),
            ],
        }
    }

    fn plot_script(self) -> &'static str {
        match self {
            Experiment::Identities => IDENTITIES_PLOT,
            Experiment::Spectrum => SPECTRUM_PLOT,
            Experiment::Evolve => EVOLVE_PLOT,
            Experiment::Trajectories => TRAJECTORIES_PLOT,
            Experiment::TheoremSweep => SWEEP_PLOT,
            Experiment::Virial => VIRIAL_PLOT,
        }
    }
}

pub type Property = fn(&ExperimentConfig, &mut OutputDir) -> Result<Section>;

/// Runs `experiment` into `root/<name>`, writing `summary.json`,
/// `timing.json`, raw CSVs and a gnuplot script.
pub fn run_experiment(experiment: Experiment, cfg: &ExperimentConfig, root: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let started = Instant::now();
    let dir = root.join(experiment.name());
    let mut out = OutputDir::create(&dir)?;
    let mut summary = RunSummary::new(experiment.name(), cfg);
    let mut data = serde_json::Map::new();
    for (name, property) in experiment.sections() {
        let section = property(cfg, &mut out)?;
        summary.checks.extend(section.checks);
        data.insert(name.to_string(), section.data);
    }
    summary.data = Value::Object(data);
    out.text("plot.gp", experiment.plot_script())?;
    let summary = out.finish(summary)?;
    write_timing(&dir, experiment.name(), started.elapsed().as_secs_f64())?;
    Ok(summary)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn band(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi / lo
}

/// Soliton equation residual and its decay under doubling of the period,
/// `HQ = -yQ` and `yQ' = ½Q² - 2Q`.
pub fn soliton_identities(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Section> {
    let mut rows = Vec::new();
    for k in 0..3u32 {
        let scale = 1usize << k;
        let grid = make_grid(cfg.n_points * scale, cfg.domain_length * scale as f64)?;
        rows.push((grid.n_points(), grid.domain_length(), soliton_residual(SolitonParams::unit(), &grid)?));
    }
    let mut w = out.csv("residual_vs_length.csv")?;
    w.write_record(["N", "L", "residual"])?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;

    let grid = make_grid(cfg.n_points, cfg.domain_length)?;
    let q = grid.sample(profile::q);
    let hq = hilbert(&q);
    let l = grid.domain_length();
    let periodic_gap = (&hq + &grid.sample(|y| profile::periodic_y_q(y, l))).norm_l2();
    let raw_gap = (&hq + &grid.sample(profile::y_q)).norm_l2();
    let pointwise = (&grid.sample(|y| y * profile::q_prime(y)) - &q.map(|v| 0.5 * v * v - 2.0 * v)).norm_l2();

    let (r1, r2) = (rows[0].2, rows[1].2);
    Ok(Section {
        checks: vec![
            Check::acceptance("soliton residual at (N, L)", r1 <= 1e-3, r1, "<= 1e-3"),
            Check::acceptance("residual decrease under L -> 2L", r1 / r2 >= 2.0, r1 / r2, ">= 2"),
            Check::acceptance("|HQ + yQ| (periodic representative)", periodic_gap <= 1e-3, periodic_gap, "<= 1e-3"),
            Check::acceptance("|yQ' - (Q^2/2 - 2Q)|", pointwise <= 1e-3, pointwise, "<= 1e-3"),
            Check::info("|HQ + yQ| against the whole-line yQ", true, raw_gap, "reported only"),
        ],
        data: json!({
            "residuals": rows.iter().map(|r| json!({"N": r.0, "L": r.1, "residual": r.2})).collect::<Vec<_>>(),
            "hilbert_gap_periodic": periodic_gap,
            "hilbert_gap_whole_line": raw_gap,
            "pointwise_identity": pointwise,
        }),
    })
}

/// Quadratures of the closed-form integrals of the profile.
pub fn integral_table(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Section> {
    let grid = make_grid(cfg.n_points, cfg.domain_length)?;
    let t = closed_form_table();
    let q = grid.sample(profile::q);
    let yqp = grid.sample(profile::y_q_prime);
    let (em, _) = eigenfunction_field(&grid, EigenSign::Minus);
    let entries = [
        ("norm_q_sq", q.dot(&q), t.norm_q_sq),
        ("norm_yq_prime_sq", yqp.dot(&yqp), t.norm_yq_prime_sq),
        ("inner_yq_prime_q", yqp.dot(&q), t.inner_yq_prime_q),
        ("norm_eminus_sq", em.dot(&em), t.norm_eminus_sq),
        (
            "int_z2_q_qpp",
            grid.sample(|z| z * z * profile::q(z) * profile::q_second(z)).integral(),
            t.int_z2_q_qpp,
        ),
        (
            "cos2_beta",
            em.dot(&yqp).powi(2) / (em.dot(&em) * yqp.dot(&yqp)),
            t.cos2_beta,
        ),
    ];
    let mut w = out.csv("integral_table.csv")?;
    w.write_record(["name", "quadrature", "exact", "relative_error"])?;
    let mut checks = Vec::new();
    let mut data = serde_json::Map::new();
    for (name, quad, exact) in entries {
        let err = relative(quad, exact);
        w.serialize((name, quad, exact, err))?;
        checks.push(Check::acceptance(format!("{name} quadrature"), err <= 1e-6, err, "relative <= 1e-6"));
        data.insert(name.to_string(), json!({"quadrature": quad, "exact": exact, "relative_error": err}));
    }
    w.flush()?;
    Ok(Section {
        checks,
        data: Value::Object(data),
    })
}

/// Isolated eigenvalues of `𝓛` and the kernel eigenvector.
pub fn linear_spectrum(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Section> {
    let grid = make_grid(cfg.spectrum_n, cfg.spectrum_length)?;
    let op = discretize(&OperatorSpec::L, &grid)?;
    let report = spectrum_below_continuum(&op, 1.0)?;
    let t = closed_form_table();
    let targets = [("negative", t.lambda_minus), ("kernel", 0.0), ("positive", t.lambda_plus)];
    let mut checks = Vec::new();
    for (name, target) in targets {
        let nearest = report
            .discrete_eigenvalues
            .iter()
            .map(|&l| (l - target).abs())
            .fold(f64::INFINITY, f64::min);
        checks.push(Check::acceptance(
            format!("{name} eigenvalue {target:.6}"),
            nearest <= 5e-3,
            nearest,
            "distance <= 5e-3",
        ));
    }
    let qp = grid.sample(profile::q_prime);
    let qp = qp.scale(1.0 / qp.norm_l2());
    let kernel_error = report
        .discrete_eigenvalues
        .iter()
        .zip(&report.eigenvector_fields)
        .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .map(|(_, v)| {
            let v = if v.dot(&qp) < 0.0 { v.scale(-1.0) } else { v.clone() };
            (&v - &qp).norm_l2()
        })
        .unwrap_or(f64::INFINITY);
    checks.push(Check::acceptance("kernel eigenvector vs Q'/|Q'|", kernel_error <= 1e-2, kernel_error, "L2 error <= 1e-2"));

    let summary = report.summary();
    out.json("eigen_report.json", &summary)?;
    let mut w = out.csv("eigenvectors.csv")?;
    let mut header = vec!["x".to_string()];
    header.extend((0..report.eigenvector_fields.len()).map(|k| format!("v{k}")));
    w.write_record(&header)?;
    for (i, &x) in grid.nodes().iter().enumerate() {
        let mut row = vec![x];
        row.extend(report.eigenvector_fields.iter().map(|f| f.values()[i]));
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(Section {
        checks,
        data: json!({"eigenvalues": summary, "kernel_vector_error": kernel_error}),
    })
}

/// Constrained Rayleigh minima of `𝓛`, `𝓛²` and `𝓛̃`.
pub fn coercivity(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Section> {
    let fine = make_grid(cfg.spectrum_n, cfg.spectrum_length)?;
    let coarse = make_grid(cfg.coercivity_n, cfg.coercivity_length)?;
    let pair = |g: &Arc<Grid>| [g.sample(profile::q_prime), g.sample(profile::y_q_prime)];
    let l = discretize(&OperatorSpec::L, &fine)?;
    let min_l = constrained_min_rayleigh(&l, &pair(&fine), RayleighNorm::L2)?;
    let min_l2 = constrained_min_rayleigh(&l.squared(), &[fine.sample(profile::q_prime)], RayleighNorm::L2)?;
    let c0 = |g: &Arc<Grid>| -> Result<f64> {
        let lt = discretize(&OperatorSpec::Ltilde, g)?;
        constrained_min_rayleigh(&lt, &pair(g), RayleighNorm::Hhalf)
    };
    let (c0_fine, c0_coarse) = (c0(&fine)?, c0(&coarse)?);
    let drift = relative(c0_coarse, c0_fine);

    let mut w = out.csv("coercivity.csv")?;
    w.write_record(["quantity", "N", "L", "minimum"])?;
    w.serialize(("L_over_Qp_yQp", fine.n_points(), fine.domain_length(), min_l))?;
    w.serialize(("L2_over_Qp", fine.n_points(), fine.domain_length(), min_l2))?;
    w.serialize(("Ltilde_Hhalf", fine.n_points(), fine.domain_length(), c0_fine))?;
    w.serialize(("Ltilde_Hhalf", coarse.n_points(), coarse.domain_length(), c0_coarse))?;
    w.flush()?;
    Ok(Section {
        checks: vec![
            Check::acceptance("min L over {Q', (yQ)'}-perp", min_l.abs() <= 5e-3, min_l, "in [-5e-3, 5e-3]"),
            Check::acceptance("min L^2 over {Q'}-perp", min_l2 >= 0.38 - 5e-3, min_l2, ">= 0.375"),
            Check::acceptance("H^1/2 coercivity constant", c0_fine > 0.0 && c0_coarse > 0.0, c0_fine, "> 0"),
            Check::acceptance("coercivity constant across resolutions", drift <= 0.1, drift, "relative change <= 0.1"),
        ],
        data: json!({
            "min_l": min_l,
            "min_l_squared": min_l2,
            "c0": [
                {"N": fine.n_points(), "L": fine.domain_length(), "value": c0_fine},
                {"N": coarse.n_points(), "L": coarse.domain_length(), "value": c0_coarse},
            ],
        }),
    })
}

#[derive(Serialize)]
struct InvariantRow {
    t: f64,
    mass: f64,
    energy: f64,
    energy0: f64,
    energy1: f64,
}

/// Invariant drift of a long pBO run with checkpoints, and free-flow time
/// reversal through `u(x, t) ↦ u(-x, -t)`.
pub fn conservation(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Section> {
    let grid = make_grid(cfg.n_points, cfg.domain_length)?;
    let pot = Arc::new(member_potential(cfg, cfg.evolve_h)?);
    let integrator = PboIntegrator::new(&grid, Arc::clone(&pot), cfg.dt)?;
    let steps = (cfg.evolve_t_end / cfg.dt).round() as usize;
    let every = cfg.steps_per(1.0, cfg.dt).max(1);
    let checkpoint_every = cfg.checkpoint_interval.round().max(1.0) as usize;
    let u0 = grid.sample(profile::q);
    let state = integrator.prepare(EvolutionState::new(u0, Arc::clone(&pot)));
    let mut rows = Vec::new();
    let mut checkpoints = Vec::new();
    integrator.evolve(state, steps, every, |s| {
        let inv = invariants(s);
        rows.push(InvariantRow {
            t: s.time,
            mass: inv.mass,
            energy: inv.energy_perturbed,
            energy0: inv.energy0,
            energy1: inv.energy1,
        });
        let unit = s.time.round() as usize;
        if unit % checkpoint_every == 0 {
            checkpoints.push((unit, s.field.clone()));
        }
        Ok(true)
    })?;
    for (unit, field) in &checkpoints {
        write_checkpoint(&out.register(&format!("checkpoints/t{unit:05}.bosl"))?, *unit as f64, field)?;
    }
    let mut w = out.csv("invariants.csv")?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let first = &rows[0];
    let drift = |f: fn(&InvariantRow) -> f64| {
        rows.iter().map(|r| relative(f(r), f(first))).fold(0.0, f64::max)
    };
    let (mass_drift, energy_drift) = (drift(|r| r.mass), drift(|r| r.energy));

    let free = Arc::new(PotentialSpec::zero());
    let forward = PboIntegrator::new(&grid, Arc::clone(&free), cfg.dt)?;
    let back_steps = (cfg.reversal_t / cfg.dt).round() as usize;
    let start = dealias(&admissible_initial_data(&grid, PerturbationKind::Gaussian, 0.05, cfg.seed)?);
    let there = forward.evolve(EvolutionState::new(start.clone(), Arc::clone(&free)), back_steps, back_steps, |_| Ok(true))?;
    let mirrored = EvolutionState::new(there.field.reflect(), Arc::clone(&free));
    let back = forward.evolve(mirrored, back_steps, back_steps, |_| Ok(true))?;
    let reversal = (&back.field.reflect() - &start).norm_l2() / start.norm_l2();

    Ok(Section {
        checks: vec![
            Check::acceptance("mass M0 relative drift", mass_drift <= 1e-8, mass_drift, "<= 1e-8"),
            Check::acceptance("energy E relative drift", energy_drift <= 1e-6, energy_drift, "<= 1e-6"),
            Check::acceptance("free time reversal relative error", reversal <= 1e-6, reversal, "<= 1e-6"),
        ],
        data: json!({
            "h": cfg.evolve_h,
            "t_end": cfg.evolve_t_end,
            "mass_drift": mass_drift,
            "energy_drift": energy_drift,
            "reversal_error": reversal,
            "checkpoints": checkpoints.iter().map(|c| c.0).collect::<Vec<_>>(),
        }),
    })
}

/// Stationarity of `Q'` and conservation of `⟨v, Q⟩`, `⟨v, Q'⟩` under the
/// linearized flow.
pub fn linearized_structure(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Section> {
    let grid = make_grid(cfg.n_points, cfg.domain_length)?;
    let integ = LinearizedIntegrator::new(&grid, cfg.dt)?;
    let zero = grid.zeros();
    let free = Arc::new(PotentialSpec::zero());
    let q = grid.sample(profile::q);
    let qp = grid.sample(profile::q_prime);
    let (v0, _) = orthogonal_setup(
        &grid,
        &grid.sample(|y| (-(y - 1.3) * (y - 1.3) / 8.0).exp() * y.cos()),
        &zero,
    );
    let v0 = v0.scale(1.0 / v0.norm_l2());
    let steps = (cfg.linear_t_end / cfg.dt).round() as usize;
    let every = cfg.steps_per(0.5, cfg.dt).max(1);
    let mut a = EvolutionState::new(qp.clone(), Arc::clone(&free));
    let mut b = EvolutionState::new(v0, Arc::clone(&free));
    let mut w = out.csv("linearized.csv")?;
    w.write_record(["t", "stationary_drift", "inner_q", "inner_q_prime"])?;
    let (mut drift, mut orth) = (0.0_f64, 0.0_f64);
    for k in 0..=steps {
        if k > 0 {
            a = integ.step(&a, &zero)?;
            b = integ.step(&b, &zero)?;
        }
        if k % every == 0 || k == steps {
            let d = (&a.field - &qp).norm_l2() / qp.norm_l2();
            let (iq, iqp) = (b.field.dot(&q) / q.norm_l2(), b.field.dot(&qp) / qp.norm_l2());
            drift = drift.max(d);
            orth = orth.max(iq.abs()).max(iqp.abs());
            w.serialize((a.time, d, iq, iqp))?;
        }
    }
    w.flush()?;
    Ok(Section {
        checks: vec![
            Check::acceptance("Q' stationary under the linearized flow", drift <= 1e-6, drift, "relative drift <= 1e-6"),
            Check::acceptance("orthogonality to Q and Q' conserved", orth <= 1e-6, orth, "<= 1e-6"),
        ],
        data: json!({"stationary_drift": drift, "orthogonality_drift": orth, "t_end": cfg.linear_t_end}),
    })
}

/// Fitted `h`-order of the deviation between reference and exact
/// trajectories.
pub fn trajectory_order(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Section> {
    let shape = member_potential(cfg, 1.0)?;
    let sweep = gronwall_sweep(&shape, &cfg.trajectory_h, cfg.s_end, cfg.dt_s)?;
    let reference = integrate_reference(&shape, cfg.s_end, cfg.dt_s)?;
    write_trajectory_csv(out.file("reference.csv")?, &[&reference])?;
    for &h in &cfg.trajectory_h {
        let pot = PotentialSpec { h, ..shape.clone() };
        let exact = integrate_exact(&pot, cfg.s_end, cfg.dt_s)?;
        write_trajectory_csv(out.file(&format!("exact_h{h}.csv"))?, &[&exact])?;
    }
    let mut w = out.csv("gronwall.csv")?;
    for c in &sweep.comparisons {
        w.serialize(c)?;
    }
    w.flush()?;
    let order = match sweep.scale_order {
        FittedOrder::Fitted(f) => f.order,
        FittedOrder::Undefined => f64::NAN,
    };
    Ok(Section {
        checks: vec![Check::acceptance(
            "h-order of sup|C_exact - C_reference|",
            (order - 2.0).abs() <= 0.2,
            order,
            "2.0 +/- 0.2",
        )],
        data: to_value(&sweep)?,
    })
}

/// Near-soliton pBO runs over the `h` list: remainder and residual orders.
pub fn theorem_scaling(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Section> {
    let sweep = run_theorem_sweep(cfg)?;
    for m in &sweep.members {
        let dir = format!("h{}", m.record.h);
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out.file(&format!("{dir}/modulation.csv"))?);
        w.write_record(crate::modulation::MODULATION_CSV_HEADER.split(','))?;
        for r in &m.modulation {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = out.csv(&format!("{dir}/residuals.csv"))?;
        for r in &m.residuals.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        write_trajectory_csv(out.file(&format!("{dir}/trajectories.csv"))?, &[&m.exact, &m.measured])?;
    }
    let mut w = out.csv("sweep.csv")?;
    w.write_record([
        "h",
        "t_end",
        "delta",
        "sup_remainder",
        "sup_remainder_measured",
        "sup_local",
        "local_ratio",
        "position_residual_integral",
        "scale_residual_integral",
        "sup_dev_position",
        "sup_dev_scale",
    ])?;
    for m in &sweep.members {
        let r = &m.record;
        w.serialize((
            r.h,
            r.t_end,
            r.delta,
            r.sup_remainder,
            r.sup_remainder_measured,
            r.sup_local,
            r.local_ratio,
            r.position_residual_integral,
            r.scale_residual_integral,
            r.sup_dev_position,
            r.sup_dev_scale,
        ))?;
    }
    w.flush()?;
    let order = |f: &FittedOrder| match f {
        FittedOrder::Fitted(f) => f.order,
        FittedOrder::Undefined => f64::NAN,
    };
    let (rem, res) = (order(&sweep.remainder_order), order(&sweep.scale_residual_order));
    Ok(Section {
        checks: vec![
            Check::acceptance("h-order of sup remainder against the exact trajectory", (rem - 1.5).abs() <= 0.3, rem, "1.5 +/- 0.3"),
            Check::acceptance("h-order of integrated c-residual", res >= 2.7, res, ">= 2.7"),
            Check::info("every sweep member completed", sweep.failures.is_empty(), sweep.failures.len() as f64, "0 failures"),
        ],
        data: json!({
            "records": sweep.members.iter().map(|m| &m.record).collect::<Vec<_>>(),
            "failures": sweep.failures,
            "remainder_order": sweep.remainder_order,
            "local_order": sweep.local_order,
            "position_residual_order": sweep.position_residual_order,
            "scale_residual_order": sweep.scale_residual_order,
        }),
    })
}

/// Forced linearized run with a broad orthogonal packet; virial ratios over
/// `(γ, y₀, T)` plus the weighted-mass monotonicity of the unforced run.
pub fn virial_uniformity(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Section> {
    let grid = make_grid(cfg.n_points, cfg.domain_length)?;
    let (sigma, k) = (cfg.virial_width, cfg.virial_carrier);
    let packet = grid.sample(|y| (-y * y / (2.0 * sigma * sigma)).exp() * (k * y).cos());
    let fw = cfg.forcing_width;
    let bump = grid.sample(|y| cfg.forcing_amplitude * (-y * y / (2.0 * fw * fw)).exp());
    let (v0, f) = orthogonal_setup(&grid, &packet, &bump);
    let every = cfg.steps_per(cfg.snapshot_interval, cfg.virial_dt).max(1);
    let run = VirialRun {
        initial: v0.clone(),
        forcing: f,
        dt: cfg.virial_dt,
        t_end: cfg.virial_t_end,
        snapshot_every: every,
    };
    let snaps = run.evolve()?;
    let reports = virial_reports(&snaps, &run.forcing, &cfg.gammas, &cfg.y0s)?;
    out.json("virial_reports.json", &reports)?;
    let mut w = out.csv("virial.csv")?;
    for r in &reports {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut checks = Vec::new();
    let mut bands = serde_json::Map::new();
    for &gamma in &cfg.gammas {
        let b = band(reports.iter().filter(|r| r.gamma == gamma).map(|r| r.ratio));
        bands.insert(gamma.to_string(), json!(b));
        checks.push(Check::acceptance(
            format!("virial ratio band at gamma = {gamma}"),
            b <= 3.0,
            b,
            "max/min <= 3",
        ));
    }

    let unforced = VirialRun {
        forcing: grid.zeros(),
        ..run
    };
    let spec = MonotonicitySpec::new(cfg.monotonicity_a, cfg.monotonicity_lambda, cfg.monotonicity_y0)?;
    let mono = monotonicity_check(&unforced.evolve()?, &spec)?;
    checks.push(Check::info(
        "weighted mass monotone up to the correction term",
        mono.relative_violation <= 0.1,
        mono.relative_violation,
        "relative violation <= 0.1",
    ));
    Ok(Section {
        checks,
        data: json!({"bands": bands, "reports": reports, "monotonicity": mono}),
    })
}

/// Commutator norms against `γ ln γ⁻¹`.
pub fn commutator_scaling(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Section> {
    let power = PowerIterationConfig {
        seed: cfg.seed,
        ..PowerIterationConfig::default()
    };
    let probes = cfg
        .probe_gammas
        .iter()
        .map(|&g| commutator_probe_with(g, cfg.probe_trials, ProbeGrid::for_gamma(g), &power))
        .collect::<Result<Vec<_>>>()?;
    let mut w = out.csv("commutator.csv")?;
    w.write_record(["gamma", "norm", "ratio", "iterations"])?;
    for p in &probes {
        w.serialize((p.gamma, p.norm, p.ratio, p.iterations))?;
    }
    w.flush()?;
    let b = band(probes.iter().map(|p| p.ratio));
    Ok(Section {
        checks: vec![Check::acceptance("commutator ratio band", b <= 4.0, b, "max/min <= 4")],
        data: json!({"probes": probes, "band": b}),
    })
}

/// Runs one property into a scratch directory under `root`, for callers that
/// want its checks without a full experiment.
pub fn run_property(property: Property, cfg: &ExperimentConfig, root: &Path) -> Result<Section> {
    let mut out = OutputDir::create(root)?;
    property(cfg, &mut out)
}

const IDENTITIES_PLOT: &str = "set datafile separator ','
set terminal pngcairo size 900,600
set output 'residual_vs_length.png'
set logscale xy
set xlabel 'L'
set ylabel 'soliton residual'
plot 'residual_vs_length.csv' using 2:3 skip 1 with linespoints title 'residual'
";

const SPECTRUM_PLOT: &str = "set datafile separator ','
set terminal pngcairo size 900,600
set output 'eigenvectors.png'
set xrange [-20:20]
set xlabel 'y'
plot for [k=2:4] 'eigenvectors.csv' using 1:k skip 1 with lines title columnhead(k)
";

const EVOLVE_PLOT: &str = "set datafile separator ','
set terminal pngcairo size 900,900
set output 'invariants.png'
set multiplot layout 2,1
set xlabel 't'
plot 'invariants.csv' using 1:2 skip 1 with lines title 'M0'
plot 'invariants.csv' using 1:3 skip 1 with lines title 'E'
unset multiplot
set output 'linearized.png'
set logscale y
plot 'linearized.csv' using 1:2 skip 1 with lines title 'stationary drift', \\
     '' using 1:(abs($3)+1e-18) skip 1 with lines title '<v,Q>', \\
     '' using 1:(abs($4)+1e-18) skip 1 with lines title \"<v,Q'>\"
";

const TRAJECTORIES_PLOT: &str = "set datafile separator ','
set terminal pngcairo size 900,600
set output 'trajectories.png'
set xlabel 's'
set ylabel 'C'
plot 'reference.csv' using 1:3 skip 1 with lines title 'reference', \\
     for [f in system('ls exact_h*.csv')] f using 1:3 skip 1 with lines title f
";

const SWEEP_PLOT: &str = "set datafile separator ','
set terminal pngcairo size 900,600
set output 'sweep.png'
set logscale xy
set xlabel 'h'
plot 'sweep.csv' using 1:4 skip 1 with linespoints title 'sup remainder', \\
     'sweep.csv' using 1:9 skip 1 with linespoints title 'c residual integral', \\
     'sweep.csv' using 1:($1**1.5) skip 1 with lines title 'h^{3/2}', \\
     'sweep.csv' using 1:($1**3) skip 1 with lines title 'h^3'
";

const VIRIAL_PLOT: &str = "set datafile separator ','
set terminal pngcairo size 900,600
set output 'virial.png'
set xlabel 'y0'
set ylabel 'ratio'
plot 'virial.csv' using 2:7 skip 1 with points pointtype 7 title 'ratio'
set output 'commutator.png'
set logscale x
set xlabel 'gamma'
plot 'commutator.csv' using 1:3 skip 1 with linespoints title 'norm / (gamma ln 1/gamma)'
";
