//! Parameter ODEs for the soliton center and scale: the `h`-independent
//! reference system, its `h²`-corrected exact counterpart, frame changes
//! between slow time `s = ht` and fast time `t`, and their comparison.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};
use crate::modulation::TrackedSample;
use crate::potential::PotentialSpec;
use crate::scaling::{fit_scaling_exponent, ScalingFit};

pub const DEFAULT_DT_S: f64 = 1e-3;
/// Lower and upper scale thresholds defining the stopping time.
pub const SCALE_WINDOW: (f64, f64) = (0.5, 2.0);
const EVENT_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    SlowS,
    FastT,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Reference,
    Exact,
    Measured,
}

/// First time the scale reaches ½ or 2, if it does before the end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "s", rename_all = "snake_case")]
pub enum StoppingTime {
    Reached(f64),
    NotReached,
}

impl StoppingTime {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Reached(s) => Some(*s),
            Self::NotReached => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    /// `A` in the slow frame, `a` in the fast frame.
    pub position: f64,
    /// `C` or `c`.
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub frame: Frame,
    pub kind: TrajectoryKind,
    pub samples: Vec<TrajectorySample>,
    pub stopping_time: StoppingTime,
}

impl TrajectoryState {
    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    /// Builds a fast-frame measured trajectory from tracked decompositions.
    pub fn measured(track: &[TrackedSample]) -> Self {
        Self {
            frame: Frame::FastT,
            kind: TrajectoryKind::Measured,
            samples: track
                .iter()
                .map(|s| TrajectorySample {
                    time: s.time,
                    position: s.decomposition.params.a,
                    scale: s.decomposition.params.c,
                })
                .collect(),
            stopping_time: StoppingTime::NotReached,
        }
    }
}

type Rhs<'a> = dyn Fn([f64; 2]) -> [f64; 2] + 'a;

fn rk4_step(f: &Rhs<'_>, x: [f64; 2], dt: f64) -> [f64; 2] {
    let add = |x: [f64; 2], k: [f64; 2], s: f64| [x[0] + s * k[0], x[1] + s * k[1]];
    let k1 = f(x);
    let k2 = f(add(x, k1, 0.5 * dt));
    let k3 = f(add(x, k2, 0.5 * dt));
    let k4 = f(add(x, k3, dt));
    [
        x[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

fn outside_window(c: f64) -> bool {
    c <= SCALE_WINDOW.0 || c >= SCALE_WINDOW.1
}

/// Integrates `(A, C)` from `(0, 1)` to `s_end` with classic RK4, stopping
/// at the first crossing of the scale window, located by bisection on a
/// partial step.
fn integrate(f: &Rhs<'_>, s_end: f64, dt_s: f64, kind: TrajectoryKind) -> Result<TrajectoryState> {
    if !(dt_s > 0.0 && dt_s.is_finite()) {
        return Err(usage(format!("trajectory step must be positive, got {dt_s}")));
    }
    if !(s_end >= 0.0 && s_end.is_finite()) {
        return Err(usage(format!("trajectory end must be finite and nonnegative, got {s_end}")));
    }
    let mut x = [0.0, 1.0];
    let mut s = 0.0;
    let mut samples = vec![TrajectorySample {
        time: 0.0,
        position: x[0],
        scale: x[1],
    }];
    let steps = (s_end / dt_s).ceil() as usize;
    for k in 0..steps {
        let dt = (s_end - s).min(dt_s);
        if k + 1 == steps && dt <= 0.0 {
            break;
        }
        let next = rk4_step(f, x, dt);
        if outside_window(next[1]) {
            let target = if next[1] <= SCALE_WINDOW.0 {
                SCALE_WINDOW.0
            } else {
                SCALE_WINDOW.1
            };
            let (mut lo, mut hi) = (0.0, dt);
            while hi - lo > EVENT_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                let c = rk4_step(f, x, mid)[1];
                if (c - target) * (x[1] - target) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let hit = rk4_step(f, x, hi);
            samples.push(TrajectorySample {
                time: s + hi,
                position: hit[0],
                scale: hit[1],
            });
            return Ok(TrajectoryState {
                frame: Frame::SlowS,
                kind,
                samples,
                stopping_time: StoppingTime::Reached(s + hi),
            });
        }
        x = next;
        s = if k + 1 == steps { s_end } else { s + dt };
        samples.push(TrajectorySample {
            time: s,
            position: x[0],
            scale: x[1],
        });
    }
    Ok(TrajectoryState {
        frame: Frame::SlowS,
        kind,
        samples,
        stopping_time: StoppingTime::NotReached,
    })
}

/// `Ċ = C W'(A)`, `Ȧ = C - W(A)` from `(0, 1)`.
pub fn integrate_reference(pot: &PotentialSpec, s_end: f64, dt_s: f64) -> Result<TrajectoryState> {
    pot.validate()?;
    let f = |x: [f64; 2]| {
        let [w, w1, _, _] = pot.derivatives(x[0]);
        [x[1] - w, x[1] * w1]
    };
    integrate(&f, s_end, dt_s, TrajectoryKind::Reference)
}

/// Reference system plus `½C⁻²h²W''(A)` in `Ȧ` and `½C⁻¹h²W'''(A)` in `Ċ`.
pub fn integrate_exact(pot: &PotentialSpec, s_end: f64, dt_s: f64) -> Result<TrajectoryState> {
    pot.validate()?;
    let h2 = pot.h * pot.h;
    let f = |x: [f64; 2]| {
        let [w, w1, w2, w3] = pot.derivatives(x[0]);
        let c = x[1];
        [c - w + 0.5 * h2 * w2 / (c * c), c * w1 + 0.5 * h2 * w3 / c]
    };
    integrate(&f, s_end, dt_s, TrajectoryKind::Exact)
}

/// Slow to fast frame: `t = s/h`, `a = A/h`, `c = C`.
pub fn convert_frame(tr: &TrajectoryState, h: f64) -> Result<TrajectoryState> {
    if tr.frame != Frame::SlowS {
        return Err(usage("frame conversion expects a slow-frame trajectory"));
    }
    if !(h > 0.0) {
        return Err(usage(format!("frame conversion needs h > 0, got {h}")));
    }
    Ok(TrajectoryState {
        frame: Frame::FastT,
        kind: tr.kind,
        samples: tr
            .samples
            .iter()
            .map(|p| TrajectorySample {
                time: p.time / h,
                position: p.position / h,
                scale: p.scale,
            })
            .collect(),
        stopping_time: match tr.stopping_time {
            StoppingTime::Reached(s) => StoppingTime::Reached(s / h),
            StoppingTime::NotReached => StoppingTime::NotReached,
        },
    })
}

/// Fast to slow frame, the inverse of [`convert_frame`].
pub fn to_slow_frame(tr: &TrajectoryState, h: f64) -> Result<TrajectoryState> {
    if tr.frame != Frame::FastT {
        return Err(usage("expected a fast-frame trajectory"));
    }
    if !(h > 0.0) {
        return Err(usage(format!("frame conversion needs h > 0, got {h}")));
    }
    Ok(TrajectoryState {
        frame: Frame::SlowS,
        kind: tr.kind,
        samples: tr
            .samples
            .iter()
            .map(|p| TrajectorySample {
                time: p.time * h,
                position: p.position * h,
                scale: p.scale,
            })
            .collect(),
        stopping_time: match tr.stopping_time {
            StoppingTime::Reached(t) => StoppingTime::Reached(t * h),
            StoppingTime::NotReached => StoppingTime::NotReached,
        },
    })
}

/// Cubic Lagrange interpolation through the four samples around `t`.
pub fn interpolate(samples: &[TrajectorySample], t: f64) -> Option<(f64, f64)> {
    let n = samples.len();
    if n == 0 || t < samples[0].time || t > samples[n - 1].time {
        return None;
    }
    if n < 4 {
        let j = samples.partition_point(|p| p.time < t).clamp(1, n.max(2) - 1);
        if n == 1 {
            return Some((samples[0].position, samples[0].scale));
        }
        let (p, q) = (samples[j - 1], samples[j]);
        let w = (t - p.time) / (q.time - p.time);
        return Some((
            p.position + w * (q.position - p.position),
            p.scale + w * (q.scale - p.scale),
        ));
    }
    let j = samples.partition_point(|p| p.time < t);
    let start = j.saturating_sub(2).min(n - 4);
    let pts = &samples[start..start + 4];
    let (mut a, mut c) = (0.0, 0.0);
    for (i, pi) in pts.iter().enumerate() {
        let mut w = 1.0;
        for (k, pk) in pts.iter().enumerate() {
            if k != i {
                w *= (t - pk.time) / (pi.time - pk.time);
            }
        }
        a += w * pi.position;
        c += w * pi.scale;
    }
    Some((a, c))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GronwallComparison {
    pub h: f64,
    pub sup_dev_position: f64,
    pub sup_dev_scale: f64,
    /// Largest ratio of `|X - X̄|` to the Gronwall bound
    /// `h² (∫₀^s e^{(2κ+1)(s-s')} |g|² ds')^{1/2}` over the window;
    /// 0 when the correction `g` vanishes identically.
    pub bound_ratio: f64,
}

/// Deviation suprema between two slow-frame trajectories on the mesh of
/// `reference` within their common window, the exact one resampled by
/// cubic interpolation. `pot` supplies the correction `g` and the
/// Jacobian bound `κ` for the Gronwall envelope.
pub fn gronwall_compare(
    reference: &TrajectoryState,
    exact: &TrajectoryState,
    pot: &PotentialSpec,
) -> Result<GronwallComparison> {
    if reference.frame != Frame::SlowS || exact.frame != Frame::SlowS {
        return Err(usage("comparison expects slow-frame trajectories"));
    }
    let (Some(r0), Some(r1), Some(e0), Some(e1)) = (
        reference.samples.first(),
        reference.samples.last(),
        exact.samples.first(),
        exact.samples.last(),
    ) else {
        return Err(usage("comparison needs nonempty trajectories"));
    };
    let lo = r0.time.max(e0.time);
    let hi = r1.time.min(e1.time);
    if !(hi > lo) {
        return Err(usage("trajectories have no overlapping window"));
    }
    let h2 = pot.h * pot.h;
    // κ: Frobenius norm of the reference Jacobian [[-W', 1], [C W'', W']].
    let jac_norm = |a: f64, c: f64| {
        let [_, w1, w2, _] = pot.derivatives(a);
        (2.0 * w1 * w1 + 1.0 + (c * w2).powi(2)).sqrt()
    };
    let mesh: Vec<&TrajectorySample> = reference
        .samples
        .iter()
        .filter(|p| p.time >= lo && p.time <= hi)
        .collect();
    let mut kappa: f64 = 0.0;
    let mut devs = Vec::with_capacity(mesh.len());
    for p in &mesh {
        let (a, c) = interpolate(&exact.samples, p.time).unwrap_or((p.position, p.scale));
        kappa = kappa.max(jac_norm(p.position, p.scale)).max(jac_norm(a, c));
        devs.push((p.time, (a - p.position).abs(), (c - p.scale).abs(), a, c));
    }
    let rate = 2.0 * kappa + 1.0;
    // Running integral of e^{-rate s'}|g|², trapezoid on the mesh.
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let mut sup_a: f64 = 0.0;
    let mut sup_c: f64 = 0.0;
    let mut bound_ratio: f64 = 0.0;
    for &(s, da, dc, a, c) in &devs {
        sup_a = sup_a.max(da);
        sup_c = sup_c.max(dc);
        let [_, _, w2, w3] = pot.derivatives(a);
        let g2 = (0.5 * w2 / (c * c)).powi(2) + (0.5 * w3 / c).powi(2);
        let weighted = (-rate * (s - lo)).exp() * g2;
        if let Some((ps, pw)) = prev {
            integral += 0.5 * (s - ps) * (pw + weighted);
        }
        prev = Some((s, weighted));
        let bound = h2 * ((rate * (s - lo)).exp() * integral).sqrt();
        let dev = (da * da + dc * dc).sqrt();
        if bound > 0.0 {
            bound_ratio = bound_ratio.max(dev / bound);
        }
    }
    Ok(GronwallComparison {
        h: pot.h,
        sup_dev_position: sup_a,
        sup_dev_scale: sup_c,
        bound_ratio,
    })
}

/// Fitted `h`-order of `sup|Ĉ - C̄|`, or undefined when every deviation
/// vanishes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FittedOrder {
    Fitted(ScalingFit),
    Undefined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GronwallSweep {
    pub comparisons: Vec<GronwallComparison>,
    pub scale_order: FittedOrder,
    pub position_order: FittedOrder,
}

pub(crate) fn order_of(points: Vec<(f64, f64)>) -> Result<FittedOrder> {
    if points.iter().all(|p| p.1 == 0.0) {
        return Ok(FittedOrder::Undefined);
    }
    Ok(FittedOrder::Fitted(fit_scaling_exponent(&points)?))
}

/// Compares reference and exact trajectories for each `h` in `hs`, all with
/// the shape of `pot`.
pub fn gronwall_sweep(pot: &PotentialSpec, hs: &[f64], s_end: f64, dt_s: f64) -> Result<GronwallSweep> {
    let reference = integrate_reference(pot, s_end, dt_s)?;
    let comparisons = hs
        .iter()
        .map(|&h| {
            let p = PotentialSpec::new(h, pot.shape.clone())?;
            let exact = integrate_exact(&p, s_end, dt_s)?;
            gronwall_compare(&reference, &exact, &p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GronwallSweep {
        scale_order: order_of(comparisons.iter().map(|c| (c.h, c.sup_dev_scale)).collect())?,
        position_order: order_of(comparisons.iter().map(|c| (c.h, c.sup_dev_position)).collect())?,
        comparisons,
    })
}

pub fn write_trajectory_csv<W: Write>(w: W, trajectories: &[&TrajectoryState]) -> Result<()> {
    let frame = trajectories.first().map(|t| t.frame).unwrap_or(Frame::SlowS);
    if trajectories.iter().any(|t| t.frame != frame) {
        return Err(usage("trajectories in one CSV must share a frame"));
    }
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    match frame {
        Frame::SlowS => out.write_record(["s", "A", "C", "kind", "frame"])?,
        Frame::FastT => out.write_record(["t", "a", "c", "kind", "frame"])?,
    }
    for tr in trajectories {
        for p in &tr.samples {
            out.serialize((p.time, p.position, p.scale, tr.kind, tr.frame))?;
        }
    }
    out.flush()?;
    Ok(())
}
