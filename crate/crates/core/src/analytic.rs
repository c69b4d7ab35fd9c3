//! Time-optimal transfer pulses from the Euler–Lagrange equation
//! `θ'' = ((k² − 1) / 2) sin 2θ`, solved by shooting.
//!
//! The equation is integrated in angular time `s = π J_ref t`, where
//! `J_ref` is the first coupling of the three-spin (sub)chain, and primes
//! denote `d/ds`. Along an optimal trajectory the control of the reduced
//! model is `u = 2θ'` (time in `1/J_ref`), so the physical amplitude of the
//! middle-spin y channel is `J_ref · θ'` Hz. The polar coordinates follow
//!
//! ```text
//! r1' = −cos θ r2,   r2' = cos θ r1 − k sin θ r3,   r3' = k sin θ r2
//! ```
//!
//! from `(cos α, sin α, 0)`. A shot lands where the angle `atan2(r3, r2)`
//! comes back down through `β`; it hits the target `(0, cos β, sin β)` when
//! `r1` vanishes there. Landing on that half-plane rather than on `r1 = 0`
//! keeps the crossing transversal when the target is the pole `β = π/2`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{conjugate, evolve_pulse, rotation, transfer_fidelity};
use crate::operator::{build_operator, Operator, ProductOperatorSpec};
use crate::pulse::ShapedPulse;
use crate::reduced::{integrate_reduced, to_polar, ReducedState4};
use crate::search::{find_root, golden_section, nelder_mead};
use crate::sequence::{Event, EventSequence, HardPulse};
use crate::system::{ControlChannel, SpinSystem};

/// Largest RK4 step in angular time for reported trajectories.
pub const MAX_STEP: f64 = 1e-4;
/// Step used while scanning and bracketing shooting parameters.
const SCAN_STEP: f64 = 1e-3;
/// Horizon of a single shot in angular time.
const S_MAX: f64 = 8.0 * PI;
const SCAN_POINTS: usize = 160;
const OMEGA_MAX: f64 = 4.0;
/// Largest landing-angle or endpoint error accepted from the shooter.
pub const TARGET_TOL: f64 = 1e-6;
/// Minimum segment count of emitted pulses.
pub const MIN_SEGMENTS: usize = 200;
/// Default amplitude of the connecting hard pulses in Hz.
pub const BLIP_AMPLITUDE: f64 = 5000.0;

/// `E = θ'²/2 + ((k² − 1)/4) cos 2θ`, constant along every solution.
pub fn first_integral(theta: f64, theta_dot: f64, k: f64) -> f64 {
    0.5 * theta_dot * theta_dot + 0.25 * (k * k - 1.0) * (2.0 * theta).cos()
}

fn el_accel(theta: f64, k: f64) -> f64 {
    0.5 * (k * k - 1.0) * (2.0 * theta).sin()
}

fn el_step(th: f64, w: f64, k: f64, h: f64) -> (f64, f64) {
    let (k1t, k1w) = (w, el_accel(th, k));
    let (k2t, k2w) = (w + 0.5 * h * k1w, el_accel(th + 0.5 * h * k1t, k));
    let (k3t, k3w) = (w + 0.5 * h * k2w, el_accel(th + 0.5 * h * k2t, k));
    let (k4t, k4w) = (w + h * k3w, el_accel(th + h * k3t, k));
    (
        th + h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t),
        w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
    )
}

/// Sampled solution `θ(s)`, `θ'(s)` of the Euler–Lagrange equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerLagrangePath {
    pub k: f64,
    pub s: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
}

impl EulerLagrangePath {
    /// Largest deviation of the first integral from its initial value.
    pub fn first_integral_drift(&self) -> f64 {
        let e0 = first_integral(self.theta[0], self.theta_dot[0], self.k);
        self.theta
            .iter()
            .zip(&self.theta_dot)
            .map(|(t, w)| (first_integral(*t, *w, self.k) - e0).abs())
            .fold(0.0, f64::max)
    }
}

/// RK4 integration of `θ'' = ((k²−1)/2) sin 2θ` over `[0, s_max]` with a
/// step of at most [`MAX_STEP`].
pub fn integrate_euler_lagrange(
    theta0: f64,
    theta_dot0: f64,
    k: f64,
    s_max: f64,
) -> Result<EulerLagrangePath> {
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(Error::InvalidConfig(format!("integration span {s_max}")));
    }
    if !(theta0.is_finite() && theta_dot0.is_finite() && k.is_finite()) {
        return Err(Error::InvalidConfig("non-finite initial condition".into()));
    }
    let steps = (s_max / MAX_STEP).ceil() as usize;
    let h = s_max / steps as f64;
    let mut path = EulerLagrangePath {
        k,
        s: Vec::with_capacity(steps + 1),
        theta: Vec::with_capacity(steps + 1),
        theta_dot: Vec::with_capacity(steps + 1),
    };
    let (mut th, mut w) = (theta0, theta_dot0);
    for i in 0..=steps {
        path.s.push(i as f64 * h);
        path.theta.push(th);
        path.theta_dot.push(w);
        (th, w) = el_step(th, w, k, h);
    }
    Ok(path)
}

/// Coupled polar and Euler–Lagrange state `[r1, r2, r3, θ, θ']`.
type Joint = [f64; 5];

fn joint_rhs(y: &Joint, k: f64) -> Joint {
    let (c, sn) = (y[3].cos(), y[3].sin());
    [
        -c * y[1],
        c * y[0] - k * sn * y[2],
        k * sn * y[1],
        y[4],
        el_accel(y[3], k),
    ]
}

fn joint_step(y: &Joint, k: f64, h: f64) -> Joint {
    let add = |a: &Joint, d: &Joint, s: f64| -> Joint { std::array::from_fn(|i| a[i] + s * d[i]) };
    let k1 = joint_rhs(y, k);
    let k2 = joint_rhs(&add(y, &k1, h / 2.0), k);
    let k3 = joint_rhs(&add(y, &k2, h / 2.0), k);
    let k4 = joint_rhs(&add(y, &k3, h), k);
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Where a shot first crosses the half-plane at angle `β` from above.
#[derive(Clone, Copy, Debug)]
struct Landing {
    s: f64,
    y: Joint,
}

fn fly(theta0: f64, omega0: f64, k: f64, alpha: f64, beta: f64, h: f64) -> Option<Landing> {
    let (sb, cb) = beta.sin_cos();
    let side = |y: &Joint| y[1] * sb - y[2] * cb;
    let mut y: Joint = [alpha.cos(), alpha.sin(), 0.0, theta0, omega0];
    let mut s = 0.0;
    while s < S_MAX {
        let next = joint_step(&y, k, h);
        if side(&y) > 0.0 && side(&next) <= 0.0 && y[1] * cb + y[2] * sb > 0.0 {
            // Locate the crossing inside the step with a partial RK4 step.
            let frac = find_root(|f| side(&joint_step(&y, k, f * h)), 0.0, 1.0, 1e-15).ok()?;
            return Some(Landing {
                s: s + frac * h,
                y: joint_step(&y, k, frac * h),
            });
        }
        y = next;
        s += h;
    }
    None
}

/// One point of the shooting scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingCandidate {
    /// `θ'(0)` when `α = 0`, otherwise `θ(0)`.
    pub parameter: f64,
    /// Landing time in units of `1/J_ref`, if the shot lands.
    pub duration: Option<f64>,
    /// `r1` at landing; zero on target.
    pub residual: Option<f64>,
}

/// Solution of the three-spin boundary value problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingSolution {
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta0: f64,
    /// `θ'(0)` in angular time.
    pub theta_dot0: f64,
    /// Duration `T` in units of `1/J_ref`.
    pub duration: f64,
    /// `θ(s)` and `θ'(s)` over `[0, πT]`.
    pub path: EulerLagrangePath,
    /// Polar coordinates `(r1, r2, r3)` at the end.
    pub final_polar: [f64; 3],
    /// `r1` at landing; the endpoint is `(r1, √(1 − r1²) cos β, √(1 − r1²) sin β)`.
    pub residual: f64,
    pub diagnostics: Vec<ShootingCandidate>,
}

impl ShootingSolution {
    /// Angular duration `πT`.
    pub fn angular_duration(&self) -> f64 {
        PI * self.duration
    }

    /// Physical duration in seconds for reference coupling `j_ref` Hz.
    pub fn seconds(&self, j_ref: f64) -> f64 {
        self.duration / j_ref
    }

    /// Reduced-model starting point `(cos α, sin α cos θ0, sin α sin θ0, 0)`.
    pub fn initial_state(&self) -> ReducedState4 {
        let (sa, ca) = self.alpha.sin_cos();
        ReducedState4::new(ca, sa * self.theta0.cos(), sa * self.theta0.sin(), 0.0)
    }

    /// `θ'` at the midpoints of `n` equal segments of `[0, πT]`.
    pub fn midpoint_theta_dot(&self, n: usize) -> Vec<f64> {
        let ds = self.angular_duration() / n as f64;
        let m = ((0.5 * ds) / MAX_STEP).ceil().max(1.0) as usize;
        let h = 0.5 * ds / m as f64;
        let (mut th, mut w) = (self.theta0, self.theta_dot0);
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let sub = if j == 0 { m } else { 2 * m };
            for _ in 0..sub {
                (th, w) = el_step(th, w, self.k, h);
            }
            out.push(w);
        }
        out
    }

    /// Reduced-model control `u = 2θ'` on `n` segments.
    pub fn reduced_control(&self, n: usize) -> Vec<f64> {
        self.midpoint_theta_dot(n).into_iter().map(|w| 2.0 * w).collect()
    }

    /// Drives the reduced model with the sampled control and returns the
    /// distance of its endpoint from `(0, cos β, sin β)` in polar form.
    pub fn reduced_endpoint_error(&self) -> Result<f64> {
        let n = (self.duration / crate::reduced::MAX_STEP).ceil() as usize;
        let traj = integrate_reduced(&self.reduced_control(n), self.k, self.duration, self.initial_state())?;
        let p = to_polar(traj.final_state());
        Ok((p.r1.abs())
            .max((p.r2 - self.beta.cos()).abs())
            .max((p.r3 - self.beta.sin()).abs()))
    }

    /// Shooting scan as CSV (`parameter, duration, residual`).
    pub fn write_diagnostics_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "parameter,duration,residual")?;
        for c in &self.diagnostics {
            let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{}", c.parameter, f(c.duration), f(c.residual))?;
        }
        Ok(())
    }
}

/// Maps a shooting parameter to `(θ(0), θ'(0))`.
fn initial_condition(p: f64, alpha: f64) -> (f64, f64) {
    if alpha == 0.0 {
        (0.0, p)
    } else {
        (p, p.sin() / alpha.tan())
    }
}

/// Finds the fastest trajectory from `(cos α, sin α, 0)` to
/// `(0, cos β, sin β)`. For `α = 0` the start forces `θ(0) = 0` and the
/// search runs over `θ'(0)`; otherwise it runs over `θ(0)` with
/// `θ'(0) = sin θ(0) cot α`.
pub fn shoot_three_spin(k: f64, alpha: f64, beta: f64) -> Result<ShootingSolution> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidConfig(format!("coupling ratio must be positive, got {k}")));
    }
    if !(0.0..FRAC_PI_2).contains(&alpha) || !(0.0..=FRAC_PI_2).contains(&beta) {
        return Err(Error::InvalidConfig(format!(
            "boundary angles outside range: alpha={alpha}, beta={beta}"
        )));
    }
    let (lo, hi) = if alpha == 0.0 {
        (0.0, OMEGA_MAX)
    } else {
        (-FRAC_PI_2, FRAC_PI_2)
    };
    if alpha == 0.0 && beta == 0.0 {
        return free_solution(k);
    }
    let residual_at = |p: f64, h: f64| -> Option<(f64, f64)> {
        let (t0, w0) = initial_condition(p, alpha);
        fly(t0, w0, k, alpha, beta, h).map(|l| (l.s / PI, l.y[0]))
    };
    let params: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / SCAN_POINTS as f64)
        .map(|p| if alpha > 0.0 { p.clamp(lo + 1e-6, hi - 1e-6) } else { p })
        .collect();
    let diagnostics: Vec<ShootingCandidate> = params
        .iter()
        .map(|&p| {
            let r = residual_at(p, SCAN_STEP);
            ShootingCandidate {
                parameter: p,
                duration: r.map(|v| v.0),
                residual: r.map(|v| v.1),
            }
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    let mut consider = |p: f64| {
        if let Some((t, r)) = residual_at(p, SCAN_STEP) {
            if r.abs() < TARGET_TOL && best.is_none_or(|b| t < b.1) {
                best = Some((p, t));
            }
        }
    };
    for (i, w) in diagnostics.windows(2).enumerate() {
        let (Some(ra), Some(rb)) = (w[0].residual, w[1].residual) else {
            continue;
        };
        if ra == 0.0 {
            consider(w[0].parameter);
        }
        // Sign changes across a jump of the landing point converge onto the
        // jump and are discarded by the tolerance in `consider`.
        if ra * rb < 0.0 {
            let f = |p: f64| residual_at(p, SCAN_STEP).map_or(f64::NAN, |v| v.1);
            if let Ok(p) = find_root(f, params[i], params[i + 1], 1e-15) {
                consider(p);
            }
        }
    }
    let Some((p, _)) = best else {
        return Err(Error::NoFeasibleSolution {
            lower: lo,
            upper: hi,
            reason: format!("no landing on angle {beta} for k={k}, alpha={alpha}"),
        });
    };
    let (theta0, theta_dot0) = initial_condition(p, alpha);
    let landing = fly(theta0, theta_dot0, k, alpha, beta, MAX_STEP).ok_or_else(|| {
        Error::NoFeasibleSolution {
            lower: lo,
            upper: hi,
            reason: "refined shot did not land".into(),
        }
    })?;
    let path = integrate_euler_lagrange(theta0, theta_dot0, k, landing.s)?;
    Ok(ShootingSolution {
        k,
        alpha,
        beta,
        theta0,
        theta_dot0,
        duration: landing.s / PI,
        path,
        final_polar: [landing.y[0], landing.y[1], landing.y[2]],
        residual: landing.y[0],
        diagnostics,
    })
}

/// `β = 0` from `α = 0`: the free coupling evolution `x1 → x2` with no
/// control, reached at `T = 1/2`.
fn free_solution(k: f64) -> Result<ShootingSolution> {
    let s_end = FRAC_PI_2;
    Ok(ShootingSolution {
        k,
        alpha: 0.0,
        beta: 0.0,
        theta0: 0.0,
        theta_dot0: 0.0,
        duration: 0.5,
        path: integrate_euler_lagrange(0.0, 0.0, k, s_end)?,
        final_polar: [s_end.cos(), 1.0, 0.0],
        residual: s_end.cos(),
        diagnostics: Vec::new(),
    })
}

fn segments_for(duration: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    let n = (duration / dt).ceil() as usize;
    if n < MIN_SEGMENTS {
        return Err(Error::InvalidConfig(format!(
            "time step {dt} s gives {n} segments over {duration} s; at least {MIN_SEGMENTS} are needed"
        )));
    }
    Ok(n)
}

/// Samples a leg as a single-channel pulse on `channel` with physical
/// amplitude `j_ref · θ'`. The step is `T / N` with `N = ceil(T / dt)`.
pub fn leg_pulse(
    solution: &ShootingSolution,
    j_ref: f64,
    channel: ControlChannel,
    dt: f64,
) -> Result<ShapedPulse> {
    let t = solution.seconds(j_ref);
    let n = segments_for(t, dt)?;
    let amps: Vec<f64> = solution
        .midpoint_theta_dot(n)
        .into_iter()
        .map(|w| j_ref * w)
        .collect();
    ShapedPulse::single_channel(channel, t / n as f64, &amps)
}

/// Time-optimal `I_1x → 4 I_1y I_2y I_3z` pulse on the spin-2 y channel of a
/// linear three-spin chain, sampled at segment midpoints with step at most
/// `dt` seconds.
pub fn analytic_pulse_three_spin(j12: f64, j23: f64, dt: f64) -> Result<ShapedPulse> {
    Ok(analytic_three_spin(j12, j23, dt)?.0)
}

/// [`analytic_pulse_three_spin`] together with its shooting solution.
pub fn analytic_three_spin(j12: f64, j23: f64, dt: f64) -> Result<(ShapedPulse, ShootingSolution)> {
    check_couplings(&[j12, j23])?;
    let sol = shoot_three_spin(j23 / j12, 0.0, FRAC_PI_2)?;
    let pulse = leg_pulse(&sol, j12, ControlChannel::y(2), dt)?;
    Ok((pulse, sol))
}

fn check_couplings(j: &[f64]) -> Result<()> {
    match j.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        Some(v) => Err(Error::InvalidConfig(format!("couplings must be positive, got {v}"))),
        None => Ok(()),
    }
}

/// The two-leg construction for a linear four-spin chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourSpinSplit {
    pub j12: f64,
    pub j23: f64,
    pub j34: f64,
    pub gamma: f64,
    /// Spins 1–3, `(1,0,0) → (0, cos γ, sin γ)`, time unit `1/J12`.
    pub first_leg: ShootingSolution,
    /// Spins 2–4, `(cos γ, sin γ, 0) → (0, 0, 1)`, time unit `1/J23`.
    pub second_leg: ShootingSolution,
    /// Ideal rotations on spins 2 and 3 between the legs.
    pub connecting_pulses: Vec<HardPulse>,
    /// Overlap reached by the connecting pulses.
    pub connecting_overlap: f64,
    /// Total duration at `γ = 0` (two sequential three-spin transfers).
    pub sequential_duration: f64,
}

impl FourSpinSplit {
    pub fn first_leg_seconds(&self) -> f64 {
        self.first_leg.seconds(self.j12)
    }

    pub fn second_leg_seconds(&self) -> f64 {
        self.second_leg.seconds(self.j23)
    }

    /// Sum of both legs; ideal hard pulses take no time.
    pub fn total_duration(&self) -> f64 {
        self.first_leg_seconds() + self.second_leg_seconds()
    }

    pub fn system(&self) -> Result<SpinSystem> {
        SpinSystem::linear_chain(&[self.j12, self.j23, self.j34])
    }

    /// Leg pulses on spin-2 y and spin-3 y with step at most `dt`.
    pub fn leg_pulses(&self, dt: f64) -> Result<(ShapedPulse, ShapedPulse)> {
        Ok((
            leg_pulse(&self.first_leg, self.j12, ControlChannel::y(2), dt)?,
            leg_pulse(&self.second_leg, self.j23, ControlChannel::y(3), dt)?,
        ))
    }

    /// First leg, ideal connecting rotations, second leg.
    pub fn to_sequence(&self, dt: f64) -> Result<EventSequence> {
        let (a, b) = self.leg_pulses(dt)?;
        let mut seq = EventSequence::new();
        seq.push(Event::Shaped { pulse: a })?;
        seq.push(Event::Group {
            pulses: self.connecting_pulses.clone(),
        })?;
        seq.push(Event::Shaped { pulse: b })?;
        Ok(seq)
    }

    /// One two-channel pulse (spin-2 y, spin-3 y) on a uniform grid of step
    /// at most `dt`, with the connecting rotations realized as rectangular
    /// blips of at most `blip_amplitude` Hz.
    pub fn to_shaped_pulse(&self, dt: f64, blip_amplitude: f64) -> Result<ShapedPulse> {
        let (a, b) = self.leg_pulses(dt)?;
        let mut pieces: Vec<Piece> = Vec::new();
        for j in 0..a.segment_count() {
            pieces.push(Piece::new(a.segment_duration(), [a.amplitudes()[[j, 0]], 0.0]));
        }
        let mut blip = [0.0; 2];
        let mut blip_flip: f64 = 0.0;
        for p in &self.connecting_pulses {
            let y = p.phase.sin();
            if p.phase.cos().abs() > 1e-4 || !(2..=3).contains(&p.spin) {
                return Err(Error::InvalidPulse(format!(
                    "connecting pulse on spin {} at phase {} is not a y rotation",
                    p.spin, p.phase
                )));
            }
            blip[p.spin - 2] = p.flip * y;
            blip_flip = blip_flip.max(p.flip.abs());
        }
        if blip_flip > 0.0 {
            let width = blip_flip / (2.0 * PI * blip_amplitude);
            pieces.push(Piece::new(
                width,
                [blip[0] / (2.0 * PI * width), blip[1] / (2.0 * PI * width)],
            ));
        }
        for j in 0..b.segment_count() {
            pieces.push(Piece::new(b.segment_duration(), [0.0, b.amplitudes()[[j, 0]]]));
        }
        let total: f64 = pieces.iter().map(|p| p.duration).sum();
        let n = segments_for(total, dt)?;
        rasterize(&pieces, total, n)
    }

    /// Fidelity of `I_1x → 8 I_1y I_2y I_3y I_4z` for the ideal sequence.
    pub fn sequence_fidelity(&self, dt: f64) -> Result<f64> {
        let sys = self.system()?;
        let (rho0, target) = four_spin_states()?;
        let out = crate::sequence::simulate_sequence(&self.to_sequence(dt)?, &sys, &rho0)?;
        transfer_fidelity(&out, &target, &rho0)
    }

    /// Fidelity of the blip-realized two-channel pulse.
    pub fn pulse_fidelity(&self, pulse: &ShapedPulse) -> Result<f64> {
        let sys = self.system()?;
        let (rho0, target) = four_spin_states()?;
        transfer_fidelity(&evolve_pulse(&rho0, &sys, pulse)?, &target, &rho0)
    }
}

struct Piece {
    duration: f64,
    amps: [f64; 2],
}

impl Piece {
    fn new(duration: f64, amps: [f64; 2]) -> Self {
        Piece { duration, amps }
    }
}

/// Area-preserving resampling of constant pieces onto `n` equal segments.
fn rasterize(pieces: &[Piece], total: f64, n: usize) -> Result<ShapedPulse> {
    let dt = total / n as f64;
    let mut a = ndarray::Array2::<f64>::zeros((n, 2));
    let mut t0 = 0.0;
    for p in pieces {
        let t1 = t0 + p.duration;
        let first = ((t0 / dt).floor() as usize).min(n - 1);
        let last = ((t1 / dt).ceil() as usize).min(n);
        for j in first..last {
            let lo = (j as f64 * dt).max(t0);
            let hi = ((j + 1) as f64 * dt).min(t1);
            if hi > lo {
                for c in 0..2 {
                    a[[j, c]] += p.amps[c] * (hi - lo) / dt;
                }
            }
        }
        t0 = t1;
    }
    ShapedPulse::new(vec![ControlChannel::y(2), ControlChannel::y(3)], dt, a)
}

fn four_spin_states() -> Result<(Operator, Operator)> {
    let op = |s: &str| build_operator(&ProductOperatorSpec::parse(s)?, 4);
    Ok((op("x111")?, op("yyyz")?))
}

/// Fits two transverse rotations (spin 2, then spin 3) that carry the end of
/// the first leg onto the start of the second, maximizing the normalized
/// overlap. Parameters are `(phase, flip)` per spin.
fn fit_connecting_pulses(first: &ShootingSolution, second: &ShootingSolution) -> Result<(Vec<HardPulse>, f64)> {
    let op = |s: &str| build_operator(&ProductOperatorSpec::parse(s)?, 4);
    let theta_end = first.path.theta.last().copied().unwrap_or(0.0);
    let [_, r2, r3] = first.final_polar;
    // End of leg 1: r2 (cos θ 2I1yI2z + sin θ 2I1yI2x) + r3 4I1yI2yI3z.
    let from = &(&op("yz11")?.scale(r2 * theta_end.cos()) + &op("yx11")?.scale(r2 * theta_end.sin()))
        + &op("yyz1")?.scale(r3);
    // Start of leg 2 in the shifted coordinates (2I1yI2x, 4I1yI2yI3z, 4I1yI2yI3x, ·).
    let x0 = second.initial_state();
    let to = &(&op("yx11")?.scale(x0.x1) + &op("yyz1")?.scale(x0.x2)) + &op("yyx1")?.scale(x0.x3);
    let overlap = |p: &[f64]| -> f64 {
        let r2 = rotation(4, 2, p[0], p[1]);
        let r3 = rotation(4, 3, p[2], p[3]);
        match (r2, r3) {
            (Ok(a), Ok(b)) => {
                let out = conjugate(&b, &conjugate(&a, &from));
                to.inner(&out).re / (to.frobenius_norm() * from.frobenius_norm())
            }
            _ => f64::NEG_INFINITY,
        }
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in [
        [0.0, FRAC_PI_2, 0.0, FRAC_PI_2],
        [FRAC_PI_2, FRAC_PI_2, FRAC_PI_2, FRAC_PI_2],
        [FRAC_PI_2, -FRAC_PI_2, FRAC_PI_2, FRAC_PI_2],
        [FRAC_PI_2, FRAC_PI_2, FRAC_PI_2, -FRAC_PI_2],
        [PI, 1.0, PI, 1.0],
    ] {
        let (x, c) = nelder_mead(|p| -overlap(p), &start, 0.4, 1e-13, 4000)?;
        if best.as_ref().is_none_or(|b| -c > b.1) {
            best = Some((x, -c));
        }
        if best.as_ref().is_some_and(|b| b.1 > 1.0 - 1e-10) {
            break;
        }
    }
    let (p, f) = best.expect("at least one start was tried");
    // Canonical form: non-negative flips with phases in (−π, π].
    let canon = |phase: f64, flip: f64| {
        let (phase, flip) = if flip < 0.0 { (phase + PI, -flip) } else { (phase, flip) };
        let phase = phase.rem_euclid(2.0 * PI);
        let phase = if phase > PI { phase - 2.0 * PI } else { phase };
        (phase, flip.rem_euclid(2.0 * PI))
    };
    let (ph2, fl2) = canon(p[0], p[1]);
    let (ph3, fl3) = canon(p[2], p[3]);
    Ok((
        vec![HardPulse::ideal(2, ph2, fl2), HardPulse::ideal(3, ph3, fl3)],
        f,
    ))
}

fn split_duration(k1: f64, k2: f64, gamma: f64, j12: f64, j23: f64) -> Option<f64> {
    let a = shoot_three_spin(k1, 0.0, gamma).ok()?;
    let b = shoot_three_spin(k2, gamma, FRAC_PI_2).ok()?;
    Some(a.seconds(j12) + b.seconds(j23))
}

/// Largest intermediate angle considered in the split.
const GAMMA_MAX: f64 = 1.5;
const GAMMA_SCAN: usize = 16;

/// Splits the four-spin transfer at the intermediate angle `γ` that
/// minimizes the summed leg durations.
pub fn four_spin_split(j12: f64, j23: f64, j34: f64) -> Result<FourSpinSplit> {
    check_couplings(&[j12, j23, j34])?;
    let (k1, k2) = (j23 / j12, j34 / j23);
    let total = |g: f64| split_duration(k1, k2, g, j12, j23).unwrap_or(f64::INFINITY);
    let sequential = total(0.0);
    let grid: Vec<(f64, f64)> = (0..=GAMMA_SCAN)
        .map(|i| GAMMA_MAX * i as f64 / GAMMA_SCAN as f64)
        .map(|g| (g, total(g)))
        .collect();
    let (i_min, _) = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("grid is non-empty");
    if !grid[i_min].1.is_finite() {
        return Err(Error::SearchFailed("no feasible split angle".into()));
    }
    let gamma = if i_min == 0 {
        0.0
    } else {
        let lo = grid[i_min - 1].0;
        let hi = grid[(i_min + 1).min(GAMMA_SCAN)].0;
        let (g, t) = golden_section(total, lo, hi, 1e-7)?;
        if t <= grid[i_min].1 { g } else { grid[i_min].0 }
    };
    let first_leg = shoot_three_spin(k1, 0.0, gamma)?;
    let second_leg = shoot_three_spin(k2, gamma, FRAC_PI_2)?;
    let (connecting_pulses, connecting_overlap) = fit_connecting_pulses(&first_leg, &second_leg)?;
    if connecting_overlap < 1.0 - 1e-6 {
        return Err(Error::SearchFailed(format!(
            "connecting pulses reach overlap {connecting_overlap} only"
        )));
    }
    Ok(FourSpinSplit {
        j12,
        j23,
        j34,
        gamma,
        first_leg,
        second_leg,
        connecting_pulses,
        connecting_overlap,
        sequential_duration: sequential,
    })
}

/// Two-channel analytic pulse for `I_1x → 8 I_1y I_2y I_3y I_4z` on a linear
/// four-spin chain, with connecting rotations as 5 kHz blips, and the split
/// it was built from.
pub fn analytic_pulse_four_spin(
    j12: f64,
    j23: f64,
    j34: f64,
    dt: f64,
) -> Result<(ShapedPulse, FourSpinSplit)> {
    let split = four_spin_split(j12, j23, j34)?;
    let pulse = split.to_shaped_pulse(dt, BLIP_AMPLITUDE)?;
    Ok((pulse, split))
}
