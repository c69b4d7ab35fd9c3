//! Reduced dynamics of a linear three-spin chain driven by a single y
//! control on the middle spin.
//!
//! Starting from `I_1x`, the evolution closes on the four expectation values
//!
//! ```text
//! x1 = <I_1x>, x2 = <2 I_1y I_2z>, x3 = <2 I_1y I_2x>, x4 = <4 I_1y I_2y I_3z>
//! ```
//!
//! with `dx/dτ = π A(u, k) x`, where `τ = J12 t` and `k = J23 / J12`. The
//! dimensionless control `u` relates to the physical amplitude of the spin-2
//! y channel by `u_phys [Hz] = u · J12 / 2`, because that channel is
//! `2π u_phys I_2y`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{conjugate, segment_hamiltonian, unitary};
use crate::operator::{build_operator, Operator, ProductOperatorSpec};
use crate::system::{control_hamiltonian, drift_hamiltonian, ControlChannel, SpinSystem};

/// Largest RK4 step in units of `1/J12`.
pub const MAX_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedState4 {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

impl ReducedState4 {
    pub const fn new(x1: f64, x2: f64, x3: f64, x4: f64) -> Self {
        ReducedState4 { x1, x2, x3, x4 }
    }

    /// `(1, 0, 0, 0)`, i.e. `I_1x`.
    pub const fn initial() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn norm(self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(self, other: ReducedState4) -> f64 {
        let (a, b) = (self.to_array(), other.to_array());
        (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
    }
}

/// Polar form `(r1, r2, r3) = (x1, |(x2, x3)|, x4)` with `tan θ = x3 / x2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedState3 {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    /// `None` when `x2 = x3 = 0`, where the angle is undefined.
    pub theta: Option<f64>,
}

impl ReducedState3 {
    /// Back to Cartesian coordinates; an undefined angle is taken as zero.
    pub fn to_cartesian(self) -> ReducedState4 {
        let th = self.theta.unwrap_or(0.0);
        ReducedState4::new(self.r1, self.r2 * th.cos(), self.r2 * th.sin(), self.r3)
    }

    pub fn norm(self) -> f64 {
        (self.r1 * self.r1 + self.r2 * self.r2 + self.r3 * self.r3).sqrt()
    }
}

pub fn to_polar(x: ReducedState4) -> ReducedState3 {
    let r2 = x.x2.hypot(x.x3);
    ReducedState3 {
        r1: x.x1,
        r2,
        r3: x.x4,
        theta: (r2 > 0.0).then(|| x.x3.atan2(x.x2)),
    }
}

/// The matrix `A(u, k)`; the flow is `dx/dτ = π A x`.
pub fn generator(u: f64, k: f64) -> [[f64; 4]; 4] {
    [
        [0.0, -1.0, 0.0, 0.0],
        [1.0, 0.0, -u, 0.0],
        [0.0, u, 0.0, -k],
        [0.0, 0.0, k, 0.0],
    ]
}

pub fn reduced_rhs(x: ReducedState4, u: f64, k: f64) -> ReducedState4 {
    let a = generator(u, k);
    let v = x.to_array();
    let mut d = [0.0; 4];
    for (i, row) in a.iter().enumerate() {
        d[i] = std::f64::consts::PI * (0..4).map(|j| row[j] * v[j]).sum::<f64>();
    }
    ReducedState4::from_array(d)
}

fn rk4_step(x: [f64; 4], u: f64, k: f64, h: f64) -> [f64; 4] {
    let f = |v: [f64; 4]| reduced_rhs(ReducedState4::from_array(v), u, k).to_array();
    let add = |v: [f64; 4], d: [f64; 4], s: f64| std::array::from_fn(|i| v[i] + s * d[i]);
    let k1 = f(x);
    let k2 = f(add(x, k1, h / 2.0));
    let k3 = f(add(x, k2, h / 2.0));
    let k4 = f(add(x, k3, h));
    std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Reduced-model path sampled at the segment boundaries of the control.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedTrajectory {
    /// Scaled times `τ_j = j · T / N`, `j = 0..=N`.
    pub times: Vec<f64>,
    pub states: Vec<ReducedState4>,
}

impl ReducedTrajectory {
    pub fn final_state(&self) -> ReducedState4 {
        *self.states.last().expect("trajectory has at least the initial state")
    }

    /// CSV with columns `t, x1..x4, r1..r3, theta` (θ empty where undefined).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x1,x2,x3,x4,r1,r2,r3,theta")?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let p = to_polar(*x);
            let theta = p.theta.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{t},{},{},{},{},{},{},{},{theta}",
                x.x1, x.x2, x.x3, x.x4, p.r1, p.r2, p.r3
            )?;
        }
        Ok(())
    }
}

/// Integrates the reduced flow under the piecewise-constant control `u`
/// (one value per segment, `N = u.len()` segments over scaled time `T`)
/// with fixed-step RK4. No renormalization is applied.
pub fn integrate_reduced(
    u: &[f64],
    k: f64,
    t_total: f64,
    x0: ReducedState4,
) -> Result<ReducedTrajectory> {
    if u.is_empty() {
        return Err(Error::InvalidConfig("control has no samples".into()));
    }
    if !(t_total > 0.0 && t_total.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "scaled duration must be positive, got {t_total}"
        )));
    }
    if u.iter().any(|v| !v.is_finite()) || !k.is_finite() {
        return Err(Error::InvalidConfig("non-finite control or ratio".into()));
    }
    let seg = t_total / u.len() as f64;
    let steps = (seg / MAX_STEP).ceil().max(1.0) as usize;
    let h = seg / steps as f64;
    let mut times = Vec::with_capacity(u.len() + 1);
    let mut states = Vec::with_capacity(u.len() + 1);
    let mut x = x0.to_array();
    times.push(0.0);
    states.push(x0);
    for (j, &uj) in u.iter().enumerate() {
        for _ in 0..steps {
            x = rk4_step(x, uj, k, h);
        }
        times.push((j + 1) as f64 * seg);
        states.push(ReducedState4::from_array(x));
    }
    Ok(ReducedTrajectory { times, states })
}

/// The four operators spanning the reduced subspace, for `n = 3`.
pub fn subspace_operators() -> Result<[Operator; 4]> {
    let op = |s: &str| build_operator(&ProductOperatorSpec::parse(s)?, 3);
    Ok([op("x11")?, op("yz1")?, op("yx1")?, op("yyz")?])
}

/// Normalized expectations `Tr(O_i ρ) / Tr(O_i²)` of the subspace operators.
pub fn project(rho: &Operator, ops: &[Operator; 4]) -> ReducedState4 {
    ReducedState4::from_array(std::array::from_fn(|i| {
        ops[i].inner(rho).re / ops[i].inner(&ops[i]).re
    }))
}

/// Runs the reduced integration and the full 8×8 simulation of the linear
/// chain (`J12 = 1 Hz`, `J23 = k Hz`, spin-2 y control at `u · J12 / 2`)
/// side by side, returning the largest deviation of the four coordinates
/// over the segment boundaries.
pub fn reduced_full_equivalence(k: f64, u: &[f64], t_total: f64) -> Result<f64> {
    let traj = integrate_reduced(u, k, t_total, ReducedState4::initial())?;
    let j12 = 1.0;
    let sys = SpinSystem::linear_chain(&[j12, k * j12])?;
    let drift = drift_hamiltonian(&sys);
    let hc = [control_hamiltonian(ControlChannel::y(2), 3)?];
    let ops = subspace_operators()?;
    let dt = t_total / u.len() as f64 / j12;
    let mut rho = ops[0].clone();
    let mut dev = project(&rho, &ops).max_abs_diff(traj.states[0]);
    for (j, &uj) in u.iter().enumerate() {
        let h = segment_hamiltonian(&drift, &hc, [uj * j12 / 2.0]);
        rho = conjugate(&unitary(&h, dt)?, &rho);
        dev = dev.max(project(&rho, &ops).max_abs_diff(traj.states[j + 1]));
    }
    Ok(dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn rhs_reads_off_columns() {
        let d = reduced_rhs(ReducedState4::initial(), 3.7, 1.2);
        assert_eq!(d, ReducedState4::new(0.0, PI, 0.0, 0.0));
        let d = reduced_rhs(ReducedState4::new(0.0, 0.0, 0.0, 1.0), 0.0, 1.0);
        assert_eq!(d, ReducedState4::new(0.0, 0.0, -PI, 0.0));
    }

    #[test]
    fn generator_is_antisymmetric() {
        let a = generator(0.37, 1.59);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a[i][j] + a[j][i], 0.0);
            }
        }
    }

    #[test]
    fn free_rotation_closed_form() {
        let q = integrate_reduced(&[0.0; 10], 1.0, 0.5, ReducedState4::initial()).unwrap();
        assert!(q.final_state().max_abs_diff(ReducedState4::new(0.0, 1.0, 0.0, 0.0)) < 1e-8);
        let h = integrate_reduced(&[0.0; 10], 1.0, 1.0, ReducedState4::initial()).unwrap();
        assert!(h.final_state().max_abs_diff(ReducedState4::new(-1.0, 0.0, 0.0, 0.0)) < 1e-8);
        for (t, x) in h.times.iter().zip(&h.states) {
            assert_abs_diff_eq!(x.x1, (PI * t).cos(), epsilon = 1e-10);
            assert_abs_diff_eq!(x.x2, (PI * t).sin(), epsilon = 1e-10);
        }
    }

    #[test]
    fn polar_examples() {
        let p = to_polar(ReducedState4::initial());
        assert_eq!((p.r1, p.r2, p.r3, p.theta), (1.0, 0.0, 0.0, None));
        let p = to_polar(ReducedState4::new(0.0, 0.6, 0.8, 0.0));
        assert_abs_diff_eq!(p.r2, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.theta.unwrap(), 0.8f64.atan2(0.6), epsilon = 1e-15);
        assert_abs_diff_eq!(p.theta.unwrap(), 0.9273, epsilon = 1e-4);
        let p = to_polar(ReducedState4::new(0.0, 0.0, 0.0, 1.0));
        assert_eq!((p.r1, p.r2, p.r3), (0.0, 0.0, 1.0));
    }

    #[test]
    fn zero_control_matches_full_model() {
        assert!(reduced_full_equivalence(1.0, &[0.0; 20], 1.0).unwrap() < 1e-8);
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(integrate_reduced(&[], 1.0, 1.0, ReducedState4::initial()).is_err());
        assert!(integrate_reduced(&[1.0], 1.0, 0.0, ReducedState4::initial()).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let t = integrate_reduced(&[0.5; 4], 1.0, 0.4, ReducedState4::initial()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 6);
        assert!(s.starts_with("t,x1,x2,x3,x4,r1,r2,r3,theta\n"));
    }
}
