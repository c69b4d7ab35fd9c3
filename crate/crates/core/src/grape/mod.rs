//! Gradient ascent pulse engineering (GRAPE) for state-to-state transfer.
//!
//! [`TransferProblem`] fixes the spin system, the initial and target
//! product operators and the control mask. [`grape_optimize`] maximizes the
//! transfer fidelity for one pulse duration; [`top_curve`] and
//! [`find_crossing`] sweep durations to build time-optimal-pulse curves.

mod engine;
mod optimize;
mod top;

pub use engine::GrapeModel;
pub use optimize::{grape_optimize, random_pulse, GrapeResult, StopReason};
pub use top::{find_crossing, restart_rng, top_curve, top_point, Crossing, TopCurve, TopPoint, MONOTONICITY_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{evolve_pulse, transfer_fidelity};
use crate::operator::{build_operator, Operator, Pauli, ProductOperatorSpec};
use crate::pulse::ShapedPulse;
use crate::system::{validate_channels, Axis, ControlChannel, SpinSystem};

/// Transfer `initial → target` on `system` using only `channels`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferProblem {
    pub system: SpinSystem,
    pub initial: ProductOperatorSpec,
    pub target: ProductOperatorSpec,
    pub channels: Vec<ControlChannel>,
    /// Optional `|u| ≤ bound` in Hz on every channel.
    pub amplitude_bound: Option<f64>,
}

impl TransferProblem {
    pub fn new(
        system: SpinSystem,
        initial: ProductOperatorSpec,
        target: ProductOperatorSpec,
        channels: Vec<ControlChannel>,
    ) -> Result<Self> {
        let n = system.n();
        for (what, spec) in [("initial", &initial), ("target", &target)] {
            if spec.n() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: spec.n(),
                });
            }
            if !spec.is_traceless() || spec.coefficient == 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{what} operator {spec} must be traceless and non-zero"
                )));
            }
        }
        if channels.is_empty() {
            return Err(Error::InvalidConfig("no control channels".into()));
        }
        validate_channels(&channels, n)?;
        Ok(TransferProblem {
            system,
            initial,
            target,
            channels,
            amplitude_bound: None,
        })
    }

    /// `I_1x → 2^{n−1} I_1y … I_{n−1,y} I_nz` along the chain.
    pub fn chain_transfer(system: SpinSystem, channels: Vec<ControlChannel>) -> Result<Self> {
        let n = system.n();
        Self::new(
            system,
            ProductOperatorSpec::single(n, 1, Pauli::X),
            ProductOperatorSpec::chain_target(n),
            channels,
        )
    }

    pub fn with_bound(mut self, bound: Option<f64>) -> Result<Self> {
        if let Some(b) = bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidConfig(format!("amplitude bound {b}")));
            }
        }
        self.amplitude_bound = bound;
        Ok(self)
    }

    /// The transfer run backwards, `target → initial`.
    pub fn reversed(&self) -> Self {
        TransferProblem {
            initial: self.target.clone(),
            target: self.initial.clone(),
            ..self.clone()
        }
    }

    pub fn initial_operator(&self) -> Result<Operator> {
        build_operator(&self.initial, self.system.n())
    }

    pub fn target_operator(&self) -> Result<Operator> {
        build_operator(&self.target, self.system.n())
    }

    /// Fidelity of `pulse` from the full dense simulator.
    pub fn fidelity(&self, pulse: &ShapedPulse) -> Result<f64> {
        let rho0 = self.initial_operator()?;
        let out = evolve_pulse(&rho0, &self.system, pulse)?;
        transfer_fidelity(&out, &self.target_operator()?, &rho0)
    }
}

/// How accepted steps are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepPolicy {
    /// L-BFGS directions with backtracking until the Armijo condition holds.
    LineSearch,
    /// Plain gradient steps of fixed size (Hz per unit gradient); a step
    /// that lowers the fidelity is rejected and the size halved.
    Fixed { size: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Exact derivative of each segment exponential.
    Exact,
    /// `−iΔt [H_c, ρ_j]` approximation.
    FirstOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrapeConfig {
    /// Segment count; `None` picks `max(100, ceil(t_p / 50 µs))`.
    pub segments: Option<usize>,
    pub max_iterations: usize,
    /// Stop as soon as the fidelity reaches this value.
    pub target_fidelity: f64,
    /// Stop when the fidelity improved by less than
    /// `stagnation_tolerance · F` over `stagnation_window` iterations.
    pub stagnation_window: usize,
    pub stagnation_tolerance: f64,
    pub step: StepPolicy,
    pub gradient: GradientMode,
    /// Random restarts per duration.
    pub restarts: usize,
    pub seed: u64,
    /// Half-width of the uniform random initial amplitudes in Hz; `None`
    /// uses the largest coupling.
    pub init_amplitude: Option<f64>,
    pub lbfgs_memory: usize,
}

impl Default for GrapeConfig {
    fn default() -> Self {
        GrapeConfig {
            segments: None,
            max_iterations: 1000,
            target_fidelity: 0.9999,
            stagnation_window: 50,
            stagnation_tolerance: 1e-9,
            step: StepPolicy::LineSearch,
            gradient: GradientMode::Exact,
            restarts: 5,
            seed: 0,
            init_amplitude: None,
            lbfgs_memory: 10,
        }
    }
}

/// Default segment duration target of 50 µs.
pub const DEFAULT_SEGMENT_DURATION: f64 = 50e-6;
pub const MIN_SEGMENTS: usize = 10;

impl GrapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_some_and(|n| n < MIN_SEGMENTS) {
            return Err(Error::InvalidConfig(format!(
                "at least {MIN_SEGMENTS} segments are required"
            )));
        }
        if !(self.target_fidelity > 0.0 && self.target_fidelity <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target fidelity {} outside (0, 1]",
                self.target_fidelity
            )));
        }
        if !(self.stagnation_tolerance > 0.0) || self.stagnation_window == 0 {
            return Err(Error::InvalidConfig("stagnation tolerance and window must be positive".into()));
        }
        if let StepPolicy::Fixed { size } = self.step {
            if !(size > 0.0 && size.is_finite()) {
                return Err(Error::InvalidConfig(format!("fixed step size {size}")));
            }
        }
        if self.lbfgs_memory == 0 {
            return Err(Error::InvalidConfig("L-BFGS memory must be positive".into()));
        }
        Ok(())
    }

    /// Segment count used for a pulse of `duration` seconds.
    pub fn segments_for(&self, duration: f64) -> usize {
        self.segments
            .unwrap_or_else(|| ((duration / DEFAULT_SEGMENT_DURATION).ceil() as usize).max(100))
    }
}

/// Named control masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskPreset {
    Spin2y,
    Spin2xy,
    All,
    Spins23y,
    Spins23xy,
    InteriorY,
}

impl std::str::FromStr for MaskPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "spin2y" => MaskPreset::Spin2y,
            "spin2xy" => MaskPreset::Spin2xy,
            "all" => MaskPreset::All,
            "spins23y" => MaskPreset::Spins23y,
            "spins23xy" => MaskPreset::Spins23xy,
            "interior-y" => MaskPreset::InteriorY,
            _ => return Err(Error::InvalidConfig(format!("unknown mask preset '{s}'"))),
        })
    }
}

/// Channel list of a mask preset on `n` spins.
pub fn control_mask_presets(n: usize, preset: MaskPreset) -> Result<Vec<ControlChannel>> {
    if n < 3 {
        return Err(Error::InvalidConfig(format!(
            "mask presets need at least 3 spins, got {n}"
        )));
    }
    let xy = |s: usize| [ControlChannel::new(s, Axis::X), ControlChannel::new(s, Axis::Y)];
    let needs = |m: usize| {
        if n < m {
            Err(Error::InvalidConfig(format!("{preset:?} needs at least {m} spins")))
        } else {
            Ok(())
        }
    };
    Ok(match preset {
        MaskPreset::Spin2y => vec![ControlChannel::y(2)],
        MaskPreset::Spin2xy => xy(2).to_vec(),
        MaskPreset::All => (1..=n).flat_map(xy).collect(),
        MaskPreset::Spins23y => {
            needs(4)?;
            vec![ControlChannel::y(2), ControlChannel::y(3)]
        }
        MaskPreset::Spins23xy => {
            needs(4)?;
            [xy(2), xy(3)].concat()
        }
        MaskPreset::InteriorY => (2..n).map(ControlChannel::y).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        assert_eq!(control_mask_presets(3, MaskPreset::Spin2y).unwrap(), vec![ControlChannel::y(2)]);
        assert_eq!(
            control_mask_presets(4, MaskPreset::Spins23y).unwrap(),
            vec![ControlChannel::y(2), ControlChannel::y(3)]
        );
        assert_eq!(control_mask_presets(3, MaskPreset::All).unwrap().len(), 6);
        assert_eq!(control_mask_presets(4, MaskPreset::All).unwrap().len(), 8);
        assert_eq!(control_mask_presets(6, MaskPreset::InteriorY).unwrap().len(), 4);
        assert!(control_mask_presets(3, MaskPreset::Spins23y).is_err());
        assert!(control_mask_presets(2, MaskPreset::Spin2y).is_err());
        assert_eq!("interior-y".parse::<MaskPreset>().unwrap(), MaskPreset::InteriorY);
    }

    #[test]
    fn config_validation() {
        assert!(GrapeConfig::default().validate().is_ok());
        let bad = GrapeConfig {
            segments: Some(5),
            ..GrapeConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(GrapeConfig::default().segments_for(0.0098), 196);
        assert_eq!(GrapeConfig::default().segments_for(0.001), 100);
    }

    #[test]
    fn problem_validation() {
        let sys = SpinSystem::uniform_chain(3, 88.05).unwrap();
        assert!(TransferProblem::chain_transfer(sys.clone(), vec![]).is_err());
        assert!(TransferProblem::chain_transfer(sys.clone(), vec![ControlChannel::y(4)]).is_err());
        let bad = ProductOperatorSpec::parse("111").unwrap();
        assert!(TransferProblem::new(sys.clone(), bad, ProductOperatorSpec::chain_target(3), vec![ControlChannel::y(2)]).is_err());
        let p = TransferProblem::chain_transfer(sys, vec![ControlChannel::y(2)]).unwrap();
        assert_eq!(p.reversed().initial, p.target);
    }
}
