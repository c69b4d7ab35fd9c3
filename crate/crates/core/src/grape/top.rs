//! Time-optimal-pulse (TOP) curves and crossing searches.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optimize::{grape_optimize, random_pulse, GrapeResult};
use super::{GrapeConfig, TransferProblem};
use crate::error::{Error, Result};
use crate::pulse::ShapedPulse;

/// Tolerance on fidelity decreases along a TOP curve before a point is
/// flagged as under-converged.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TopPoint {
    pub duration: f64,
    pub fidelity: f64,
    /// Optimizations run at this point, warm start included.
    pub restarts_used: usize,
    pub converged: bool,
    pub pulse: ShapedPulse,
}

impl TopPoint {
    /// `log10(1 − F)`, clamped at −16 for perfect transfers.
    pub fn log_infidelity(&self) -> f64 {
        (1.0 - self.fidelity).max(1e-16).log10()
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TopCurve {
    pub points: Vec<TopPoint>,
}

impl TopCurve {
    /// Shortest duration whose best fidelity reaches `threshold`.
    pub fn crossing(&self, threshold: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.fidelity >= threshold)
            .map(|p| p.duration)
    }

    /// Indices of points whose fidelity lies more than
    /// [`MONOTONICITY_TOLERANCE`] below an earlier (shorter) point.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        let mut best = f64::NEG_INFINITY;
        let mut out = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            if p.fidelity < best - MONOTONICITY_TOLERANCE {
                out.push(i);
            }
            best = best.max(p.fidelity);
        }
        out
    }

    /// CSV with columns `t_p,best_fidelity,log10_infidelity,restarts`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t_p,best_fidelity,log10_infidelity,restarts")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{}",
                p.duration,
                p.fidelity,
                p.log_infidelity(),
                p.restarts_used
            )?;
        }
        Ok(())
    }
}

/// Random generator for restart `restart` at grid index `index`; independent
/// of evaluation order.
pub fn restart_rng(seed: u64, index: usize, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((index as u64) << 16) | restart as u64);
    rng
}

/// Best of an optional warm start and up to `config.restarts` random starts
/// at one duration; stops at the first run that reaches the target.
pub fn top_point(
    problem: &TransferProblem,
    duration: f64,
    config: &GrapeConfig,
    index: usize,
    warm: Option<&ShapedPulse>,
) -> Result<TopPoint> {
    let segments = config.segments_for(duration);
    let scale = config
        .init_amplitude
        .unwrap_or_else(|| problem.system.max_coupling());
    let mut best: Option<GrapeResult> = None;
    let mut used = 0;
    let consider = |r: GrapeResult, best: &mut Option<GrapeResult>| {
        if best.as_ref().is_none_or(|b| r.fidelity > b.fidelity) {
            *best = Some(r);
        }
    };
    if let Some(w) = warm {
        used += 1;
        consider(grape_optimize(problem, duration, config, Some(w))?, &mut best);
    }
    for restart in 0..config.restarts {
        if best.as_ref().is_some_and(|b| b.converged()) {
            break;
        }
        let mut rng = restart_rng(config.seed, index, restart);
        let init = random_pulse(&problem.channels, segments, duration, scale, &mut rng)?;
        used += 1;
        consider(grape_optimize(problem, duration, config, Some(&init))?, &mut best);
    }
    let best = best.ok_or_else(|| Error::InvalidConfig("no restarts and no warm start".into()))?;
    Ok(TopPoint {
        duration,
        fidelity: best.fidelity,
        restarts_used: used,
        converged: best.converged(),
        pulse: best.pulse,
    })
}

/// Best fidelity at each duration of the ascending grid. With `warm_start`
/// every point also starts from the previous point's pulse, time-rescaled.
pub fn top_curve(
    problem: &TransferProblem,
    grid: &[f64],
    config: &GrapeConfig,
    warm_start: bool,
) -> Result<TopCurve> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("time grid must be strictly ascending".into()));
    }
    let mut points: Vec<TopPoint> = Vec::with_capacity(grid.len());
    for (i, &t) in grid.iter().enumerate() {
        let warm = if warm_start { points.last().map(|p| &p.pulse) } else { None };
        let p = top_point(problem, t, config, i, warm)?;
        points.push(p);
    }
    Ok(TopCurve { points })
}

/// Outcome of a crossing search on the grid `upper − i·step`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Crossing {
    /// Shortest grid duration whose best fidelity reached the target.
    pub time: f64,
    pub step: f64,
    /// `true` if the scan stopped at a failing point, `false` if it ran
    /// down to the lower limit without one.
    pub bracketed: bool,
    /// Every evaluated point, ascending in duration.
    pub points: Vec<TopPoint>,
}

impl Crossing {
    pub fn curve(&self) -> TopCurve {
        TopCurve {
            points: self.points.clone(),
        }
    }

    /// Best pulse found at the crossing time.
    pub fn pulse(&self) -> &ShapedPulse {
        &self
            .points
            .iter()
            .find(|p| p.duration == self.time)
            .expect("crossing point is always evaluated")
            .pulse
    }
}

/// First grid duration reaching `config.target_fidelity`, scanning down
/// from `upper` in steps of `step` until a point fails or `lower` is passed.
///
/// Every point after the first starts warm from the previous (longer)
/// successful pulse, time-rescaled, before trying random restarts; a point
/// counts as failed only after all of them. Grid index `i` is the duration
/// `upper − i·step`, which also keys the restart seeds.
pub fn find_crossing(
    problem: &TransferProblem,
    lower: f64,
    upper: f64,
    step: f64,
    config: &GrapeConfig,
) -> Result<Crossing> {
    if !(lower > 0.0 && upper > lower && step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "crossing bracket [{lower}, {upper}] with step {step}"
        )));
    }
    let count = ((upper - lower) / step + 1e-9).floor() as usize;
    let mut points: Vec<TopPoint> = Vec::new();
    let mut bracketed = false;
    for i in 0..=count {
        let t = upper - i as f64 * step;
        let warm = points.last().map(|p| &p.pulse);
        let p = top_point(problem, t, config, i, warm)?;
        let ok = p.converged;
        if i == 0 && !ok {
            return Err(Error::NoFeasibleSolution {
                lower,
                upper,
                reason: format!("best fidelity {} at the upper limit", p.fidelity),
            });
        }
        points.push(p);
        if !ok {
            bracketed = true;
            break;
        }
    }
    points.reverse();
    let time = points
        .iter()
        .find(|p| p.converged)
        .map(|p| p.duration)
        .expect("upper point converged");
    Ok(Crossing {
        time,
        step,
        bracketed,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{ControlChannel, SpinSystem};

    fn point(t: f64, f: f64) -> TopPoint {
        TopPoint {
            duration: t,
            fidelity: f,
            restarts_used: 1,
            converged: f >= 0.9999,
            pulse: ShapedPulse::zeros(vec![ControlChannel::y(2)], 10, t).unwrap(),
        }
    }

    #[test]
    fn crossing_and_flags() {
        let c = TopCurve {
            points: vec![point(1.0, 0.5), point(2.0, 0.9), point(3.0, 0.8), point(4.0, 0.99995)],
        };
        assert_eq!(c.crossing(0.9999), Some(4.0));
        assert_eq!(c.monotonicity_violations(), vec![2]);
        assert!(point(1.0, 1.0).log_infidelity() <= -15.9);
    }

    #[test]
    fn rng_streams_are_distinct() {
        use rand::Rng;
        let a: u64 = restart_rng(1, 0, 0).gen();
        let b: u64 = restart_rng(1, 0, 1).gen();
        let c: u64 = restart_rng(1, 1, 0).gen();
        assert!(a != b && a != c && b != c);
        assert_eq!(a, restart_rng(1, 0, 0).gen::<u64>());
    }

    #[test]
    fn unsorted_grid_rejected() {
        let p = TransferProblem::chain_transfer(
            SpinSystem::uniform_chain(3, 88.05).unwrap(),
            vec![ControlChannel::y(2)],
        )
        .unwrap();
        assert!(top_curve(&p, &[0.01, 0.005], &GrapeConfig::default(), false).is_err());
    }
}
