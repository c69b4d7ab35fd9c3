//! Single-start gradient ascent with L-BFGS or fixed steps.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::GrapeModel;
use super::{GrapeConfig, StepPolicy, TransferProblem};
use crate::error::{Error, Result};
use crate::pulse::ShapedPulse;
use crate::system::ControlChannel;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    Stagnated,
    MaxIterations,
    /// No ascent step could be found even along the gradient.
    LineSearchFailed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrapeResult {
    pub pulse: ShapedPulse,
    pub fidelity: f64,
    pub iterations: usize,
    /// Fidelity evaluations including line-search trials.
    pub evaluations: usize,
    pub stop: StopReason,
    /// Fidelity after every accepted iteration, starting with the initial
    /// guess. Never decreasing.
    pub history: Vec<f64>,
}

impl GrapeResult {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::TargetReached
    }
}

/// Pulse with amplitudes drawn uniformly from `[−amplitude, amplitude]`.
pub fn random_pulse(
    channels: &[ControlChannel],
    segments: usize,
    duration: f64,
    amplitude: f64,
    rng: &mut impl Rng,
) -> Result<ShapedPulse> {
    let a = Array2::from_shape_fn((segments, channels.len()), |_| {
        if amplitude > 0.0 {
            rng.gen_range(-amplitude..=amplitude)
        } else {
            0.0
        }
    });
    ShapedPulse::new(channels.to_vec(), duration / segments as f64, a)
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn project(a: &mut Array2<f64>, bound: Option<f64>) {
    if let Some(b) = bound {
        a.mapv_inplace(|x| x.clamp(-b, b));
    }
}

/// Two-loop recursion; returns an ascent direction `H g`.
fn lbfgs_direction(g: &Array2<f64>, mem: &VecDeque<(Array2<f64>, Array2<f64>)>) -> Array2<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y) in mem.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        q.scaled_add(-a, y);
        alphas.push((a, rho));
    }
    if let Some((s, y)) = mem.back() {
        q *= dot(s, y) / dot(y, y);
    }
    for ((s, y), (a, rho)) in mem.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.scaled_add(a - b, s);
    }
    q
}

/// Maximize the transfer fidelity at pulse duration `duration`.
///
/// `init` is resampled onto the configured grid if needed; without it the
/// start is random, seeded by `config.seed`.
pub fn grape_optimize(
    problem: &TransferProblem,
    duration: f64,
    config: &GrapeConfig,
    init: Option<&ShapedPulse>,
) -> Result<GrapeResult> {
    config.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidConfig(format!("pulse duration {duration}")));
    }
    let segments = config.segments_for(duration);
    let model = GrapeModel::new(problem, segments, duration)?;
    let scale = config
        .init_amplitude
        .unwrap_or_else(|| problem.system.max_coupling());
    let start = match init {
        Some(p) => {
            let p = p.remap_channels(&problem.channels)?;
            if p.segment_count() == segments && (p.duration() - duration).abs() < 1e-12 * duration {
                p
            } else {
                p.time_rescaled(duration, segments)?
            }
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            random_pulse(&problem.channels, segments, duration, scale, &mut rng)?
        }
    };
    let mut x = start.amplitudes().clone();
    project(&mut x, problem.amplitude_bound);
    run(&model, x, config, problem.amplitude_bound, scale.max(1.0))
}

fn run(
    model: &GrapeModel,
    mut x: Array2<f64>,
    config: &GrapeConfig,
    bound: Option<f64>,
    scale: f64,
) -> Result<GrapeResult> {
    let (mut f, mut g) = model.fidelity_and_gradient(&x, config.gradient)?;
    let mut evaluations = 1;
    let mut history = vec![f];
    let mut mem: VecDeque<(Array2<f64>, Array2<f64>)> = VecDeque::new();
    let mut fixed = match config.step {
        StepPolicy::Fixed { size } => Some(size),
        StepPolicy::LineSearch => None,
    };
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        if f >= config.target_fidelity {
            stop = StopReason::TargetReached;
            break;
        }
        let w = config.stagnation_window;
        if history.len() > w && f - history[history.len() - 1 - w] < config.stagnation_tolerance * f.abs() {
            stop = StopReason::Stagnated;
            break;
        }
        let accepted = if let Some(size) = fixed.as_mut() {
            let mut trial = x.clone();
            trial.scaled_add(*size, &g);
            project(&mut trial, bound);
            let ft = model.fidelity(&trial)?;
            evaluations += 1;
            if ft > f {
                Some(trial)
            } else {
                *size *= 0.5;
                if *size * max_abs(&g) < 1e-12 * scale {
                    stop = StopReason::LineSearchFailed;
                    break;
                }
                None
            }
        } else {
            let mut found = None;
            for attempt in 0..2 {
                let steepest = mem.is_empty() || attempt == 1;
                if steepest {
                    mem.clear();
                }
                let mut p = if steepest { g.clone() } else { lbfgs_direction(&g, &mem) };
                if dot(&p, &g) <= 0.0 {
                    mem.clear();
                    p = g.clone();
                }
                if mem.is_empty() {
                    // First step moves the largest amplitude by a tenth of
                    // the amplitude scale.
                    let m = max_abs(&p);
                    if m == 0.0 {
                        break;
                    }
                    p *= 0.1 * scale / m;
                }
                let mut alpha = 1.0;
                for _ in 0..MAX_BACKTRACKS {
                    let mut trial = x.clone();
                    trial.scaled_add(alpha, &p);
                    project(&mut trial, bound);
                    let ft = model.fidelity(&trial)?;
                    evaluations += 1;
                    let step = &trial - &x;
                    if ft >= f + ARMIJO * dot(&g, &step) && ft > f {
                        found = Some(trial);
                        break;
                    }
                    alpha *= 0.5;
                }
                if found.is_some() || steepest {
                    break;
                }
            }
            if found.is_none() {
                stop = StopReason::LineSearchFailed;
                break;
            }
            found
        };
        iterations += 1;
        if let Some(xn) = accepted {
            let (fn_, gn) = model.fidelity_and_gradient(&xn, config.gradient)?;
            evaluations += 1;
            if fixed.is_none() {
                let s = &xn - &x;
                let y = &g - &gn;
                if dot(&s, &y) > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    mem.push_back((s, y));
                    if mem.len() > config.lbfgs_memory {
                        mem.pop_front();
                    }
                }
            }
            x = xn;
            f = fn_;
            g = gn;
            history.push(f);
        }
    }
    if iterations >= config.max_iterations && f >= config.target_fidelity {
        stop = StopReason::TargetReached;
    }
    Ok(GrapeResult {
        pulse: model.to_pulse(x)?,
        fidelity: f,
        iterations,
        evaluations,
        stop,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grape::GradientMode;
    use crate::system::SpinSystem;

    fn chain3() -> TransferProblem {
        TransferProblem::chain_transfer(
            SpinSystem::uniform_chain(3, 88.05).unwrap(),
            vec![ControlChannel::y(2)],
        )
        .unwrap()
    }

    #[test]
    fn reaches_target_above_minimum_time() {
        let p = chain3();
        let r = grape_optimize(&p, 0.0105, &GrapeConfig::default(), None).unwrap();
        assert!(r.converged(), "{:?} F={}", r.stop, r.fidelity);
        assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
        assert!((p.fidelity(&r.pulse).unwrap() - r.fidelity).abs() < 1e-10);
    }

    #[test]
    fn fixed_step_ascends() {
        let p = chain3();
        let cfg = GrapeConfig {
            step: StepPolicy::Fixed { size: 1e5 },
            max_iterations: 60,
            gradient: GradientMode::FirstOrder,
            ..GrapeConfig::default()
        };
        let r = grape_optimize(&p, 0.012, &cfg, None).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.fidelity > r.history[0]);
    }

    #[test]
    fn bound_is_respected() {
        let p = chain3().with_bound(Some(40.0)).unwrap();
        let cfg = GrapeConfig {
            max_iterations: 50,
            ..GrapeConfig::default()
        };
        let r = grape_optimize(&p, 0.012, &cfg, None).unwrap();
        assert!(r.pulse.respects_bound(40.0));
    }

    #[test]
    fn rejects_bad_duration() {
        assert!(grape_optimize(&chain3(), 0.0, &GrapeConfig::default(), None).is_err());
    }
}
