//! DANTE conversion of shaped pulses and offset profiles.
//!
//! The shaped pulse is cut into windows of equal accumulated flip angle.
//! Each window becomes one hard pulse at the instant the shaped pulse has
//! accumulated half of the window's flip, flanked by two free-evolution
//! half-windows. A π pulse on every spin sits at the centre of each
//! half-window, so chemical shifts refocus while all `I_z I_z` couplings keep
//! evolving. The π phases run through the MLEV-4 cycle `x, x, −x, −x`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::transfer_fidelity;
use crate::operator::Operator;
use crate::pulse::ShapedPulse;
use crate::sequence::{simulate_sequence, Event, EventSequence, HardPulse};
use crate::system::{ControlChannel, SpinSystem};

/// π-pulse phases of one MLEV-4 cycle.
pub const MLEV4: [f64; 4] = [0.0, 0.0, PI, PI];

/// Relative slack on `flip_per_pulse` exceeding the total flip.
const COUNT_SLACK: f64 = 1e-6;

/// How the refocusing π pulses are realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refocusing {
    Ideal,
    /// Rectangular π pulses at the hard-pulse rf amplitude.
    Finite,
}

/// Parameters recorded alongside a converted sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DanteAnnotation {
    pub channel: ControlChannel,
    /// Nominal flip per hard pulse in radians.
    pub flip_per_pulse: f64,
    pub rf_amplitude: f64,
    pub refocusing: Refocusing,
    /// Flip of every emitted hard pulse in radians.
    pub pulse_flips: Vec<f64>,
    /// Phase of every π block in radians, in order.
    pub phase_cycle: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DanteSequence {
    pub sequence: EventSequence,
    pub annotation: DanteAnnotation,
}

impl DanteSequence {
    pub fn hard_pulse_count(&self) -> usize {
        self.annotation.pulse_flips.len()
    }

    pub fn total_flip(&self) -> f64 {
        self.annotation.pulse_flips.iter().sum()
    }

    /// Whether the π phases follow `x, x, −x, −x` cyclically.
    pub fn follows_mlev4(&self) -> bool {
        is_mlev4(&self.annotation.phase_cycle)
    }
}

pub fn is_mlev4(phases: &[f64]) -> bool {
    phases.iter().enumerate().all(|(i, p)| {
        let d = (p - MLEV4[i % 4]).rem_euclid(2.0 * PI);
        d < 1e-12 || 2.0 * PI - d < 1e-12
    })
}

/// Time at which the running sum `acc` (one entry per segment boundary)
/// first reaches `level`.
fn time_at(acc: &[f64], dt: f64, level: f64) -> f64 {
    let j = acc.partition_point(|&a| a < level).clamp(1, acc.len() - 1) - 1;
    let rise = acc[j + 1] - acc[j];
    let frac = if rise > 0.0 { ((level - acc[j]) / rise).clamp(0.0, 1.0) } else { 0.0 };
    (j as f64 + frac) * dt
}

/// Convert a single-channel shaped pulse into a refocused DANTE sequence.
///
/// The pulse count is the total flip over `flip_per_pulse`, rounded to the
/// nearest integer. Every hard pulse flips `flip_per_pulse` except the last,
/// which absorbs the remainder of either sign. A window whose net signed flip is negative gives a hard pulse
/// with its phase advanced by π. Finite pulses are centred on their nominal
/// instants and carved out of the neighbouring delays.
pub fn dante_convert(
    pulse: &ShapedPulse,
    flip_per_pulse: f64,
    rf_amplitude: f64,
    n_spins: usize,
    refocusing: Refocusing,
) -> Result<DanteSequence> {
    if pulse.channels().len() != 1 {
        return Err(Error::InvalidPulse(format!(
            "DANTE conversion needs a single-channel pulse, got {} channels",
            pulse.channels().len()
        )));
    }
    let channel = pulse.channels()[0];
    if channel.spin > n_spins {
        return Err(Error::SpinOutOfRange {
            spin: channel.spin,
            n: n_spins,
        });
    }
    if !(rf_amplitude > 0.0 && rf_amplitude.is_finite()) {
        return Err(Error::InvalidConfig(format!("rf amplitude {rf_amplitude}")));
    }
    let total = pulse.accumulated_flip(0);
    if !(flip_per_pulse > 0.0) || flip_per_pulse > total * (1.0 + COUNT_SLACK) {
        return Err(Error::InvalidConfig(format!(
            "flip per pulse {flip_per_pulse} rad outside (0, {total}]"
        )));
    }
    let dt = pulse.segment_duration();
    let amps = pulse.channel_amplitudes(channel).expect("single channel");
    let mut abs_acc = vec![0.0];
    let mut signed_acc = vec![0.0];
    for &u in &amps {
        abs_acc.push(abs_acc.last().unwrap() + 2.0 * PI * u.abs() * dt);
        signed_acc.push(signed_acc.last().unwrap() + 2.0 * PI * u * dt);
    }
    let signed_at = |t: f64| {
        let j = ((t / dt) as usize).min(amps.len() - 1);
        signed_acc[j] + 2.0 * PI * amps[j] * (t - j as f64 * dt)
    };

    let m = (total / flip_per_pulse).round().max(1.0) as usize;
    let mut bounds: Vec<f64> = (0..m).map(|i| i as f64 * flip_per_pulse).collect();
    bounds.push(total);
    let duration = pulse.duration();
    let mut edges: Vec<f64> = bounds.iter().map(|&b| time_at(&abs_acc, dt, b)).collect();
    edges[0] = 0.0;
    edges[m] = duration;

    // Elements as (centre time, event) in time order.
    let pi_event = |k: usize| -> Result<(Event, f64)> {
        let phase = MLEV4[k % 4];
        let pulses = (1..=n_spins)
            .map(|s| match refocusing {
                Refocusing::Ideal => Ok(HardPulse::ideal(s, phase, PI)),
                Refocusing::Finite => HardPulse::finite(s, phase, PI, rf_amplitude),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((Event::Group { pulses }, phase))
    };
    let mut elements: Vec<(f64, Event)> = Vec::new();
    let mut phase_cycle = Vec::new();
    let mut flips = Vec::new();
    let mut refocus_count = 0;
    for i in 0..m {
        let flip = bounds[i + 1] - bounds[i];
        let centre = time_at(&abs_acc, dt, 0.5 * (bounds[i] + bounds[i + 1])).clamp(edges[i], edges[i + 1]);
        let net = signed_at(edges[i + 1]) - signed_at(edges[i]);
        let (ev, ph) = pi_event(refocus_count)?;
        elements.push((0.5 * (edges[i] + centre), ev));
        phase_cycle.push(ph);
        refocus_count += 1;
        // An odd number of π pulses about ±x mirrors the rotating frame
        // across the x axis.
        let mut phase = channel.axis.phase() + if net < 0.0 { PI } else { 0.0 };
        if refocus_count % 2 == 1 {
            phase = -phase;
        }
        elements.push((centre, Event::Pulse(HardPulse::finite(channel.spin, phase, flip, rf_amplitude)?)));
        flips.push(flip);
        let (ev, ph) = pi_event(refocus_count)?;
        elements.push((0.5 * (centre + edges[i + 1]), ev));
        phase_cycle.push(ph);
        refocus_count += 1;
    }

    let mut sequence = EventSequence::new();
    let mut cursor = 0.0;
    for (centre, ev) in elements {
        let half = 0.5 * ev.duration();
        let gap = centre - half - cursor;
        if gap < -1e-12 {
            return Err(Error::InvalidSequence(format!(
                "rf amplitude {rf_amplitude} Hz too low: pulses overlap by {:e} s",
                -gap
            )));
        }
        if gap > 0.0 {
            sequence.delay(gap)?;
        }
        cursor = centre + half;
        sequence.push(ev)?;
    }
    let tail = duration - cursor;
    if tail < -1e-12 {
        return Err(Error::InvalidSequence(format!(
            "rf amplitude {rf_amplitude} Hz too low: sequence overruns the pulse"
        )));
    }
    if tail > 0.0 {
        sequence.delay(tail)?;
    }
    Ok(DanteSequence {
        sequence,
        annotation: DanteAnnotation {
            channel,
            flip_per_pulse,
            rf_amplitude,
            refocusing,
            pulse_flips: flips,
            phase_cycle,
        },
    })
}

/// Transfer fidelity per offset of one spin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetProfile {
    pub offset_spin: usize,
    pub offsets: Vec<f64>,
    pub fidelities: Vec<f64>,
}

impl OffsetProfile {
    /// CSV with columns `offset_hz,fidelity`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "offset_hz,fidelity")?;
        for (o, f) in self.offsets.iter().zip(&self.fidelities) {
            writeln!(w, "{o},{f}")?;
        }
        Ok(())
    }

    pub fn at(&self, offset: f64) -> Option<f64> {
        self.offsets
            .iter()
            .position(|o| (o - offset).abs() < 1e-9)
            .map(|i| self.fidelities[i])
    }
}

/// `steps` equally spaced offsets covering `[−range, range]`.
pub fn offset_grid(range: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 3 || !(range > 0.0 && range.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "offset grid needs at least 3 steps and a positive range, got {steps} over ±{range}"
        )));
    }
    Ok((0..steps)
        .map(|i| -range + 2.0 * range * i as f64 / (steps - 1) as f64)
        .collect())
}

/// Fidelity of `seq` with spin `offset_spin` shifted by `offset` Hz.
pub fn fidelity_at_offset(
    seq: &EventSequence,
    system: &SpinSystem,
    initial: &Operator,
    target: &Operator,
    offset_spin: usize,
    offset: f64,
) -> Result<f64> {
    let sys = system.with_offset(offset_spin, offset)?;
    let out = simulate_sequence(seq, &sys, initial)?;
    transfer_fidelity(&out, target, initial)
}

/// Offset profile of `seq` over `steps` offsets in `[−range, range]` Hz.
pub fn offset_profile(
    seq: &EventSequence,
    system: &SpinSystem,
    initial: &Operator,
    target: &Operator,
    offset_spin: usize,
    range: f64,
    steps: usize,
) -> Result<OffsetProfile> {
    if offset_spin == 0 || offset_spin > system.n() {
        return Err(Error::SpinOutOfRange {
            spin: offset_spin,
            n: system.n(),
        });
    }
    let offsets = offset_grid(range, steps)?;
    let fidelities = offsets
        .iter()
        .map(|&o| fidelity_at_offset(seq, system, initial, target, offset_spin, o))
        .collect::<Result<Vec<_>>>()?;
    Ok(OffsetProfile {
        offset_spin,
        offsets,
        fidelities,
    })
}

/// A shaped pulse as a one-event sequence, for profiling.
pub fn shaped_sequence(pulse: &ShapedPulse) -> Result<EventSequence> {
    let mut s = EventSequence::new();
    s.push(Event::Shaped {
        pulse: pulse.clone(),
    })?;
    Ok(s)
}
