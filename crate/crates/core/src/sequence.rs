//! Hard pulses, event sequences and the conventional INEPT cascade.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{conjugate, evolve_pulse, free_evolution, rotation, unitary};
use crate::operator::{single_spin, Operator, Pauli};
use crate::pulse::ShapedPulse;
use crate::system::{drift_hamiltonian, SpinSystem};

/// How a hard pulse is realized in time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "realization", rename_all = "snake_case")]
pub enum Realization {
    /// Instantaneous rotation.
    Ideal,
    /// Rectangular pulse of `amplitude` Hz lasting `duration` seconds,
    /// with `2π · amplitude · duration = flip`.
    Finite { amplitude: f64, duration: f64 },
}

/// Rotation of one spin by `flip` about the transverse axis at `phase`
/// (0 = x, π/2 = y).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardPulse {
    pub spin: usize,
    pub phase: f64,
    pub flip: f64,
    #[serde(flatten)]
    pub realization: Realization,
}

impl HardPulse {
    pub fn ideal(spin: usize, phase: f64, flip: f64) -> Self {
        HardPulse {
            spin,
            phase,
            flip,
            realization: Realization::Ideal,
        }
    }

    /// Finite pulse at `amplitude` Hz. A negative flip becomes a positive
    /// flip with the phase advanced by π.
    pub fn finite(spin: usize, phase: f64, flip: f64, amplitude: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidSequence(format!(
                "hard pulse amplitude must be positive, got {amplitude}"
            )));
        }
        let (phase, flip) = if flip < 0.0 { (phase + PI, -flip) } else { (phase, flip) };
        Ok(HardPulse {
            spin,
            phase,
            flip,
            realization: Realization::Finite {
                amplitude,
                duration: flip / (2.0 * PI * amplitude),
            },
        })
    }

    /// Same rotation realized at `amplitude` Hz.
    pub fn realized_at(&self, amplitude: f64) -> Result<Self> {
        Self::finite(self.spin, self.phase, self.flip, amplitude)
    }

    pub fn duration(&self) -> f64 {
        match self.realization {
            Realization::Ideal => 0.0,
            Realization::Finite { duration, .. } => duration,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.spin == 0 || self.spin > n {
            return Err(Error::SpinOutOfRange { spin: self.spin, n });
        }
        if !(self.phase.is_finite() && self.flip.is_finite()) {
            return Err(Error::InvalidSequence("non-finite hard pulse".into()));
        }
        if let Realization::Finite { amplitude, duration } = self.realization {
            if !(amplitude > 0.0 && duration >= 0.0) {
                return Err(Error::InvalidSequence(format!(
                    "finite pulse needs positive amplitude and non-negative duration, \
                     got {amplitude} Hz for {duration} s"
                )));
            }
            let err = (2.0 * PI * amplitude * duration - self.flip.abs()).abs();
            if err > 1e-9 * self.flip.abs().max(1.0) {
                return Err(Error::InvalidSequence(format!(
                    "finite pulse flip mismatch of {err:e} rad"
                )));
            }
        }
        Ok(())
    }

    /// rf Hamiltonian of the finite realization, `2π a (cos φ I_x + sin φ I_y)`.
    fn hamiltonian(&self, n: usize) -> Result<Operator> {
        let a = match self.realization {
            Realization::Finite { amplitude, .. } => amplitude * self.flip.signum(),
            Realization::Ideal => 0.0,
        };
        let ix = single_spin(n, self.spin, Pauli::X)?;
        let iy = single_spin(n, self.spin, Pauli::Y)?;
        Ok(&ix.scale(2.0 * PI * a * self.phase.cos()) + &iy.scale(2.0 * PI * a * self.phase.sin()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    /// Free evolution under the drift Hamiltonian.
    Delay { duration: f64 },
    Pulse(HardPulse),
    /// Simultaneous hard pulses sharing a common centre; the group lasts as
    /// long as its longest member.
    Group { pulses: Vec<HardPulse> },
    Shaped { pulse: ShapedPulse },
}

impl Event {
    pub fn duration(&self) -> f64 {
        match self {
            Event::Delay { duration } => *duration,
            Event::Pulse(p) => p.duration(),
            Event::Group { pulses } => pulses.iter().map(HardPulse::duration).fold(0.0, f64::max),
            Event::Shaped { pulse } => pulse.duration(),
        }
    }
}

/// Ordered list of delays, hard pulses and shaped pulses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Event>", into = "Vec<Event>")]
pub struct EventSequence {
    events: Vec<Event>,
}

impl TryFrom<Vec<Event>> for EventSequence {
    type Error = Error;
    fn try_from(events: Vec<Event>) -> Result<Self> {
        let mut s = EventSequence::new();
        for e in events {
            s.push(e)?;
        }
        Ok(s)
    }
}

impl From<EventSequence> for Vec<Event> {
    fn from(s: EventSequence) -> Self {
        s.events
    }
}

impl EventSequence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an event; negative or non-finite durations are rejected.
    pub fn push(&mut self, event: Event) -> Result<()> {
        let d = event.duration();
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::InvalidSequence(format!("event duration {d}")));
        }
        if let Event::Group { pulses } = &event {
            if pulses.is_empty() {
                return Err(Error::InvalidSequence("empty pulse group".into()));
            }
        }
        self.events.push(event);
        Ok(())
    }

    pub fn delay(&mut self, duration: f64) -> Result<()> {
        self.push(Event::Delay { duration })
    }

    pub fn pulse(&mut self, pulse: HardPulse) -> Result<()> {
        self.push(Event::Pulse(pulse))
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Sum of event durations; ideal pulses contribute nothing.
    pub fn duration(&self) -> f64 {
        self.events.iter().map(Event::duration).sum()
    }

    /// Every hard pulse in order, group members included.
    pub fn hard_pulses(&self) -> impl Iterator<Item = &HardPulse> {
        self.events.iter().flat_map(|e| match e {
            Event::Pulse(p) => std::slice::from_ref(p),
            Event::Group { pulses } => pulses.as_slice(),
            _ => &[],
        })
    }

    /// Checks spin indices, pulse realizations and shaped-pulse channels
    /// against an `n`-spin system.
    pub fn validate(&self, n: usize) -> Result<()> {
        for e in &self.events {
            match e {
                Event::Pulse(p) => p.validate(n)?,
                Event::Group { pulses } => pulses.iter().try_for_each(|p| p.validate(n))?,
                Event::Shaped { pulse } => crate::system::validate_channels(pulse.channels(), n)?,
                Event::Delay { .. } => {}
            }
        }
        Ok(())
    }
}

/// The conventional cascade: delays `1/(2 J_{ℓ,ℓ+1})` separated by hard
/// `π/2` y pulses on spin `ℓ+1`, with no pulse after the last delay.
pub fn conventional_sequence(system: &SpinSystem) -> Result<EventSequence> {
    let chain = system.chain_couplings();
    let mut seq = EventSequence::new();
    for (l, &j) in chain.iter().enumerate() {
        if !(j > 0.0) {
            return Err(Error::InvalidSystem(format!(
                "chain coupling J{}{} must be positive, got {j}",
                l + 1,
                l + 2
            )));
        }
        seq.delay(1.0 / (2.0 * j))?;
        if l + 1 < chain.len() {
            seq.pulse(HardPulse::ideal(l + 2, PI / 2.0, PI / 2.0))?;
        }
    }
    Ok(seq)
}

/// Applies every event of `seq` to `initial`. Delays evolve under the
/// drift, ideal pulses are instantaneous rotations and finite pulses are
/// simulated with the drift active.
pub fn simulate_sequence(seq: &EventSequence, system: &SpinSystem, initial: &Operator) -> Result<Operator> {
    let n = system.n();
    if initial.dim() != system.dim() {
        return Err(Error::DimensionMismatch(initial.dim(), system.dim()));
    }
    seq.validate(n)?;
    let mut rho = initial.clone();
    for e in seq.events() {
        rho = match e {
            Event::Delay { duration } => free_evolution(&rho, system, *duration)?,
            Event::Pulse(p) => apply_group(&rho, system, std::slice::from_ref(p))?,
            Event::Group { pulses } => apply_group(&rho, system, pulses)?,
            Event::Shaped { pulse } => evolve_pulse(&rho, system, pulse)?,
        };
    }
    Ok(rho)
}

fn apply_group(rho: &Operator, system: &SpinSystem, pulses: &[HardPulse]) -> Result<Operator> {
    let n = system.n();
    let total = pulses.iter().map(HardPulse::duration).fold(0.0, f64::max);
    let centre = total / 2.0;
    // Slice the group at every pulse edge and at the centre, where the ideal
    // members act.
    let mut cuts = vec![0.0, centre, total];
    for p in pulses {
        cuts.push(centre - p.duration() / 2.0);
        cuts.push(centre + p.duration() / 2.0);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let drift = drift_hamiltonian(system);
    let mut out = rho.clone();
    let mut ideal_done = false;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !ideal_done && a >= centre - 1e-15 {
            out = apply_ideal(&out, n, pulses)?;
            ideal_done = true;
        }
        let mid = 0.5 * (a + b);
        let mut h = drift.clone();
        for p in pulses {
            if matches!(p.realization, Realization::Finite { .. })
                && (mid - centre).abs() < p.duration() / 2.0
            {
                h = &h + &p.hamiltonian(n)?;
            }
        }
        out = conjugate(&unitary(&h, b - a)?, &out);
    }
    if !ideal_done {
        out = apply_ideal(&out, n, pulses)?;
    }
    Ok(out)
}

fn apply_ideal(rho: &Operator, n: usize, pulses: &[HardPulse]) -> Result<Operator> {
    let mut out = rho.clone();
    for p in pulses.iter().filter(|p| p.realization == Realization::Ideal) {
        out = conjugate(&rotation(n, p.spin, p.phase, p.flip)?, &out);
    }
    Ok(out)
}
