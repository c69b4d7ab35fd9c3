use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::ControlChannel;

/// Piecewise-constant multi-channel rf pulse.
///
/// `amplitudes[[j, c]]` is the amplitude in Hz of channel `c` during
/// segment `j`; every segment lasts `segment_duration` seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShapedPulseRecord", into = "ShapedPulseRecord")]
pub struct ShapedPulse {
    channels: Vec<ControlChannel>,
    segment_duration: f64,
    amplitudes: Array2<f64>,
}

/// Serialized form: one row of amplitudes per segment.
#[derive(Serialize, Deserialize)]
struct ShapedPulseRecord {
    channels: Vec<ControlChannel>,
    segment_duration: f64,
    amplitudes: Vec<Vec<f64>>,
}

impl TryFrom<ShapedPulseRecord> for ShapedPulse {
    type Error = Error;
    fn try_from(r: ShapedPulseRecord) -> Result<Self> {
        let c = r.channels.len();
        if let Some(row) = r.amplitudes.iter().find(|row| row.len() != c) {
            return Err(Error::InvalidPulse(format!(
                "amplitude row of length {} for {c} channels",
                row.len()
            )));
        }
        let flat: Vec<f64> = r.amplitudes.iter().flatten().copied().collect();
        let a = Array2::from_shape_vec((r.amplitudes.len(), c), flat)
            .map_err(|e| Error::InvalidPulse(e.to_string()))?;
        ShapedPulse::new(r.channels, r.segment_duration, a)
    }
}

impl From<ShapedPulse> for ShapedPulseRecord {
    fn from(p: ShapedPulse) -> Self {
        ShapedPulseRecord {
            channels: p.channels,
            segment_duration: p.segment_duration,
            amplitudes: p.amplitudes.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

impl ShapedPulse {
    pub fn new(
        channels: Vec<ControlChannel>,
        segment_duration: f64,
        amplitudes: Array2<f64>,
    ) -> Result<Self> {
        if !(segment_duration > 0.0 && segment_duration.is_finite()) {
            return Err(Error::InvalidPulse(format!(
                "segment duration must be positive, got {segment_duration}"
            )));
        }
        if amplitudes.nrows() == 0 {
            return Err(Error::InvalidPulse("pulse has no segments".into()));
        }
        if amplitudes.ncols() != channels.len() {
            return Err(Error::InvalidPulse(format!(
                "{} amplitude columns for {} channels",
                amplitudes.ncols(),
                channels.len()
            )));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidPulse("non-finite amplitude".into()));
        }
        for (i, c) in channels.iter().enumerate() {
            if channels[..i].contains(c) {
                return Err(Error::InvalidPulse(format!(
                    "duplicate channel {}",
                    c.label()
                )));
            }
        }
        Ok(ShapedPulse {
            channels,
            segment_duration,
            amplitudes,
        })
    }

    /// All-zero pulse of `segments` segments spanning `duration` seconds.
    pub fn zeros(channels: Vec<ControlChannel>, segments: usize, duration: f64) -> Result<Self> {
        let c = channels.len();
        Self::new(
            channels,
            duration / segments.max(1) as f64,
            Array2::zeros((segments, c)),
        )
    }

    /// Single-channel pulse from per-segment amplitudes.
    pub fn single_channel(
        channel: ControlChannel,
        segment_duration: f64,
        amplitudes: &[f64],
    ) -> Result<Self> {
        let a = Array2::from_shape_vec((amplitudes.len(), 1), amplitudes.to_vec())
            .map_err(|e| Error::InvalidPulse(e.to_string()))?;
        Self::new(vec![channel], segment_duration, a)
    }

    pub fn channels(&self) -> &[ControlChannel] {
        &self.channels
    }

    pub fn segment_count(&self) -> usize {
        self.amplitudes.nrows()
    }

    pub fn segment_duration(&self) -> f64 {
        self.segment_duration
    }

    /// Total duration `t_p = N · Δt`.
    pub fn duration(&self) -> f64 {
        self.segment_count() as f64 * self.segment_duration
    }

    pub fn amplitudes(&self) -> &Array2<f64> {
        &self.amplitudes
    }

    pub fn segment(&self, j: usize) -> ArrayView1<'_, f64> {
        self.amplitudes.row(j)
    }

    /// Column of one channel, if present.
    pub fn channel_amplitudes(&self, channel: ControlChannel) -> Option<Vec<f64>> {
        let c = self.channels.iter().position(|x| *x == channel)?;
        Some(self.amplitudes.column(c).to_vec())
    }

    pub fn max_abs_amplitude(&self) -> f64 {
        self.amplitudes.iter().fold(0.0f64, |m, a| m.max(a.abs()))
    }

    /// True when every amplitude satisfies `|u| ≤ bound` (with a tiny slack).
    pub fn respects_bound(&self, bound: f64) -> bool {
        self.amplitudes.iter().all(|a| a.abs() <= bound * (1.0 + 1e-12))
    }

    /// Accumulated flip angle `∫ 2π |u_c(t)| dt` of channel index `c`.
    pub fn accumulated_flip(&self, c: usize) -> f64 {
        self.amplitudes
            .column(c)
            .iter()
            .map(|a| 2.0 * std::f64::consts::PI * a.abs() * self.segment_duration)
            .sum()
    }

    /// Same pulse expressed on a different channel list; channels missing
    /// from `self` are zero and channels not in `channels` are dropped.
    pub fn remap_channels(&self, channels: &[ControlChannel]) -> Result<ShapedPulse> {
        let mut a = Array2::zeros((self.segment_count(), channels.len()));
        for (c_new, ch) in channels.iter().enumerate() {
            if let Some(c_old) = self.channels.iter().position(|x| x == ch) {
                a.column_mut(c_new).assign(&self.amplitudes.column(c_old));
            }
        }
        ShapedPulse::new(channels.to_vec(), self.segment_duration, a)
    }

    /// Resample onto `segments` segments spanning `duration`, scaling the
    /// amplitudes so that every channel keeps its flip-angle profile
    /// (`u → u · t_old / t_new`).
    pub fn time_rescaled(&self, duration: f64, segments: usize) -> Result<ShapedPulse> {
        let scale = self.duration() / duration;
        let n_old = self.segment_count();
        let a = Array2::from_shape_fn((segments, self.channels.len()), |(j, c)| {
            let frac = (j as f64 + 0.5) / segments as f64;
            let src = ((frac * n_old as f64) as usize).min(n_old - 1);
            self.amplitudes[[src, c]] * scale
        });
        ShapedPulse::new(self.channels.clone(), duration / segments as f64, a)
    }

    /// Pulses run back to back; both must share channels and segment duration.
    pub fn concatenate(&self, other: &ShapedPulse) -> Result<ShapedPulse> {
        if self.channels != other.channels {
            return Err(Error::InvalidPulse("channel lists differ".into()));
        }
        if (self.segment_duration - other.segment_duration).abs() > 1e-15 {
            return Err(Error::InvalidPulse("segment durations differ".into()));
        }
        let a = ndarray::concatenate(
            ndarray::Axis(0),
            &[self.amplitudes.view(), other.amplitudes.view()],
        )
        .map_err(|e| Error::InvalidPulse(e.to_string()))?;
        ShapedPulse::new(self.channels.clone(), self.segment_duration, a)
    }
}
