//! Spin systems, drift and control Hamiltonians.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{single_spin, spin_z_value, Operator, Pauli};
use crate::C64;

pub const MIN_SPINS: usize = 2;
pub const MAX_SPINS: usize = 6;

/// `n` weakly coupled spins-1/2 with Ising couplings and resonance offsets.
///
/// Couplings and offsets are in Hz. The JSON form is
/// `{ "n": 3, "couplings": [[0,88.05,0],[88.05,0,88.05],[0,88.05,0]], "offsets": [0,0,0] }`
/// with `offsets` optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpinSystemFile", into = "SpinSystemFile")]
pub struct SpinSystem {
    n: usize,
    couplings: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpinSystemFile {
    n: usize,
    couplings: Vec<Vec<f64>>,
    #[serde(default)]
    offsets: Option<Vec<f64>>,
}

impl TryFrom<SpinSystemFile> for SpinSystem {
    type Error = Error;
    fn try_from(f: SpinSystemFile) -> Result<Self> {
        let offsets = f.offsets.unwrap_or_else(|| vec![0.0; f.n]);
        SpinSystem::new(f.n, f.couplings, offsets)
    }
}

impl From<SpinSystem> for SpinSystemFile {
    fn from(s: SpinSystem) -> Self {
        SpinSystemFile {
            n: s.n,
            couplings: s.couplings,
            offsets: Some(s.offsets),
        }
    }
}

impl SpinSystem {
    pub fn new(n: usize, couplings: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if !(MIN_SPINS..=MAX_SPINS).contains(&n) {
            return Err(Error::InvalidSystem(format!(
                "spin count {n} outside {MIN_SPINS}..={MAX_SPINS}"
            )));
        }
        if couplings.len() != n || couplings.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidSystem(format!(
                "coupling matrix must be {n}x{n}"
            )));
        }
        if offsets.len() != n {
            return Err(Error::InvalidSystem(format!(
                "expected {n} offsets, found {}",
                offsets.len()
            )));
        }
        for k in 0..n {
            if couplings[k][k] != 0.0 {
                return Err(Error::InvalidSystem(format!(
                    "diagonal coupling J{}{} must be zero",
                    k + 1,
                    k + 1
                )));
            }
            for l in 0..n {
                let j = couplings[k][l];
                if !j.is_finite() || j != couplings[l][k] {
                    return Err(Error::InvalidSystem(format!(
                        "coupling matrix not symmetric/finite at ({}, {})",
                        k + 1,
                        l + 1
                    )));
                }
            }
        }
        if offsets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSystem("non-finite offset".into()));
        }
        Ok(SpinSystem {
            n,
            couplings,
            offsets,
        })
    }

    /// Linear chain with nearest-neighbour couplings `chain[l] = J_{l+1,l+2}`.
    pub fn linear_chain(chain: &[f64]) -> Result<Self> {
        let n = chain.len() + 1;
        let mut couplings = vec![vec![0.0; n]; n];
        for (l, &j) in chain.iter().enumerate() {
            couplings[l][l + 1] = j;
            couplings[l + 1][l] = j;
        }
        SpinSystem::new(n, couplings, vec![0.0; n])
    }

    /// Uniform chain of `n` spins with every neighbour coupling equal to `j`.
    pub fn uniform_chain(n: usize, j: f64) -> Result<Self> {
        Self::linear_chain(&vec![j; n.saturating_sub(1)])
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("spin system serializes")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// Coupling `J_kl` in Hz, 1-based indices.
    pub fn coupling(&self, k: usize, l: usize) -> f64 {
        self.couplings[k - 1][l - 1]
    }

    pub fn couplings(&self) -> &[Vec<f64>] {
        &self.couplings
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Same system with a new coupling `J_kl = J_lk` (1-based).
    pub fn with_coupling(&self, k: usize, l: usize, j: f64) -> Result<Self> {
        let mut c = self.couplings.clone();
        c[k - 1][l - 1] = j;
        c[l - 1][k - 1] = j;
        SpinSystem::new(self.n, c, self.offsets.clone())
    }

    /// Same system with the offset of `spin` (1-based) replaced.
    pub fn with_offset(&self, spin: usize, offset_hz: f64) -> Result<Self> {
        if spin == 0 || spin > self.n {
            return Err(Error::SpinOutOfRange { spin, n: self.n });
        }
        let mut o = self.offsets.clone();
        o[spin - 1] = offset_hz;
        SpinSystem::new(self.n, self.couplings.clone(), o)
    }

    /// Nearest-neighbour couplings `J_{l,l+1}`.
    pub fn chain_couplings(&self) -> Vec<f64> {
        (1..self.n).map(|l| self.coupling(l, l + 1)).collect()
    }

    /// Largest absolute coupling.
    pub fn max_coupling(&self) -> f64 {
        self.couplings
            .iter()
            .flatten()
            .fold(0.0f64, |m, j| m.max(j.abs()))
    }

    /// True when only nearest-neighbour couplings are non-zero.
    pub fn is_linear_chain(&self) -> bool {
        (0..self.n).all(|k| (0..self.n).all(|l| k.abs_diff(l) <= 1 || self.couplings[k][l] == 0.0))
    }

    /// Diagonal of the drift Hamiltonian (rad/s) in the computational basis.
    pub fn drift_diagonal(&self) -> Vec<f64> {
        let n = self.n;
        (0..self.dim())
            .map(|b| {
                let m: Vec<f64> = (1..=n).map(|k| spin_z_value(n, k, b)).collect();
                let mut e = 0.0;
                for k in 0..n {
                    for l in (k + 1)..n {
                        e += self.couplings[k][l] * m[k] * m[l];
                    }
                    e += self.offsets[k] * m[k];
                }
                2.0 * PI * e
            })
            .collect()
    }
}

/// `H_d = 2π Σ_{k<l} J_kl I_kz I_lz + 2π Σ_l ν_l I_lz` in rad/s.
pub fn drift_hamiltonian(system: &SpinSystem) -> Operator {
    let d = system.drift_diagonal();
    let mut h = Array2::zeros((d.len(), d.len()));
    for (i, v) in d.into_iter().enumerate() {
        h[[i, i]] = C64::new(v, 0.0);
    }
    Operator(h)
}

/// Transverse rf axis of a control channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn pauli(self) -> Pauli {
        match self {
            Axis::X => Pauli::X,
            Axis::Y => Pauli::Y,
        }
    }

    /// rf phase of the axis in radians (x = 0, y = π/2).
    pub fn phase(self) -> f64 {
        match self {
            Axis::X => 0.0,
            Axis::Y => PI / 2.0,
        }
    }
}

/// An rf control on one spin along one transverse axis. Spins are 1-based.
/// Serialized as its label, e.g. `"2y"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ControlChannel {
    pub spin: usize,
    pub axis: Axis,
}

impl ControlChannel {
    pub fn new(spin: usize, axis: Axis) -> Self {
        ControlChannel { spin, axis }
    }

    pub fn y(spin: usize) -> Self {
        Self::new(spin, Axis::Y)
    }

    pub fn x(spin: usize) -> Self {
        Self::new(spin, Axis::X)
    }

    /// Compact label such as `2y`.
    pub fn label(&self) -> String {
        format!(
            "{}{}",
            self.spin,
            match self.axis {
                Axis::X => 'x',
                Axis::Y => 'y',
            }
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidConfig(format!("bad channel label '{s}'"));
        let (num, ax) = s.split_at(s.len().checked_sub(1).ok_or_else(bad)?);
        let spin: usize = num.parse().map_err(|_| bad())?;
        let axis = match ax {
            "x" | "X" => Axis::X,
            "y" | "Y" => Axis::Y,
            _ => return Err(bad()),
        };
        Ok(ControlChannel::new(spin, axis))
    }
}

impl TryFrom<String> for ControlChannel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        ControlChannel::parse(&s)
    }
}

impl From<ControlChannel> for String {
    fn from(c: ControlChannel) -> String {
        c.label()
    }
}

impl std::fmt::Display for ControlChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Reject duplicate channels and spins outside `1..=n`.
pub fn validate_channels(channels: &[ControlChannel], n: usize) -> Result<()> {
    for (i, c) in channels.iter().enumerate() {
        if c.spin == 0 || c.spin > n {
            return Err(Error::SpinOutOfRange { spin: c.spin, n });
        }
        if channels[..i].contains(c) {
            return Err(Error::InvalidConfig(format!(
                "duplicate control channel {}",
                c.label()
            )));
        }
    }
    Ok(())
}

/// `H_c = 2π I_{spin,axis}`; a segment Hamiltonian is `H_d + Σ u_c H_c`
/// with `u_c` in Hz.
pub fn control_hamiltonian(channel: ControlChannel, n: usize) -> Result<Operator> {
    Ok(single_spin(n, channel.spin, channel.axis.pauli())?.scale(2.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_spin_drift_is_diagonal_quarter_j() {
        let sys = SpinSystem::linear_chain(&[88.05]).unwrap();
        let h = drift_hamiltonian(&sys);
        let q = 2.0 * PI * 88.05 / 4.0;
        let expect = [q, -q, -q, q];
        for i in 0..4 {
            assert_abs_diff_eq!(h.0[[i, i]].re, expect[i], epsilon = 1e-12);
            for j in 0..4 {
                if i != j {
                    assert_eq!(h.0[[i, j]], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn linear_chain_has_only_neighbour_terms() {
        let sys = SpinSystem::uniform_chain(3, 88.05).unwrap();
        assert!(sys.is_linear_chain());
        assert_eq!(sys.coupling(1, 3), 0.0);
        let nz = sys.couplings().iter().flatten().filter(|j| **j != 0.0).count();
        assert_eq!(nz / 2, 2);
        let looped = sys.with_coupling(1, 3, 2.935).unwrap();
        assert!(!looped.is_linear_chain());
        let nz = looped.couplings().iter().flatten().filter(|j| **j != 0.0).count();
        assert_eq!(nz / 2, 3);
        // The long-range term changes the drift.
        let diff = drift_hamiltonian(&looped).max_abs_diff(&drift_hamiltonian(&sys));
        assert_abs_diff_eq!(diff, 2.0 * PI * 2.935 / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_systems_rejected() {
        assert!(SpinSystem::new(1, vec![vec![0.0]], vec![0.0]).is_err());
        assert!(SpinSystem::new(7, vec![vec![0.0; 7]; 7], vec![0.0; 7]).is_err());
        let asym = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(SpinSystem::new(2, asym, vec![0.0; 2]).is_err());
        let diag = vec![vec![1.0, 1.0], vec![1.0, 0.0]];
        assert!(SpinSystem::new(2, diag, vec![0.0; 2]).is_err());
        assert!(SpinSystem::new(2, vec![vec![0.0; 2]; 2], vec![0.0]).is_err());
    }

    #[test]
    fn json_round_trip_and_default_offsets() {
        let text = r#"{ "n": 3, "couplings": [[0,88.05,0],[88.05,0,88.05],[0,88.05,0]] }"#;
        let sys = SpinSystem::from_json_str(text).unwrap();
        assert_eq!(sys.offsets(), &[0.0, 0.0, 0.0]);
        let back = SpinSystem::from_json_str(&sys.to_json_string()).unwrap();
        assert_eq!(back, sys);
        let bad = r#"{ "n": 2, "couplings": [[0,1],[3,0]] }"#;
        assert!(SpinSystem::from_json_str(bad).is_err());
    }

    #[test]
    fn control_hamiltonian_is_scaled_single_spin() {
        let h = control_hamiltonian(ControlChannel::y(2), 3).unwrap();
        let iy = single_spin(3, 2, Pauli::Y).unwrap();
        assert!(h.max_abs_diff(&iy.scale(2.0 * PI)) < 1e-15);
        assert!(matches!(
            control_hamiltonian(ControlChannel::y(4), 3),
            Err(Error::SpinOutOfRange { spin: 4, n: 3 })
        ));
    }

    #[test]
    fn channel_labels() {
        let c = ControlChannel::parse("3x").unwrap();
        assert_eq!(c, ControlChannel::x(3));
        assert_eq!(c.label(), "3x");
        assert!(ControlChannel::parse("y").is_err());
        assert!(validate_channels(&[ControlChannel::y(2), ControlChannel::y(2)], 3).is_err());
    }
}
