//! Product operators on `n` spins-1/2.
//!
//! Basis convention: spin 1 is the leftmost tensor factor, so the
//! computational basis index of spin `k` (1-based) is bit `n - k` of the
//! row index, and bit value 0 means `m = +1/2`.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Single-spin factor of a product operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pauli {
    /// The 2×2 identity.
    #[serde(alias = "1", alias = "e")]
    Identity,
    X,
    Y,
    Z,
}

impl Pauli {
    /// The Pauli matrix halved (`I_x`, `I_y`, `I_z`) or the identity.
    pub fn matrix(self) -> [[C64; 2]; 2] {
        let z = C64::new(0.0, 0.0);
        let h = C64::new(0.5, 0.0);
        let ih = C64::new(0.0, 0.5);
        match self {
            Pauli::Identity => [[C64::new(1.0, 0.0), z], [z, C64::new(1.0, 0.0)]],
            Pauli::X => [[z, h], [h, z]],
            Pauli::Y => [[z, -ih], [ih, z]],
            Pauli::Z => [[h, z], [z, -h]],
        }
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            '1' | 'e' | 'E' | 'i' | 'I' => Some(Pauli::Identity),
            'x' | 'X' => Some(Pauli::X),
            'y' | 'Y' => Some(Pauli::Y),
            'z' | 'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

/// A scaled tensor product of single-spin operators, e.g. `4 I1y I2y I3z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductOperatorSpec {
    pub labels: Vec<Pauli>,
    pub coefficient: f64,
}

impl ProductOperatorSpec {
    /// Product operator with the conventional `2^(q-1)` prefactor, where `q`
    /// is the number of non-identity factors.
    pub fn new(labels: Vec<Pauli>) -> Self {
        let q = labels.iter().filter(|p| **p != Pauli::Identity).count();
        let coefficient = if q == 0 { 1.0 } else { 2f64.powi(q as i32 - 1) };
        ProductOperatorSpec {
            labels,
            coefficient,
        }
    }

    pub fn with_coefficient(labels: Vec<Pauli>, coefficient: f64) -> Self {
        ProductOperatorSpec {
            labels,
            coefficient,
        }
    }

    /// Parse a compact label string such as `"x11"` or `"yyz"` (one
    /// character per spin).
    pub fn parse(s: &str) -> Result<Self> {
        let labels = s
            .chars()
            .map(|c| {
                Pauli::from_char(c).ok_or_else(|| {
                    Error::InvalidConfig(format!("unknown operator label '{c}' in \"{s}\""))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(labels))
    }

    /// `I_{spin,axis}` on an `n`-spin system (spin is 1-based).
    pub fn single(n: usize, spin: usize, axis: Pauli) -> Self {
        let mut labels = vec![Pauli::Identity; n];
        labels[spin - 1] = axis;
        Self::new(labels)
    }

    /// `2^(n-1) I1y I2y … I(n-1)y Inz`, the chain transfer target.
    pub fn chain_target(n: usize) -> Self {
        let mut labels = vec![Pauli::Y; n];
        labels[n - 1] = Pauli::Z;
        Self::new(labels)
    }

    pub fn is_traceless(&self) -> bool {
        self.labels.iter().any(|p| *p != Pauli::Identity)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }
}

impl std::fmt::Display for ProductOperatorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.coefficient)?;
        for (k, p) in self.labels.iter().enumerate() {
            let a = match p {
                Pauli::Identity => continue,
                Pauli::X => 'x',
                Pauli::Y => 'y',
                Pauli::Z => 'z',
            };
            write!(f, " I{}{}", k + 1, a)?;
        }
        Ok(())
    }
}

/// Dense complex `2^n × 2^n` operator: Hamiltonians, propagators and
/// density operators share this carrier.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(pub Array2<C64>);

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Operator(Array2::zeros((dim, dim)))
    }

    pub fn identity(dim: usize) -> Self {
        Operator(Array2::eye(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<C64> {
        self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.diag().sum()
    }

    /// `Tr(self† · other)`.
    pub fn inner(&self, other: &Operator) -> C64 {
        Zip::from(&self.0)
            .and(&other.0)
            .fold(C64::new(0.0, 0.0), |acc, a, b| acc + a.conj() * b)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn adjoint(&self) -> Operator {
        Operator(self.0.t().mapv(|z| z.conj()))
    }

    pub fn dot(&self, other: &Operator) -> Operator {
        Operator(self.0.dot(&other.0))
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        Operator(self.0.dot(&other.0) - other.0.dot(&self.0))
    }

    pub fn scale(&self, s: f64) -> Operator {
        Operator(self.0.mapv(|z| z * s))
    }

    /// `max |A_ij - conj(A_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut err = 0.0f64;
        for i in 0..n {
            for j in i..n {
                err = err.max((self.0[[i, j]] - self.0[[j, i]].conj()).norm());
            }
        }
        err
    }

    /// `max |U†U - 1|`.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.adjoint().dot(self);
        let mut err = 0.0f64;
        for ((i, j), z) in p.0.indexed_iter() {
            let e = if i == j { *z - 1.0 } else { *z };
            err = err.max(e.norm());
        }
        err
    }

    /// Largest elementwise deviation between two operators.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        Zip::from(&self.0)
            .and(&other.0)
            .fold(0.0f64, |m, a, b| m.max((a - b).norm()))
    }
}

impl std::ops::Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl std::ops::Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

/// Kronecker product of 2×2 factors, spin 1 leftmost.
fn kron_factors(factors: &[[[C64; 2]; 2]]) -> Array2<C64> {
    let n = factors.len();
    let dim = 1usize << n;
    Array2::from_shape_fn((dim, dim), |(r, c)| {
        let mut v = C64::new(1.0, 0.0);
        for (k, f) in factors.iter().enumerate() {
            let shift = n - 1 - k;
            let (br, bc) = ((r >> shift) & 1, (c >> shift) & 1);
            v *= f[br][bc];
            if v == C64::new(0.0, 0.0) {
                break;
            }
        }
        v
    })
}

/// `coefficient · ⊗_j I_{a_j}` on `n` spins.
pub fn build_operator(spec: &ProductOperatorSpec, n: usize) -> Result<Operator> {
    if spec.labels.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: spec.labels.len(),
        });
    }
    let factors: Vec<_> = spec.labels.iter().map(|p| p.matrix()).collect();
    Ok(Operator(kron_factors(&factors) * C64::new(spec.coefficient, 0.0)))
}

/// Single-spin operator `I_{spin,axis}` (1-based spin) without prefactor.
pub fn single_spin(n: usize, spin: usize, axis: Pauli) -> Result<Operator> {
    if spin == 0 || spin > n {
        return Err(Error::SpinOutOfRange { spin, n });
    }
    let mut labels = vec![Pauli::Identity; n];
    labels[spin - 1] = axis;
    build_operator(&ProductOperatorSpec::with_coefficient(labels, 1.0), n)
}

/// Value of `m_z` (±1/2) of spin `spin` (1-based) in basis state `index`.
pub fn spin_z_value(n: usize, spin: usize, index: usize) -> f64 {
    if (index >> (n - spin)) & 1 == 0 {
        0.5
    } else {
        -0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_iz_is_half_diagonal() {
        let op = build_operator(&ProductOperatorSpec::with_coefficient(vec![Pauli::Z], 1.0), 1)
            .unwrap();
        assert_eq!(op.0[[0, 0]], C64::new(0.5, 0.0));
        assert_eq!(op.0[[1, 1]], C64::new(-0.5, 0.0));
        assert_eq!(op.0[[0, 1]], C64::new(0.0, 0.0));
    }

    #[test]
    fn ix_tensor_identity_blocks() {
        let spec = ProductOperatorSpec::with_coefficient(vec![Pauli::X, Pauli::Identity], 1.0);
        let op = build_operator(&spec, 2).unwrap();
        // I_x ⊗ 1 couples |0a⟩ with |1a⟩.
        for (r, c) in [(0, 2), (2, 0), (1, 3), (3, 1)] {
            assert_eq!(op.0[[r, c]], C64::new(0.5, 0.0));
        }
        let nnz = op.0.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nnz, 4);
    }

    #[test]
    fn three_spin_target_normalization() {
        let op = build_operator(&ProductOperatorSpec::chain_target(3), 3).unwrap();
        assert_eq!(ProductOperatorSpec::chain_target(3).coefficient, 4.0);
        let sq = op.dot(&op).trace();
        assert_abs_diff_eq!(sq.re, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sq.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let spec = ProductOperatorSpec::parse("xz").unwrap();
        assert!(matches!(
            build_operator(&spec, 3),
            Err(Error::LengthMismatch {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn built_operators_are_hermitian() {
        for s in ["xyz", "yy1", "1zx", "zzz"] {
            let op = build_operator(&ProductOperatorSpec::parse(s).unwrap(), 3).unwrap();
            assert!(op.hermiticity_error() < 1e-15, "{s}");
        }
    }

    #[test]
    fn spin_commutation_relation() {
        let x = single_spin(2, 1, Pauli::X).unwrap();
        let y = single_spin(2, 1, Pauli::Y).unwrap();
        let z = single_spin(2, 1, Pauli::Z).unwrap();
        // [I_x, I_y] = i I_z
        let c = x.commutator(&y);
        let expect = Operator(z.0.mapv(|v| v * C64::new(0.0, 1.0)));
        assert!(c.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn parse_and_display() {
        let spec = ProductOperatorSpec::parse("yyz").unwrap();
        assert_eq!(spec.to_string(), "4 I1y I2y I3z");
        assert!(ProductOperatorSpec::parse("xq").is_err());
        assert!(!ProductOperatorSpec::parse("111").unwrap().is_traceless());
    }
}
