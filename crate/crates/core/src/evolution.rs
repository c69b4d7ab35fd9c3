//! Exact unitary evolution of density operators.

use ndarray::{Array2, ShapeBuilder};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};
use crate::operator::{single_spin, Operator, Pauli};
use crate::pulse::ShapedPulse;
use crate::system::{control_hamiltonian, drift_hamiltonian, validate_channels, SpinSystem};
use crate::C64;

/// Relative tolerance for accepting a generator as Hermitian.
const HERMITIAN_TOL: f64 = 1e-10;

fn check_hermitian(h: &Operator) -> Result<()> {
    let scale = h.0.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let err = h.hermiticity_error();
    if err > HERMITIAN_TOL * scale {
        return Err(Error::NonHermitian(err));
    }
    Ok(())
}

/// `exp(-i H t)` for Hermitian `H` through its eigendecomposition.
pub fn unitary(h: &Operator, t: f64) -> Result<Operator> {
    check_hermitian(h)?;
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    Ok(Operator(expm_hermitian(&h.0, t)?))
}

/// Eigendecomposition `H = V diag(λ) V†` of a Hermitian matrix.
pub(crate) fn eigh_hermitian(h: &Array2<C64>) -> Result<(ndarray::Array1<f64>, Array2<C64>)> {
    // LAPACK sees a row-major array as its transpose, which for a Hermitian
    // matrix is the conjugate. Hand it column-major storage instead.
    let mut f = Array2::<C64>::zeros(h.raw_dim().f());
    f.assign(h);
    Ok(f.eigh(UPLO::Upper)?)
}

pub(crate) fn expm_hermitian(h: &Array2<C64>, t: f64) -> Result<Array2<C64>> {
    let (vals, vecs) = eigh_hermitian(h)?;
    let mut scaled = vecs.clone();
    for (k, mut col) in scaled.columns_mut().into_iter().enumerate() {
        let phase = C64::from_polar(1.0, -vals[k] * t);
        col.mapv_inplace(|z| z * phase);
    }
    Ok(scaled.dot(&vecs.t().mapv(|z| z.conj())))
}

/// `U ρ U†`.
pub fn conjugate(u: &Operator, rho: &Operator) -> Operator {
    Operator(u.0.dot(&rho.0).dot(&u.0.t().mapv(|z| z.conj())))
}

/// `ρ → U ρ U†` with `U = exp(-i H t)`.
pub fn propagate(state: &Operator, h: &Operator, t: f64) -> Result<Operator> {
    if state.dim() != h.dim() {
        return Err(Error::DimensionMismatch(state.dim(), h.dim()));
    }
    if t == 0.0 {
        check_hermitian(h)?;
        return Ok(state.clone());
    }
    Ok(conjugate(&unitary(h, t)?, state))
}

/// `H_d + Σ_c u_c H_c` for one segment.
pub fn segment_hamiltonian(
    drift: &Operator,
    controls: &[Operator],
    amplitudes: impl IntoIterator<Item = f64>,
) -> Operator {
    let mut h = drift.0.clone();
    for (hc, u) in controls.iter().zip(amplitudes) {
        if u != 0.0 {
            h.scaled_add(C64::new(u, 0.0), &hc.0);
        }
    }
    Operator(h)
}

/// Segment propagators of a shaped pulse on `system`.
pub fn pulse_propagators(system: &SpinSystem, pulse: &ShapedPulse) -> Result<Vec<Operator>> {
    validate_channels(pulse.channels(), system.n())?;
    let drift = drift_hamiltonian(system);
    let controls = pulse
        .channels()
        .iter()
        .map(|c| control_hamiltonian(*c, system.n()))
        .collect::<Result<Vec<_>>>()?;
    (0..pulse.segment_count())
        .map(|j| {
            let h = segment_hamiltonian(&drift, &controls, pulse.segment(j).iter().copied());
            unitary(&h, pulse.segment_duration())
        })
        .collect()
}

/// Full propagator of a shaped pulse (last segment leftmost).
pub fn pulse_propagator(system: &SpinSystem, pulse: &ShapedPulse) -> Result<Operator> {
    let mut u = Operator::identity(system.dim());
    for seg in pulse_propagators(system, pulse)? {
        u = seg.dot(&u);
    }
    Ok(u)
}

/// Piecewise-constant evolution of `state` through every segment of `pulse`.
pub fn evolve_pulse(state: &Operator, system: &SpinSystem, pulse: &ShapedPulse) -> Result<Operator> {
    if state.dim() != system.dim() {
        return Err(Error::DimensionMismatch(state.dim(), system.dim()));
    }
    let mut rho = state.clone();
    for u in pulse_propagators(system, pulse)? {
        rho = conjugate(&u, &rho);
    }
    Ok(rho)
}

/// Free evolution under the drift Hamiltonian for `t` seconds.
pub fn free_evolution(state: &Operator, system: &SpinSystem, t: f64) -> Result<Operator> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    // The drift is diagonal, so its exponential is a phase per basis state.
    let d = system.drift_diagonal();
    let mut rho = state.0.clone();
    for ((i, j), z) in rho.indexed_iter_mut() {
        *z *= C64::from_polar(1.0, -(d[i] - d[j]) * t);
    }
    Ok(Operator(rho))
}

/// Ideal instantaneous rotation of `spin` by `flip` about the transverse
/// axis at `phase` (0 = x, π/2 = y): `exp(-i flip (cos φ I_x + sin φ I_y))`.
pub fn rotation(n: usize, spin: usize, phase: f64, flip: f64) -> Result<Operator> {
    let ix = single_spin(n, spin, Pauli::X)?;
    let iy = single_spin(n, spin, Pauli::Y)?;
    let g = &ix.scale(phase.cos()) + &iy.scale(phase.sin());
    if flip < 0.0 {
        return unitary(&g.scale(-1.0), -flip);
    }
    unitary(&g, flip)
}

/// Normalized real overlap
/// `F = Re Tr(target† final) / (‖target‖_F ‖initial‖_F)`.
pub fn transfer_fidelity(final_state: &Operator, target: &Operator, initial: &Operator) -> Result<f64> {
    if final_state.dim() != target.dim() {
        return Err(Error::DimensionMismatch(final_state.dim(), target.dim()));
    }
    if initial.dim() != target.dim() {
        return Err(Error::DimensionMismatch(initial.dim(), target.dim()));
    }
    let nt = target.frobenius_norm();
    let ni = initial.frobenius_norm();
    if nt == 0.0 {
        return Err(Error::ZeroNorm("target"));
    }
    if ni == 0.0 {
        return Err(Error::ZeroNorm("initial state"));
    }
    Ok(target.inner(final_state).re / (nt * ni))
}
