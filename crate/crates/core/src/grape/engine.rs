//! Block-diagonal fidelity and gradient evaluation.
//!
//! Spins without a control channel keep their `I_z` eigenvalue, so every
//! segment propagator is block-diagonal in the bits of those spins. Each
//! block is a Hamiltonian on the driven spins alone, with the passive spins
//! entering only through the diagonal drift. Only the off-diagonal blocks
//! `(a, b)` populated by the initial state are ever propagated.

use ndarray::{Array1, Array2, Zip};

use super::{GradientMode, TransferProblem};
use crate::error::{Error, Result};
use crate::evolution::eigh_hermitian;
use crate::pulse::ShapedPulse;
use crate::system::{control_hamiltonian, ControlChannel};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Debug)]
struct Pair {
    a: usize,
    b: usize,
    rho0: Array2<C64>,
    target: Array2<C64>,
}

/// Eigendecomposition of one block Hamiltonian and its propagator.
struct Eig {
    values: Array1<f64>,
    vectors: Array2<C64>,
    u: Array2<C64>,
}

/// Precomputed block structure of a transfer problem at fixed segment grid.
#[derive(Clone, Debug)]
pub struct GrapeModel {
    channels: Vec<ControlChannel>,
    segments: usize,
    dt: f64,
    /// Drift diagonal of each used block (local basis order).
    drift: Vec<Vec<f64>>,
    /// Control Hamiltonians on the driven spins only.
    controls: Vec<Array2<C64>>,
    pairs: Vec<Pair>,
    norm: f64,
}

fn adjoint(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// `Re Tr(A† B)`.
fn re_inner(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |s, x, y| s + (x.conj() * y).re)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl GrapeModel {
    pub fn new(problem: &TransferProblem, segments: usize, duration: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidConfig(format!("pulse duration {duration}")));
        }
        if segments == 0 {
            return Err(Error::InvalidConfig("zero segments".into()));
        }
        let sys = &problem.system;
        let n = sys.n();
        let mut active: Vec<usize> = problem.channels.iter().map(|c| c.spin).collect();
        active.sort_unstable();
        active.dedup();
        let passive: Vec<usize> = (1..=n).filter(|s| !active.contains(s)).collect();
        let na = active.len();
        let d = 1usize << na;
        let nb = 1usize << passive.len();

        // Global index of (block, local) given the spin bit layout.
        let bit = |s: usize| n - s;
        let global = |block: usize, local: usize| -> usize {
            let mut g = 0usize;
            for (i, &s) in active.iter().enumerate() {
                g |= ((local >> (na - 1 - i)) & 1) << bit(s);
            }
            for (i, &s) in passive.iter().enumerate() {
                g |= ((block >> (passive.len() - 1 - i)) & 1) << bit(s);
            }
            g
        };

        let rho0 = problem.initial_operator()?;
        let target = problem.target_operator()?;
        let norm = rho0.frobenius_norm() * target.frobenius_norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm("transfer operators"));
        }

        let block_of = |m: &Array2<C64>, a: usize, b: usize| {
            Array2::from_shape_fn((d, d), |(i, j)| m[[global(a, i), global(b, j)]])
        };
        let mut used = vec![usize::MAX; nb];
        let mut blocks = Vec::new();
        let mut pairs = Vec::new();
        for a in 0..nb {
            for b in 0..nb {
                let r = block_of(&rho0.0, a, b);
                if r.iter().all(|z| *z == ZERO) {
                    continue;
                }
                for x in [a, b] {
                    if used[x] == usize::MAX {
                        used[x] = blocks.len();
                        blocks.push(x);
                    }
                }
                pairs.push(Pair {
                    a: used[a],
                    b: used[b],
                    target: block_of(&target.0, a, b),
                    rho0: r,
                });
            }
        }
        let diag = sys.drift_diagonal();
        let drift = blocks
            .iter()
            .map(|&blk| (0..d).map(|l| diag[global(blk, l)]).collect())
            .collect();
        let controls = problem
            .channels
            .iter()
            .map(|c| {
                let pos = active.iter().position(|&s| s == c.spin).unwrap() + 1;
                Ok(control_hamiltonian(ControlChannel::new(pos, c.axis), na)?.0)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GrapeModel {
            channels: problem.channels.clone(),
            segments,
            dt: duration / segments as f64,
            drift,
            controls,
            pairs,
            norm,
        })
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn segment_duration(&self) -> f64 {
        self.dt
    }

    pub fn channels(&self) -> &[ControlChannel] {
        &self.channels
    }

    /// Dimension of each propagated block.
    pub fn block_dim(&self) -> usize {
        self.drift[0].len()
    }

    /// Number of (row block, column block) pairs tracked.
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    fn check(&self, amps: &Array2<f64>) -> Result<()> {
        if amps.dim() != (self.segments, self.channels.len()) {
            return Err(Error::InvalidPulse(format!(
                "amplitude matrix {:?} for {} segments and {} channels",
                amps.dim(),
                self.segments,
                self.channels.len()
            )));
        }
        Ok(())
    }

    fn eig(&self, slot: usize, row: ndarray::ArrayView1<'_, f64>) -> Result<Eig> {
        let drift = &self.drift[slot];
        let d = drift.len();
        let mut h = Array2::from_shape_fn((d, d), |(i, j)| {
            if i == j {
                C64::new(drift[i], 0.0)
            } else {
                ZERO
            }
        });
        for (hc, &u) in self.controls.iter().zip(row.iter()) {
            if u != 0.0 {
                h.scaled_add(C64::new(u, 0.0), hc);
            }
        }
        let (values, vectors) = eigh_hermitian(&h)?;
        let phases = values.mapv(|l| C64::from_polar(1.0, -l * self.dt));
        let mut vd = vectors.clone();
        for (mut col, p) in vd.columns_mut().into_iter().zip(phases.iter()) {
            col *= *p;
        }
        let u = vd.dot(&adjoint(&vectors));
        Ok(Eig { values, vectors, u })
    }

    fn segment_eigs(&self, row: ndarray::ArrayView1<'_, f64>) -> Result<Vec<Eig>> {
        (0..self.drift.len()).map(|s| self.eig(s, row)).collect()
    }

    fn step(&self, eigs: &[Eig], rho: &[Array2<C64>]) -> Vec<Array2<C64>> {
        self.pairs
            .iter()
            .zip(rho)
            .map(|(p, r)| eigs[p.a].u.dot(r).dot(&adjoint(&eigs[p.b].u)))
            .collect()
    }

    fn overlap(&self, rho: &[Array2<C64>]) -> f64 {
        self.pairs
            .iter()
            .zip(rho)
            .map(|(p, r)| re_inner(&p.target, r))
            .sum::<f64>()
            / self.norm
    }

    /// Transfer fidelity of the amplitude matrix (`segments × channels`, Hz).
    pub fn fidelity(&self, amps: &Array2<f64>) -> Result<f64> {
        self.check(amps)?;
        let mut rho: Vec<_> = self.pairs.iter().map(|p| p.rho0.clone()).collect();
        for row in amps.rows() {
            rho = self.step(&self.segment_eigs(row)?, &rho);
        }
        Ok(self.overlap(&rho))
    }

    /// Fidelity and `∂F/∂u_c(j)` in 1/Hz, laid out like `amps`.
    pub fn fidelity_and_gradient(
        &self,
        amps: &Array2<f64>,
        mode: GradientMode,
    ) -> Result<(f64, Array2<f64>)> {
        self.check(amps)?;
        let n = self.segments;
        let mut eigs = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n + 1);
        states.push(self.pairs.iter().map(|p| p.rho0.clone()).collect::<Vec<_>>());
        for row in amps.rows() {
            let e = self.segment_eigs(row)?;
            let next = self.step(&e, states.last().unwrap());
            states.push(next);
            eigs.push(e);
        }
        let fid = self.overlap(&states[n]);

        let mut grad = Array2::zeros(amps.raw_dim());
        let mut lam: Vec<_> = self.pairs.iter().map(|p| p.target.clone()).collect();
        let dt = self.dt;
        for j in (0..n).rev() {
            let rho = &states[j + 1];
            match mode {
                GradientMode::Exact => {
                    // S_a = Σ_b ρ_ab Λ_ab† after the segment; the derivative of
                    // the segment exponential is taken in its eigenbasis.
                    let d = self.drift[0].len();
                    let mut s = vec![Array2::<C64>::zeros((d, d)); self.drift.len()];
                    for ((p, r), l) in self.pairs.iter().zip(rho).zip(&lam) {
                        s[p.a] = &s[p.a] + &r.dot(&adjoint(l));
                    }
                    for (slot, sa) in s.iter().enumerate() {
                        let e = &eigs[j][slot];
                        let v = &e.vectors;
                        let m = adjoint(v).dot(sa).dot(v);
                        let lv = &e.values;
                        let wt = Array2::from_shape_fn((d, d), |(l, k)| {
                            let x = (lv[k] - lv[l]) * dt / 2.0;
                            let phi = C64::new(0.0, -dt)
                                * C64::from_polar(1.0, -(lv[k] + lv[l]) * dt / 2.0)
                                * sinc(x);
                            phi * C64::from_polar(1.0, lv[l] * dt) * m[[l, k]]
                        });
                        let q = v.dot(&wt).dot(&adjoint(v));
                        for (c, hc) in self.controls.iter().enumerate() {
                            // Re Tr(H_c Q) with H_c Hermitian.
                            grad[[j, c]] += 2.0 * re_inner(hc, &q) / self.norm;
                        }
                    }
                }
                GradientMode::FirstOrder => {
                    let mi = C64::new(0.0, -dt);
                    for (r, l) in rho.iter().zip(&lam) {
                        for (c, hc) in self.controls.iter().enumerate() {
                            let comm = hc.dot(r) - r.dot(hc);
                            grad[[j, c]] += re_inner(l, &comm.mapv(|z| z * mi)) / self.norm;
                        }
                    }
                }
            }
            lam = self
                .pairs
                .iter()
                .zip(&lam)
                .map(|(p, l)| adjoint(&eigs[j][p.a].u).dot(l).dot(&eigs[j][p.b].u))
                .collect();
        }
        Ok((fid, grad))
    }

    /// Wrap an amplitude matrix as a pulse on this model's channels.
    pub fn to_pulse(&self, amps: Array2<f64>) -> Result<ShapedPulse> {
        ShapedPulse::new(self.channels.clone(), self.dt, amps)
    }

    /// Gradient of `pulse`, whose channels and grid must match the model.
    pub fn gradient(&self, pulse: &ShapedPulse, mode: GradientMode) -> Result<Array2<f64>> {
        if pulse.channels() != self.channels.as_slice() {
            return Err(Error::InvalidPulse("pulse channels differ from the problem".into()));
        }
        if (pulse.segment_duration() - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::InvalidPulse("pulse segment duration differs from the model".into()));
        }
        Ok(self.fidelity_and_gradient(pulse.amplitudes(), mode)?.1)
    }
}
