//! Resonant Jaynes–Cummings model: a two-level system driven by a single
//! truncated bosonic mode.
//!
//! Basis conventions: the drive slot holds Fock states `|0⟩ … |N−1⟩`, the
//! system slot holds `|g⟩` (index 0) and `|e⟩` (index 1), so the composite
//! index of `|n, s⟩` is `2n + s`. With ħ = 1 and `ω` the common resonance
//! frequency,
//!
//! `H = (ω/2) I⊗σ_z + ω b†b⊗I + g (b⊗σ₊ + b†⊗σ₋)`.

use serde::{Deserialize, Serialize};

use crate::composite::{CompositeHamiltonian, FactorizedCoupling};
use crate::dynamics::{LindbladSet, Trajectory};
use crate::energetics::{lindblad_ledger, EnergyLedger};
use crate::error::{Error, Result};
use crate::layout::{HilbertLayout, Slot};
use crate::linalg::{dagger, hermitian_eig, kron, outer, real, zeros, CMatrix, C64, I};

/// Truncation norm that a coherent state must retain.
pub const COHERENT_NORM_TOL: f64 = 1e-8;
/// Golden-rule rates at or below this are dropped.
pub const RATE_FLOOR: f64 = 1e-14;
/// Smallest energy gap treated as a downward transition.
pub const GAP_TOL: f64 = 1e-12;
/// Power level below which a dissipative run counts as stationary.
pub const STATIONARY_POWER: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JCParams {
    pub omega: f64,
    pub g: f64,
    /// Number of Fock levels kept for the drive.
    pub n_trunc: usize,
}

impl JCParams {
    pub fn new(g: f64, n_trunc: usize) -> Result<Self> {
        let p = Self {
            omega: 1.0,
            g,
            n_trunc,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidArgument(format!("g must be positive, got {}", self.g)));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidArgument(format!("omega must be positive, got {}", self.omega)));
        }
        if self.n_trunc < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_trunc must be at least 2, got {}",
                self.n_trunc
            )));
        }
        Ok(())
    }

    /// `Ω_n = g √(n+1)`
    pub fn rabi(&self, n: usize) -> f64 {
        self.g * ((n + 1) as f64).sqrt()
    }
}

/// `ceil(n̄ + 10√n̄ + 10)` Fock levels for a coherent state of mean `n̄`.
pub fn default_truncation(nbar: f64) -> usize {
    (nbar + 10.0 * nbar.sqrt() + 10.0).ceil() as usize
}

/// Default truncation for a Fock drive state `|n⟩`.
pub fn default_fock_truncation(n: usize) -> usize {
    n + 4
}

/// Pure drive state `Σ a_n |n⟩` on the truncated Fock space. Amplitudes are
/// never renormalized after truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveState {
    pub amplitudes: Vec<C64>,
}

impl DriveState {
    pub fn fock(n: usize, n_trunc: usize) -> Result<Self> {
        if n >= n_trunc {
            return Err(Error::InsufficientTruncation {
                given: n_trunc,
                required: n + 1,
                deficit: 1.0,
            });
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); n_trunc];
        amplitudes[n] = real(1.0);
        Ok(Self { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `1 − Σ|a_n|²`
    pub fn norm_deficit(&self) -> f64 {
        1.0 - self.populations().iter().sum::<f64>()
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.populations()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// `⟨b⟩ = Σ a_n* a_{n+1} √(n+1)`
    pub fn mean_annihilation(&self) -> C64 {
        self.amplitudes
            .windows(2)
            .enumerate()
            .map(|(n, w)| w[0].conj() * w[1] * ((n + 1) as f64).sqrt())
            .sum()
    }

    pub fn density(&self) -> CMatrix {
        let v = ndarray::Array1::from(self.amplitudes.clone());
        outer(&v, &v)
    }
}

/// Poisson weights `e^{−n̄} n̄^n / n!` for `n < len`, computed in log space.
pub fn poisson_weights(nbar: f64, len: usize) -> Vec<f64> {
    if nbar == 0.0 {
        let mut w = vec![0.0; len];
        if len > 0 {
            w[0] = 1.0;
        }
        return w;
    }
    let ln_nbar = nbar.ln();
    let mut ln_fact = 0.0;
    (0..len)
        .map(|n| {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            (-nbar + n as f64 * ln_nbar - ln_fact).exp()
        })
        .collect()
}

/// `|α⟩ = e^{−|α|²/2} Σ α^n/√(n!) |n⟩` truncated to `n_trunc` levels.
pub fn coherent_state(alpha: C64, n_trunc: usize) -> Result<DriveState> {
    let nbar = alpha.norm_sqr();
    let weights = poisson_weights(nbar, n_trunc);
    let deficit = 1.0 - weights.iter().sum::<f64>();
    if deficit > COHERENT_NORM_TOL {
        let mut required = n_trunc;
        let mut tail = deficit;
        let mut w = *weights.last().unwrap_or(&(-nbar).exp());
        let mut n = n_trunc;
        // extend the Poisson recurrence until the tail is small enough
        while tail > COHERENT_NORM_TOL {
            w = if n == 0 { (-nbar).exp() } else { w * nbar / n as f64 };
            tail -= w;
            n += 1;
            required = n;
        }
        return Err(Error::InsufficientTruncation {
            given: n_trunc,
            required,
            deficit,
        });
    }
    let phase = alpha.arg();
    let amplitudes = weights
        .iter()
        .enumerate()
        .map(|(n, w)| C64::from_polar(w.sqrt(), phase * n as f64))
        .collect();
    Ok(DriveState { amplitudes })
}

pub fn annihilation(n_trunc: usize) -> CMatrix {
    let mut b = zeros(n_trunc);
    for n in 1..n_trunc {
        b[[n - 1, n]] = real((n as f64).sqrt());
    }
    b
}

pub fn number(n_trunc: usize) -> CMatrix {
    crate::linalg::from_real_diag(&(0..n_trunc).map(|n| n as f64).collect::<Vec<_>>())
}

/// `|e⟩⟨g|`
pub fn sigma_plus() -> CMatrix {
    let mut s = zeros(2);
    s[[1, 0]] = real(1.0);
    s
}

pub fn sigma_minus() -> CMatrix {
    dagger(&sigma_plus())
}

/// `|e⟩⟨e| − |g⟩⟨g|`
pub fn sigma_z() -> CMatrix {
    crate::linalg::from_real_diag(&[-1.0, 1.0])
}

pub fn sigma_x() -> CMatrix {
    sigma_plus() + sigma_minus()
}

/// `−i(σ₊ − σ₋)`
pub fn sigma_y() -> CMatrix {
    (sigma_plus() - sigma_minus()).mapv(|z| -I * z)
}

pub fn excited() -> CMatrix {
    crate::linalg::from_real_diag(&[0.0, 1.0])
}

pub fn jc_layout(params: &JCParams) -> Result<HilbertLayout> {
    HilbertLayout::bipartite(params.n_trunc, 2)
}

/// The coupling `g(b⊗σ₊ + b†⊗σ₋)` in Hermitian quadrature form
/// `B₁⊗A₁ + B₂⊗A₂` with `B₁ = (b+b†)/√2`, `B₂ = i(b−b†)/√2`,
/// `A₁ = (g/√2)σ_x`, `A₂ = (g/√2)σ_y`.
pub fn jc_couplings(params: &JCParams) -> Result<FactorizedCoupling> {
    let b = annihilation(params.n_trunc);
    let bd = dagger(&b);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let b1 = (&b + &bd).mapv(|z| z * r);
    let b2 = (&b - &bd).mapv(|z| I * z * r);
    let a1 = sigma_x().mapv(|z| z * (params.g * r));
    let a2 = sigma_y().mapv(|z| z * (params.g * r));
    FactorizedCoupling::new(Slot::Drive, Slot::System, vec![(b1, a1), (b2, a2)])
}

pub fn build_jc(params: &JCParams) -> Result<CompositeHamiltonian> {
    params.validate()?;
    let h_s = sigma_z().mapv(|z| z * (0.5 * params.omega));
    let h_d = number(params.n_trunc).mapv(|z| z * params.omega);
    Ok(CompositeHamiltonian::bipartite(h_s, h_d, jc_couplings(params)?))
}

/// `b†b⊗I + I⊗|e⟩⟨e|`
pub fn excitation_number(params: &JCParams) -> CMatrix {
    kron(&number(params.n_trunc), &crate::linalg::identity(2))
        + kron(&crate::linalg::identity(params.n_trunc), &excited())
}

/// `ρ_D ⊗ |e⟩⟨e|`
pub fn excited_initial_state(state: &DriveState) -> CMatrix {
    kron(&state.density(), &excited())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WorkFormula {
    /// Drive in the Fock state `|n⟩`.
    QuantumFock { n: usize },
    /// Classical drive with coherent amplitude `α`.
    ClassicalCoherent { alpha: C64 },
    /// Quantum drive in the coherent state `|α⟩`, series truncated at
    /// `n_trunc` terms.
    QuantumCoherent { alpha: C64 },
}

/// Injected work for the system starting in `|e⟩`.
pub fn closed_form_work(formula: WorkFormula, params: &JCParams, t: f64) -> f64 {
    let w = params.omega;
    match formula {
        WorkFormula::QuantumFock { n } => -w * (params.rabi(n) * t).sin().powi(2),
        WorkFormula::ClassicalCoherent { alpha } => -w * (params.g * alpha.norm() * t).sin().powi(2),
        WorkFormula::QuantumCoherent { alpha } => {
            let p = poisson_weights(alpha.norm_sqr(), params.n_trunc);
            -w * p
                .iter()
                .enumerate()
                .map(|(n, pn)| pn * (params.rabi(n) * t).sin().powi(2))
                .sum::<f64>()
        }
    }
}

/// `(ω/2)σ_z + e^{−iωt} S σ₊ + e^{iωt} S* σ₋` with `S = g⟨b⟩` of the
/// initial drive state.
pub fn jc_classical_hamiltonian(state: &DriveState, params: &JCParams, t: f64) -> CMatrix {
    let s = state.mean_annihilation() * params.g * (-I * params.omega * t).exp();
    sigma_z().mapv(|z| z * (0.5 * params.omega))
        + sigma_plus().mapv(|z| z * s)
        + sigma_minus().mapv(|z| z * s.conj())
}

/// Golden-rule jump operators `√γ |φ⟩⟨ϕ|` between JC eigenstates with
/// `ε_ϕ > ε_φ` and `γ = Θ |⟨φ| I⊗σ_x |ϕ⟩|²`.
pub fn golden_rule_dissipator(params: &JCParams, theta: f64) -> Result<LindbladSet> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!("theta must be non-negative, got {theta}")));
    }
    if theta == 0.0 {
        return Ok(LindbladSet::empty());
    }
    let layout = jc_layout(params)?;
    let h = build_jc(params)?.lift_parts(&layout)?.total();
    let eig = hermitian_eig(&h)?;
    let sx = crate::composite::lift(&sigma_x(), &layout, Slot::System)?;
    let m = eig.to_eigenbasis(&sx);
    let n = eig.dim();
    let mut jumps = Vec::new();
    for source in 0..n {
        for target in 0..n {
            if eig.values[source] - eig.values[target] <= GAP_TOL {
                continue;
            }
            let rate = theta * m[[target, source]].norm_sqr();
            if rate <= RATE_FLOOR {
                continue;
            }
            let to = eig.vectors.column(target).to_owned();
            let from = eig.vectors.column(source).to_owned();
            jumps.push(outer(&to, &from).mapv(|z| z * rate.sqrt()));
        }
    }
    LindbladSet::new(jumps)
}

/// Outcome of a dissipative run from `|0⟩⊗|e⟩`.
#[derive(Clone, Debug)]
pub struct DissipativeRun {
    pub ledger: EnergyLedger,
    pub trajectory: Trajectory,
    pub jump_count: usize,
    /// First stored time after which all powers stay below
    /// [`STATIONARY_POWER`].
    pub settling_time: f64,
}

/// Reduced-model run with golden-rule decay from `|0⟩⊗|e⟩`. Fails with
/// [`Error::NotConverged`] if the powers have not settled by `t_max`.
pub fn fig2_experiment(
    params: &JCParams,
    theta: f64,
    t_max: f64,
    step: f64,
    stride: usize,
) -> Result<DissipativeRun> {
    let layout = jc_layout(params)?;
    let ch = build_jc(params)?;
    let ls = golden_rule_dissipator(params, theta)?;
    let rho0 = excited_initial_state(&DriveState::fock(0, params.n_trunc)?);
    let (ledger, trajectory) = lindblad_ledger(&rho0, &ch, &ls, &layout, t_max, step, stride)?;
    let settling_time = ledger.settling_time(STATIONARY_POWER).ok_or_else(|| {
        let power = ledger
            .powers
            .last()
            .map(|p| p.iter().fold(0.0f64, |m, x| m.max(x.abs())))
            .unwrap_or(f64::NAN);
        Error::NotConverged { t_max, power }
    })?;
    Ok(DissipativeRun {
        ledger,
        trajectory,
        jump_count: ls.len(),
        settling_time,
    })
}

/// True when `signal` first drops below `collapse` and later rises above
/// `revival`.
pub fn shows_revival(signal: &[f64], collapse: f64, revival: f64) -> bool {
    match signal.iter().position(|x| *x < collapse) {
        Some(i) => signal[i..].iter().any(|x| *x > revival),
        None => false,
    }
}
