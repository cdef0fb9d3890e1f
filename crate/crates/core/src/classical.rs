//! Classical-driving limit: the drive evolves freely and enters the system
//! only through the expectations `⟨B_α⟩_D(t)` of its coupling factors.

use crate::composite::{lift, FactorizedCoupling};
use crate::dynamics::{evolve_time_dependent_with, SpectralSeries, Trajectory, UnitaryEvolution};
use crate::energetics::{injected_power, LedgerBuilder, PowerSample};
use crate::error::{Error, Result};
use crate::jc::{build_jc, coherent_state, jc_classical_hamiltonian, jc_layout, JCParams};
use crate::layout::{HilbertLayout, Slot};
use crate::linalg::{
    commutator, ensure_hermitian, ensure_same_dim, ensure_square, expectation, hermitian_eig,
    identity, kron, zeros, CMatrix, C64, I,
};

/// Free drive evolution plus the couplings through which it acts.
#[derive(Clone, Debug)]
pub struct ClassicalDriveSpec {
    h_d: CMatrix,
    rho_d0: CMatrix,
    couplings: FactorizedCoupling,
    de_couplings: Option<FactorizedCoupling>,
    drive: UnitaryEvolution,
    b_series: Vec<SpectralSeries>,
    b_rate_series: Vec<SpectralSeries>,
    c_series: Vec<SpectralSeries>,
}

impl ClassicalDriveSpec {
    /// `couplings` holds the `B_α ⊗ A_α` pairs of `H_SD`; `de_couplings` the
    /// `C_α ⊗ D_α` pairs of `H_DE`.
    pub fn new(
        h_d: CMatrix,
        rho_d0: CMatrix,
        couplings: FactorizedCoupling,
        de_couplings: Option<FactorizedCoupling>,
    ) -> Result<Self> {
        ensure_same_dim(&h_d, &rho_d0, "classical drive")?;
        ensure_hermitian(&h_d, "H_D")?;
        crate::composite::validate_density(&rho_d0, "initial drive state")?;
        let n = h_d.nrows();
        let check = |c: &FactorizedCoupling, right: Slot| -> Result<()> {
            if c.left() != Slot::Drive || c.right() != right {
                return Err(Error::Layout(format!(
                    "expected a D–{right} coupling, got {}–{}",
                    c.left(),
                    c.right()
                )));
            }
            if c.left_dim() != n {
                return Err(Error::DimensionMismatch {
                    context: "classical drive coupling",
                    expected: n,
                    found: c.left_dim(),
                });
            }
            Ok(())
        };
        check(&couplings, Slot::System)?;
        if let Some(de) = &de_couplings {
            check(de, Slot::Environment)?;
        }
        let drive = UnitaryEvolution::new(&h_d, &rho_d0)?;
        let series = |ops: &mut dyn Iterator<Item = CMatrix>| -> Result<Vec<SpectralSeries>> {
            ops.map(|op| drive.series(&op)).collect()
        };
        let b_series = series(&mut couplings.terms().iter().map(|(b, _)| b.clone()))?;
        // ∂_t⟨B⟩ = −i Tr{ρ_D [B, H_D]}
        let rate_ops: Vec<CMatrix> = couplings
            .terms()
            .iter()
            .map(|(b, _)| Ok(commutator(b, &h_d)?.mapv(|z| -I * z)))
            .collect::<Result<_>>()?;
        let b_rate_series = series(&mut rate_ops.into_iter())?;
        let c_series = match &de_couplings {
            Some(de) => series(&mut de.terms().iter().map(|(c, _)| c.clone()))?,
            None => Vec::new(),
        };
        Ok(Self {
            h_d,
            rho_d0,
            couplings,
            de_couplings,
            drive,
            b_series,
            b_rate_series,
            c_series,
        })
    }

    pub fn h_d(&self) -> &CMatrix {
        &self.h_d
    }

    pub fn rho_d0(&self) -> &CMatrix {
        &self.rho_d0
    }

    pub fn couplings(&self) -> &FactorizedCoupling {
        &self.couplings
    }

    pub fn de_couplings(&self) -> Option<&FactorizedCoupling> {
        self.de_couplings.as_ref()
    }

    pub fn system_dim(&self) -> usize {
        self.couplings.right_dim()
    }

    /// `ρ_D(t) = e^{−iH_D t} ρ_D(0) e^{iH_D t}`
    pub fn drive_state(&self, t: f64) -> CMatrix {
        self.drive.state_at(t)
    }
}

/// `⟨B_α⟩_D(t)` for every coupling term, in order.
pub fn drive_expectations(spec: &ClassicalDriveSpec, t: f64) -> Vec<f64> {
    spec.b_series.iter().map(|s| s.value(t)).collect()
}

/// `∂_t⟨B_α⟩_D(t) = −i Tr_D{ρ_D(t) [B_α, H_D]}`
pub fn drive_expectation_rates(spec: &ClassicalDriveSpec, t: f64) -> Vec<f64> {
    spec.b_rate_series.iter().map(|s| s.value(t)).collect()
}

fn check_system(h_s: &CMatrix, spec: &ClassicalDriveSpec) -> Result<()> {
    let n = ensure_square(h_s, "system Hamiltonian")?;
    if n != spec.system_dim() {
        return Err(Error::DimensionMismatch {
            context: "classical system Hamiltonian",
            expected: spec.system_dim(),
            found: n,
        });
    }
    Ok(())
}

/// `H_CL,S(t) = H_S + Σ_α A_α ⟨B_α⟩_D(t)` on the system space.
pub fn build_classical_hamiltonian(h_s: &CMatrix, spec: &ClassicalDriveSpec, t: f64) -> Result<CMatrix> {
    check_system(h_s, spec)?;
    let mut h = h_s.clone();
    for ((_, a), b) in spec.couplings.terms().iter().zip(drive_expectations(spec, t)) {
        h.scaled_add(C64::new(b, 0.0), a);
    }
    Ok(h)
}

/// `Σ_α D_α ⟨C_α⟩_D(t)` on the environment space, if the drive couples to
/// the environment.
pub fn environment_drive_term(spec: &ClassicalDriveSpec, t: f64) -> Option<CMatrix> {
    let de = spec.de_couplings.as_ref()?;
    let mut h = zeros(de.right_dim());
    for ((_, d), s) in de.terms().iter().zip(&spec.c_series) {
        h.scaled_add(C64::new(s.value(t), 0.0), d);
    }
    Some(h)
}

/// `H_CL(t) = H_CL,S ⊗ I_E + I_S ⊗ (H_E + Σ_α D_α⟨C_α⟩) + H_SE` on `S ⊗ E`.
pub fn classical_se_hamiltonian(
    h_s: &CMatrix,
    h_e: &CMatrix,
    h_se: &FactorizedCoupling,
    spec: &ClassicalDriveSpec,
    t: f64,
) -> Result<CMatrix> {
    let e = ensure_square(h_e, "environment Hamiltonian")?;
    let s = spec.system_dim();
    let layout = HilbertLayout::new(vec![(Slot::System, s), (Slot::Environment, e)])?;
    let h_cl = build_classical_hamiltonian(h_s, spec, t)?;
    let mut env = h_e.clone();
    if let Some(term) = environment_drive_term(spec, t) {
        ensure_same_dim(&env, &term, "environment drive term")?;
        env = env + term;
    }
    Ok(lift(&h_cl, &layout, Slot::System)? + lift(&env, &layout, Slot::Environment)? + h_se.lift(&layout)?)
}

/// Decomposition of the classically injected power.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalPower {
    /// `dW_CL/dt = Tr_S{ρ_S ∂_t H_CL,S}`
    pub injected: f64,
    /// `d⟨H_CL,S⟩/dt`
    pub internal_energy_rate: f64,
    /// `dQ_CL/dt`, zero without a dissipator.
    pub heat_rate: f64,
}

/// Classically injected power for the system state `rho_s` at time `t`.
/// `diss` is the dissipator output `D(ρ_S)` of a reduced environment model.
pub fn classical_power(
    rho_s: &CMatrix,
    spec: &ClassicalDriveSpec,
    h_s: &CMatrix,
    t: f64,
    diss: Option<&CMatrix>,
) -> Result<ClassicalPower> {
    check_system(h_s, spec)?;
    ensure_same_dim(rho_s, h_s, "classical_power")?;
    let mut dh = zeros(spec.system_dim());
    for ((_, a), rate) in spec.couplings.terms().iter().zip(drive_expectation_rates(spec, t)) {
        dh.scaled_add(C64::new(rate, 0.0), a);
    }
    let injected = expectation(rho_s, &dh).re;
    let heat_rate = match diss {
        Some(d) => {
            ensure_same_dim(d, h_s, "classical_power dissipator")?;
            -expectation(d, &build_classical_hamiltonian(h_s, spec, t)?).re
        }
        None => 0.0,
    };
    Ok(ClassicalPower {
        injected,
        internal_energy_rate: injected - heat_rate,
        heat_rate,
    })
}

/// Injected power of the full quantum expression evaluated on the enforced
/// product state `ρ_D(t) ⊗ ρ_S`.
pub fn factorized_injected_power(rho_s: &CMatrix, spec: &ClassicalDriveSpec, h_s: &CMatrix, t: f64) -> Result<f64> {
    check_system(h_s, spec)?;
    let s = spec.system_dim();
    let d = spec.h_d.nrows();
    let layout = HilbertLayout::bipartite(d, s)?;
    let rho = kron(&spec.drive_state(t), rho_s);
    let h_sd = spec.couplings.lift(&layout)?;
    let h_d = kron(&spec.h_d, &identity(s));
    injected_power(&rho, &h_sd, &h_d)
}

/// Classical run of the system alone: RK4 on `H_CL,S(t)` with the injected
/// power integrated by trapezoid at every step. Returns the states and the
/// cumulative work on `grid`.
pub fn integrate_classical_work(
    rho_s0: &CMatrix,
    spec: &ClassicalDriveSpec,
    h_s: &CMatrix,
    grid: &[f64],
    step: f64,
) -> Result<(Trajectory, Vec<f64>)> {
    check_system(h_s, spec)?;
    let mut builder = LedgerBuilder::new(1)?;
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let traj = evolve_time_dependent_with(
        rho_s0,
        |t| build_classical_hamiltonian(h_s, spec, t),
        grid,
        step,
        &mut |t, rho| {
            let p = classical_power(rho, spec, h_s, t, None)?;
            builder.push(
                t,
                PowerSample {
                    injected: p.injected,
                    ..PowerSample::default()
                },
            )?;
            Ok(())
        },
    )?;
    let ledger = builder.finish();
    // pick the cumulative work at the grid times
    let mut j = 0;
    for &t in grid {
        while j < ledger.len() && ledger.times[j] < t - 1e-12 {
            j += 1;
        }
        samples.push((t, ledger.w_q[j.min(ledger.len() - 1)]));
    }
    Ok((traj, samples.into_iter().map(|(_, w)| w).collect()))
}

/// Quantum and classical injected work for the JC model from `|α⟩ ⊗ |e⟩`.
#[derive(Clone, Debug)]
pub struct WorkComparison {
    pub times: Vec<f64>,
    pub w_q: Vec<f64>,
    pub w_cl: Vec<f64>,
    /// `t_q = |α|/g`
    pub t_q: f64,
}

impl WorkComparison {
    /// Largest `|W_Q − W_CL|` over samples with `t ≤ t_end`.
    pub fn max_deviation_until(&self, t_end: f64) -> f64 {
        self.times
            .iter()
            .zip(self.w_q.iter().zip(&self.w_cl))
            .filter(|(t, _)| **t <= t_end)
            .map(|(_, (q, c))| (q - c).abs())
            .fold(0.0, f64::max)
    }
}

/// Both works exactly, without time stepping. `W_Q` is the exact integral
/// of the injected-power spectral series of the full JC evolution. `W_CL`
/// is `⟨H_CL,S⟩(t) − ⟨H_CL,S⟩(0)` along the resonant classical solution,
/// obtained in the frame rotating at `ω`.
pub fn compare_quantum_classical(params: &JCParams, alpha: C64, grid: &[f64]) -> Result<WorkComparison> {
    let layout = jc_layout(params)?;
    let ch = build_jc(params)?;
    let state = coherent_state(alpha, params.n_trunc)?;
    let rho0 = crate::jc::excited_initial_state(&state);
    let parts = ch.lift_parts(&layout)?;
    let evo = UnitaryEvolution::new(&parts.total(), &rho0)?;
    let power = evo.series(&commutator(&parts.h_sd, &parts.h_d)?.mapv(|z| -I * z))?;

    let rho_s0 = crate::jc::excited();
    let h_rot = jc_classical_hamiltonian(&state, params, 0.0) - &ch.h_s;
    let rot_eig = hermitian_eig(&h_rot)?;
    let e0 = expectation(&rho_s0, &jc_classical_hamiltonian(&state, params, 0.0)).re;
    let mut w_cl = Vec::with_capacity(grid.len());
    for &t in grid {
        let u_rot = rot_eig.apply(|e| (-I * e * t).exp());
        // back from the rotating frame: e^{−iωσ_z t/2}, with g at index 0
        let phase = (I * 0.5 * params.omega * t).exp();
        let frame = ndarray::Array2::from_diag(&ndarray::arr1(&[phase, phase.conj()]));
        let u = frame.dot(&u_rot);
        let rho_s = u.dot(&rho_s0).dot(&crate::linalg::dagger(&u));
        let h_t = jc_classical_hamiltonian(&state, params, t);
        w_cl.push(expectation(&rho_s, &h_t).re - e0);
    }
    Ok(WorkComparison {
        times: grid.to_vec(),
        w_q: grid.iter().map(|&t| power.integral(t)).collect(),
        w_cl,
        t_q: alpha.norm() / params.g,
    })
}

/// Classical drive description of the JC model with drive state `state`.
pub fn jc_classical_spec(params: &JCParams, state: &crate::jc::DriveState) -> Result<ClassicalDriveSpec> {
    let ch = build_jc(params)?;
    ClassicalDriveSpec::new(ch.h_d.clone(), state.density(), ch.h_sd.clone(), None)
}
