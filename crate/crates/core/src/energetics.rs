//! Injected power, heat powers and cumulative energy ledgers.
//!
//! Two heat models are supported. In explicit mode the environment is a slot
//! of the layout and heat flows are commutator traces with the `SE` and `DE`
//! couplings. In reduced mode the environment is replaced by a dissipator on
//! the `S ⊗ D` space and heat flows are read off `D(ρ)`.
//!
//! Sign conventions: `W_Q < 0` is energy flowing from the system back into
//! the drive; `Q > 0` is energy leaving into the environment.

use std::io::{self, Write};

use crate::composite::{CompositeHamiltonian, LiftedHamiltonian};
use crate::dynamics::{evolve_lindblad_with, uniform_grid, LindbladSet, Trajectory, UnitaryEvolution};
use crate::error::{Error, Result};
use crate::layout::{HilbertLayout, Slot};
use crate::linalg::{
    commutator, ensure_same_dim, expectation, max_abs, partial_trace, CMatrix, C64, I,
};

/// Largest environment dimension accepted in explicit mode.
pub const MAX_EXPLICIT_ENV_DIM: usize = 8;
pub const IMAG_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub enum HeatModel {
    /// Environment carried as the `E` slot of the layout.
    Explicit,
    /// Environment replaced by a dissipator on the `S ⊗ D` space.
    Reduced(LindbladSet),
}

impl HeatModel {
    pub fn unitary() -> Self {
        HeatModel::Reduced(LindbladSet::empty())
    }

    fn check_layout(&self, layout: &HilbertLayout) -> Result<()> {
        match self {
            HeatModel::Explicit => {
                let e = layout.dim_of(Slot::Environment)?;
                if e > MAX_EXPLICIT_ENV_DIM {
                    return Err(Error::InvalidArgument(format!(
                        "explicit environment mode supports E dimension ≤ {MAX_EXPLICIT_ENV_DIM}, got {e}"
                    )));
                }
                Ok(())
            }
            HeatModel::Reduced(ls) => {
                if layout.has_environment() {
                    return Err(Error::Layout(
                        "reduced heat model works on the S ⊗ D space; drop the E slot".into(),
                    ));
                }
                match ls.dim() {
                    Some(d) if d != layout.total_dim() => Err(Error::DimensionMismatch {
                        context: "Lindblad set vs layout",
                        expected: layout.total_dim(),
                        found: d,
                    }),
                    _ => Ok(()),
                }
            }
        }
    }
}

fn real_checked(z: C64, scale: f64, what: &'static str) -> Result<f64> {
    if z.im.abs() > IMAG_TOL * scale.max(1.0) {
        return Err(Error::ImaginaryResidue {
            what,
            residue: z.im,
        });
    }
    Ok(z.re)
}

/// `−i Tr{ρ [A, B]}`
fn commutator_trace(rho: &CMatrix, a: &CMatrix, b: &CMatrix, what: &'static str) -> Result<f64> {
    ensure_same_dim(rho, a, what)?;
    let c = commutator(a, b)?;
    let scale = max_abs(rho) * max_abs(&c) * rho.nrows() as f64;
    real_checked(-I * expectation(rho, &c), scale, what)
}

fn trace_product(a: &CMatrix, b: &CMatrix, what: &'static str) -> Result<f64> {
    ensure_same_dim(a, b, what)?;
    let scale = max_abs(a) * max_abs(b) * a.nrows() as f64;
    real_checked(expectation(a, b), scale, what)
}

/// Injected power `−i Tr{ρ_SD [H_SD, H_D ⊗ I_S]}`.
pub fn injected_power(rho_sd: &CMatrix, h_sd: &CMatrix, h_d_lifted: &CMatrix) -> Result<f64> {
    ensure_same_dim(h_sd, h_d_lifted, "injected_power")?;
    commutator_trace(rho_sd, h_sd, h_d_lifted, "injected power")
}

/// Explicit-environment heat powers `(dQ_S/dt, dQ_D/dt)`. The first term of
/// `dQ_S/dt` is evaluated on the reduced `S ⊗ E` state.
pub fn exact_heat_powers(
    rho: &CMatrix,
    ch: &CompositeHamiltonian,
    layout: &HilbertLayout,
) -> Result<(f64, f64)> {
    HeatModel::Explicit.check_layout(layout)?;
    let parts = ch.lift_parts(layout)?;
    ensure_same_dim(rho, &parts.h_s, "exact_heat_powers")?;

    let se_layout = layout.restricted(&[Slot::System, Slot::Environment])?;
    let rho_se = partial_trace(rho, layout, &[Slot::System, Slot::Environment])?;
    let h_se_local = match &ch.h_se {
        Some(c) => c.assemble(),
        None => crate::linalg::zeros(se_layout.total_dim()),
    };
    let h_s_local = crate::composite::lift(&ch.h_s, &se_layout, Slot::System)?;
    let direct = commutator_trace(&rho_se, &h_se_local, &h_s_local, "system heat power")?;
    let via_drive = commutator_trace(rho, &(&parts.h_se + &parts.h_de), &parts.h_sd, "system heat power")?;
    let q_d = commutator_trace(rho, &parts.h_de, &parts.h_d, "drive heat power")?;
    Ok((direct + via_drive, q_d))
}

/// Reduced heat powers `(−Tr{D (I⊗H_S + H_SD)}, −Tr{D (H_D⊗I)})` for a
/// dissipator output `diss`.
pub fn reduced_heat_powers(
    diss: &CMatrix,
    h_s_lifted: &CMatrix,
    h_sd: &CMatrix,
    h_d_lifted: &CMatrix,
) -> Result<(f64, f64)> {
    let q_s = -trace_product(diss, &(h_s_lifted + h_sd), "system heat power")?;
    let q_d = -trace_product(diss, h_d_lifted, "drive heat power")?;
    Ok((q_s, q_d))
}

/// Rate of change of `⟨G⟩` under the full generator of the given model.
fn ehrenfest_rate(
    rho: &CMatrix,
    g: &CMatrix,
    parts: &LiftedHamiltonian,
    model: &HeatModel,
    what: &'static str,
) -> Result<f64> {
    // d⟨G⟩/dt = −i Tr{ρ [G, H]} + Tr{D(ρ) G}
    let unitary = commutator_trace(rho, g, &parts.total(), what)?;
    let dissipative = match model {
        HeatModel::Explicit => 0.0,
        HeatModel::Reduced(ls) if ls.is_empty() => 0.0,
        HeatModel::Reduced(ls) => trace_product(&ls.apply(rho)?, g, what)?,
    };
    Ok(unitary + dissipative)
}

/// Energy extracted from the drive, `−d⟨H_D⟩/dt`, from the Ehrenfest
/// equation of motion under the full generator.
pub fn extracted_drive_power(
    rho: &CMatrix,
    ch: &CompositeHamiltonian,
    layout: &HilbertLayout,
    model: &HeatModel,
) -> Result<f64> {
    model.check_layout(layout)?;
    let parts = ch.lift_parts(layout)?;
    Ok(-ehrenfest_rate(rho, &parts.h_d, &parts, model, "extracted drive power")?)
}

/// `d⟨I_D⊗H_S + H_SD⟩/dt`, the internal energy rate of system plus
/// system–drive interaction.
pub fn inclusive_energy_rate(
    rho: &CMatrix,
    ch: &CompositeHamiltonian,
    layout: &HilbertLayout,
    model: &HeatModel,
) -> Result<f64> {
    model.check_layout(layout)?;
    let parts = ch.lift_parts(layout)?;
    let g = &parts.h_s + &parts.h_sd;
    ehrenfest_rate(rho, &g, &parts, model, "inclusive energy rate")
}

/// Total heat power as one trace,
/// `−i Tr{ρ [I_D⊗H_SE + H_DE, I_D⊗H_S + H_SD + H_D]}`.
pub fn total_heat_power_single_trace(
    rho: &CMatrix,
    ch: &CompositeHamiltonian,
    layout: &HilbertLayout,
) -> Result<f64> {
    HeatModel::Explicit.check_layout(layout)?;
    let parts = ch.lift_parts(layout)?;
    let bath = &parts.h_se + &parts.h_de;
    let inner = &parts.h_s + &parts.h_sd + &parts.h_d;
    commutator_trace(rho, &bath, &inner, "total heat power")
}

/// Instantaneous powers and drive energy at one state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PowerSample {
    pub injected: f64,
    pub heat_s: f64,
    pub heat_d: f64,
    pub drive_energy: f64,
    /// Single-trace total heat power; explicit mode only.
    pub heat_total_single: Option<f64>,
}

/// Every power of a model written as `Tr{ρ O}` with a fixed Hermitian `O`,
/// so ledgers along long trajectories cost one trace per power.
#[derive(Clone, Debug)]
pub struct PowerObservables {
    pub injected: CMatrix,
    pub heat_s: CMatrix,
    pub heat_d: CMatrix,
    pub drive: CMatrix,
    pub heat_total_single: Option<CMatrix>,
}

fn minus_i_commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    Ok(commutator(a, b)?.mapv(|z| -I * z))
}

impl PowerObservables {
    pub fn new(ch: &CompositeHamiltonian, model: &HeatModel, layout: &HilbertLayout) -> Result<Self> {
        model.check_layout(layout)?;
        let p = ch.lift_parts(layout)?;
        let injected = minus_i_commutator(&p.h_sd, &p.h_d)?;
        let (heat_s, heat_d, single) = match model {
            HeatModel::Explicit => {
                let bath = &p.h_se + &p.h_de;
                let heat_s = minus_i_commutator(&bath, &p.h_sd)? + minus_i_commutator(&p.h_se, &p.h_s)?;
                let heat_d = minus_i_commutator(&p.h_de, &p.h_d)?;
                let single = minus_i_commutator(&bath, &(&p.h_s + &p.h_sd + &p.h_d))?;
                (heat_s, heat_d, Some(single))
            }
            HeatModel::Reduced(ls) => {
                // Tr{D(ρ) X} = Tr{ρ D†(X)}
                let heat_s = ls.adjoint_apply(&(&p.h_s + &p.h_sd))?.mapv(|z| -z);
                let heat_d = ls.adjoint_apply(&p.h_d)?.mapv(|z| -z);
                (heat_s, heat_d, None)
            }
        };
        Ok(Self {
            injected,
            heat_s,
            heat_d,
            drive: p.h_d,
            heat_total_single: single,
        })
    }

    pub fn sample(&self, rho: &CMatrix) -> Result<PowerSample> {
        ensure_same_dim(rho, &self.drive, "power sample")?;
        let tr = |o: &CMatrix, what| trace_product(rho, o, what);
        Ok(PowerSample {
            injected: tr(&self.injected, "injected power")?,
            heat_s: tr(&self.heat_s, "system heat power")?,
            heat_d: tr(&self.heat_d, "drive heat power")?,
            drive_energy: tr(&self.drive, "drive energy")?,
            heat_total_single: match &self.heat_total_single {
                Some(o) => Some(tr(o, "total heat power")?),
                None => None,
            },
        })
    }
}

/// Cumulative energies of one run, all in units of ħω.
#[derive(Clone, Debug, Default)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    pub w_q: Vec<f64>,
    pub q_s: Vec<f64>,
    pub q_d: Vec<f64>,
    pub q_tot: Vec<f64>,
    pub h_d_expect: Vec<f64>,
    pub conservation_residual: Vec<f64>,
    /// Instantaneous `(dW_Q/dt, dQ_S/dt, dQ_D/dt)` at each row.
    pub powers: Vec<[f64; 3]>,
    /// Largest gap between `q_tot` and the integrated single-trace total
    /// heat power; explicit mode only.
    pub single_trace_deviation: Option<f64>,
}

pub const CSV_UNITS: &str = "# units: energies in hbar*omega, times in 1/omega";
pub const CSV_HEADER: &str = "t,W_Q,Q_S,Q_D,Q_tot,dH_D,residual";

impl EnergyLedger {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `⟨H_D⟩(t) − ⟨H_D⟩(0)`
    pub fn delta_h_d(&self, i: usize) -> f64 {
        self.h_d_expect[i] - self.h_d_expect[0]
    }

    pub fn max_residual(&self) -> f64 {
        self.conservation_residual.iter().copied().fold(0.0, f64::max)
    }

    /// First stored time after which every power stays below `tol`.
    pub fn settling_time(&self, tol: f64) -> Option<f64> {
        let last_bad = self
            .powers
            .iter()
            .rposition(|p| p.iter().any(|x| x.abs() >= tol));
        match last_bad {
            None => self.times.first().copied(),
            Some(i) if i + 1 < self.len() => Some(self.times[i + 1]),
            Some(_) => None,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{CSV_UNITS}")?;
        writeln!(out, "{CSV_HEADER}")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.times[i],
                self.w_q[i],
                self.q_s[i],
                self.q_d[i],
                self.q_tot[i],
                self.delta_h_d(i),
                self.conservation_residual[i]
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ledger CSV is ASCII")
    }
}

/// Streaming trapezoid accumulation of power samples. Every sample enters
/// the integrals; every `stride`-th one is stored as a ledger row.
#[derive(Clone, Debug)]
pub struct LedgerBuilder {
    stride: usize,
    count: usize,
    last: Option<(f64, PowerSample)>,
    w: f64,
    q_s: f64,
    q_d: f64,
    single: f64,
    single_dev: Option<f64>,
    h_d0: f64,
    ledger: EnergyLedger,
}

impl LedgerBuilder {
    pub fn new(stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument("ledger stride must be at least 1".into()));
        }
        Ok(Self {
            stride,
            count: 0,
            last: None,
            w: 0.0,
            q_s: 0.0,
            q_d: 0.0,
            single: 0.0,
            single_dev: None,
            h_d0: 0.0,
            ledger: EnergyLedger::default(),
        })
    }

    pub fn push(&mut self, t: f64, s: PowerSample) -> Result<()> {
        match self.last {
            None => self.h_d0 = s.drive_energy,
            Some((t0, p)) => {
                let dt = t - t0;
                if !(dt > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "ledger times must increase, got {t} after {t0}"
                    )));
                }
                self.w += 0.5 * dt * (p.injected + s.injected);
                self.q_s += 0.5 * dt * (p.heat_s + s.heat_s);
                self.q_d += 0.5 * dt * (p.heat_d + s.heat_d);
                if let (Some(a), Some(b)) = (p.heat_total_single, s.heat_total_single) {
                    self.single += 0.5 * dt * (a + b);
                }
            }
        }
        if s.heat_total_single.is_some() {
            let dev = (self.single - (self.q_s + self.q_d)).abs();
            self.single_dev = Some(self.single_dev.unwrap_or(0.0).max(dev));
        }
        if self.count % self.stride == 0 {
            let l = &mut self.ledger;
            l.times.push(t);
            l.w_q.push(self.w);
            l.q_s.push(self.q_s);
            l.q_d.push(self.q_d);
            l.q_tot.push(self.q_s + self.q_d);
            l.h_d_expect.push(s.drive_energy);
            let extracted = -(s.drive_energy - self.h_d0);
            l.conservation_residual.push((extracted - (self.w + self.q_d)).abs());
            l.powers.push([s.injected, s.heat_s, s.heat_d]);
        }
        self.count += 1;
        self.last = Some((t, s));
        Ok(())
    }

    pub fn finish(mut self) -> EnergyLedger {
        self.ledger.single_trace_deviation = self.single_dev;
        self.ledger
    }
}

/// Ledger of a stored trajectory, integrated on its own time grid.
pub fn accumulate_ledger(
    traj: &Trajectory,
    ch: &CompositeHamiltonian,
    model: &HeatModel,
    layout: &HilbertLayout,
) -> Result<EnergyLedger> {
    let obs = PowerObservables::new(ch, model, layout)?;
    let mut builder = LedgerBuilder::new(1)?;
    for (t, rho) in traj.times.iter().zip(&traj.states) {
        builder.push(*t, obs.sample(rho)?)?;
    }
    Ok(builder.finish())
}

/// Unitary ledger sampled on `grid` from the exact spectral form of the
/// evolution. Heat flows vanish.
pub fn unitary_ledger(
    ch: &CompositeHamiltonian,
    layout: &HilbertLayout,
    rho0: &CMatrix,
    grid: &[f64],
) -> Result<EnergyLedger> {
    let model = HeatModel::unitary();
    let obs = PowerObservables::new(ch, &model, layout)?;
    let h = ch.lift_parts(layout)?.total();
    let evo = UnitaryEvolution::new(&h, rho0)?;
    let injected = evo.series(&obs.injected)?;
    let drive = evo.series(&obs.drive)?;
    let mut builder = LedgerBuilder::new(1)?;
    for &t in grid {
        builder.push(
            t,
            PowerSample {
                injected: injected.value(t),
                drive_energy: drive.value(t),
                ..PowerSample::default()
            },
        )?;
    }
    Ok(builder.finish())
}

/// Reduced-model run: RK4 with step `step` from `rho0` up to `t_max`, with
/// the ledger integrated at every step and stored every `stride` steps.
/// Returns the ledger and the states at the stored times.
pub fn lindblad_ledger(
    rho0: &CMatrix,
    ch: &CompositeHamiltonian,
    ls: &LindbladSet,
    layout: &HilbertLayout,
    t_max: f64,
    step: f64,
    stride: usize,
) -> Result<(EnergyLedger, Trajectory)> {
    let model = HeatModel::Reduced(ls.clone());
    let obs = PowerObservables::new(ch, &model, layout)?;
    let h = ch.lift_parts(layout)?.total();
    let mut builder = LedgerBuilder::new(stride)?;
    let grid = uniform_grid(t_max, step * stride as f64)?;
    let traj = evolve_lindblad_with(rho0, &h, ls, &grid, step, &mut |t, rho| {
        builder.push(t, obs.sample(rho)?)
    })?;
    Ok((builder.finish(), traj))
}
