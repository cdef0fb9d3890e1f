//! Two-measurement statistics of the exclusive work and the drive-averaged
//! Bochkov–Kuzovlev average.
//!
//! `H_S` is measured at `t = 0` and `t = T`. The first measurement collapses
//! only the system, `ρ_D(0) ⊗ |n⟩⟨n|`, and the second yields `ε_k` with the
//! conditional probability `P_{k,n}`. Columns of `P` always sum to one; rows
//! sum to one only when the propagator factorizes, which is when
//! `⟨e^{−βW}⟩ = 1`.
//!
//! For the two-level system with a Gibbs initial state the average expands to
//! `1 + (e^{−βω/2} − e^{βω/2})/Z_S · (P(e|e) − P(g|g))`, so the two
//! probabilities of the JC closed form are conditional ones.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::composite::lift;
use crate::error::{Error, Result};
use crate::jc::{
    build_jc, coherent_state, default_truncation, jc_layout, poisson_weights, DriveState, JCParams,
};
use crate::layout::{HilbertLayout, Slot};
use crate::linalg::{
    dagger, ensure_hermitian, ensure_square, hermitian_eig, identity, kron, max_abs_diff, partial_trace,
    CMatrix, C64,
};

/// Relative gap below which two system levels count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Tolerance of the unitarity check `‖U†U − I‖_max`.
pub const UNITARITY_TOL: f64 = 1e-9;
/// Deviations `|⟨e^{−βW}⟩ − 1|` below this are indistinguishable from roundoff.
pub const DEVIATION_FLOOR: f64 = 1e-13;

/// One stochastic trajectory `n → k` of the two measurements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkOutcome {
    pub n: usize,
    pub k: usize,
    /// `ε_k − ε_n`
    pub work: f64,
    /// `ρ_S,nn(0) · P_{k,n}`
    pub probability: f64,
}

#[derive(Clone, Debug)]
pub struct TmaResult {
    pub beta: f64,
    /// Ascending spectrum of `H_S`.
    pub eigenvalues: Vec<f64>,
    /// Gibbs weights of the initial system state.
    pub initial_probs: Vec<f64>,
    /// `conditional_probs[[k, n]] = P_{k,n}`
    pub conditional_probs: Array2<f64>,
    pub work_support: Vec<WorkOutcome>,
}

impl TmaResult {
    pub fn column_sums(&self) -> Vec<f64> {
        self.conditional_probs.sum_axis(ndarray::Axis(0)).to_vec()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.conditional_probs.sum_axis(ndarray::Axis(1)).to_vec()
    }
}

/// Normalized `e^{−βε}` weights, shifted for overflow safety.
pub fn gibbs_weights(eigenvalues: &[f64], beta: f64) -> Vec<f64> {
    let e0 = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = eigenvalues.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn check_unitary(u: &CMatrix) -> Result<()> {
    let n = ensure_square(u, "propagator")?;
    let defect = max_abs_diff(&dagger(u).dot(u), &identity(n));
    if defect > UNITARITY_TOL {
        return Err(Error::InvalidArgument(format!(
            "propagator is not unitary (‖U†U − I‖ = {defect:e})"
        )));
    }
    Ok(())
}

fn check_sd_layout(layout: &HilbertLayout, u: &CMatrix, rho_d0: &CMatrix, h_s: &CMatrix) -> Result<()> {
    if layout.has_environment() {
        return Err(Error::UnsupportedModel(
            "two-measurement runs take the system–drive composite only; drop the environment".into(),
        ));
    }
    if !layout.contains(Slot::Drive) || !layout.contains(Slot::System) {
        return Err(Error::Layout("two-measurement runs need both drive and system slots".into()));
    }
    let check = |m: &CMatrix, expected: usize, context: &'static str| -> Result<()> {
        let n = ensure_square(m, context)?;
        if n != expected {
            return Err(Error::DimensionMismatch { context, expected, found: n });
        }
        Ok(())
    };
    check(u, layout.total_dim(), "propagator")?;
    check(rho_d0, layout.dim_of(Slot::Drive)?, "initial drive state")?;
    check(h_s, layout.dim_of(Slot::System)?, "system Hamiltonian")?;
    crate::composite::validate_density(rho_d0, "initial drive state")?;
    ensure_hermitian(h_s, "H_S")
}

/// Two-measurement statistics of `H_S` for the propagator `u_t`, starting
/// from `ρ_D(0) ⊗ e^{−βH_S}/Z_S`.
pub fn tma_probabilities(
    u_t: &CMatrix,
    rho_d0: &CMatrix,
    h_s: &CMatrix,
    layout: &HilbertLayout,
    beta: f64,
) -> Result<TmaResult> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidArgument(format!("inverse temperature must be ≥ 0, got {beta}")));
    }
    check_sd_layout(layout, u_t, rho_d0, h_s)?;
    check_unitary(u_t)?;
    let eig = hermitian_eig(h_s)?;
    let eps = eig.values.to_vec();
    let scale = eps.iter().fold(1.0_f64, |m, e| m.max(e.abs()));
    if eps.windows(2).any(|w| w[1] - w[0] <= DEGENERACY_TOL * scale) {
        return Err(Error::UnsupportedModel("H_S has a degenerate spectrum".into()));
    }
    let ns = eps.len();
    let u_dag = dagger(u_t);
    let mut p = Array2::<f64>::zeros((ns, ns));
    for n in 0..ns {
        let v = eig.vectors.column(n);
        let proj = Array2::from_shape_fn((ns, ns), |(i, j)| v[i] * v[j].conj());
        let evolved = u_t.dot(&kron(rho_d0, &proj)).dot(&u_dag);
        let rho_s = partial_trace(&evolved, layout, &[Slot::System])?;
        let in_basis = eig.to_eigenbasis(&rho_s);
        for k in 0..ns {
            p[[k, n]] = in_basis[[k, k]].re.clamp(0.0, 1.0);
        }
    }
    let initial_probs = gibbs_weights(&eps, beta);
    let mut work_support = Vec::with_capacity(ns * ns);
    for n in 0..ns {
        for k in 0..ns {
            work_support.push(WorkOutcome {
                n,
                k,
                work: eps[k] - eps[n],
                probability: initial_probs[n] * p[[k, n]],
            });
        }
    }
    Ok(TmaResult {
        beta,
        eigenvalues: eps,
        initial_probs,
        conditional_probs: p,
        work_support,
    })
}

fn check_beta(res: &TmaResult, beta: f64) -> Result<()> {
    if (res.beta - beta).abs() > 1e-14 * res.beta.abs().max(1.0) {
        return Err(Error::BetaMismatch {
            prepared: res.beta,
            requested: beta,
        });
    }
    Ok(())
}

/// `⟨e^{−βW_excl}⟩` summed over the stochastic trajectories.
pub fn bk_average(res: &TmaResult, beta: f64) -> Result<f64> {
    check_beta(res, beta)?;
    Ok(res
        .work_support
        .iter()
        .map(|o| o.probability * (-beta * o.work).exp())
        .sum())
}

/// The same average rearranged for a Gibbs start: `Σ_k (e^{−βε_k}/Z_S) Σ_n P_{k,n}`.
pub fn bk_average_rearranged(res: &TmaResult, beta: f64) -> Result<f64> {
    check_beta(res, beta)?;
    Ok(res
        .initial_probs
        .iter()
        .zip(res.row_sums())
        .map(|(w, r)| w * r)
        .sum())
}

/// `(e^{−βω/2} − e^{βω/2})/Z_S = −tanh(βω/2)` for the two-level system.
pub fn bk_prefactor(beta: f64, omega: f64) -> f64 {
    -(0.5 * beta * omega).tanh()
}

/// `P(e|e) − P(g|g) = Σ_n |a_n|² [cos²(Ω_n T) − cos²(Ω_{n−1} T)]` with
/// `Ω_{n−1} = g√n`.
pub fn jc_population_difference(state: &DriveState, params: &JCParams, t: f64) -> f64 {
    state
        .populations()
        .iter()
        .enumerate()
        .map(|(n, p)| {
            let up = (params.g * ((n + 1) as f64).sqrt() * t).cos();
            let down = (params.g * (n as f64).sqrt() * t).cos();
            p * (up * up - down * down)
        })
        .sum()
}

/// Closed form of `⟨e^{−βW_excl}⟩` for the JC model.
pub fn jc_bk_closed_form(state: &DriveState, params: &JCParams, t: f64, beta: f64) -> f64 {
    1.0 + bk_prefactor(beta, params.omega) * jc_population_difference(state, params, t)
}

/// Large-`n̄` approximation `−(π/4n̄) Σ_n |a_n|² sin(π√n/√n̄)` of
/// `P(e|e) − P(g|g)` at `T = π/(2g√n̄)`. The Poisson weights are summed to
/// the default coherent truncation, independent of `params.n_trunc`.
pub fn large_nbar_deviation(alpha: C64, params: &JCParams) -> Result<f64> {
    params.validate()?;
    let nbar = alpha.norm_sqr();
    if nbar < 1.0 {
        return Err(Error::InvalidArgument(format!("large-nbar approximation needs nbar ≥ 1, got {nbar}")));
    }
    let weights = poisson_weights(nbar, default_truncation(nbar) + 1);
    let sum: f64 = weights
        .iter()
        .enumerate()
        .map(|(n, w)| w * (std::f64::consts::PI * (n as f64 / nbar).sqrt()).sin())
        .sum();
    Ok(-std::f64::consts::PI / (4.0 * nbar) * sum)
}

/// Measurement time `T = π/(2g√n̄)`: one classical Rabi half-swing.
pub fn single_excitation_time(nbar: f64, params: &JCParams) -> f64 {
    std::f64::consts::PI / (2.0 * params.g * nbar.sqrt())
}

/// Full JC propagator at `t` for the drive truncation in `params`.
pub fn jc_propagator(params: &JCParams, t: f64) -> Result<CMatrix> {
    let layout = jc_layout(params)?;
    let h = build_jc(params)?.lift_parts(&layout)?.total();
    crate::dynamics::unitary_propagator(&h, t)
}

/// Two-measurement statistics of the JC model with drive state `state`.
pub fn jc_tma(state: &DriveState, params: &JCParams, t: f64, beta: f64) -> Result<TmaResult> {
    let layout = jc_layout(params)?;
    let u = jc_propagator(params, t)?;
    tma_probabilities(&u, &state.density(), &build_jc(params)?.h_s, &layout, beta)
}

/// Free propagator `e^{−iH_D t} ⊗ e^{−iH_S t}`, i.e. the JC run with the
/// coupling removed.
pub fn jc_factorized_propagator(params: &JCParams, t: f64) -> Result<CMatrix> {
    let ch = build_jc(params)?;
    Ok(kron(
        &crate::dynamics::unitary_propagator(&ch.h_d, t)?,
        &crate::dynamics::unitary_propagator(&ch.h_s, t)?,
    ))
}

/// How each point of a scaling sweep is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BkEvaluator {
    ClosedForm,
    /// Full two-measurement pipeline on the JC propagator.
    Matrix,
    /// Two-measurement pipeline on the uncoupled propagator.
    Factorized,
}

/// One point of a Bochkov–Kuzovlev sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BkRecord {
    pub nbar: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub beta: f64,
    pub bk_average: f64,
    /// `bk_average − 1`
    pub deviation: f64,
    pub closed_form: f64,
    /// `1 + prefactor · large_nbar_deviation`
    pub approx: f64,
}

/// Evaluates one coherent drive with `n̄ = nbar` at `T = π/(2g√n̄)`.
pub fn bk_point(nbar: f64, params: &JCParams, beta: f64, evaluator: BkEvaluator) -> Result<BkRecord> {
    let alpha = C64::new(nbar.sqrt(), 0.0);
    let point = JCParams {
        n_trunc: default_truncation(nbar),
        ..*params
    };
    point.validate()?;
    let state = coherent_state(alpha, point.n_trunc)?;
    let t = single_excitation_time(nbar, &point);
    let closed_form = jc_bk_closed_form(&state, &point, t, beta);
    let bk = match evaluator {
        BkEvaluator::ClosedForm => closed_form,
        BkEvaluator::Matrix => bk_average(&jc_tma(&state, &point, t, beta)?, beta)?,
        BkEvaluator::Factorized => {
            let u = jc_factorized_propagator(&point, t)?;
            let res = tma_probabilities(&u, &state.density(), &build_jc(&point)?.h_s, &jc_layout(&point)?, beta)?;
            bk_average(&res, beta)?
        }
    };
    let approx = 1.0 + bk_prefactor(beta, point.omega) * large_nbar_deviation(alpha, &point)?;
    Ok(BkRecord {
        nbar,
        t,
        beta,
        bk_average: bk,
        deviation: bk - 1.0,
        closed_form,
        approx,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BkSweep {
    pub records: Vec<BkRecord>,
    /// Least-squares slope of `ln|⟨e^{−βW}⟩ − 1|` against `ln n̄`.
    pub slope: f64,
}

/// Scaling of the modification with `n̄`. Points run in parallel and are
/// returned in input order.
pub fn bk_scaling_sweep(nbar_list: &[f64], params: &JCParams, beta: f64, evaluator: BkEvaluator) -> Result<BkSweep> {
    if nbar_list.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "scaling sweep needs at least 3 points, got {}",
            nbar_list.len()
        )));
    }
    if nbar_list.iter().any(|n| !n.is_finite() || *n < 1.0) {
        return Err(Error::InvalidArgument("sweep points need nbar ≥ 1".into()));
    }
    let lo = nbar_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = nbar_list.iter().cloned().fold(0.0, f64::max);
    if hi < 10.0 * lo {
        return Err(Error::InvalidArgument(format!(
            "sweep must span at least a decade, got [{lo}, {hi}]"
        )));
    }
    let records = nbar_list
        .par_iter()
        .map(|&nbar| bk_point(nbar, params, beta, evaluator))
        .collect::<Result<Vec<_>>>()?;
    if let Some(r) = records.iter().find(|r| r.deviation.abs() < DEVIATION_FLOOR) {
        return Err(Error::NumericalFloor {
            nbar: r.nbar,
            deviation: r.deviation.abs(),
        });
    }
    let xs: Vec<f64> = records.iter().map(|r| r.nbar.ln()).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.deviation.abs().ln()).collect();
    Ok(BkSweep {
        slope: least_squares_slope(&xs, &ys),
        records,
    })
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Drive-averaged thermodynamics of the bare system at time `t`.
#[derive(Clone, Debug)]
pub struct MeanForceSummary {
    /// `Z′_S(t) = Tr_S Tr_D{e^{−βH_S^H(t)} ρ_D(0)}`
    pub z_prime: f64,
    /// Hamiltonian of mean force `−β⁻¹ ln Tr_D{e^{−βH_S^H(t)} ρ_D(0)}`.
    pub h_star: CMatrix,
    pub e_prime: f64,
    /// `−β⁻¹ ln Z′_S(t)`
    pub f_prime: f64,
}

/// Mean-force quantities for the propagator `u_t`. `β` must be positive.
pub fn mean_force_summary(
    u_t: &CMatrix,
    rho_d0: &CMatrix,
    h_s: &CMatrix,
    beta: f64,
    layout: &HilbertLayout,
) -> Result<MeanForceSummary> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::InvalidArgument(format!("inverse temperature must be > 0, got {beta}")));
    }
    check_sd_layout(layout, u_t, rho_d0, h_s)?;
    check_unitary(u_t)?;
    let h_lift = lift(h_s, layout, Slot::System)?;
    let h_heis = dagger(u_t).dot(&h_lift).dot(u_t);
    let eig = hermitian_eig(&h_heis)?;
    // shift by the lowest level so the exponential cannot overflow
    let e0 = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let boltz = eig.apply(|e| C64::new((-beta * (e - e0)).exp(), 0.0));
    let rho_lift = lift(rho_d0, layout, Slot::Drive)?;
    let averaged = partial_trace(&boltz.dot(&rho_lift), layout, &[Slot::System])?;
    let energy = partial_trace(&boltz.dot(&h_heis).dot(&rho_lift), layout, &[Slot::System])?;
    let z_shifted = crate::linalg::trace(&averaged).re;
    let avg_herm = (&averaged + &dagger(&averaged)).mapv(|z| z * 0.5);
    let avg_eig = hermitian_eig(&avg_herm)?;
    let min = avg_eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || !(z_shifted > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "drive-averaged exponential is not positive definite (smallest eigenvalue {min:e})"
        )));
    }
    let h_star = avg_eig.apply(|x| C64::new(e0 - x.ln() / beta, 0.0));
    let ln_z = z_shifted.ln() - beta * e0;
    Ok(MeanForceSummary {
        z_prime: ln_z.exp(),
        h_star,
        e_prime: crate::linalg::trace(&energy).re / z_shifted,
        f_prime: -ln_z / beta,
    })
}
