use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qdrive_core::classical::compare_quantum_classical;
use qdrive_core::dynamics::{uniform_grid, LindbladSet, Trajectory};
use qdrive_core::energetics::{lindblad_ledger, EnergyLedger, CSV_UNITS};
use qdrive_core::fluctuation::{
    bk_average, bk_average_rearranged, bk_prefactor, bk_scaling_sweep, jc_bk_closed_form, jc_propagator,
    jc_tma, large_nbar_deviation, mean_force_summary, BkEvaluator, BkRecord,
};
use qdrive_core::jc::{
    build_jc, closed_form_work, coherent_state, excited_initial_state, golden_rule_dissipator, jc_layout,
    DriveState, JCParams, WorkFormula, STATIONARY_POWER,
};
use qdrive_core::linalg::identity;
use qdrive_core::C64;
use serde::Serialize;

use crate::config::{Evaluator, Experiment, ExperimentConfig};
use crate::CliError;

/// Files written and the one-line summary of a run.
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    match cfg.experiment {
        Experiment::JcUnitary | Experiment::JcDissipative => jc_ledger_run(cfg, out_dir),
        Experiment::ClassicalCompare => classical_compare(cfg, out_dir),
        Experiment::BkIdentity => bk_identity(cfg, out_dir),
        Experiment::BkSweep => bk_sweep(cfg, out_dir),
    }
}

fn params(cfg: &ExperimentConfig) -> Result<JCParams, CliError> {
    Ok(JCParams::new(cfg.g, cfg.n_trunc.unwrap_or(2))?)
}

fn alpha(cfg: &ExperimentConfig) -> Option<C64> {
    cfg.alpha.map(|a| C64::from_polar(a, cfg.alpha_phase.unwrap_or(0.0)))
}

fn drive_state(cfg: &ExperimentConfig, p: &JCParams) -> Result<DriveState, CliError> {
    Ok(match alpha(cfg) {
        Some(a) => coherent_state(a, p.n_trunc)?,
        None => DriveState::fock(cfg.fock.unwrap_or(0), p.n_trunc)?,
    })
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    f(&mut w).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(path.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    write_file(path, |w| writeln!(w, "{text}"))
}

fn output(out_dir: &Path, experiment: Experiment, ext: &str) -> PathBuf {
    out_dir.join(format!("{experiment}.{ext}"))
}

#[derive(Serialize)]
struct LedgerSummary {
    experiment: Experiment,
    g: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    n_trunc: usize,
    rows: usize,
    t_final: f64,
    w_q_final: f64,
    q_s_final: f64,
    q_d_final: f64,
    q_tot_final: f64,
    dh_d_final: f64,
    max_residual: f64,
    /// Largest gap to the closed-form unitary work; unitary runs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    max_formula_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jump_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    settling_time: Option<f64>,
    trace_drift: f64,
    min_eigenvalue: f64,
}

fn jc_ledger_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let p = params(cfg)?;
    let state = drive_state(cfg, &p)?;
    let ls = match cfg.experiment {
        Experiment::JcDissipative => golden_rule_dissipator(&p, cfg.theta.expect("resolved"))?,
        _ => LindbladSet::empty(),
    };
    let (ledger, traj): (EnergyLedger, Trajectory) = lindblad_ledger(
        &excited_initial_state(&state),
        &build_jc(&p)?,
        &ls,
        &jc_layout(&p)?,
        cfg.t_max.expect("resolved"),
        cfg.step.expect("resolved"),
        cfg.stride.expect("resolved"),
    )?;
    let (trace_drift, min_eigenvalue) = traj.hygiene()?;
    let max_formula_error = match cfg.experiment {
        Experiment::JcUnitary => {
            let formula = match alpha(cfg) {
                Some(alpha) => WorkFormula::QuantumCoherent { alpha },
                None => WorkFormula::QuantumFock { n: cfg.fock.unwrap_or(0) },
            };
            Some(
                ledger
                    .times
                    .iter()
                    .zip(&ledger.w_q)
                    .map(|(&t, w)| (w - closed_form_work(formula, &p, t)).abs())
                    .fold(0.0, f64::max),
            )
        }
        _ => None,
    };
    let last = ledger.len() - 1;
    let dissipative = cfg.experiment == Experiment::JcDissipative;
    let summary = LedgerSummary {
        experiment: cfg.experiment,
        g: cfg.g,
        theta: cfg.theta,
        n_trunc: p.n_trunc,
        rows: ledger.len(),
        t_final: ledger.times[last],
        w_q_final: ledger.w_q[last],
        q_s_final: ledger.q_s[last],
        q_d_final: ledger.q_d[last],
        q_tot_final: ledger.q_tot[last],
        dh_d_final: ledger.delta_h_d(last),
        max_residual: ledger.max_residual(),
        max_formula_error,
        jump_count: dissipative.then_some(ls.len()),
        settling_time: if dissipative { ledger.settling_time(STATIONARY_POWER) } else { None },
        trace_drift,
        min_eigenvalue,
    };
    let csv = write_file(&output(out_dir, cfg.experiment, "csv"), |w| ledger.write_csv(w))?;
    let json = write_json(&output(out_dir, cfg.experiment, "json"), &summary)?;
    Ok(Outcome {
        files: vec![csv, json],
        summary: format!(
            "{}: {} rows to t = {}, W_Q = {:.6}, Q_tot = {:.6}, max residual {:.2e}",
            cfg.experiment, summary.rows, summary.t_final, summary.w_q_final, summary.q_tot_final, summary.max_residual
        ),
    })
}

#[derive(Serialize)]
struct CompareSummary {
    experiment: Experiment,
    g: f64,
    alpha: f64,
    n_trunc: usize,
    t_q: f64,
    rows: usize,
    max_deviation_half_tq: f64,
    max_deviation: f64,
}

fn classical_compare(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let p = params(cfg)?;
    let a = alpha(cfg).expect("resolved");
    let grid = uniform_grid(cfg.t_max.expect("resolved"), cfg.step.expect("resolved") * cfg.stride.expect("resolved") as f64)?;
    let cmp = compare_quantum_classical(&p, a, &grid)?;
    let summary = CompareSummary {
        experiment: cfg.experiment,
        g: cfg.g,
        alpha: a.norm(),
        n_trunc: p.n_trunc,
        t_q: cmp.t_q,
        rows: cmp.times.len(),
        max_deviation_half_tq: cmp.max_deviation_until(0.5 * cmp.t_q),
        max_deviation: cmp.max_deviation_until(f64::INFINITY),
    };
    let csv = write_file(&output(out_dir, cfg.experiment, "csv"), |w| {
        writeln!(w, "{CSV_UNITS}")?;
        writeln!(w, "t,W_Q,W_CL,diff")?;
        for ((t, q), c) in cmp.times.iter().zip(&cmp.w_q).zip(&cmp.w_cl) {
            writeln!(w, "{t},{q},{c},{}", q - c)?;
        }
        Ok(())
    })?;
    let json = write_json(&output(out_dir, cfg.experiment, "json"), &summary)?;
    Ok(Outcome {
        files: vec![csv, json],
        summary: format!(
            "classical-compare: t_q = {}, max |W_Q − W_CL| = {:.3e} on [0, t_q/2]",
            summary.t_q, summary.max_deviation_half_tq
        ),
    })
}

#[derive(Serialize)]
struct IdentitySummary {
    experiment: Experiment,
    g: f64,
    n_trunc: usize,
    nbar: f64,
    #[serde(rename = "T")]
    t: f64,
    beta: f64,
    bk_average: f64,
    deviation: f64,
    closed_form: f64,
    /// Large-n̄ approximation; coherent drives with n̄ ≥ 1 only.
    approx: Option<f64>,
    bk_rearranged: f64,
    partition_ratio: f64,
    p_ee: f64,
    p_gg: f64,
}

fn bk_identity(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let p = params(cfg)?;
    let state = drive_state(cfg, &p)?;
    let t = cfg.t_measure.expect("resolved");
    let beta = cfg.beta.expect("resolved");
    let tma = jc_tma(&state, &p, t, beta)?;
    let bk = bk_average(&tma, beta)?;
    let layout = jc_layout(&p)?;
    let h_s = build_jc(&p)?.h_s;
    let rho_d = state.density();
    let z_t = mean_force_summary(&jc_propagator(&p, t)?, &rho_d, &h_s, beta, &layout)?;
    let z_0 = mean_force_summary(&identity(layout.total_dim()), &rho_d, &h_s, beta, &layout)?;
    let approx = match alpha(cfg) {
        Some(a) if a.norm_sqr() >= 1.0 => Some(1.0 + bk_prefactor(beta, p.omega) * large_nbar_deviation(a, &p)?),
        _ => None,
    };
    let summary = IdentitySummary {
        experiment: cfg.experiment,
        g: cfg.g,
        n_trunc: p.n_trunc,
        nbar: state.mean_photon_number(),
        t,
        beta,
        bk_average: bk,
        deviation: bk - 1.0,
        closed_form: jc_bk_closed_form(&state, &p, t, beta),
        approx,
        bk_rearranged: bk_average_rearranged(&tma, beta)?,
        partition_ratio: z_t.z_prime / z_0.z_prime,
        // ascending H_S spectrum: g is level 0, e is level 1
        p_ee: tma.conditional_probs[[1, 1]],
        p_gg: tma.conditional_probs[[0, 0]],
    };
    let json = write_json(&output(out_dir, cfg.experiment, "json"), &summary)?;
    Ok(Outcome {
        files: vec![json],
        summary: format!(
            "bk-identity: <exp(-beta W)> = {:.12}, closed form {:.12}, Z'(T)/Z'(0) = {:.12}",
            summary.bk_average, summary.closed_form, summary.partition_ratio
        ),
    })
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    experiment: Experiment,
    g: f64,
    beta: f64,
    evaluator: Evaluator,
    slope: f64,
    records: &'a [BkRecord],
}

fn bk_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let p = JCParams::new(cfg.g, 2)?;
    let beta = cfg.beta.expect("resolved");
    let evaluator = cfg.evaluator.expect("resolved");
    let which = match evaluator {
        Evaluator::ClosedForm => BkEvaluator::ClosedForm,
        Evaluator::Matrix => BkEvaluator::Matrix,
        Evaluator::Factorized => BkEvaluator::Factorized,
    };
    let sweep = bk_scaling_sweep(cfg.nbar.as_deref().expect("resolved"), &p, beta, which)?;
    let summary = SweepSummary {
        experiment: cfg.experiment,
        g: cfg.g,
        beta,
        evaluator,
        slope: sweep.slope,
        records: &sweep.records,
    };
    let json = write_json(&output(out_dir, cfg.experiment, "json"), &summary)?;
    Ok(Outcome {
        files: vec![json],
        summary: format!("bk-sweep: {} points, log-log slope {:.4}", sweep.records.len(), sweep.slope),
    })
}
