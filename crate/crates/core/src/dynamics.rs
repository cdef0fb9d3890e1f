//! State propagation: exact unitary evolution by eigendecomposition,
//! fixed-step RK4 for the Lindblad master equation, and RK4 for
//! time-dependent Hamiltonians.

use std::rc::Rc;

use crate::composite::{min_eigenvalue, validate_density};
use crate::error::{Error, Result};
use crate::linalg::{
    dagger, ensure_hermitian, ensure_same_dim, ensure_square, hermitian_eig, real, trace, zeros,
    CMatrix, EigenSystem, C64, I,
};

pub const DEFAULT_STEP: f64 = 1e-3;
/// Trace drift that aborts an integration.
pub const TRACE_FAILURE_TOL: f64 = 1e-6;
/// Most negative eigenvalue tolerated before an integration aborts.
pub const POSITIVITY_FAILURE_TOL: f64 = 1e-6;

/// Jump operators with their rates folded in. The dissipator is
/// `D(ρ) = Σ 2LρL† − L†Lρ − ρL†L`, with no global ½.
#[derive(Clone, Debug, Default)]
pub struct LindbladSet {
    jumps: Vec<CMatrix>,
}

impl LindbladSet {
    pub fn new(jumps: Vec<CMatrix>) -> Result<Self> {
        let mut dim = None;
        for l in &jumps {
            let n = ensure_square(l, "jump operator")?;
            if let Some(d) = dim {
                if d != n {
                    return Err(Error::DimensionMismatch {
                        context: "jump operator",
                        expected: d,
                        found: n,
                    });
                }
            }
            dim = Some(n);
            if l.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidArgument("jump operator has non-finite entries".into()));
            }
        }
        Ok(Self { jumps })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn jumps(&self) -> &[CMatrix] {
        &self.jumps
    }

    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.jumps.first().map(|l| l.nrows())
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != n => Err(Error::DimensionMismatch {
                context: "Lindblad set",
                expected: d,
                found: n,
            }),
            _ => Ok(()),
        }
    }

    /// `Σ L†L`
    pub fn damping(&self, n: usize) -> Result<CMatrix> {
        self.check_dim(n)?;
        let mut k = zeros(n);
        for l in &self.jumps {
            k = k + dagger(l).dot(l);
        }
        Ok(k)
    }

    /// `D(ρ)`
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        let n = ensure_square(rho, "dissipator argument")?;
        self.check_dim(n)?;
        let mut out = zeros(n);
        for l in &self.jumps {
            let ld = dagger(l);
            let ldl = ld.dot(l);
            out = out + l.dot(rho).dot(&ld).mapv(|z| z * 2.0) - ldl.dot(rho) - rho.dot(&ldl);
        }
        Ok(out)
    }

    /// Heisenberg-picture dual `D†(X) = Σ 2L†XL − L†LX − XL†L`, so that
    /// `Tr{D(ρ) X} = Tr{ρ D†(X)}`.
    pub fn adjoint_apply(&self, x: &CMatrix) -> Result<CMatrix> {
        let n = ensure_square(x, "dissipator adjoint argument")?;
        self.check_dim(n)?;
        let mut out = zeros(n);
        for l in &self.jumps {
            let ld = dagger(l);
            let ldl = ld.dot(l);
            out = out + ld.dot(x).dot(l).mapv(|z| z * 2.0) - ldl.dot(x) - x.dot(&ldl);
        }
        Ok(out)
    }
}

pub fn apply_dissipator(rho: &CMatrix, ls: &LindbladSet) -> Result<CMatrix> {
    ls.apply(rho)
}

/// Density matrices sampled on an ascending time grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CMatrix>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &CMatrix {
        self.states.last().expect("trajectories are never empty")
    }

    /// Largest trace drift and most negative eigenvalue over all samples.
    pub fn hygiene(&self) -> Result<(f64, f64)> {
        let mut drift = 0.0f64;
        let mut min_eig = f64::INFINITY;
        for rho in &self.states {
            drift = drift.max((trace(rho) - real(1.0)).norm());
            min_eig = min_eig.min(min_eigenvalue(rho)?);
        }
        Ok((drift, min_eig))
    }
}

/// `0, dt, 2dt, …` up to and including `t_max` when it lies on the grid.
pub fn uniform_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {dt}")));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_max must be non-negative, got {t_max}")));
    }
    let n = (t_max / dt + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * dt).collect())
}

fn validate_grid(grid: &[f64], from_zero: bool) -> Result<()> {
    let Some(&first) = grid.first() else {
        return Err(Error::InvalidArgument("time grid is empty".into()));
    };
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("time grid has non-finite entries".into()));
    }
    if from_zero && first != 0.0 {
        return Err(Error::InvalidArgument(format!("time grid must start at 0, got {first}")));
    }
    if first < 0.0 {
        return Err(Error::InvalidArgument("time grid has negative times".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("time grid must be strictly ascending".into()));
    }
    Ok(())
}

/// `U(t) = V e^{−iΛt} V†`
pub fn unitary_propagator(h: &CMatrix, t: f64) -> Result<CMatrix> {
    Ok(hermitian_eig(h)?.apply(|e| (-I * e * t).exp()))
}

/// Closed-system evolution of one initial state, kept in the eigenbasis of
/// the Hamiltonian so any time can be sampled directly.
#[derive(Clone, Debug)]
pub struct UnitaryEvolution {
    eig: EigenSystem,
    rho0: CMatrix,
}

impl UnitaryEvolution {
    pub fn new(h: &CMatrix, rho0: &CMatrix) -> Result<Self> {
        ensure_same_dim(h, rho0, "unitary evolution")?;
        let eig = hermitian_eig(h)?;
        let rho0 = eig.to_eigenbasis(rho0);
        Ok(Self { eig, rho0 })
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        &self.eig
    }

    pub fn state_at(&self, t: f64) -> CMatrix {
        let p = phases(&self.eig.values, t);
        let rotated = CMatrix::from_shape_fn(self.rho0.raw_dim(), |(j, k)| {
            self.rho0[[j, k]] * p[j] * p[k].conj()
        });
        self.eig.from_eigenbasis(&rotated)
    }

    /// `t ↦ Tr{ρ(t) O}` as a sum of oscillating exponentials.
    pub fn series(&self, op: &CMatrix) -> Result<SpectralSeries> {
        ensure_same_dim(op, &self.rho0, "spectral series")?;
        Ok(SpectralSeries::new(&self.eig, &self.rho0, op))
    }
}

fn phases(values: &ndarray::Array1<f64>, t: f64) -> Vec<C64> {
    values.iter().map(|&e| (-I * e * t).exp()).collect()
}

/// Frequencies below this use the sinc form of the exact integral.
const SLOW_PAIR: f64 = 1e-6;

/// `f(t) = Re Σ_jk M_jk e^{−i(λ_j−λ_k)t}` with `M_jk = ρ̃_jk Õ_kj` in the
/// eigenbasis; exact zeros of `M` are skipped.
#[derive(Clone, Debug)]
pub struct SpectralSeries {
    values: ndarray::Array1<f64>,
    terms: Vec<(usize, usize, C64)>,
}

impl SpectralSeries {
    fn new(eig: &EigenSystem, rho0_eig: &CMatrix, op: &CMatrix) -> Self {
        let op_eig = eig.to_eigenbasis(op);
        let n = eig.dim();
        let mut terms = Vec::new();
        for j in 0..n {
            for k in 0..n {
                let m = rho0_eig[[j, k]] * op_eig[[k, j]];
                if m != C64::new(0.0, 0.0) {
                    terms.push((j, k, m));
                }
            }
        }
        Self {
            values: eig.values.clone(),
            terms,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let p = phases(&self.values, t);
        self.terms
            .iter()
            .map(|&(j, k, m)| (m * p[j] * p[k].conj()).re)
            .sum()
    }

    /// Exact `∫_0^t f(s) ds`.
    pub fn integral(&self, t: f64) -> f64 {
        let p = phases(&self.values, t);
        let mut acc = 0.0;
        for &(j, k, m) in &self.terms {
            let w = self.values[j] - self.values[k];
            let term = if w.abs() >= SLOW_PAIR {
                (I * m / w) * (p[j] * p[k].conj() - 1.0)
            } else {
                let x = 0.5 * w * t;
                let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
                m * t * (-I * x).exp() * sinc
            };
            acc += term.re;
        }
        acc
    }
}

pub fn evolve_unitary(rho0: &CMatrix, h: &CMatrix, grid: &[f64]) -> Result<Trajectory> {
    validate_grid(grid, false)?;
    let evo = UnitaryEvolution::new(h, rho0)?;
    Ok(Trajectory {
        times: grid.to_vec(),
        states: grid.iter().map(|&t| evo.state_at(t)).collect(),
    })
}

#[derive(Clone, Debug)]
enum Operator {
    Dense(CMatrix),
    Sparse(Vec<(usize, usize, C64)>),
}

impl Operator {
    fn new(m: CMatrix) -> Self {
        let n = m.nrows();
        let entries: Vec<_> = m
            .indexed_iter()
            .filter(|(_, z)| **z != C64::new(0.0, 0.0))
            .map(|((i, k), z)| (i, k, *z))
            .collect();
        if entries.len() * 8 <= n * n {
            Operator::Sparse(entries)
        } else {
            Operator::Dense(m)
        }
    }

    /// `self · x`
    fn left_mul(&self, x: &CMatrix) -> CMatrix {
        match self {
            Operator::Dense(m) => m.dot(x),
            Operator::Sparse(entries) => {
                let mut out = zeros(x.nrows());
                for &(i, k, v) in entries {
                    out.row_mut(i).scaled_add(v, &x.row(k));
                }
                out
            }
        }
    }
}

/// Right-hand side `Gρ + ρG† + 2Σ LρL†` with `G = −iH − Σ L†L`, evaluated as
/// `A + A†` so it is Hermitian by construction.
#[derive(Clone, Debug)]
struct Generator {
    g: Operator,
    jumps: Vec<Operator>,
}

impl Generator {
    fn new(h: &CMatrix, ls: &LindbladSet) -> Result<Self> {
        let n = h.nrows();
        let g = h.mapv(|z| -I * z) - ls.damping(n)?;
        Ok(Self {
            g: Operator::new(g),
            jumps: ls.jumps().iter().map(|l| Operator::new(l.clone())).collect(),
        })
    }

    fn rhs(&self, rho: &CMatrix) -> CMatrix {
        let mut a = self.g.left_mul(rho);
        for l in &self.jumps {
            let l_rho = l.left_mul(rho);
            a = a + l.left_mul(&dagger(&l_rho));
        }
        let ad = dagger(&a);
        a + ad
    }
}

/// Called with `(t, ρ(t))` at every integration step, including `t = 0`.
pub type StepObserver<'a> = dyn FnMut(f64, &CMatrix) -> Result<()> + 'a;

fn check_state(t: f64, rho: &CMatrix) -> Result<()> {
    let drift = (trace(rho) - real(1.0)).norm();
    let finite = rho.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    let min = if finite { min_eigenvalue(rho)? } else { f64::NEG_INFINITY };
    if !finite || drift > TRACE_FAILURE_TOL || min < -POSITIVITY_FAILURE_TOL {
        return Err(Error::IntegrationFailure {
            t,
            trace_drift: drift,
            min_eigenvalue: min,
        });
    }
    Ok(())
}

fn integrate(
    rho0: &CMatrix,
    grid: &[f64],
    step: f64,
    mut generator_at: impl FnMut(f64) -> Result<Rc<Generator>>,
    observer: &mut StepObserver<'_>,
) -> Result<Trajectory> {
    validate_grid(grid, true)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    validate_density(rho0, "initial state")?;
    let mut rho = rho0.as_standard_layout().into_owned();
    observer(0.0, &rho)?;
    let mut states = vec![rho.clone()];
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let substeps = ((b - a) / step - 1e-9).ceil().max(1.0) as usize;
        let h = (b - a) / substeps as f64;
        for i in 0..substeps {
            let t = a + i as f64 * h;
            let g0 = generator_at(t)?;
            let gm = generator_at(t + 0.5 * h)?;
            let g1 = generator_at(t + h)?;
            let k1 = g0.rhs(&rho);
            let k2 = gm.rhs(&(&rho + &k1.mapv(|z| z * (0.5 * h))));
            let k3 = gm.rhs(&(&rho + &k2.mapv(|z| z * (0.5 * h))));
            let k4 = g1.rhs(&(&rho + &k3.mapv(|z| z * h)));
            let incr = k1 + (k2 + k3).mapv(|z| z * 2.0) + k4;
            rho.scaled_add(real(h / 6.0), &incr);
            let t_next = if i + 1 == substeps { b } else { t + h };
            observer(t_next, &rho)?;
        }
        check_state(b, &rho)?;
        states.push(rho.clone());
    }
    Ok(Trajectory {
        times: grid.to_vec(),
        states,
    })
}

/// Fixed-step RK4 for `ρ̇ = −i[H, ρ] + D(ρ)`. Each grid interval is split
/// into the fewest equal substeps no longer than `step`.
pub fn evolve_lindblad(
    rho0: &CMatrix,
    h: &CMatrix,
    ls: &LindbladSet,
    grid: &[f64],
    step: f64,
) -> Result<Trajectory> {
    evolve_lindblad_with(rho0, h, ls, grid, step, &mut |_, _| Ok(()))
}

pub fn evolve_lindblad_with(
    rho0: &CMatrix,
    h: &CMatrix,
    ls: &LindbladSet,
    grid: &[f64],
    step: f64,
    observer: &mut StepObserver<'_>,
) -> Result<Trajectory> {
    ensure_same_dim(h, rho0, "evolve_lindblad")?;
    ensure_hermitian(h, "Hamiltonian")?;
    let gen = Rc::new(Generator::new(h, ls)?);
    integrate(rho0, grid, step, |_| Ok(gen.clone()), observer)
}

/// RK4 for `ρ̇ = −i[H(t), ρ]`; the provider is sampled at `t`, `t + h/2`
/// and `t + h` of every step.
pub fn evolve_time_dependent(
    rho0: &CMatrix,
    h_of_t: impl FnMut(f64) -> Result<CMatrix>,
    grid: &[f64],
    step: f64,
) -> Result<Trajectory> {
    evolve_time_dependent_with(rho0, h_of_t, grid, step, &mut |_, _| Ok(()))
}

pub fn evolve_time_dependent_with(
    rho0: &CMatrix,
    mut h_of_t: impl FnMut(f64) -> Result<CMatrix>,
    grid: &[f64],
    step: f64,
    observer: &mut StepObserver<'_>,
) -> Result<Trajectory> {
    let empty = LindbladSet::empty();
    let n = ensure_square(rho0, "evolve_time_dependent")?;
    // the midpoint is requested twice per step
    let mut cache: Option<(f64, Rc<Generator>)> = None;
    let generator_at = |t: f64| -> Result<Rc<Generator>> {
        if let Some((tc, g)) = &cache {
            if *tc == t {
                return Ok(g.clone());
            }
        }
        let h = h_of_t(t)?;
        let found = ensure_square(&h, "time-dependent Hamiltonian")?;
        if found != n {
            return Err(Error::DimensionMismatch {
                context: "time-dependent Hamiltonian",
                expected: n,
                found,
            });
        }
        ensure_hermitian(&h, "time-dependent Hamiltonian")?;
        let g = Rc::new(Generator::new(&h, &empty)?);
        cache = Some((t, g.clone()));
        Ok(g)
    };
    integrate(rho0, grid, step, generator_at, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_util::*;
    use crate::linalg::{commutator, from_real_diag, identity, kron, max_abs, max_abs_diff, outer};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ket(n: usize, i: usize) -> Array1<C64> {
        let mut v = Array1::zeros(n);
        v[i] = real(1.0);
        v
    }

    fn proj(n: usize, i: usize) -> CMatrix {
        outer(&ket(n, i), &ket(n, i))
    }

    /// Single-excitation JC block on `|0,e⟩, |1,g⟩` of a two-level drive.
    fn jc_two_level(g: f64) -> CMatrix {
        // basis n*2 + s with s = 0 (g), 1 (e); drive n ∈ {0, 1}
        let omega = 1.0;
        let mut h = zeros(4);
        for n in 0..2 {
            h[[2 * n, 2 * n]] = real(omega * n as f64 - 0.5 * omega);
            h[[2 * n + 1, 2 * n + 1]] = real(omega * n as f64 + 0.5 * omega);
        }
        // g(b⊗σ+ + h.c.): ⟨0,e|H|1,g⟩ = g
        h[[1, 2]] = real(g);
        h[[2, 1]] = real(g);
        h
    }

    #[test]
    fn empty_dissipator_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(&mut rng, 3);
        assert_eq!(apply_dissipator(&rho, &LindbladSet::empty()).unwrap(), zeros(3));
    }

    #[test]
    fn single_decay_on_excited_state() {
        let gamma: f64 = 0.3;
        // |g⟩⟨e| with g = index 0, e = index 1
        let l = outer(&ket(2, 0), &ket(2, 1)).mapv(|z| z * gamma.sqrt());
        let ls = LindbladSet::new(vec![l]).unwrap();
        let d = apply_dissipator(&proj(2, 1), &ls).unwrap();
        let expected = (proj(2, 0) - proj(2, 1)).mapv(|z| z * (2.0 * gamma));
        assert_abs_diff_eq!(max_abs_diff(&d, &expected), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn jump_set_rejects_mixed_dims() {
        assert!(LindbladSet::new(vec![identity(2), identity(3)]).is_err());
        let ls = LindbladSet::new(vec![identity(2)]).unwrap();
        assert!(ls.apply(&identity(3)).is_err());
    }

    #[test]
    fn propagator_is_unitary_and_transfers_excitation() {
        let g = 0.5;
        let h = jc_two_level(g);
        assert_abs_diff_eq!(
            max_abs_diff(&unitary_propagator(&h, 0.0).unwrap(), &identity(4)),
            0.0,
            epsilon = 1e-14
        );
        let t = std::f64::consts::FRAC_PI_2 / g;
        let u = unitary_propagator(&h, t).unwrap();
        assert!(max_abs_diff(&dagger(&u).dot(&u), &identity(4)) < 1e-10);
        // |0,e⟩ → |1,g⟩
        assert_abs_diff_eq!(u[[2, 1]].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unitary_rabi_population() {
        let g = 0.5;
        let h = jc_two_level(g);
        let grid = uniform_grid(10.0, 0.25).unwrap();
        let traj = evolve_unitary(&proj(4, 1), &h, &grid).unwrap();
        for (t, rho) in traj.times.iter().zip(&traj.states) {
            assert_abs_diff_eq!(rho[[1, 1]].re, (g * t).cos().powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn unitary_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(&mut rng, 3);
        let traj = evolve_unitary(&rho, &zeros(3), &[0.0, 1.0, 5.0]).unwrap();
        for s in &traj.states {
            assert_abs_diff_eq!(max_abs_diff(s, &rho), 0.0, epsilon = 1e-15);
        }
        let h = from_real_diag(&[0.0, 1.0, 3.0]);
        let diag = from_real_diag(&[0.2, 0.3, 0.5]);
        let traj = evolve_unitary(&diag, &h, &[0.0, 2.0, 7.0]).unwrap();
        for s in &traj.states {
            assert_abs_diff_eq!(max_abs_diff(s, &diag), 0.0, epsilon = 1e-15);
        }
        assert!(evolve_unitary(&rho, &zeros(2), &[0.0]).is_err());
        assert!(evolve_unitary(&rho, &zeros(3), &[1.0, 0.5]).is_err());
    }

    #[test]
    fn spectral_series_matches_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // a degenerate pair exercises the slow-pair branch
        let u = random_unitary(&mut rng);
        let h = dagger(&u).dot(&from_real_diag(&[0.1, 0.1, 0.7, -1.2])).dot(&u);
        let h = (&h + &dagger(&h)).mapv(|z| z * 0.5);
        let rho0 = random_density(&mut rng, 4);
        let op = random_hermitian(&mut rng, 4);
        let evo = UnitaryEvolution::new(&h, &rho0).unwrap();
        let series = evo.series(&op).unwrap();
        for t in [0.0, 0.3, 2.0, 11.0] {
            let direct = crate::linalg::expectation(&evo.state_at(t), &op).re;
            assert_abs_diff_eq!(series.value(t), direct, epsilon = 1e-12);
        }
        // integral against a fine Simpson rule
        let t_end = 3.0;
        let n = 2000;
        let dt = t_end / n as f64;
        let simpson: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * series.value(i as f64 * dt)
            })
            .sum::<f64>()
            * dt
            / 3.0;
        assert_abs_diff_eq!(series.integral(t_end), simpson, epsilon = 1e-10);
        assert_eq!(series.integral(0.0), 0.0);
    }

    fn random_unitary(rng: &mut ChaCha8Rng) -> CMatrix {
        unitary_propagator(&random_hermitian(rng, 4), 1.0).unwrap()
    }

    #[test]
    fn lindblad_without_jumps_matches_unitary() {
        let h = jc_two_level(0.5);
        let grid = uniform_grid(20.0, 0.5).unwrap();
        let exact = evolve_unitary(&proj(4, 1), &h, &grid).unwrap();
        let rk = evolve_lindblad(&proj(4, 1), &h, &LindbladSet::empty(), &grid, 1e-3).unwrap();
        for (a, b) in exact.states.iter().zip(&rk.states) {
            assert!(max_abs_diff(a, b) <= 1e-8);
        }
    }

    #[test]
    fn pure_decay_population() {
        let gamma: f64 = 0.25;
        let l = outer(&ket(2, 0), &ket(2, 1)).mapv(|z| z * gamma.sqrt());
        let ls = LindbladSet::new(vec![l]).unwrap();
        let grid = uniform_grid(4.0, 0.5).unwrap();
        let traj = evolve_lindblad(&proj(2, 1), &zeros(2), &ls, &grid, 1e-3).unwrap();
        // ṗ_e = −2γ p_e for the factor-2 convention
        for (t, rho) in traj.times.iter().zip(&traj.states) {
            assert_abs_diff_eq!(rho[[1, 1]].re, (-2.0 * gamma * t).exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn rk4_error_ratio_on_halving() {
        let gamma: f64 = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(&mut rng, 3);
        let l = random_matrix(&mut rng, 3).mapv(|z| z * gamma.sqrt());
        let ls = LindbladSet::new(vec![l]).unwrap();
        let rho0 = random_density(&mut rng, 3);
        let grid = [0.0, 4.0];
        let reference = evolve_lindblad(&rho0, &h, &ls, &grid, 1e-3).unwrap();
        let err = |step: f64| {
            let traj = evolve_lindblad(&rho0, &h, &ls, &grid, step).unwrap();
            max_abs_diff(traj.final_state(), reference.final_state())
        };
        let ratio = err(0.1) / err(0.05);
        assert!((8.0..=24.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn observer_sees_every_step() {
        let mut count = 0;
        let mut last = -1.0;
        evolve_lindblad_with(
            &proj(2, 1),
            &from_real_diag(&[0.0, 1.0]),
            &LindbladSet::empty(),
            &[0.0, 0.5, 1.0],
            0.1,
            &mut |t, _| {
                assert!(t > last);
                last = t;
                count += 1;
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(count, 11);
        assert_eq!(last, 1.0);
    }

    #[test]
    fn integration_failure_is_reported() {
        // a huge rate with a coarse step blows up
        let l = outer(&ket(2, 0), &ket(2, 1)).mapv(|z| z * 100.0);
        let ls = LindbladSet::new(vec![l]).unwrap();
        let err = evolve_lindblad(&proj(2, 1), &zeros(2), &ls, &[0.0, 1.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { .. }));
        assert!(evolve_lindblad(&proj(2, 1), &zeros(2), &ls, &[0.5, 1.0], 0.1).is_err());
        assert!(evolve_lindblad(&proj(2, 1), &zeros(2), &ls, &[0.0, 1.0], -0.1).is_err());
    }

    #[test]
    fn time_dependent_constant_provider_matches_unitary() {
        let h = jc_two_level(0.5);
        let grid = uniform_grid(20.0, 1.0).unwrap();
        let exact = evolve_unitary(&proj(4, 1), &h, &grid).unwrap();
        let rk = evolve_time_dependent(&proj(4, 1), |_| Ok(h.clone()), &grid, 1e-3).unwrap();
        for (a, b) in exact.states.iter().zip(&rk.states) {
            assert!(max_abs_diff(a, b) <= 1e-8);
        }
        let zero = evolve_time_dependent(&proj(4, 1), |_| Ok(zeros(4)), &grid, 0.1).unwrap();
        assert!(zero.states.iter().all(|s| *s == proj(4, 1)));
    }

    #[test]
    fn resonant_classical_rabi() {
        // H(t) = σ_z/2 + S e^{−it} σ+ + S* e^{it} σ−
        let s = C64::new(0.3, 0.4);
        let provider = |t: f64| {
            let c = s * (-I * t).exp();
            Ok(array![[real(-0.5), c.conj()], [c, real(0.5)]])
        };
        let grid = uniform_grid(10.0, 0.5).unwrap();
        let traj = evolve_time_dependent(&proj(2, 1), provider, &grid, 1e-3).unwrap();
        for (t, rho) in traj.times.iter().zip(&traj.states) {
            assert_abs_diff_eq!(rho[[1, 1]].re, (s.norm() * t).cos().powi(2), epsilon = 1e-9);
        }
    }

    #[test]
    fn time_dependent_rejects_bad_provider() {
        assert!(evolve_time_dependent(&proj(2, 1), |_| Ok(zeros(3)), &[0.0, 1.0], 0.1).is_err());
        let bad = array![[real(0.0), real(1.0)], [real(0.0), real(0.0)]];
        assert!(evolve_time_dependent(&proj(2, 1), |_| Ok(bad.clone()), &[0.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn uniform_grid_counts() {
        assert_eq!(uniform_grid(1.0, 0.1).unwrap().len(), 11);
        assert_eq!(uniform_grid(1.05, 0.1).unwrap().len(), 11);
        assert_eq!(uniform_grid(0.0, 0.1).unwrap(), vec![0.0]);
        assert!(uniform_grid(1.0, 0.0).is_err());
    }

    #[test]
    fn sparse_and_dense_generators_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rho = random_density(&mut rng, 10);
        let h = kron(&from_real_diag(&[0.0, 1.0, 2.0, 3.0, 4.0]), &pauli_z());
        let l = kron(&identity(5), &outer(&ket(2, 0), &ket(2, 1)));
        let ls = LindbladSet::new(vec![l]).unwrap();
        let gen = Generator::new(&h, &ls).unwrap();
        assert!(matches!(gen.g, Operator::Sparse(_)));
        let direct = commutator(&h, &rho).unwrap().mapv(|z| -I * z) + ls.apply(&rho).unwrap();
        assert!(max_abs_diff(&gen.rhs(&rho), &direct) < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn dissipator_is_traceless_and_hermitian(seed in any::<u64>(), jumps in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ls = LindbladSet::new((0..jumps).map(|_| random_matrix(&mut rng, 3)).collect()).unwrap();
            let rho = random_density(&mut rng, 3);
            let d = ls.apply(&rho).unwrap();
            prop_assert!(trace(&d).norm() <= 1e-12);
            prop_assert!(max_abs_diff(&d, &dagger(&d)) <= 1e-12);
            let x = random_hermitian(&mut rng, 3);
            let lhs = crate::linalg::expectation(&d, &x);
            let rhs = crate::linalg::expectation(&rho, &ls.adjoint_apply(&x).unwrap());
            prop_assert!((lhs - rhs).norm() <= 1e-12);
        }

        #[test]
        fn unitary_evolution_preserves_spectrum(seed in any::<u64>(), t in 0.0f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hermitian(&mut rng, 4);
            let rho = random_density(&mut rng, 4);
            let traj = evolve_unitary(&rho, &h, &[0.0, t]).unwrap();
            let before = hermitian_eig(&rho).unwrap().values;
            let after = hermitian_eig(traj.final_state()).unwrap().values;
            for (a, b) in before.iter().zip(after.iter()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            prop_assert!(max_abs(&(traj.final_state() - &rho)) < 10.0);
        }
    }

    #[test]
    fn lindblad_trace_over_many_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = random_hermitian(&mut rng, 3);
        let ls = LindbladSet::new(vec![random_matrix(&mut rng, 3).mapv(|z| z * 0.3)]).unwrap();
        let rho0 = random_density(&mut rng, 3);
        let grid = uniform_grid(20.0, 1.0).unwrap();
        let traj = evolve_lindblad(&rho0, &h, &ls, &grid, 1e-3).unwrap();
        let (drift, min_eig) = traj.hygiene().unwrap();
        assert!(drift <= 1e-8);
        assert!(min_eig >= -1e-8);
    }
}
