//! Dense complex-matrix kernel: Kronecker products, partial traces,
//! commutators, Hermitian eigendecomposition and matrix functions.
//!
//! Units follow ħ = 1 everywhere, so `e^{-iHt}` is written without ħ.

use ndarray::{s, Array1, Array2, ShapeBuilder};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::layout::{HilbertLayout, Slot};

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;

/// Absolute tolerance on `max |M - M†|`, scaled by `max(1, max |M_ij|)`.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    Array2::from_diag_elem(n, real(1.0))
}

pub fn zeros(n: usize) -> CMatrix {
    Array2::zeros((n, n))
}

pub fn from_real_diag(values: &[f64]) -> CMatrix {
    Array2::from_diag(&Array1::from_iter(values.iter().map(|&v| real(v))))
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diag().sum()
}

/// `|u⟩⟨v|`
pub fn outer(u: &Array1<C64>, v: &Array1<C64>) -> CMatrix {
    Array2::from_shape_fn((u.len(), v.len()), |(i, j)| u[i] * v[j].conj())
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

/// `Tr{ρ O}` in O(d²).
pub fn expectation(rho: &CMatrix, op: &CMatrix) -> C64 {
    rho.iter()
        .zip(op.t().iter())
        .map(|(r, o)| r * o)
        .sum()
}

pub(crate) fn ensure_square(m: &CMatrix, context: &'static str) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::DimensionMismatch {
            context,
            expected: r,
            found: c,
        });
    }
    if r == 0 {
        return Err(Error::InvalidArgument(format!("{context}: empty matrix")));
    }
    Ok(r)
}

pub(crate) fn ensure_same_dim(a: &CMatrix, b: &CMatrix, context: &'static str) -> Result<usize> {
    let n = ensure_square(a, context)?;
    let m = ensure_square(b, context)?;
    if n != m {
        return Err(Error::DimensionMismatch {
            context,
            expected: n,
            found: m,
        });
    }
    Ok(n)
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            defect = defect.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    defect
}

pub fn is_hermitian(m: &CMatrix) -> bool {
    m.is_square() && hermiticity_defect(m) <= HERMITIAN_TOL * max_abs(m).max(1.0)
}

pub fn ensure_hermitian(m: &CMatrix, what: &str) -> Result<()> {
    let defect = hermiticity_defect(m);
    if defect > HERMITIAN_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian {
            what: what.to_string(),
            defect,
        });
    }
    Ok(())
}

/// Kronecker product with `a` as the slower-varying index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == C64::new(0.0, 0.0) {
            continue;
        }
        out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
            .assign(&b.mapv(|y| x * y));
    }
    out
}

/// `ab - ba`
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    ensure_same_dim(a, b, "commutator")?;
    Ok(a.dot(b) - b.dot(a))
}

/// Traces out every slot not listed in `keep`.
pub fn partial_trace(m: &CMatrix, layout: &HilbertLayout, keep: &[Slot]) -> Result<CMatrix> {
    let n = ensure_square(m, "partial_trace")?;
    if n != layout.total_dim() {
        return Err(Error::DimensionMismatch {
            context: "partial_trace",
            expected: layout.total_dim(),
            found: n,
        });
    }
    // validates the slot set
    layout.restricted(keep)?;
    let mask: Vec<bool> = layout.slots().map(|s| keep.contains(&s)).collect();
    Ok(partial_trace_dims(m, &layout.dims(), &mask))
}

pub(crate) fn partial_trace_dims(m: &CMatrix, dims: &[usize], keep: &[bool]) -> CMatrix {
    let kept_dim: usize = dims
        .iter()
        .zip(keep)
        .filter(|(_, k)| **k)
        .map(|(d, _)| d)
        .product();
    let traced_dim: usize = dims
        .iter()
        .zip(keep)
        .filter(|(_, k)| !**k)
        .map(|(d, _)| d)
        .product();
    let total: usize = dims.iter().product();

    // full index -> (kept index, traced index)
    let mut split = Vec::with_capacity(total);
    for full in 0..total {
        let mut rem = full;
        let mut kept = 0;
        let mut traced = 0;
        let mut kept_stride = 1;
        let mut traced_stride = 1;
        for (d, k) in dims.iter().zip(keep).rev() {
            let digit = rem % d;
            rem /= d;
            if *k {
                kept += digit * kept_stride;
                kept_stride *= d;
            } else {
                traced += digit * traced_stride;
                traced_stride *= d;
            }
        }
        split.push((kept, traced));
    }

    let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::with_capacity(kept_dim); traced_dim];
    for (full, &(kept, traced)) in split.iter().enumerate() {
        groups[traced].push((full, kept));
    }

    let mut out = Array2::zeros((kept_dim, kept_dim));
    for group in &groups {
        for &(i, ki) in group {
            for &(j, kj) in group {
                out[[ki, kj]] += m[[i, j]];
            }
        }
    }
    out
}

/// Eigenvalues in ascending order with the matching orthonormal column
/// eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub values: Array1<f64>,
    pub vectors: CMatrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V f(Λ) V†`
    pub fn apply(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let weights: Vec<C64> = self.values.iter().map(|&v| f(v)).collect();
        let mut scaled = self.vectors.clone();
        for (mut col, w) in scaled.columns_mut().into_iter().zip(&weights) {
            col.mapv_inplace(|z| z * w);
        }
        scaled.dot(&dagger(&self.vectors))
    }

    /// `V† M V`
    pub fn to_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        dagger(&self.vectors).dot(m).dot(&self.vectors)
    }

    /// `V M V†`
    pub fn from_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        self.vectors.dot(m).dot(&dagger(&self.vectors))
    }
}

/// Hermitian eigendecomposition.
///
/// The matrix is first split into the connected components of its nonzero
/// pattern and each block is diagonalized on its own, so eigenvectors of
/// block-structured Hamiltonians (conserved quantities) carry exact zeros
/// outside their block.
pub fn hermitian_eig(h: &CMatrix) -> Result<EigenSystem> {
    let n = ensure_square(h, "hermitian_eig")?;
    ensure_hermitian(h, "hermitian_eig input")?;

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if h[[i, j]] != C64::new(0.0, 0.0) || h[[j, i]] != C64::new(0.0, 0.0) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = components.len();
            components.push(Vec::new());
        }
        components[root_slot[r]].push(i);
    }

    // (eigenvalue, support indices, local eigenvector)
    let mut pairs: Vec<(f64, usize, Array1<C64>)> = Vec::with_capacity(n);
    for (ci, comp) in components.iter().enumerate() {
        if comp.len() == 1 {
            pairs.push((h[[comp[0], comp[0]]].re, ci, Array1::from_elem(1, real(1.0))));
            continue;
        }
        let k = comp.len();
        // column-major so LAPACK sees the block itself rather than its transpose
        let block = Array2::from_shape_fn((k, k).f(), |(a, b)| {
            0.5 * (h[[comp[a], comp[b]]] + h[[comp[b], comp[a]]].conj())
        });
        let (vals, vecs) = block.eigh(UPLO::Lower)?;
        for (idx, val) in vals.iter().enumerate() {
            pairs.push((*val, ci, vecs.column(idx).to_owned()));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for (col, (val, ci, local)) in pairs.into_iter().enumerate() {
        values[col] = val;
        for (&row, amp) in components[ci].iter().zip(local.iter()) {
            vectors[[row, col]] = *amp;
        }
    }
    Ok(EigenSystem { values, vectors })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatrixFunction {
    /// `e^{-iHt}`
    UnitaryExp { t: f64 },
    /// `e^{-βH}`
    Gibbs { beta: f64 },
}

pub fn matrix_function(h: &CMatrix, kind: MatrixFunction) -> Result<CMatrix> {
    let eig = hermitian_eig(h)?;
    Ok(match kind {
        MatrixFunction::UnitaryExp { t } => eig.apply(|e| (-I * e * t).exp()),
        MatrixFunction::Gibbs { beta } => eig.apply(|e| real((-beta * e).exp())),
    })
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kron_of_identities_is_identity() {
        assert_eq!(kron(&identity(2), &identity(3)), identity(6));
    }

    #[test]
    fn kron_diagonal_ordering() {
        let a = from_real_diag(&[1.0, 2.0]);
        assert_eq!(kron(&a, &identity(2)), from_real_diag(&[1.0, 1.0, 2.0, 2.0]));
    }

    #[test]
    fn kron_matches_index_formula() {
        let a = pauli_z();
        let b = pauli_x();
        let k = kron(&a, &b);
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        assert_eq!(k[[2 * i + p, 2 * j + q]], a[[i, j]] * b[[p, q]]);
                    }
                }
            }
        }
    }

    #[test]
    fn commutator_of_paulis() {
        let c = commutator(&pauli_x(), &pauli_y()).unwrap();
        let expected = pauli_z().mapv(|z| 2.0 * I * z);
        assert_abs_diff_eq!(max_abs_diff(&c, &expected), 0.0, epsilon = 1e-15);
        let a = pauli_y();
        assert_eq!(max_abs(&commutator(&a, &a).unwrap()), 0.0);
        assert!(commutator(&identity(2), &identity(3)).is_err());
    }

    #[test]
    fn commutator_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_hermitian(&mut rng, 5);
        let b = random_hermitian(&mut rng, 5);
        let c = commutator(&a, &b).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let mut expected = C64::new(0.0, 0.0);
                for k in 0..5 {
                    expected += a[[i, k]] * b[[k, j]] - b[[i, k]] * a[[k, j]];
                }
                assert_abs_diff_eq!((c[[i, j]] - expected).norm(), 0.0, epsilon = 1e-13);
            }
        }
        // anti-Hermitian
        assert_abs_diff_eq!(max_abs_diff(&c, &dagger(&c).mapv(|z| -z)), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_density(&mut rng, 3);
        let b = random_matrix(&mut rng, 2);
        let layout = HilbertLayout::bipartite(3, 2).unwrap();
        let reduced = partial_trace(&kron(&a, &b), &layout, &[Slot::Drive]).unwrap();
        let expected = a.mapv(|z| z * trace(&b));
        assert_abs_diff_eq!(max_abs_diff(&reduced, &expected), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn partial_trace_of_identity() {
        let layout = HilbertLayout::bipartite(2, 3).unwrap();
        let reduced = partial_trace(&identity(6), &layout, &[Slot::Drive]).unwrap();
        assert_eq!(reduced, identity(2).mapv(|z| z * 3.0));
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let amp = real(std::f64::consts::FRAC_1_SQRT_2);
        let psi = ndarray::array![amp, real(0.0), real(0.0), amp];
        let rho = outer(&psi, &psi);
        let layout = HilbertLayout::bipartite(2, 2).unwrap();
        for keep in [Slot::Drive, Slot::System] {
            let reduced = partial_trace(&rho, &layout, &[keep]).unwrap();
            assert_abs_diff_eq!(
                max_abs_diff(&reduced, &identity(2).mapv(|z| z * 0.5)),
                0.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn partial_trace_rejects_bad_layouts() {
        let layout = HilbertLayout::bipartite(2, 2).unwrap();
        assert!(partial_trace(&identity(6), &layout, &[Slot::Drive]).is_err());
        assert!(partial_trace(&identity(4), &layout, &[]).is_err());
        assert!(partial_trace(&identity(4), &layout, &[Slot::Environment]).is_err());
    }

    #[test]
    fn partial_trace_middle_slot() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b, c) = (
            random_density(&mut rng, 2),
            random_density(&mut rng, 3),
            random_density(&mut rng, 2),
        );
        let full = kron(&kron(&a, &b), &c);
        let layout = HilbertLayout::tripartite(2, 3, 2).unwrap();
        let ac = partial_trace(&full, &layout, &[Slot::Drive, Slot::Environment]).unwrap();
        assert_abs_diff_eq!(max_abs_diff(&ac, &kron(&a, &c)), 0.0, epsilon = 1e-14);
        let mid = partial_trace(&full, &layout, &[Slot::System]).unwrap();
        assert_abs_diff_eq!(max_abs_diff(&mid, &b), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_of_diagonal_and_pauli() {
        let eig = hermitian_eig(&from_real_diag(&[-1.0, 1.0])).unwrap();
        assert_eq!(eig.values.to_vec(), vec![-1.0, 1.0]);
        assert_eq!(eig.vectors, identity(2));

        let eig = hermitian_eig(&pauli_x()).unwrap();
        assert_abs_diff_eq!(eig.values[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.values[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_of_jc_one_excitation_block() {
        // |0,e⟩, |1,g⟩ block of the resonant JC model: energies ω/2 ± g
        let (omega, g) = (1.0, 0.5);
        let block = ndarray::array![
            [real(omega / 2.0), real(g)],
            [real(g), real(omega / 2.0)]
        ];
        let eig = hermitian_eig(&block).unwrap();
        assert_abs_diff_eq!(eig.values[0], omega / 2.0 - g, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.values[1], omega / 2.0 + g, epsilon = 1e-14);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = ndarray::array![[real(0.0), real(1.0)], [real(0.0), real(0.0)]];
        assert!(matches!(hermitian_eig(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eig_block_structure_keeps_exact_zeros() {
        // two decoupled 2x2 blocks interleaved
        let mut h = zeros(4);
        h[[0, 0]] = real(1.0);
        h[[2, 2]] = real(-1.0);
        h[[0, 2]] = C64::new(0.3, 0.1);
        h[[2, 0]] = C64::new(0.3, -0.1);
        h[[1, 1]] = real(0.5);
        h[[3, 3]] = real(0.7);
        h[[1, 3]] = real(0.2);
        h[[3, 1]] = real(0.2);
        let eig = hermitian_eig(&h).unwrap();
        for col in eig.vectors.columns() {
            let even = col[0].norm() + col[2].norm();
            let odd = col[1].norm() + col[3].norm();
            assert!(even == 0.0 || odd == 0.0);
        }
        let rebuilt = eig.apply(real);
        assert_abs_diff_eq!(max_abs_diff(&rebuilt, &h), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn matrix_functions_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(&mut rng, 4);
        let u0 = matrix_function(&h, MatrixFunction::UnitaryExp { t: 0.0 }).unwrap();
        assert_abs_diff_eq!(max_abs_diff(&u0, &identity(4)), 0.0, epsilon = 1e-13);
        let g0 = matrix_function(&h, MatrixFunction::Gibbs { beta: 0.0 }).unwrap();
        assert_abs_diff_eq!(max_abs_diff(&g0, &identity(4)), 0.0, epsilon = 1e-13);

        let omega = 1.3;
        let t = 0.77;
        let hz = pauli_z().mapv(|z| z * omega / 2.0);
        let u = matrix_function(&hz, MatrixFunction::UnitaryExp { t }).unwrap();
        assert_abs_diff_eq!((u[[0, 0]] - (-I * omega * t / 2.0).exp()).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((u[[1, 1]] - (I * omega * t / 2.0).exp()).norm(), 0.0, epsilon = 1e-15);

        let gibbs = matrix_function(&hz, MatrixFunction::Gibbs { beta: 2.0 }).unwrap();
        assert_abs_diff_eq!(gibbs[[0, 0]].re, (-omega).exp(), epsilon = 1e-14);
        assert!(matrix_function(&random_matrix(&mut rng, 3), MatrixFunction::Gibbs { beta: 1.0 }).is_err());
    }

    #[test]
    fn expectation_matches_trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 6);
        let b = random_matrix(&mut rng, 6);
        assert_abs_diff_eq!((expectation(&a, &b) - trace(&a.dot(&b))).norm(), 0.0, epsilon = 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kron_is_associative(seed in any::<u64>(), n1 in 1usize..4, n2 in 1usize..4, n3 in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (random_matrix(&mut rng, n1), random_matrix(&mut rng, n2), random_matrix(&mut rng, n3));
            let left = kron(&kron(&a, &b), &c);
            let right = kron(&a, &kron(&b, &c));
            prop_assert!(max_abs_diff(&left, &right) <= 1e-13);
        }

        #[test]
        fn partial_trace_is_linear_and_trace_preserving(seed in any::<u64>(), d in 1usize..4, s in 1usize..4, e in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layout = HilbertLayout::tripartite(d, s, e).unwrap();
            let n = layout.total_dim();
            let a = random_matrix(&mut rng, n);
            let b = random_matrix(&mut rng, n);
            let w = C64::new(0.3, -1.2);
            for keep in [vec![Slot::Drive], vec![Slot::System, Slot::Environment], vec![Slot::Environment]] {
                let ta = partial_trace(&a, &layout, &keep).unwrap();
                let tb = partial_trace(&b, &layout, &keep).unwrap();
                let tab = partial_trace(&(&a + &b.mapv(|z| z * w)), &layout, &keep).unwrap();
                prop_assert!(max_abs_diff(&tab, &(&ta + &tb.mapv(|z| z * w))) <= 1e-12);
                prop_assert!((trace(&ta) - trace(&a)).norm() <= 1e-12);
            }
        }

        #[test]
        fn eig_reconstructs_and_is_unitary(seed in any::<u64>(), n in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hermitian(&mut rng, n);
            let eig = hermitian_eig(&h).unwrap();
            let v = &eig.vectors;
            prop_assert!(max_abs_diff(&dagger(v).dot(v), &identity(n)) <= 1e-10);
            let scale = max_abs(&h).max(1.0);
            prop_assert!(max_abs_diff(&eig.apply(real), &h) <= 1e-10 * scale);
            for (k, lambda) in eig.values.iter().enumerate() {
                let hv = h.dot(&v.column(k));
                let lv = v.column(k).mapv(|z| z * *lambda);
                let err = hv.iter().zip(lv.iter()).fold(0.0f64, |acc, (x, y)| acc.max((x - y).norm()));
                prop_assert!(err <= 1e-10 * scale);
            }
            prop_assert!(eig.values.windows(2).into_iter().all(|w| w[0] <= w[1]));
        }

        #[test]
        fn unitary_exp_composes(seed in any::<u64>(), t1 in -3.0f64..3.0, t2 in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hermitian(&mut rng, 4);
            let u1 = matrix_function(&h, MatrixFunction::UnitaryExp { t: t1 }).unwrap();
            let u2 = matrix_function(&h, MatrixFunction::UnitaryExp { t: t2 }).unwrap();
            let u12 = matrix_function(&h, MatrixFunction::UnitaryExp { t: t1 + t2 }).unwrap();
            prop_assert!(max_abs_diff(&u1.dot(&u2), &u12) <= 1e-10);
            prop_assert!(max_abs_diff(&dagger(&u1).dot(&u1), &identity(4)) <= 1e-10);
        }
    }
}
