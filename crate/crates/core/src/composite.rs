//! Operator lifting into the composite D ⊗ S ⊗ E space and assembly of the
//! six-part total Hamiltonian.

use ndarray_linalg::{EighInto, UPLO};

use crate::error::{Error, Result};
use crate::layout::{HilbertLayout, Slot};
use crate::linalg::{ensure_hermitian, ensure_square, identity, kron, trace, zeros, CMatrix};

/// Minimum eigenvalue tolerated when validating density matrices.
pub const POSITIVITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;

/// Places each operator on its slot and identities elsewhere, in global slot
/// order.
pub fn embed(ops: &[(Slot, &CMatrix)], layout: &HilbertLayout) -> Result<CMatrix> {
    for (slot, op) in ops {
        let n = ensure_square(op, "embed")?;
        let expected = layout.dim_of(*slot)?;
        if n != expected {
            return Err(Error::DimensionMismatch {
                context: "embed",
                expected,
                found: n,
            });
        }
    }
    let mut out: Option<CMatrix> = None;
    for (slot, dim) in layout.slots().zip(layout.dims()) {
        let factor = match ops.iter().find(|(s, _)| *s == slot) {
            Some((_, op)) => (*op).clone(),
            None => identity(dim),
        };
        out = Some(match out {
            None => factor,
            Some(acc) => kron(&acc, &factor),
        });
    }
    Ok(out.expect("layout is never empty"))
}

/// Acts as `op` on `slot` and as the identity elsewhere.
pub fn lift(op: &CMatrix, layout: &HilbertLayout, slot: Slot) -> Result<CMatrix> {
    embed(&[(slot, op)], layout)
}

/// Interaction `Σ_α B_α ⊗ A_α` between two slots, kept term by term with
/// Hermitian factors.
#[derive(Clone, Debug)]
pub struct FactorizedCoupling {
    left: Slot,
    right: Slot,
    left_dim: usize,
    right_dim: usize,
    terms: Vec<(CMatrix, CMatrix)>,
}

impl FactorizedCoupling {
    pub fn new(left: Slot, right: Slot, terms: Vec<(CMatrix, CMatrix)>) -> Result<Self> {
        let (l0, r0) = terms
            .first()
            .map(|(b, a)| (b.nrows(), a.nrows()))
            .ok_or_else(|| {
                Error::InvalidArgument("coupling needs at least one term; use `zero`".into())
            })?;
        Self::with_dims(left, right, l0, r0, terms)
    }

    pub fn zero(left: Slot, right: Slot, left_dim: usize, right_dim: usize) -> Result<Self> {
        Self::with_dims(left, right, left_dim, right_dim, Vec::new())
    }

    fn with_dims(
        left: Slot,
        right: Slot,
        left_dim: usize,
        right_dim: usize,
        terms: Vec<(CMatrix, CMatrix)>,
    ) -> Result<Self> {
        if left >= right {
            return Err(Error::Layout(format!(
                "coupling slots must follow global order, got {left} then {right}"
            )));
        }
        for (b, a) in &terms {
            for (m, expected) in [(b, left_dim), (a, right_dim)] {
                let n = ensure_square(m, "coupling factor")?;
                if n != expected {
                    return Err(Error::DimensionMismatch {
                        context: "coupling factor",
                        expected,
                        found: n,
                    });
                }
            }
            ensure_hermitian(b, &format!("coupling factor on {left}"))?;
            ensure_hermitian(a, &format!("coupling factor on {right}"))?;
        }
        Ok(Self {
            left,
            right,
            left_dim,
            right_dim,
            terms,
        })
    }

    pub fn left(&self) -> Slot {
        self.left
    }

    pub fn right(&self) -> Slot {
        self.right
    }

    pub fn left_dim(&self) -> usize {
        self.left_dim
    }

    pub fn right_dim(&self) -> usize {
        self.right_dim
    }

    pub fn terms(&self) -> &[(CMatrix, CMatrix)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The coupling on the two-slot space `left ⊗ right`.
    pub fn assemble(&self) -> CMatrix {
        let mut out = zeros(self.left_dim * self.right_dim);
        for (b, a) in &self.terms {
            out = out + kron(b, a);
        }
        out
    }

    pub fn lift(&self, layout: &HilbertLayout) -> Result<CMatrix> {
        let n = layout.total_dim();
        let mut out = zeros(n);
        if self.terms.is_empty() {
            // still validate that the slots exist with the right dims
            for (slot, dim) in [(self.left, self.left_dim), (self.right, self.right_dim)] {
                let found = layout.dim_of(slot)?;
                if found != dim {
                    return Err(Error::DimensionMismatch {
                        context: "coupling lift",
                        expected: found,
                        found: dim,
                    });
                }
            }
        }
        for (b, a) in &self.terms {
            out = out + embed(&[(self.left, b), (self.right, a)], layout)?;
        }
        Ok(out)
    }
}

/// The six pieces of the composite Hamiltonian.
#[derive(Clone, Debug)]
pub struct CompositeHamiltonian {
    pub h_s: CMatrix,
    pub h_d: CMatrix,
    pub h_e: Option<CMatrix>,
    pub h_sd: FactorizedCoupling,
    pub h_se: Option<FactorizedCoupling>,
    pub h_de: Option<FactorizedCoupling>,
}

/// Every part of a [`CompositeHamiltonian`] lifted to the full space; absent
/// parts are zero matrices.
#[derive(Clone, Debug)]
pub struct LiftedHamiltonian {
    pub h_s: CMatrix,
    pub h_d: CMatrix,
    pub h_e: CMatrix,
    pub h_sd: CMatrix,
    pub h_se: CMatrix,
    pub h_de: CMatrix,
}

impl LiftedHamiltonian {
    pub fn total(&self) -> CMatrix {
        &self.h_s + &self.h_d + &self.h_e + &self.h_sd + &self.h_se + &self.h_de
    }
}

impl CompositeHamiltonian {
    pub fn bipartite(h_s: CMatrix, h_d: CMatrix, h_sd: FactorizedCoupling) -> Self {
        Self {
            h_s,
            h_d,
            h_e: None,
            h_sd,
            h_se: None,
            h_de: None,
        }
    }

    pub fn with_environment(
        mut self,
        h_e: CMatrix,
        h_se: Option<FactorizedCoupling>,
        h_de: Option<FactorizedCoupling>,
    ) -> Self {
        self.h_e = Some(h_e);
        self.h_se = h_se;
        self.h_de = h_de;
        self
    }

    pub fn validate(&self, layout: &HilbertLayout) -> Result<()> {
        let local = [
            (Slot::System, Some(&self.h_s), "H_S"),
            (Slot::Drive, Some(&self.h_d), "H_D"),
            (Slot::Environment, self.h_e.as_ref(), "H_E"),
        ];
        for (slot, op, name) in local {
            let Some(op) = op else { continue };
            let n = ensure_square(op, "local Hamiltonian")?;
            let expected = layout.dim_of(slot)?;
            if n != expected {
                return Err(Error::DimensionMismatch {
                    context: "local Hamiltonian",
                    expected,
                    found: n,
                });
            }
            ensure_hermitian(op, name)?;
        }
        if !layout.has_environment()
            && (self.h_e.is_some() || self.h_se.is_some() || self.h_de.is_some())
        {
            return Err(Error::Layout(
                "environment terms given but the layout has no E slot".into(),
            ));
        }
        let couplings = [
            (Some(&self.h_sd), (Slot::Drive, Slot::System), "H_SD"),
            (self.h_se.as_ref(), (Slot::System, Slot::Environment), "H_SE"),
            (self.h_de.as_ref(), (Slot::Drive, Slot::Environment), "H_DE"),
        ];
        for (coupling, slots, name) in couplings {
            let Some(c) = coupling else { continue };
            if (c.left(), c.right()) != slots {
                return Err(Error::Layout(format!(
                    "{name} must couple {} and {}, got {} and {}",
                    slots.0,
                    slots.1,
                    c.left(),
                    c.right()
                )));
            }
            for (slot, dim) in [(c.left(), c.left_dim()), (c.right(), c.right_dim())] {
                let expected = layout.dim_of(slot)?;
                if dim != expected {
                    return Err(Error::DimensionMismatch {
                        context: "coupling",
                        expected,
                        found: dim,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn lift_parts(&self, layout: &HilbertLayout) -> Result<LiftedHamiltonian> {
        self.validate(layout)?;
        let n = layout.total_dim();
        let lift_opt = |op: Option<&CMatrix>, slot| match op {
            Some(op) => lift(op, layout, slot),
            None => Ok(zeros(n)),
        };
        let lift_coupling = |c: Option<&FactorizedCoupling>| match c {
            Some(c) => c.lift(layout),
            None => Ok(zeros(n)),
        };
        Ok(LiftedHamiltonian {
            h_s: lift(&self.h_s, layout, Slot::System)?,
            h_d: lift(&self.h_d, layout, Slot::Drive)?,
            h_e: lift_opt(self.h_e.as_ref(), Slot::Environment)?,
            h_sd: lift_coupling(Some(&self.h_sd))?,
            h_se: lift_coupling(self.h_se.as_ref())?,
            h_de: lift_coupling(self.h_de.as_ref())?,
        })
    }
}

pub fn assemble_total(ch: &CompositeHamiltonian, layout: &HilbertLayout) -> Result<CMatrix> {
    let total = ch.lift_parts(layout)?.total();
    ensure_hermitian(&total, "assembled Hamiltonian")?;
    Ok(total)
}

/// Checks Hermiticity, unit trace and positivity (minimum eigenvalue ≥ −1e−10).
pub fn validate_density(rho: &CMatrix, what: &str) -> Result<()> {
    ensure_square(rho, "density matrix")?;
    ensure_hermitian(rho, what)?;
    let tr = trace(rho);
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(Error::NotDensity(format!("{what} has trace {tr}")));
    }
    let min = min_eigenvalue(rho)?;
    if min < -POSITIVITY_TOL {
        return Err(Error::NotDensity(format!(
            "{what} has negative eigenvalue {min:e}"
        )));
    }
    Ok(())
}

pub(crate) fn min_eigenvalue(m: &CMatrix) -> Result<f64> {
    let sym = (m + &crate::linalg::dagger(m)).mapv(|z| z * 0.5);
    let vals = sym.eigh_into(UPLO::Lower)?.0;
    Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Kronecker product of one density matrix per slot, in slot order.
pub fn product_state(factors: &[CMatrix], layout: &HilbertLayout) -> Result<CMatrix> {
    let dims = layout.dims();
    if factors.len() != dims.len() {
        return Err(Error::DimensionMismatch {
            context: "product_state factor count",
            expected: dims.len(),
            found: factors.len(),
        });
    }
    for ((factor, dim), slot) in factors.iter().zip(&dims).zip(layout.slots()) {
        let n = ensure_square(factor, "product_state")?;
        if n != *dim {
            return Err(Error::DimensionMismatch {
                context: "product_state",
                expected: *dim,
                found: n,
            });
        }
        validate_density(factor, &format!("factor on {slot}"))?;
    }
    Ok(factors[1..]
        .iter()
        .fold(factors[0].clone(), |acc, f| kron(&acc, f)))
}
