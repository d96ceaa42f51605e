//! Truncated two-mode bosonic operator algebra.
//!
//! Mode A carries the cyclotron (kinetic momentum) degree of freedom, mode B
//! the guiding center. Basis states |n_A, n_B⟩ are ordered row-major:
//! `index = n_A * nb + n_B`. Operator identities that hold in infinite
//! dimension are only asserted after restriction to the interior window
//! `n_A < na - buffer`, `n_B < nb - buffer`.

pub mod expm;
pub mod tensor;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use tensor::TensorOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTruncation")]
pub struct Truncation {
    na: usize,
    nb: usize,
    buffer: usize,
}

#[derive(Deserialize)]
struct RawTruncation {
    na: usize,
    nb: usize,
    buffer: Option<usize>,
}

impl TryFrom<RawTruncation> for Truncation {
    type Error = Error;
    fn try_from(raw: RawTruncation) -> Result<Self> {
        match raw.buffer {
            Some(buffer) => Truncation::new(raw.na, raw.nb, buffer),
            None => Truncation::with_default_buffer(raw.na, raw.nb),
        }
    }
}

impl Truncation {
    pub fn new(na: usize, nb: usize, buffer: usize) -> Result<Self> {
        if na < 4 || nb < 4 {
            return Err(Error::Config(format!(
                "mode cutoffs must be at least 4, got na={na}, nb={nb}"
            )));
        }
        if 2 * buffer >= na.min(nb) {
            return Err(Error::Config(format!(
                "buffer {buffer} must be below half the smallest cutoff {}",
                na.min(nb)
            )));
        }
        if na - buffer < 2 || nb - buffer < 2 {
            return Err(Error::Config(
                "interior window must keep at least 2 levels".into(),
            ));
        }
        Ok(Self { na, nb, buffer })
    }

    /// Buffer of `max(4, max(na, nb)/4)`, clamped to the largest valid value.
    pub fn with_default_buffer(na: usize, nb: usize) -> Result<Self> {
        let preferred = 4.max(na.max(nb) / 4);
        let largest_valid = (na.min(nb).saturating_sub(1)) / 2;
        Self::new(na, nb, preferred.min(largest_valid))
    }

    pub fn na(&self) -> usize {
        self.na
    }

    pub fn nb(&self) -> usize {
        self.nb
    }

    pub fn buffer(&self) -> usize {
        self.buffer
    }

    pub fn dim(&self) -> usize {
        self.na * self.nb
    }

    pub fn cutoff(&self, mode: Mode) -> usize {
        match mode {
            Mode::A => self.na,
            Mode::B => self.nb,
        }
    }

    /// Number of trusted levels in the given mode.
    pub fn interior(&self, mode: Mode) -> usize {
        self.cutoff(mode) - self.buffer
    }

    pub fn index(&self, n_a: usize, n_b: usize) -> usize {
        n_a * self.nb + n_b
    }

    pub fn levels(&self, index: usize) -> (usize, usize) {
        (index / self.nb, index % self.nb)
    }

    pub fn is_interior(&self, index: usize) -> bool {
        let (a, b) = self.levels(index);
        a < self.interior(Mode::A) && b < self.interior(Mode::B)
    }
}

/// Numerical contract tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub unitarity: f64,
    pub hermiticity: f64,
    pub norm: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            unitarity: 1e-10,
            hermiticity: 1e-10,
            norm: 1e-10,
        }
    }
}

pub fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

pub fn one() -> C64 {
    C64::new(1.0, 0.0)
}

/// Single-mode annihilation operator on `n` levels.
pub fn lowering_matrix(n: usize) -> Array2<C64> {
    let mut a = Array2::zeros((n, n));
    for k in 1..n {
        a[[k - 1, k]] = C64::new((k as f64).sqrt(), 0.0);
    }
    a
}

pub fn identity_matrix(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, one())
}

pub fn dagger(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Kronecker product `a ⊗ b` in the row-major two-mode ordering.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for ((i, j), &x) in a.indexed_iter() {
        if x == zero() {
            continue;
        }
        for ((k, l), &y) in b.indexed_iter() {
            out[[i * rb + k, j * cb + l]] = x * y;
        }
    }
    out
}

/// Dense operator on the full truncated two-mode space.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    entries: Array2<C64>,
    trunc: Truncation,
}

impl OperatorMatrix {
    pub fn from_entries(trunc: Truncation, entries: Array2<C64>) -> Result<Self> {
        if entries.dim() != (trunc.dim(), trunc.dim()) {
            return Err(Error::Config(format!(
                "operator shape {:?} does not match truncation dimension {}",
                entries.dim(),
                trunc.dim()
            )));
        }
        Ok(Self { entries, trunc })
    }

    pub fn identity(trunc: Truncation) -> Self {
        Self {
            entries: identity_matrix(trunc.dim()),
            trunc,
        }
    }

    pub fn zeros(trunc: Truncation) -> Self {
        Self {
            entries: Array2::zeros((trunc.dim(), trunc.dim())),
            trunc,
        }
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn trunc(&self) -> Truncation {
        self.trunc
    }

    pub fn dim(&self) -> usize {
        self.trunc.dim()
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.trunc != other.trunc {
            return Err(Error::Config(format!(
                "truncation mismatch: {:?} vs {:?}",
                self.trunc, other.trunc
            )));
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: dagger(&self.entries),
            trunc: self.trunc,
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            entries: &self.entries * c,
            trunc: self.trunc,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self {
            entries: &self.entries + &other.entries,
            trunc: self.trunc,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self {
            entries: &self.entries - &other.entries,
            trunc: self.trunc,
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self {
            entries: self.entries.dot(&other.entries),
            trunc: self.trunc,
        })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    /// Frobenius norm over the whole truncated space.
    pub fn norm(&self) -> f64 {
        frobenius(self.entries.iter())
    }

    /// Frobenius norm of `P X P`, P the interior projector.
    pub fn interior_norm(&self) -> f64 {
        let t = self.trunc;
        let inner: Vec<usize> = (0..t.dim()).filter(|&i| t.is_interior(i)).collect();
        frobenius(
            inner
                .iter()
                .flat_map(|&i| inner.iter().map(move |&j| (i, j)))
                .map(|(i, j)| &self.entries[[i, j]]),
        )
    }

    pub fn hermiticity_defect(&self) -> f64 {
        frobenius(
            self.entries
                .indexed_iter()
                .map(|((i, j), z)| z - self.entries[[j, i]].conj())
                .collect::<Vec<_>>()
                .iter(),
        )
    }

    pub fn skew_hermiticity_defect(&self) -> f64 {
        frobenius(
            self.entries
                .indexed_iter()
                .map(|((i, j), z)| z + self.entries[[j, i]].conj())
                .collect::<Vec<_>>()
                .iter(),
        )
    }

    /// ‖P(U†U − I)P‖.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = dagger(&self.entries).dot(&self.entries) - identity_matrix(self.dim());
        Self {
            entries: prod,
            trunc: self.trunc,
        }
        .interior_norm()
    }
}

pub(crate) fn frobenius<'a>(it: impl Iterator<Item = &'a C64>) -> f64 {
    it.map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Annihilation operator of one mode embedded in the two-mode space.
pub fn ladder_lower(mode: Mode, trunc: Truncation) -> OperatorMatrix {
    let entries = match mode {
        Mode::A => kron(&lowering_matrix(trunc.na), &identity_matrix(trunc.nb)),
        Mode::B => kron(&identity_matrix(trunc.na), &lowering_matrix(trunc.nb)),
    };
    OperatorMatrix { entries, trunc }
}

pub fn interior_projector(trunc: Truncation) -> OperatorMatrix {
    let mut entries = Array2::zeros((trunc.dim(), trunc.dim()));
    for i in 0..trunc.dim() {
        if trunc.is_interior(i) {
            entries[[i, i]] = one();
        }
    }
    OperatorMatrix { entries, trunc }
}

/// exp(G) for skew-Hermitian G.
pub fn exp_skew_hermitian(g: &OperatorMatrix, tol: &Tolerances) -> Result<OperatorMatrix> {
    let defect = g.skew_hermiticity_defect();
    if defect > tol.hermiticity * g.norm().max(1.0) {
        return Err(Error::Contract(format!(
            "generator is not skew-Hermitian (defect {defect:.3e})"
        )));
    }
    Ok(OperatorMatrix {
        entries: expm::expm(&g.entries)?,
        trunc: g.trunc,
    })
}

/// Operator product in the listed order; the rightmost factor acts first.
pub fn compose(ops: &[&OperatorMatrix]) -> Result<OperatorMatrix> {
    let (first, rest) = ops
        .split_first()
        .ok_or_else(|| Error::Config("compose needs at least one operator".into()))?;
    rest.iter()
        .try_fold((*first).clone(), |acc, op| acc.mul(op))
}

pub fn adjoint(op: &OperatorMatrix) -> OperatorMatrix {
    op.adjoint()
}

pub fn apply(op: &OperatorMatrix, psi: &StateVector) -> Result<StateVector> {
    if op.trunc != psi.trunc {
        return Err(Error::Config("truncation mismatch in apply".into()));
    }
    Ok(StateVector {
        amplitudes: op.entries.dot(&psi.amplitudes),
        trunc: psi.trunc,
    })
}

pub fn expectation(op: &OperatorMatrix, psi: &StateVector) -> Result<C64> {
    let out = apply(op, psi)?;
    Ok(psi.inner(&out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Array1<C64>,
    trunc: Truncation,
}

impl StateVector {
    pub fn from_amplitudes(trunc: Truncation, amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.len() != trunc.dim() {
            return Err(Error::Config(format!(
                "state length {} does not match dimension {}",
                amplitudes.len(),
                trunc.dim()
            )));
        }
        Ok(Self { amplitudes, trunc })
    }

    pub fn basis(trunc: Truncation, n_a: usize, n_b: usize) -> Result<Self> {
        if n_a >= trunc.na || n_b >= trunc.nb {
            return Err(Error::Config(format!(
                "basis state |{n_a},{n_b}⟩ outside truncation"
            )));
        }
        let mut amplitudes = Array1::zeros(trunc.dim());
        amplitudes[trunc.index(n_a, n_b)] = one();
        Ok(Self { amplitudes, trunc })
    }

    /// Product state ψ_A ⊗ ψ_B.
    pub fn product(trunc: Truncation, psi_a: &Array1<C64>, psi_b: &Array1<C64>) -> Result<Self> {
        if psi_a.len() != trunc.na || psi_b.len() != trunc.nb {
            return Err(Error::Config(
                "mode state lengths do not match truncation".into(),
            ));
        }
        let mut amplitudes = Array1::zeros(trunc.dim());
        for (i, x) in psi_a.iter().enumerate() {
            for (j, y) in psi_b.iter().enumerate() {
                amplitudes[trunc.index(i, j)] = x * y;
            }
        }
        Ok(Self { amplitudes, trunc })
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn trunc(&self) -> Truncation {
        self.trunc
    }

    pub fn amplitude(&self, n_a: usize, n_b: usize) -> C64 {
        self.amplitudes[self.trunc.index(n_a, n_b)]
    }

    pub fn norm(&self) -> f64 {
        frobenius(self.amplitudes.iter())
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Contract("cannot normalize the zero vector".into()));
        }
        Ok(Self {
            amplitudes: &self.amplitudes / C64::new(n, 0.0),
            trunc: self.trunc,
        })
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Probability weight outside the interior window.
    pub fn exterior_weight(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.trunc.is_interior(*i))
            .map(|(_, z)| z.norm_sqr())
            .sum()
    }

    /// Σ_{n_B} |ψ(n_A, n_B)|² for each n_A.
    pub fn mode_a_populations(&self) -> Vec<f64> {
        let mut pops = vec![0.0; self.trunc.na];
        for (i, z) in self.amplitudes.iter().enumerate() {
            pops[i / self.trunc.nb] += z.norm_sqr();
        }
        pops
    }
}
