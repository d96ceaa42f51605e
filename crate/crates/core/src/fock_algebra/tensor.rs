//! Two-mode operators kept in Kronecker-structured form.
//!
//! A [`TensorOperator`] stores
//! `local_a ⊗ I_B + I_A ⊗ local_b + Σ_k left_k ⊗ right_k`
//! with every factor a single-mode matrix. All operators of the Landau model
//! (ladder combinations, Hamiltonians, propagator factors) have this shape, so
//! products, adjoints and exponentials of Kronecker sums never need the full
//! `na·nb` dense matrix. [`TensorOperator::to_dense`] expands to an
//! [`OperatorMatrix`] when a cross-check against the dense route is wanted.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use super::expm::{expm, norm1};
use super::{
    dagger, frobenius, identity_matrix, kron, one, zero, Mode, OperatorMatrix, StateVector,
    Tolerances, Truncation,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TensorOperator {
    trunc: Truncation,
    local_a: Array2<C64>,
    local_b: Array2<C64>,
    products: Vec<(Array2<C64>, Array2<C64>)>,
}

fn is_zero(m: &Array2<C64>) -> bool {
    m.iter().all(|z| *z == zero())
}

/// `Some(c)` if `m` is exactly `c·I`.
fn scalar_value(m: &Array2<C64>) -> Option<C64> {
    let c = m[[0, 0]];
    for ((i, j), z) in m.indexed_iter() {
        let want = if i == j { c } else { zero() };
        if *z != want {
            return None;
        }
    }
    Some(c)
}

impl TensorOperator {
    pub fn zero(trunc: Truncation) -> Self {
        Self {
            trunc,
            local_a: Array2::zeros((trunc.na(), trunc.na())),
            local_b: Array2::zeros((trunc.nb(), trunc.nb())),
            products: Vec::new(),
        }
    }

    pub fn identity(trunc: Truncation) -> Self {
        Self::scalar(trunc, one())
    }

    pub fn scalar(trunc: Truncation, c: C64) -> Self {
        let mut op = Self::zero(trunc);
        op.local_a = identity_matrix(trunc.na()) * c;
        op
    }

    /// `m ⊗ I_B`
    pub fn on_a(trunc: Truncation, m: Array2<C64>) -> Result<Self> {
        check_shape(&m, trunc.na(), "mode A")?;
        let mut op = Self::zero(trunc);
        op.local_a = m;
        Ok(op)
    }

    /// `I_A ⊗ m`
    pub fn on_b(trunc: Truncation, m: Array2<C64>) -> Result<Self> {
        check_shape(&m, trunc.nb(), "mode B")?;
        let mut op = Self::zero(trunc);
        op.local_b = m;
        Ok(op)
    }

    pub fn on_mode(trunc: Truncation, mode: Mode, m: Array2<C64>) -> Result<Self> {
        match mode {
            Mode::A => Self::on_a(trunc, m),
            Mode::B => Self::on_b(trunc, m),
        }
    }

    /// `a ⊗ b`
    pub fn product(trunc: Truncation, a: Array2<C64>, b: Array2<C64>) -> Result<Self> {
        check_shape(&a, trunc.na(), "mode A")?;
        check_shape(&b, trunc.nb(), "mode B")?;
        let mut op = Self::zero(trunc);
        op.push_product(a, b);
        Ok(op)
    }

    pub fn trunc(&self) -> Truncation {
        self.trunc
    }

    pub fn local_a(&self) -> &Array2<C64> {
        &self.local_a
    }

    pub fn local_b(&self) -> &Array2<C64> {
        &self.local_b
    }

    pub fn products(&self) -> &[(Array2<C64>, Array2<C64>)] {
        &self.products
    }

    fn push_product(&mut self, a: Array2<C64>, b: Array2<C64>) {
        if is_zero(&a) || is_zero(&b) {
            return;
        }
        if let Some(c) = scalar_value(&b) {
            self.local_a = &self.local_a + &(a * c);
        } else if let Some(c) = scalar_value(&a) {
            self.local_b = &self.local_b + &(b * c);
        } else {
            self.products.push((a, b));
        }
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

    pub fn scale(&self, c: C64) -> Self {
        let mut out = Self::zero(self.trunc);
        out.local_a = &self.local_a * c;
        out.local_b = &self.local_b * c;
        for (a, b) in &self.products {
            out.push_product(a * c, b.clone());
        }
        out
    }

    /// Σ c_k·X_k in one pass over the single-mode factors.
    pub fn linear_combination(trunc: Truncation, terms: &[(C64, &TensorOperator)]) -> Result<Self> {
        let mut out = Self::zero(trunc);
        for (c, op) in terms {
            out.check(op)?;
            out.local_a.scaled_add(*c, &op.local_a);
            out.local_b.scaled_add(*c, &op.local_b);
            for (a, b) in &op.products {
                out.push_product(a * *c, b.clone());
            }
        }
        Ok(out)
    }

    pub fn scale_re(&self, x: f64) -> Self {
        self.scale(C64::new(x, 0.0))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = self.clone();
        out.local_a = &out.local_a + &other.local_a;
        out.local_b = &out.local_b + &other.local_b;
        for (a, b) in &other.products {
            out.push_product(a.clone(), b.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale_re(-1.0))
    }

    /// Adds `c·I`.
    pub fn shift(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.local_a = &out.local_a + &(identity_matrix(self.trunc.na()) * c);
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.trunc);
        out.local_a = dagger(&self.local_a);
        out.local_b = dagger(&self.local_b);
        for (a, b) in &self.products {
            out.push_product(dagger(a), dagger(b));
        }
        out
    }

    /// `self · other` (other acts first).
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = Self::zero(self.trunc);
        out.local_a = self.local_a.dot(&other.local_a);
        out.local_b = self.local_b.dot(&other.local_b);
        out.push_product(self.local_a.clone(), other.local_b.clone());
        out.push_product(other.local_a.clone(), self.local_b.clone());
        for (qa, qb) in &other.products {
            out.push_product(self.local_a.dot(qa), qb.clone());
            out.push_product(qa.clone(), self.local_b.dot(qb));
        }
        for (pa, pb) in &self.products {
            out.push_product(pa.dot(&other.local_a), pb.clone());
            out.push_product(pa.clone(), pb.dot(&other.local_b));
            for (qa, qb) in &other.products {
                out.push_product(pa.dot(qa), pb.dot(qb));
            }
        }
        Ok(out)
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    /// Product in listed order; the rightmost factor acts first.
    pub fn compose(ops: &[&TensorOperator]) -> Result<TensorOperator> {
        let (first, rest) = ops
            .split_first()
            .ok_or_else(|| Error::Config("compose needs at least one operator".into()))?;
        rest.iter()
            .try_fold((*first).clone(), |acc, op| acc.mul(op))
    }

    pub fn to_dense(&self) -> OperatorMatrix {
        let t = self.trunc;
        let mut m = kron(&self.local_a, &identity_matrix(t.nb()))
            + kron(&identity_matrix(t.na()), &self.local_b);
        for (a, b) in &self.products {
            m = m + kron(a, b);
        }
        OperatorMatrix::from_entries(t, m).expect("shapes checked at construction")
    }

    fn entry_norm(&self, na: usize, nb: usize) -> f64 {
        if self.products.is_empty() {
            return kron_sum_norm(&self.local_a, &self.local_b, na, nb);
        }
        let mut acc = 0.0;
        for ia in 0..na {
            for ja in 0..na {
                let la = self.local_a[[ia, ja]];
                let prods: Vec<C64> = self.products.iter().map(|(a, _)| a[[ia, ja]]).collect();
                for ib in 0..nb {
                    for jb in 0..nb {
                        let mut z = zero();
                        if ib == jb {
                            z += la;
                        }
                        if ia == ja {
                            z += self.local_b[[ib, jb]];
                        }
                        for (p, (_, b)) in prods.iter().zip(&self.products) {
                            z += p * b[[ib, jb]];
                        }
                        acc += z.norm_sqr();
                    }
                }
            }
        }
        acc.sqrt()
    }

    /// Frobenius norm over the whole truncated space.
    pub fn norm(&self) -> f64 {
        self.entry_norm(self.trunc.na(), self.trunc.nb())
    }

    /// Frobenius norm of `P X P`, P the interior projector.
    pub fn interior_norm(&self) -> f64 {
        self.entry_norm(self.trunc.interior(Mode::A), self.trunc.interior(Mode::B))
    }

    /// The leading `na × nb` block as an operator on its own (buffer-free)
    /// truncation.
    pub fn restrict(&self, na: usize, nb: usize) -> Result<Self> {
        if na > self.trunc.na() || nb > self.trunc.nb() {
            return Err(Error::Config(format!(
                "window {na}x{nb} exceeds truncation {}x{}",
                self.trunc.na(),
                self.trunc.nb()
            )));
        }
        let trunc = Truncation::new(na, nb, 0)?;
        let cut = |m: &Array2<C64>, n: usize| m.slice(ndarray::s![..n, ..n]).to_owned();
        Ok(Self {
            trunc,
            local_a: cut(&self.local_a, na),
            local_b: cut(&self.local_b, nb),
            products: self
                .products
                .iter()
                .map(|(a, b)| (cut(a, na), cut(b, nb)))
                .collect(),
        })
    }

    /// Frobenius distance on this operator's interior window to an operator
    /// that may live on a larger truncation.
    pub fn window_distance(&self, other: &Self) -> Result<f64> {
        let na = self.trunc.interior(Mode::A);
        let nb = self.trunc.interior(Mode::B);
        Ok(self.restrict(na, nb)?.sub(&other.restrict(na, nb)?)?.norm())
    }

    pub fn interior_distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.interior_norm())
    }

    /// ‖X − X†‖ over the whole space.
    pub fn hermiticity_defect(&self) -> f64 {
        if self.products.is_empty() {
            let (sa, ma) = skew_parts(&self.local_a);
            let (sb, mb) = skew_parts(&self.local_b);
            let (fa, fb) = (self.trunc.na() as f64, self.trunc.nb() as f64);
            return (fb * sa + fa * sb + fa * fb * (ma + mb).norm_sqr()).sqrt();
        }
        self.sub(&self.adjoint())
            .map(|d| d.norm())
            .unwrap_or(f64::INFINITY)
    }

    /// ‖P(U†U − I)P‖
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint()
            .mul(self)
            .and_then(|p| p.sub(&Self::identity(self.trunc)))
            .map(|d| d.interior_norm())
            .unwrap_or(f64::INFINITY)
    }

    pub fn is_kron_sum(&self) -> bool {
        self.products.is_empty()
    }

    /// The pair `(A, B)` with `self = A ⊗ I + I ⊗ B`, when that form applies.
    pub fn kron_sum_parts(&self) -> Option<(&Array2<C64>, &Array2<C64>)> {
        self.is_kron_sum().then_some((&self.local_a, &self.local_b))
    }

    /// The pair `(A, B)` with `self = A ⊗ B`, when that form applies.
    pub fn as_product(&self) -> Option<(Array2<C64>, Array2<C64>)> {
        match (
            self.products.len(),
            is_zero(&self.local_a),
            is_zero(&self.local_b),
        ) {
            (1, true, true) => Some(self.products[0].clone()),
            (0, _, true) => Some((self.local_a.clone(), identity_matrix(self.trunc.nb()))),
            (0, true, false) => Some((identity_matrix(self.trunc.na()), self.local_b.clone())),
            _ => None,
        }
    }

    /// exp(G) for a skew-Hermitian Kronecker sum `G = A ⊗ I + I ⊗ B`,
    /// returned in product form `e^A ⊗ e^B`.
    pub fn exp_skew(&self, tol: &Tolerances) -> Result<Self> {
        let (a, b) = self.kron_sum_parts().ok_or_else(|| {
            Error::Contract("exponential requires a Kronecker-sum generator".into())
        })?;
        for (m, name) in [(a, "mode A"), (b, "mode B")] {
            let defect = frobenius((m + &dagger(m)).iter());
            if defect > tol.hermiticity * norm1(m).max(1.0) {
                return Err(Error::Contract(format!(
                    "{name} generator is not skew-Hermitian (defect {defect:.3e})"
                )));
            }
        }
        // fold a pure scalar on either side into a phase
        let (a, phase_a) = split_scalar(a);
        let (b, phase_b) = split_scalar(b);
        let ea = if is_zero(&a) {
            identity_matrix(a.nrows())
        } else {
            expm(&a)?
        };
        let eb = if is_zero(&b) {
            identity_matrix(b.nrows())
        } else {
            expm(&b)?
        };
        let phase = (phase_a + phase_b).exp();
        let mut out = Self::zero(self.trunc);
        out.push_product(ea * phase, eb);
        Ok(out)
    }

    /// Row-major reshape of a state into an `na × nb` amplitude matrix.
    fn reshape(psi: &StateVector) -> Array2<C64> {
        let t = psi.trunc();
        Array2::from_shape_vec((t.na(), t.nb()), psi.amplitudes().to_vec())
            .expect("state length equals na*nb")
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.trunc() != self.trunc {
            return Err(Error::Config("truncation mismatch in apply".into()));
        }
        let m = Self::reshape(psi);
        let mut out = self.local_a.dot(&m) + m.dot(&self.local_b.t());
        for (a, b) in &self.products {
            out = out + a.dot(&m).dot(&b.t());
        }
        let flat: Array1<C64> = out.iter().copied().collect();
        StateVector::from_amplitudes(self.trunc, flat)
    }

    pub fn expectation(&self, psi: &StateVector) -> Result<C64> {
        Ok(psi.inner(&self.apply(psi)?))
    }
}

/// Frobenius norm of the leading `na × nb` block of `A ⊗ I + I ⊗ B`, split
/// into orthogonal traceless and scalar parts.
fn kron_sum_norm(a: &Array2<C64>, b: &Array2<C64>, na: usize, nb: usize) -> f64 {
    let traceless_sq = |m: &Array2<C64>, n: usize| -> (f64, C64) {
        let mut tr = zero();
        for i in 0..n {
            tr += m[[i, i]];
        }
        let mean = tr / n as f64;
        let mut sq = 0.0;
        for i in 0..n {
            for j in 0..n {
                let z = if i == j { m[[i, j]] - mean } else { m[[i, j]] };
                sq += z.norm_sqr();
            }
        }
        (sq, mean)
    };
    let (sa, ma) = traceless_sq(a, na);
    let (sb, mb) = traceless_sq(b, nb);
    let (fa, fb) = (na as f64, nb as f64);
    (fb * sa + fa * sb + fa * fb * (ma + mb).norm_sqr()).sqrt()
}

/// Squared traceless norm and mean diagonal of `m − m†`, without allocating.
fn skew_parts(m: &Array2<C64>) -> (f64, C64) {
    let n = m.nrows();
    let mut tr = zero();
    for i in 0..n {
        tr += m[[i, i]] - m[[i, i]].conj();
    }
    let mean = tr / n as f64;
    let mut sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut z = m[[i, j]] - m[[j, i]].conj();
            if i == j {
                z -= mean;
            }
            sq += z.norm_sqr();
        }
    }
    (sq, mean)
}

fn split_scalar(m: &Array2<C64>) -> (Array2<C64>, C64) {
    match scalar_value(m) {
        Some(c) => (Array2::zeros(m.raw_dim()), c),
        None => (m.clone(), zero()),
    }
}

fn check_shape(m: &Array2<C64>, n: usize, what: &str) -> Result<()> {
    if m.dim() != (n, n) {
        return Err(Error::Config(format!(
            "{what} factor has shape {:?}, expected {n}x{n}",
            m.dim()
        )));
    }
    Ok(())
}
