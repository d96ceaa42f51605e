//! Brute-force propagation of iħ∂ₜU = H(t)U by exponential integrators.
//!
//! Two schemes: the exponential midpoint rule (order 2) and the
//! commutator-free two-exponential scheme with Gauss nodes (order 4). Both are
//! unitary step by step. The Hamiltonian is rebuilt from the caller's closure
//! at every node.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock_algebra::expm::{expm, ExpAction};
use crate::fock_algebra::{Mode, OperatorMatrix, StateVector, TensorOperator, Truncation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    #[serde(default = "default_order")]
    pub order: u8,
    pub t_final: f64,
    #[serde(default)]
    pub richardson: bool,
    /// Error estimates above this are flagged.
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Evolve only the interior columns, i.e. U·P instead of U.
    #[serde(default)]
    pub interior_only: bool,
}

fn default_order() -> u8 {
    4
}

impl IntegratorConfig {
    pub fn new(dt: f64, order: u8, t_final: f64) -> Result<Self> {
        let c = Self {
            dt,
            order,
            t_final,
            richardson: false,
            tolerance: None,
            interior_only: false,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_richardson(mut self, tolerance: Option<f64>) -> Self {
        self.richardson = true;
        self.tolerance = tolerance;
        self
    }

    pub fn interior_only(mut self) -> Self {
        self.interior_only = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final.is_finite() && self.dt <= self.t_final) {
            return Err(Error::Config(format!(
                "dt={} must not exceed t_final={}",
                self.dt, self.t_final
            )));
        }
        if self.order != 2 && self.order != 4 {
            return Err(Error::Config(format!(
                "order must be 2 or 4, got {}",
                self.order
            )));
        }
        if let Some(tol) = self.tolerance {
            if tol.is_nan() || tol <= 0.0 {
                return Err(Error::Config(
                    "integrator tolerance must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// Operator types the integrator can step.
pub trait Generator: Sized {
    type Propagator: Clone;

    /// Identity, or its interior columns when `interior_only` is set.
    fn identity_propagator(&self, interior_only: bool) -> Self::Propagator;
    fn hermiticity_defect(&self) -> f64;
    fn scale_norm(&self) -> f64;
    /// a·self + b·other
    fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self>;
    /// exp(−iτ·self)·u
    fn exp_apply(&self, tau: f64, u: &Self::Propagator) -> Result<Self::Propagator>;
    fn propagator_distance(a: &Self::Propagator, b: &Self::Propagator) -> Result<f64>;
}

impl Generator for OperatorMatrix {
    type Propagator = OperatorMatrix;

    fn identity_propagator(&self, _interior_only: bool) -> OperatorMatrix {
        OperatorMatrix::identity(self.trunc())
    }

    fn hermiticity_defect(&self) -> f64 {
        OperatorMatrix::hermiticity_defect(self)
    }

    fn scale_norm(&self) -> f64 {
        self.norm()
    }

    fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.scale(C64::new(a, 0.0))
            .add(&other.scale(C64::new(b, 0.0)))
    }

    fn exp_apply(&self, tau: f64, u: &OperatorMatrix) -> Result<OperatorMatrix> {
        let step = expm(&(self.entries() * C64::new(0.0, -tau)))?;
        OperatorMatrix::from_entries(self.trunc(), step.dot(u.entries()))
    }

    fn propagator_distance(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<f64> {
        Ok(a.sub(b)?.interior_norm())
    }
}

/// U (or U·P) for a Kronecker-sum Hamiltonian: `a ⊗ b` with each factor
/// holding the evolved leading columns of the single-mode identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPropagator {
    trunc: Truncation,
    a: Array2<C64>,
    b: Array2<C64>,
}

impl ProductPropagator {
    pub fn identity(trunc: Truncation, cols_a: usize, cols_b: usize) -> Self {
        let eye = |n: usize, k: usize| {
            let mut m = Array2::zeros((n, k));
            for i in 0..k.min(n) {
                m[[i, i]] = C64::new(1.0, 0.0);
            }
            m
        };
        Self {
            trunc,
            a: eye(trunc.na(), cols_a),
            b: eye(trunc.nb(), cols_b),
        }
    }

    pub fn trunc(&self) -> Truncation {
        self.trunc
    }

    pub fn factors(&self) -> (&Array2<C64>, &Array2<C64>) {
        (&self.a, &self.b)
    }

    pub fn is_full(&self) -> bool {
        self.a.ncols() == self.trunc.na() && self.b.ncols() == self.trunc.nb()
    }

    pub fn to_operator(&self) -> Result<TensorOperator> {
        if !self.is_full() {
            return Err(Error::Contract(
                "only the interior columns were evolved; use window()".into(),
            ));
        }
        TensorOperator::product(self.trunc, self.a.clone(), self.b.clone())
    }

    /// Leading `na × nb` block as an operator on a buffer-free truncation.
    pub fn window(&self, na: usize, nb: usize) -> Result<TensorOperator> {
        if na > self.a.ncols() || nb > self.b.ncols() {
            return Err(Error::Contract(format!(
                "window {na}x{nb} exceeds the evolved columns {}x{}",
                self.a.ncols(),
                self.b.ncols()
            )));
        }
        let a = self.a.slice(ndarray::s![..na, ..na]).to_owned();
        let b = self.b.slice(ndarray::s![..nb, ..nb]).to_owned();
        TensorOperator::product(Truncation::new(na, nb, 0)?, a, b)
    }

    /// ‖P(op − U)P‖ with P the interior projector of `op`'s truncation;
    /// `self` may live on a larger truncation.
    pub fn window_distance(&self, op: &TensorOperator) -> Result<f64> {
        let t = op.trunc();
        let (na, nb) = (t.interior(Mode::A), t.interior(Mode::B));
        Ok(op.restrict(na, nb)?.sub(&self.window(na, nb)?)?.norm())
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        self.to_operator()?.apply(psi)
    }
}

/// Per-mode propagation: a Kronecker-sum Hamiltonian generates a product
/// propagator, and each mode is stepped with a banded Taylor action.
impl Generator for TensorOperator {
    type Propagator = ProductPropagator;

    fn identity_propagator(&self, interior_only: bool) -> ProductPropagator {
        let t = self.trunc();
        if interior_only {
            ProductPropagator::identity(t, t.interior(Mode::A), t.interior(Mode::B))
        } else {
            ProductPropagator::identity(t, t.na(), t.nb())
        }
    }

    fn hermiticity_defect(&self) -> f64 {
        TensorOperator::hermiticity_defect(self)
    }

    fn scale_norm(&self) -> f64 {
        self.norm()
    }

    fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        TensorOperator::linear_combination(
            self.trunc(),
            &[(C64::new(a, 0.0), self), (C64::new(b, 0.0), other)],
        )
    }

    fn exp_apply(&self, tau: f64, u: &ProductPropagator) -> Result<ProductPropagator> {
        let (ha, hb) = self.kron_sum_parts().ok_or_else(|| {
            Error::Contract("structured propagation needs a Kronecker-sum Hamiltonian".into())
        })?;
        if u.trunc != self.trunc() {
            return Err(Error::Config("truncation mismatch in propagation".into()));
        }
        Ok(ProductPropagator {
            trunc: u.trunc,
            a: step_mode(ha, tau, &u.a),
            b: step_mode(hb, tau, &u.b),
        })
    }

    fn propagator_distance(a: &ProductPropagator, b: &ProductPropagator) -> Result<f64> {
        let t = a.trunc;
        let (na, nb) = (t.interior(Mode::A), t.interior(Mode::B));
        Ok(a.window(na, nb)?.sub(&b.window(na, nb)?)?.norm())
    }
}

/// Compressed-row sparsity shared by every member of a [`KronSumBasis`].
#[derive(Debug, PartialEq)]
struct Pattern {
    n: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    /// Position of the transposed entry.
    transpose: Vec<usize>,
    diagonal: Vec<usize>,
}

impl Pattern {
    fn from_matrices(n: usize, mats: &[&Array2<C64>]) -> Self {
        let mut nz = vec![false; n * n];
        for m in mats {
            for ((i, j), z) in m.indexed_iter() {
                if *z != C64::new(0.0, 0.0) {
                    nz[i * n + j] = true;
                    nz[j * n + i] = true;
                }
            }
        }
        for i in 0..n {
            nz[i * n + i] = true;
        }
        let mut row_start = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut pos = vec![usize::MAX; n * n];
        for i in 0..n {
            row_start.push(cols.len());
            for j in 0..n {
                if nz[i * n + j] {
                    pos[i * n + j] = cols.len();
                    cols.push(j);
                }
            }
        }
        row_start.push(cols.len());
        let mut transpose = vec![0; cols.len()];
        for i in 0..n {
            for k in row_start[i]..row_start[i + 1] {
                transpose[k] = pos[cols[k] * n + i];
            }
        }
        let diagonal = (0..n).map(|i| pos[i * n + i]).collect();
        Self {
            n,
            row_start,
            cols,
            transpose,
            diagonal,
        }
    }

    fn gather(&self, m: &Array2<C64>) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.cols.len());
        for i in 0..self.n {
            for k in self.row_start[i]..self.row_start[i + 1] {
                out.push(m[[i, self.cols[k]]]);
            }
        }
        out
    }

    /// (‖S − mean·I‖², mean) for the skew part S = V − V†.
    fn skew_parts(&self, vals: &[C64]) -> (f64, C64) {
        let mut tr = C64::new(0.0, 0.0);
        for &d in &self.diagonal {
            tr += vals[d] - vals[d].conj();
        }
        let mean = tr / self.n as f64;
        let mut sq = 0.0;
        for (k, v) in vals.iter().enumerate() {
            let mut z = *v - vals[self.transpose[k]].conj();
            if self.transpose[k] == k {
                z -= mean;
            }
            sq += z.norm_sqr();
        }
        (sq, mean)
    }

    fn scatter(&self, vals: &[C64]) -> Array2<C64> {
        let mut m = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for k in self.row_start[i]..self.row_start[i + 1] {
                m[[i, self.cols[k]]] = vals[k];
            }
        }
        m
    }
}

/// Fixed Kronecker-sum operators V_k whose real combinations Σ c_k V_k are
/// formed on a shared sparsity pattern, for Hamiltonians of the form
/// H(t) = Σ c_k(t) V_k.
#[derive(Debug, Clone)]
pub struct KronSumBasis {
    trunc: Truncation,
    pattern_a: std::sync::Arc<Pattern>,
    pattern_b: std::sync::Arc<Pattern>,
    terms: Vec<(Vec<C64>, Vec<C64>)>,
}

impl KronSumBasis {
    pub fn new(terms: &[&TensorOperator]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Config("basis needs at least one operator".into()))?;
        let trunc = first.trunc();
        let mut parts = Vec::with_capacity(terms.len());
        for op in terms {
            if op.trunc() != trunc {
                return Err(Error::Config(
                    "basis operators must share a truncation".into(),
                ));
            }
            parts.push(
                op.kron_sum_parts().ok_or_else(|| {
                    Error::Contract("basis operators must be Kronecker sums".into())
                })?,
            );
        }
        let mats_a: Vec<&Array2<C64>> = parts.iter().map(|p| p.0).collect();
        let mats_b: Vec<&Array2<C64>> = parts.iter().map(|p| p.1).collect();
        let pattern_a = Pattern::from_matrices(trunc.na(), &mats_a);
        let pattern_b = Pattern::from_matrices(trunc.nb(), &mats_b);
        let terms = parts
            .iter()
            .map(|(a, b)| (pattern_a.gather(a), pattern_b.gather(b)))
            .collect();
        Ok(Self {
            trunc,
            pattern_a: std::sync::Arc::new(pattern_a),
            pattern_b: std::sync::Arc::new(pattern_b),
            terms,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn combine(&self, coeffs: &[f64]) -> Result<SparseKronSum> {
        if coeffs.len() != self.terms.len() {
            return Err(Error::Config(format!(
                "expected {} coefficients, got {}",
                self.terms.len(),
                coeffs.len()
            )));
        }
        let mut a = vec![C64::new(0.0, 0.0); self.pattern_a.cols.len()];
        let mut b = vec![C64::new(0.0, 0.0); self.pattern_b.cols.len()];
        for (c, (ta, tb)) in coeffs.iter().zip(&self.terms) {
            for (x, y) in a.iter_mut().zip(ta) {
                *x += *y * *c;
            }
            for (x, y) in b.iter_mut().zip(tb) {
                *x += *y * *c;
            }
        }
        Ok(SparseKronSum {
            trunc: self.trunc,
            pattern_a: self.pattern_a.clone(),
            pattern_b: self.pattern_b.clone(),
            a,
            b,
        })
    }
}

/// A member of a [`KronSumBasis`].
#[derive(Debug, Clone)]
pub struct SparseKronSum {
    trunc: Truncation,
    pattern_a: std::sync::Arc<Pattern>,
    pattern_b: std::sync::Arc<Pattern>,
    a: Vec<C64>,
    b: Vec<C64>,
}

impl SparseKronSum {
    pub fn to_operator(&self) -> Result<TensorOperator> {
        let a = self.pattern_a.scatter(&self.a);
        let b = self.pattern_b.scatter(&self.b);
        TensorOperator::on_a(self.trunc, a)?.add(&TensorOperator::on_b(self.trunc, b)?)
    }
}

fn sparse_step(p: &Pattern, vals: &[C64], tau: f64, u: &Array2<C64>) -> Array2<C64> {
    if vals.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return u.clone();
    }
    ExpAction::from_csr(p.n, p.row_start.clone(), p.cols.clone(), vals.to_vec()).apply(tau, u)
}

impl Generator for SparseKronSum {
    type Propagator = ProductPropagator;

    fn identity_propagator(&self, interior_only: bool) -> ProductPropagator {
        let t = self.trunc;
        if interior_only {
            ProductPropagator::identity(t, t.interior(Mode::A), t.interior(Mode::B))
        } else {
            ProductPropagator::identity(t, t.na(), t.nb())
        }
    }

    fn hermiticity_defect(&self) -> f64 {
        let (sa, ma) = self.pattern_a.skew_parts(&self.a);
        let (sb, mb) = self.pattern_b.skew_parts(&self.b);
        let (fa, fb) = (self.trunc.na() as f64, self.trunc.nb() as f64);
        (fb * sa + fa * sb + fa * fb * (ma + mb).norm_sqr()).sqrt()
    }

    fn scale_norm(&self) -> f64 {
        let fro = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        (self.trunc.nb() as f64).sqrt() * fro(&self.a)
            + (self.trunc.na() as f64).sqrt() * fro(&self.b)
    }

    fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if !std::sync::Arc::ptr_eq(&self.pattern_a, &other.pattern_a)
            || !std::sync::Arc::ptr_eq(&self.pattern_b, &other.pattern_b)
        {
            return Err(Error::Contract(
                "operators come from different bases".into(),
            ));
        }
        let mix = |x: &[C64], y: &[C64]| -> Vec<C64> {
            x.iter().zip(y).map(|(p, q)| *p * a + *q * b).collect()
        };
        Ok(Self {
            trunc: self.trunc,
            pattern_a: self.pattern_a.clone(),
            pattern_b: self.pattern_b.clone(),
            a: mix(&self.a, &other.a),
            b: mix(&self.b, &other.b),
        })
    }

    fn exp_apply(&self, tau: f64, u: &ProductPropagator) -> Result<ProductPropagator> {
        if u.trunc != self.trunc {
            return Err(Error::Config("truncation mismatch in propagation".into()));
        }
        Ok(ProductPropagator {
            trunc: u.trunc,
            a: sparse_step(&self.pattern_a, &self.a, tau, &u.a),
            b: sparse_step(&self.pattern_b, &self.b, tau, &u.b),
        })
    }

    fn propagator_distance(a: &ProductPropagator, b: &ProductPropagator) -> Result<f64> {
        <TensorOperator as Generator>::propagator_distance(a, b)
    }
}

fn step_mode(h: &Array2<C64>, tau: f64, u: &Array2<C64>) -> Array2<C64> {
    if h.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return u.clone();
    }
    ExpAction::new(h.clone()).apply(tau, u)
}

#[derive(Debug, Clone)]
pub struct ReferenceResult<P> {
    pub u: P,
    /// ‖P(U_dt − U_{dt/2})P‖/(1 − 2^{−p}), present when Richardson is on.
    pub error_estimate: Option<f64>,
    pub flagged: bool,
    pub steps: usize,
}

const HERMITICITY_TOL: f64 = 1e-10;

fn checked<G: Generator, F: FnMut(f64) -> Result<G>>(h_builder: &mut F, t: f64) -> Result<G> {
    let h = h_builder(t)?;
    let defect = h.hermiticity_defect();
    if defect > HERMITICITY_TOL * h.scale_norm().max(1.0) {
        return Err(Error::Contract(format!(
            "Hamiltonian at t={t} is not Hermitian (defect {defect:.3e})"
        )));
    }
    Ok(h)
}

/// Advances `u` from `t0` to `t1` in `steps` equal steps.
pub fn evolve_between<G, F>(
    h_builder: &mut F,
    u: G::Propagator,
    t0: f64,
    t1: f64,
    steps: usize,
    order: u8,
    hbar: f64,
) -> Result<G::Propagator>
where
    G: Generator,
    F: FnMut(f64) -> Result<G>,
{
    let h = (t1 - t0) / steps as f64;
    let tau = h / hbar;
    let mut u = u;
    match order {
        2 => {
            for k in 0..steps {
                let mid = t0 + (k as f64 + 0.5) * h;
                let hm: G = checked(h_builder, mid)?;
                u = hm.exp_apply(tau, &u)?;
            }
        }
        4 => {
            let s3 = 3f64.sqrt();
            let (c1, c2) = (0.5 - s3 / 6.0, 0.5 + s3 / 6.0);
            let (a1, a2) = ((3.0 - 2.0 * s3) / 12.0, (3.0 + 2.0 * s3) / 12.0);
            for k in 0..steps {
                let t = t0 + k as f64 * h;
                let h1: G = checked(h_builder, t + c1 * h)?;
                let h2: G = checked(h_builder, t + c2 * h)?;
                u = h1.lin_comb(a2, &h2, a1)?.exp_apply(tau, &u)?;
                u = h1.lin_comb(a1, &h2, a2)?.exp_apply(tau, &u)?;
            }
        }
        _ => return Err(Error::Config(format!("order must be 2 or 4, got {order}"))),
    }
    Ok(u)
}

pub fn propagate_reference<G, F>(
    mut h_builder: F,
    config: &IntegratorConfig,
    hbar: f64,
) -> Result<ReferenceResult<G::Propagator>>
where
    G: Generator,
    F: FnMut(f64) -> Result<G>,
{
    config.validate()?;
    let h0: G = checked(&mut h_builder, 0.0)?;
    let start = h0.identity_propagator(config.interior_only);
    propagate_reference_from(h_builder, config, hbar, start)
}

/// As [`propagate_reference`], starting from `u0` (e.g. a few columns of the
/// identity on a larger truncation).
pub fn propagate_reference_from<G, F>(
    mut h_builder: F,
    config: &IntegratorConfig,
    hbar: f64,
    u0: G::Propagator,
) -> Result<ReferenceResult<G::Propagator>>
where
    G: Generator,
    F: FnMut(f64) -> Result<G>,
{
    config.validate()?;
    let steps = config.steps();
    let u = evolve_between(
        &mut h_builder,
        u0.clone(),
        0.0,
        config.t_final,
        steps,
        config.order,
        hbar,
    )?;
    if !config.richardson {
        return Ok(ReferenceResult {
            u,
            error_estimate: None,
            flagged: false,
            steps,
        });
    }
    let fine = evolve_between(
        &mut h_builder,
        u0,
        0.0,
        config.t_final,
        2 * steps,
        config.order,
        hbar,
    )?;
    let p = config.order as i32;
    let estimate = G::propagator_distance(&u, &fine)? / (1.0 - 2f64.powi(-p));
    let flagged = config.tolerance.is_some_and(|tol| estimate > tol);
    Ok(ReferenceResult {
        u,
        error_estimate: Some(estimate),
        flagged,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive_path::DrivePath;
    use crate::fock_algebra::Truncation;
    use crate::landau_model::{build_h_at, build_model, PhysicalParams};
    use crate::propagator::dynamical_factor;

    fn trunc() -> Truncation {
        Truncation::new(20, 16, 5).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::new(0.0, 2, 1.0).is_err());
        assert!(IntegratorConfig::new(2.0, 2, 1.0).is_err());
        assert!(IntegratorConfig::new(0.1, 3, 1.0).is_err());
        let c = IntegratorConfig::new(0.3, 4, 1.0).unwrap();
        assert_eq!(c.steps(), 4);
        assert_eq!(IntegratorConfig::new(0.25, 4, 1.0).unwrap().steps(), 4);
    }

    #[test]
    fn constant_hamiltonian_gives_dynamical_factor() {
        let m = build_model(PhysicalParams::natural(), [0.0, 0.0], trunc()).unwrap();
        let h0 = m.h0.clone();
        for order in [2, 4] {
            let cfg = IntegratorConfig::new(0.05, order, 3.0).unwrap();
            let r = propagate_reference(|_| Ok(h0.clone()), &cfg, 1.0).unwrap();
            let d = dynamical_factor(&m, 3.0).unwrap();
            assert!(r.u.to_operator().unwrap().interior_distance(&d).unwrap() < 1e-10);
            assert!(r.u.window_distance(&d).unwrap() < 1e-10);
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let t = trunc();
        let bad = TensorOperator::on_a(t, crate::fock_algebra::lowering_matrix(t.na())).unwrap();
        let cfg = IntegratorConfig::new(0.1, 2, 1.0).unwrap();
        let err = propagate_reference(|_| Ok(bad.clone()), &cfg, 1.0).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    fn drive() -> DrivePath {
        DrivePath::circle([0.3, 0.0], 0.3, 1.0, std::f64::consts::PI)
            .unwrap()
            .with_epsilon(0.5)
            .unwrap()
    }

    #[test]
    fn convergence_orders() {
        let m = build_model(PhysicalParams::natural(), [0.0, 0.0], trunc()).unwrap();
        let path = drive();
        let tf = 3.0;
        let run = |dt: f64, order: u8| {
            let cfg = IntegratorConfig::new(dt, order, tf).unwrap();
            propagate_reference(|t| build_h_at(&m, &path, t), &cfg, 1.0)
                .unwrap()
                .u
                .to_operator()
                .unwrap()
        };
        let truth = run(0.002, 4);
        for (order, expect) in [(2u8, 2.0), (4u8, 4.0)] {
            let e1 = run(0.1, order).interior_distance(&truth).unwrap();
            let e2 = run(0.05, order).interior_distance(&truth).unwrap();
            let slope = (e1 / e2).log2();
            assert!(
                (slope - expect).abs() < 0.2 * expect / 2.0,
                "order {order}: {slope}"
            );
        }
    }

    #[test]
    fn richardson_bounds_true_error() {
        let m = build_model(PhysicalParams::natural(), [0.0, 0.0], trunc()).unwrap();
        let path = drive();
        for order in [2u8, 4] {
            let dt = if order == 2 { 0.05 } else { 0.2 };
            let cfg = IntegratorConfig::new(dt, order, 3.0)
                .unwrap()
                .with_richardson(Some(1e-12));
            let r = propagate_reference(|t| build_h_at(&m, &path, t), &cfg, 1.0).unwrap();
            let quarter = IntegratorConfig::new(dt / 4.0, order, 3.0).unwrap();
            let q = propagate_reference(|t| build_h_at(&m, &path, t), &quarter, 1.0).unwrap();
            let true_err = TensorOperator::propagator_distance(&r.u, &q.u).unwrap();
            let est = r.error_estimate.unwrap();
            assert!(
                est / true_err < 3.0 && true_err / est < 3.0,
                "{est} {true_err}"
            );
            assert!(r.flagged);
            assert!(r.u.to_operator().unwrap().unitarity_defect() < 1e-10);
        }
    }

    #[test]
    fn interior_columns_match_full_run() {
        let m = build_model(PhysicalParams::natural(), [0.0, 0.0], trunc()).unwrap();
        let path = drive();
        let full = IntegratorConfig::new(0.1, 4, 2.0).unwrap();
        let part = full.interior_only();
        let a = propagate_reference(|t| build_h_at(&m, &path, t), &full, 1.0).unwrap();
        let b = propagate_reference(|t| build_h_at(&m, &path, t), &part, 1.0).unwrap();
        let op = a.u.to_operator().unwrap();
        assert!(b.u.window_distance(&op).unwrap() < 1e-14);
        assert!(b.u.to_operator().is_err());
    }

    #[test]
    fn sparse_basis_matches_tensor_route() {
        let m = build_model(PhysicalParams::natural(), [0.2, -0.1], trunc()).unwrap();
        let path = DrivePath::circle([0.2, 0.3], 0.4, 1.0, -std::f64::consts::FRAC_PI_2).unwrap();
        let basis = KronSumBasis::new(&[&m.h0, &m.x1, &m.x2]).unwrap();
        let cfg = IntegratorConfig::new(0.05, 4, 2.0).unwrap();
        let dense = propagate_reference(|t| build_h_at(&m, &path, t), &cfg, 1.0).unwrap();
        let sparse = propagate_reference(
            |t| {
                let v = path.derivative(t)?;
                basis.combine(&[1.0, 0.5 * v[1], -0.5 * v[0]])
            },
            &cfg,
            1.0,
        )
        .unwrap();
        let d = TensorOperator::propagator_distance(&dense.u, &sparse.u).unwrap();
        assert!(d < 1e-13, "{d}");
        let h = basis.combine(&[1.0, 0.3, -0.2]).unwrap();
        let t =
            m.h0.add(&m.x1.scale_re(0.3))
                .unwrap()
                .sub(&m.x2.scale_re(0.2))
                .unwrap();
        assert!(h.to_operator().unwrap().sub(&t).unwrap().norm() < 1e-14);
        assert!(Generator::hermiticity_defect(&h) < 1e-14);
        let skew = KronSumBasis::new(&[&m.pi_op()])
            .unwrap()
            .combine(&[1.0])
            .unwrap();
        assert!(Generator::hermiticity_defect(&skew) > 1.0);
    }

    #[test]
    fn dense_and_structured_routes_agree() {
        let t = Truncation::new(6, 5, 1).unwrap();
        let m = build_model(PhysicalParams::natural(), [0.0, 0.0], t).unwrap();
        let path = drive();
        let cfg = IntegratorConfig::new(0.1, 4, 1.0).unwrap();
        let structured = propagate_reference(|s| build_h_at(&m, &path, s), &cfg, 1.0).unwrap();
        let dense =
            propagate_reference(|s| Ok(build_h_at(&m, &path, s)?.to_dense()), &cfg, 1.0).unwrap();
        let diff = structured
            .u
            .to_operator()
            .unwrap()
            .to_dense()
            .sub(&dense.u)
            .unwrap()
            .norm();
        assert!(diff < 1e-12, "{diff}");
    }
}
