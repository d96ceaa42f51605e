//! Operator content of the Landau problem with a dragged gauge center.
//!
//! Kinetic momentum lives on mode A, `π = π₁ + iπ₂ = √(2ħκ)·a`, and the
//! guiding center on mode B, `η₁ − iη₂ = √(2ħκ)·b`, with `κ = qB/c`. This
//! gives `[π₁, π₂] = iħκ`, `[η₁, η₂] = −iħκ` and `[π_μ, η_ν] = 0`.
//!
//! Positions are absolute: `x₁ = (η₂ − π₂)/κ`, `x₂ = (π₁ − η₁)/κ`, where the
//! guiding-center operators carry the c-number offset of the gauge center
//! R(0), i.e. `η₁ = π₁ − κx₂` and `η₂ = π₂ + κx₁` hold as operator identities.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::drive_path::{DrivePath, Vec2};
use crate::error::{Error, Result};
use crate::fock_algebra::{dagger, lowering_matrix, TensorOperator, Tolerances, Truncation};
use crate::units::{self, ensure_dimensionless};

/// Gaussian-unit constants; `natural()` sets all of them to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct PhysicalParams {
    q: f64,
    field: f64,
    mass: f64,
    c: f64,
    hbar: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawParams {
    q: f64,
    #[serde(rename = "B")]
    field: f64,
    #[serde(rename = "m")]
    mass: f64,
    c: f64,
    hbar: f64,
}

impl TryFrom<RawParams> for PhysicalParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        PhysicalParams::new(r.q, r.field, r.mass, r.c, r.hbar)
    }
}

impl From<PhysicalParams> for RawParams {
    fn from(p: PhysicalParams) -> Self {
        RawParams {
            q: p.q,
            field: p.field,
            mass: p.mass,
            c: p.c,
            hbar: p.hbar,
        }
    }
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::natural()
    }
}

impl PhysicalParams {
    pub fn new(q: f64, field: f64, mass: f64, c: f64, hbar: f64) -> Result<Self> {
        let all_finite = [q, field, mass, c, hbar].iter().all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::Config("physical parameters must be finite".into()));
        }
        if q * field <= 0.0 {
            return Err(Error::Config(format!(
                "q·B must be positive (got q={q}, B={field})"
            )));
        }
        if mass <= 0.0 || c <= 0.0 || hbar <= 0.0 {
            return Err(Error::Config("m, c and ħ must be positive".into()));
        }
        Ok(Self {
            q,
            field,
            mass,
            c,
            hbar,
        })
    }

    pub fn natural() -> Self {
        Self {
            q: 1.0,
            field: 1.0,
            mass: 1.0,
            c: 1.0,
            hbar: 1.0,
        }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn field(&self) -> f64 {
        self.field
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Cyclotron frequency qB/(mc).
    pub fn omega(&self) -> f64 {
        self.q * self.field / (self.mass * self.c)
    }

    /// qB/c
    pub fn kappa(&self) -> f64 {
        self.q * self.field / self.c
    }

    /// √(ħc/(qB))
    pub fn magnetic_length(&self) -> f64 {
        (self.hbar / self.kappa()).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct ModelOperators {
    pub params: PhysicalParams,
    /// Gauge center R(0).
    pub r0: Vec2,
    pub trunc: Truncation,
    pub tol: Tolerances,
    /// π = π₁ + iπ₂ as a mode-A matrix.
    pub pi: Array2<C64>,
    pub pi1: TensorOperator,
    pub pi2: TensorOperator,
    pub eta1: TensorOperator,
    pub eta2: TensorOperator,
    pub x1: TensorOperator,
    pub x2: TensorOperator,
    pub h0: TensorOperator,
}

impl ModelOperators {
    /// Unit of each stored operator.
    pub const UNITS: [(&'static str, units::Dim); 7] = [
        ("pi1", units::MOMENTUM),
        ("pi2", units::MOMENTUM),
        ("eta1", units::MOMENTUM),
        ("eta2", units::MOMENTUM),
        ("x1", units::LENGTH),
        ("x2", units::LENGTH),
        ("h0", units::ENERGY),
    ];

    /// Guiding-center components as a pair, for ε_{μν} bookkeeping.
    pub fn eta(&self) -> [&TensorOperator; 2] {
        [&self.eta1, &self.eta2]
    }

    /// Kinetic-momentum components as a pair.
    pub fn pi_components(&self) -> [&TensorOperator; 2] {
        [&self.pi1, &self.pi2]
    }

    pub fn pi_op(&self) -> TensorOperator {
        TensorOperator::on_a(self.trunc, self.pi.clone()).expect("π built on mode A")
    }
}

fn cre(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn build_model(params: PhysicalParams, r0: Vec2, trunc: Truncation) -> Result<ModelOperators> {
    build_model_with_tolerances(params, r0, trunc, Tolerances::default())
}

pub fn build_model_with_tolerances(
    params: PhysicalParams,
    r0: Vec2,
    trunc: Truncation,
    tol: Tolerances,
) -> Result<ModelOperators> {
    let hbar = params.hbar();
    let kappa = params.kappa();
    let amp = (2.0 * hbar * kappa).sqrt();
    let pi = lowering_matrix(trunc.na()) * cre(amp);
    let zeta = lowering_matrix(trunc.nb()) * cre(amp);

    let half = cre(0.5);
    let half_i = C64::new(0.0, 0.5);
    let pi1 = TensorOperator::on_a(trunc, (&pi + &dagger(&pi)) * half)?;
    // π₂ = (π − π†)/(2i)
    let pi2 = TensorOperator::on_a(trunc, (&pi - &dagger(&pi)) * (-half_i))?;
    // ζ = η₁ − iη₂ ⇒ η₁ = (ζ + ζ†)/2, η₂ = i(ζ − ζ†)/2
    let eta1_rel = TensorOperator::on_b(trunc, (&zeta + &dagger(&zeta)) * half)?;
    let eta2_rel = TensorOperator::on_b(trunc, (&zeta - &dagger(&zeta)) * half_i)?;

    let x1 = eta2_rel.sub(&pi2)?.scale_re(1.0 / kappa).shift(cre(r0[0]));
    let x2 = pi1.sub(&eta1_rel)?.scale_re(1.0 / kappa).shift(cre(r0[1]));
    let eta1 = eta1_rel.shift(cre(-kappa * r0[1]));
    let eta2 = eta2_rel.shift(cre(kappa * r0[0]));

    let h0 = pi1
        .mul(&pi1)?
        .add(&pi2.mul(&pi2)?)?
        .scale_re(1.0 / (2.0 * params.mass()));

    Ok(ModelOperators {
        params,
        r0,
        trunc,
        tol,
        pi,
        pi1,
        pi2,
        eta1,
        eta2,
        x1,
        x2,
        h0,
    })
}

fn check_gauge_center(model: &ModelOperators, path: &DrivePath) -> Result<()> {
    let start = path.start();
    let scale = start[0].abs().max(start[1].abs()).max(1.0);
    if (start[0] - model.r0[0]).abs() > 1e-12 * scale
        || (start[1] - model.r0[1]).abs() > 1e-12 * scale
    {
        return Err(Error::Config(format!(
            "path starts at {start:?} but the model's gauge center is {:?}",
            model.r0
        )));
    }
    Ok(())
}

/// The fixed operators (h0, x₁, x₂) whose combination with
/// [`h_coefficients`] gives H(t).
pub fn h_terms(model: &ModelOperators) -> [&TensorOperator; 3] {
    [&model.h0, &model.x1, &model.x2]
}

/// Coefficients (1, (qB/2c)Ṙ₂, −(qB/2c)Ṙ₁) of [`h_terms`] at time t.
pub fn h_coefficients(model: &ModelOperators, path: &DrivePath, t: f64) -> Result<[f64; 3]> {
    check_gauge_center(model, path)?;
    let v = path.derivative(t)?;
    let k = 0.5 * model.params.kappa();
    Ok([1.0, k * v[1], -k * v[0]])
}

/// Gauge-transformed Hamiltonian H(t) = h0 + (qB/2c)(x₁Ṙ₂ − x₂Ṙ₁).
pub fn build_h_at(model: &ModelOperators, path: &DrivePath, t: f64) -> Result<TensorOperator> {
    let c = h_coefficients(model, path, t)?;
    let terms = h_terms(model);
    TensorOperator::linear_combination(
        model.trunc,
        &[
            (cre(c[0]), terms[0]),
            (cre(c[1]), terms[1]),
            (cre(c[2]), terms[2]),
        ],
    )
}

/// Original Hamiltonian H_L(t) = [p − (q/c)A_L(x, R(t))]²/(2m) with the
/// symmetric-gauge potential A_L = (B/2) e₃ × (x − R(t)).
pub fn build_h_l_at(model: &ModelOperators, path: &DrivePath, t: f64) -> Result<TensorOperator> {
    check_gauge_center(model, path)?;
    let r = path.evaluate(t)?;
    let k = 0.5 * model.params.kappa();
    let r0 = model.r0;
    // canonical momenta from π = p − (q/c)A(x) with A centred on R(0)
    let p1 = model.pi1.sub(&model.x2.shift(cre(-r0[1])).scale_re(k))?;
    let p2 = model.pi2.add(&model.x1.shift(cre(-r0[0])).scale_re(k))?;
    let pl1 = p1.add(&model.x2.shift(cre(-r[1])).scale_re(k))?;
    let pl2 = p2.sub(&model.x1.shift(cre(-r[0])).scale_re(k))?;
    Ok(pl1
        .mul(&pl1)?
        .add(&pl2.mul(&pl2)?)?
        .scale_re(1.0 / (2.0 * model.params.mass())))
}

/// χ(x̂, t) = −(B/2)(R₂(t) − R₂(0))x̂₁ + (B/2)(R₁(t) − R₁(0))x̂₂.
pub fn gauge_function(model: &ModelOperators, path: &DrivePath, t: f64) -> Result<TensorOperator> {
    check_gauge_center(model, path)?;
    let dr = path.displacement(t)?;
    let half_b = 0.5 * model.params.field();
    model
        .x1
        .scale_re(-half_b * dr[1])
        .add(&model.x2.scale_re(half_b * dr[0]))
}

/// exp[−i(q/ħc)χ(x̂, t)]
pub fn gauge_phase_factor(
    model: &ModelOperators,
    path: &DrivePath,
    t: f64,
) -> Result<TensorOperator> {
    ensure_dimensionless(
        "gauge factor",
        units::CHARGE * units::FIELD * units::LENGTH * units::LENGTH
            / (units::ACTION * units::VELOCITY),
    )?;
    let p = &model.params;
    let chi = gauge_function(model, path, t)?;
    chi.scale(C64::new(0.0, -p.q() / (p.hbar() * p.c())))
        .exp_skew(&model.tol)
}
