//! Closed-form factors of the evolution operator U(t,0) = D·K·M and of its
//! lab-gauge counterpart U_L = gauge·M·D·K.
//!
//! D = exp(−i h0 t/ħ) and K act on the cyclotron mode, M on the guiding
//! center mode. K and M are displacements whose ordering phases φ_K and β
//! are computed separately by quadrature; ordered-product oracles for both
//! live at the bottom of this module.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::drive_path::DrivePath;
use crate::error::{Error, Result};
use crate::fock_algebra::expm::{expm, ExpAction};
use crate::fock_algebra::{dagger, identity_matrix, TensorOperator};
use crate::landau_model::{gauge_phase_factor, ModelOperators, PhysicalParams};
use crate::quadrature::{integrate, QuadOptions};
use crate::units::{self, ensure_dimensionless};

#[derive(Debug, Clone)]
pub struct PropagatorBundle {
    pub d_factor: TensorOperator,
    pub k_factor: TensorOperator,
    pub m_factor: TensorOperator,
    pub gauge_factor: TensorOperator,
    pub u: TensorOperator,
    pub u_l: TensorOperator,
    /// ∫₀ᵗ e^{iωs}(Ṙ₁ + iṘ₂) ds
    pub alpha_tilde: C64,
    pub beta_phase: f64,
    pub phi_k_phase: f64,
    pub t: f64,
}

fn check_time(path: &DrivePath, t: f64) -> Result<()> {
    let end = path.duration();
    if !(t >= 0.0 && t <= end * (1.0 + 1e-12)) {
        return Err(Error::Domain { t, end });
    }
    Ok(())
}

/// exp(−i h0 t/ħ); h0 is diagonal on mode A so this is elementwise.
pub fn dynamical_factor(model: &ModelOperators, t: f64) -> Result<TensorOperator> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain {
            t,
            end: f64::INFINITY,
        });
    }
    ensure_dimensionless("D", units::ENERGY * units::TIME / units::ACTION)?;
    let (h0a, h0b) = model
        .h0
        .kron_sum_parts()
        .ok_or_else(|| Error::Contract("h0 must be a Kronecker sum".into()))?;
    if h0b.iter().any(|z| z.norm() != 0.0) {
        return Err(Error::Contract(
            "h0 must act on the cyclotron mode only".into(),
        ));
    }
    let n = model.trunc.na();
    let hbar = model.params.hbar();
    let mut d = Array2::zeros((n, n));
    for k in 0..n {
        let off = (0..n).any(|j| j != k && h0a[[k, j]].norm() != 0.0);
        if off {
            return Err(Error::Contract(
                "h0 must be diagonal in the Fock basis".into(),
            ));
        }
        d[[k, k]] = C64::from_polar(1.0, -h0a[[k, k]].re * t / hbar);
    }
    TensorOperator::on_a(model.trunc, d)
}

fn drive_kernel(path: &DrivePath, omega: f64, s: f64) -> C64 {
    let v = path
        .derivative(s)
        .expect("quadrature nodes lie in the path domain");
    C64::from_polar(1.0, omega * s) * C64::new(v[0], v[1])
}

fn alpha_opts() -> QuadOptions {
    QuadOptions::default()
}

/// Quadrature knots: path breakpoints refined to a quarter period.
fn knots(path: &DrivePath, omega: f64, t: f64) -> Vec<f64> {
    let quarter = 0.5 * PI / omega;
    let mut out = Vec::new();
    for w in path.segments(t).windows(2) {
        let pieces = ((w[1] - w[0]) / quarter).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / pieces as f64;
        for k in 0..pieces {
            out.push(w[0] + h * k as f64);
        }
    }
    out.push(t);
    out
}

/// α̃ at each knot.
fn alpha_table(path: &DrivePath, omega: f64, t: f64) -> Result<(Vec<f64>, Vec<C64>)> {
    let ks = knots(path, omega, t);
    let mut vals = Vec::with_capacity(ks.len());
    let mut acc = C64::new(0.0, 0.0);
    vals.push(acc);
    for w in ks.windows(2) {
        acc += integrate(|s| drive_kernel(path, omega, s), w[0], w[1], &alpha_opts())?.value;
        vals.push(acc);
    }
    Ok((ks, vals))
}

/// α̃(t) = ∫₀ᵗ e^{iωs}(Ṙ₁(s) + iṘ₂(s)) ds, in units of length.
pub fn alpha_integral(path: &DrivePath, params: &PhysicalParams, t: f64) -> Result<C64> {
    check_time(path, t)?;
    if t == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let (_, vals) = alpha_table(path, params.omega(), t)?;
    Ok(*vals.last().expect("table has at least one entry"))
}

/// Time-ordering phase of K: φ_K = −(qB/8ħc) ∫₀ᵗ Im[f*(s) α̃(s)] ds with
/// f(s) = e^{iωs}(Ṙ₁ + iṘ₂).
pub fn phi_k(path: &DrivePath, params: &PhysicalParams, t: f64) -> Result<f64> {
    check_time(path, t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let omega = params.omega();
    let (ks, vals) = alpha_table(path, omega, t)?;
    let mut total = 0.0;
    for (j, w) in ks.windows(2).enumerate() {
        let base = vals[j];
        let mut inner_err: Option<Error> = None;
        let outer = integrate(
            |s: f64| {
                let inner =
                    match integrate(|u| drive_kernel(path, omega, u), w[0], s, &alpha_opts()) {
                        Ok(r) => r.value,
                        Err(e) => {
                            inner_err.get_or_insert(e);
                            C64::new(0.0, 0.0)
                        }
                    };
                (drive_kernel(path, omega, s).conj() * (base + inner)).im
            },
            w[0],
            w[1],
            &alpha_opts(),
        )?;
        if let Some(e) = inner_err {
            return Err(e);
        }
        total += outer.value;
    }
    Ok(-params.kappa() / (8.0 * params.hbar()) * total)
}

/// Closed form of φ_K for f(s) = C e^{iνs}.
pub fn phi_k_harmonic(params: &PhysicalParams, c_abs: f64, nu: f64, t: f64) -> f64 {
    let pref = params.kappa() * c_abs * c_abs / (8.0 * params.hbar());
    if nu == 0.0 {
        return 0.0;
    }
    pref / nu * (t - (nu * t).sin() / nu)
}

/// Mode-A generator (i/4ħ)(π† z + π z*).
fn k_generator(model: &ModelOperators, z: C64) -> Array2<C64> {
    let hbar = model.params.hbar();
    let pi_dag = dagger(&model.pi);
    (&pi_dag * z + &model.pi * z.conj()) * C64::new(0.0, 0.25 / hbar)
}

/// K(t) = e^{iφ_K}·exp[(i/4ħ)(π†α̃ + πα̃*)], returned with φ_K.
pub fn nonadiabatic_factor(
    model: &ModelOperators,
    path: &DrivePath,
    t: f64,
) -> Result<(TensorOperator, f64)> {
    ensure_dimensionless("K", units::MOMENTUM * units::LENGTH / units::ACTION)?;
    let alpha = alpha_integral(path, &model.params, t)?;
    let phase = phi_k(path, &model.params, t)?;
    let g = TensorOperator::on_a(model.trunc, k_generator(model, alpha))?;
    let k = g.exp_skew(&model.tol)?.scale(C64::from_polar(1.0, phase));
    Ok((k, phase))
}

/// β(t) = −(qB/ħc)·(1/2)∫₀ᵗ (d₁ḋ₂ − d₂ḋ₁) with d = (R − R(0))/2.
pub fn geometric_phase(path: &DrivePath, params: &PhysicalParams, t: f64) -> Result<f64> {
    ensure_dimensionless(
        "β",
        units::KAPPA * units::LENGTH * units::LENGTH / units::ACTION,
    )?;
    check_time(path, t)?;
    Ok(-params.kappa() / params.hbar() * path.swept_area_d(t)?)
}

/// Mode-B generator −(i/ħ) η·d (guiding-center offsets included as a
/// scalar).
fn translation_generator(model: &ModelOperators, d: [f64; 2]) -> Result<TensorOperator> {
    let hbar = model.params.hbar();
    model
        .eta1
        .scale_re(d[0])
        .add(&model.eta2.scale_re(d[1]))
        .map(|g| g.scale(C64::new(0.0, -1.0 / hbar)))
}

/// M(t) = e^{iβ}·exp(−i η·d(t)/ħ), returned with β.
pub fn magnetic_translation_factor(
    model: &ModelOperators,
    path: &DrivePath,
    t: f64,
) -> Result<(TensorOperator, f64)> {
    ensure_dimensionless("M", units::MOMENTUM * units::LENGTH / units::ACTION)?;
    check_time(path, t)?;
    let dr = path.displacement(t)?;
    let d = [dr[0] / 2.0, dr[1] / 2.0];
    let beta = geometric_phase(path, &model.params, t)?;
    let m = translation_generator(model, d)?
        .exp_skew(&model.tol)?
        .scale(C64::from_polar(1.0, beta));
    Ok((m, beta))
}

pub fn assemble(model: &ModelOperators, path: &DrivePath, t: f64) -> Result<PropagatorBundle> {
    check_time(path, t)?;
    let d = dynamical_factor(model, t)?;
    let (k, phi) = nonadiabatic_factor(model, path, t)?;
    let (m, beta) = magnetic_translation_factor(model, path, t)?;
    let gauge = gauge_phase_factor(model, path, t)?;
    let u = TensorOperator::compose(&[&d, &k, &m])?;
    let u_l = TensorOperator::compose(&[&gauge, &m, &d, &k])?;
    Ok(PropagatorBundle {
        d_factor: d,
        k_factor: k,
        m_factor: m,
        gauge_factor: gauge,
        u,
        u_l,
        alpha_tilde: alpha_integral(path, &model.params, t)?,
        beta_phase: beta,
        phi_k_phase: phi,
        t,
    })
}

#[derive(Debug, Clone)]
pub struct OrderedProduct {
    /// Richardson-extrapolated product.
    pub value: TensorOperator,
    /// ‖P(U_{2N} − U_N)P‖/3, an estimate of the extrapolation base error.
    pub error_estimate: f64,
}

fn k_midpoint_product(
    model: &ModelOperators,
    path: &DrivePath,
    t: f64,
    steps: usize,
) -> Result<Array2<C64>> {
    let omega = model.params.omega();
    let h = t / steps as f64;
    let mut u = identity_matrix(model.trunc.na());
    for k in 0..steps {
        let s = (k as f64 + 0.5) * h;
        let step = expm(&(k_generator(model, drive_kernel(path, omega, s)) * C64::new(h, 0.0)))?;
        u = step.dot(&u);
    }
    Ok(u)
}

/// Brute-force time-ordered product ∏ exp(A(s_k)Δs) for K at `steps` and
/// `2·steps` midpoint steps, Richardson-combined.
pub fn k_ordered_product(
    model: &ModelOperators,
    path: &DrivePath,
    t: f64,
    steps: usize,
) -> Result<OrderedProduct> {
    check_time(path, t)?;
    if steps == 0 {
        return Err(Error::Config(
            "ordered product needs at least one step".into(),
        ));
    }
    let coarse = k_midpoint_product(model, path, t, steps)?;
    let fine = k_midpoint_product(model, path, t, 2 * steps)?;
    let extrap = (&fine * C64::new(4.0 / 3.0, 0.0)) - (&coarse * C64::new(1.0 / 3.0, 0.0));
    let diff = TensorOperator::on_a(model.trunc, &fine - &coarse)?;
    Ok(OrderedProduct {
        value: TensorOperator::on_a(model.trunc, extrap)?,
        error_estimate: diff.interior_norm() / 3.0,
    })
}

#[derive(Debug, Clone)]
pub struct PolylineTranslation {
    /// Mode-B path-ordered product.
    pub value: TensorOperator,
    /// Ordering phase relative to the plain exponential of the total
    /// displacement, read off the guiding-center ground level.
    pub beta: f64,
}

/// Path-ordered product of magnetic translations along a `segments`-piece
/// polyline through d(s), s ∈ [0, t].
pub fn m_polyline_product(
    model: &ModelOperators,
    path: &DrivePath,
    t: f64,
    segments: usize,
) -> Result<PolylineTranslation> {
    check_time(path, t)?;
    if segments == 0 {
        return Err(Error::Config("polyline needs at least one segment".into()));
    }
    let nb = model.trunc.nb();
    let hbar = model.params.hbar();
    let (_, e1) = model.eta1.kron_sum_parts().expect("η is a Kronecker sum");
    let (_, e2) = model.eta2.kron_sum_parts().expect("η is a Kronecker sum");
    let half = |s: f64| -> Result<[f64; 2]> {
        let dr = path.displacement(s)?;
        Ok([dr[0] / 2.0, dr[1] / 2.0])
    };
    let mut u = identity_matrix(nb);
    let mut prev = half(0.0)?;
    for k in 1..=segments {
        let cur = half(t * k as f64 / segments as f64)?;
        let step = [cur[0] - prev[0], cur[1] - prev[1]];
        let h =
            (e1 * C64::new(step[0], 0.0) + e2 * C64::new(step[1], 0.0)) * C64::new(1.0 / hbar, 0.0);
        u = ExpAction::new(h).apply(1.0, &u);
        prev = cur;
    }
    let value = TensorOperator::on_b(model.trunc, u)?
        .scale(C64::from_polar(1.0, model_scalar_phase(model, path, t)?));
    let plain = translation_generator(model, half(t)?)?.exp_skew(&model.tol)?;
    let rel = plain.adjoint().mul(&value)?;
    let (ra, rb) = rel
        .as_product()
        .ok_or_else(|| Error::Contract("translation product lost its mode structure".into()))?;
    Ok(PolylineTranslation {
        value,
        beta: (rb[[0, 0]] * ra[[0, 0]]).arg(),
    })
}

/// Phase from the c-number part of −η·d/ħ.
fn model_scalar_phase(model: &ModelOperators, path: &DrivePath, t: f64) -> Result<f64> {
    let dr = path.displacement(t)?;
    let k = model.params.kappa();
    let r0 = model.r0;
    let scalar = -k * r0[1] * dr[0] / 2.0 + k * r0[0] * dr[1] / 2.0;
    Ok(-scalar / model.params.hbar())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive_path::{AngleProfile, PathShape};
    use crate::fock_algebra::{Mode, Truncation};
    use crate::landau_model::build_model;

    fn model(r0: [f64; 2]) -> ModelOperators {
        build_model(
            PhysicalParams::natural(),
            r0,
            Truncation::new(40, 40, 10).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn dynamical_factor_phases() {
        let m = model([0.0, 0.0]);
        let id = TensorOperator::identity(m.trunc);
        assert!(dynamical_factor(&m, 0.0).unwrap().sub(&id).unwrap().norm() < 1e-15);
        let d = dynamical_factor(&m, 2.0 * PI).unwrap();
        assert!(d.add(&id).unwrap().interior_norm() < 1e-12);
        let t = 0.37;
        let (da, _) = d_parts(&dynamical_factor(&m, t).unwrap());
        for n in 0..m.trunc.interior(Mode::A) {
            let want = C64::from_polar(1.0, -(n as f64 + 0.5) * t);
            assert!((da[[n, n]] - want).norm() < 1e-14);
        }
        assert!(dynamical_factor(&m, -1.0).is_err());
    }

    fn d_parts(op: &TensorOperator) -> (Array2<C64>, Array2<C64>) {
        op.as_product().unwrap()
    }

    #[test]
    fn alpha_for_line_drive() {
        let p = PhysicalParams::natural();
        let v = 0.2;
        let path = DrivePath::line([0.0, 0.0], [v, 0.0], 30.0).unwrap();
        for t in [0.0, 1.0, 7.3, 30.0] {
            let got = alpha_integral(&path, &p, t).unwrap();
            let want = (C64::from_polar(1.0, t) - 1.0) * v / C64::new(0.0, 1.0);
            assert!((got - want).norm() < 1e-10 * v.max(want.norm()), "{t}");
        }
        let still = DrivePath::line([1.0, 1.0], [0.0, 0.0], 5.0).unwrap();
        assert_eq!(alpha_integral(&still, &p, 5.0).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn phi_k_matches_harmonic_closed_form() {
        let p = PhysicalParams::natural();
        let v = 0.3;
        let line = DrivePath::line([0.0, 0.0], [v, 0.0], 25.0).unwrap();
        let got = phi_k(&line, &p, 25.0).unwrap();
        let want = phi_k_harmonic(&p, v, 1.0, 25.0);
        assert!((got - want).abs() < 1e-10 * want.abs(), "{got} {want}");

        // uniform circle: f = iεr e^{iθ0} e^{i(ω+rate)s}
        let rate = 0.25;
        let circ = DrivePath::circle([0.0, 0.0], 0.8, rate, 0.3).unwrap();
        let t = circ.duration();
        let got = phi_k(&circ, &p, t).unwrap();
        let want = phi_k_harmonic(&p, 0.8 * rate, 1.0 + rate, t);
        assert!((got - want).abs() < 1e-10 * want.abs(), "{got} {want}");
    }

    #[test]
    fn k_displaces_pi() {
        let m = model([0.0, 0.0]);
        let path = DrivePath::line([0.0, 0.0], [0.2, 0.0], 10.0).unwrap();
        let t = 6.0;
        let (k, _) = nonadiabatic_factor(&m, &path, t).unwrap();
        let alpha = alpha_integral(&path, &m.params, t).unwrap();
        let pi = m.pi_op();
        let moved = k.adjoint().mul(&pi).unwrap().mul(&k).unwrap();
        let want = pi.shift(C64::new(0.0, 0.5) * alpha);
        assert!(moved.sub(&want).unwrap().interior_norm() < 1e-8);
        assert!(k.unitarity_defect() < 1e-10);
    }

    #[test]
    fn k_matches_ordered_product() {
        let m = model([0.0, 0.0]);
        let path = DrivePath::line([0.0, 0.0], [0.2, 0.0], 10.0).unwrap();
        let (k, _) = nonadiabatic_factor(&m, &path, 10.0).unwrap();
        let oracle = k_ordered_product(&m, &path, 10.0, 1000).unwrap();
        let dist = k.interior_distance(&oracle.value).unwrap();
        assert!(dist < 1e-6, "{dist}");
        assert!(oracle.error_estimate < 1e-4);
    }

    #[test]
    fn m_displaces_eta_and_carries_area_phase() {
        let m = build_model(
            PhysicalParams::natural(),
            [1.0, 0.0],
            Truncation::new(48, 48, 12).unwrap(),
        )
        .unwrap();
        let circle = DrivePath::circle([0.0, 0.0], 1.0, 1.0, 0.0).unwrap();
        let t = 1.0;
        let (mf, beta) = magnetic_translation_factor(&m, &circle, t).unwrap();
        let dr = circle.displacement(t).unwrap();
        let e1 = mf.adjoint().mul(&m.eta1).unwrap().mul(&mf).unwrap();
        let e2 = mf.adjoint().mul(&m.eta2).unwrap().mul(&mf).unwrap();
        let w1 = m.eta1.shift(C64::new(-0.5 * dr[1], 0.0));
        let w2 = m.eta2.shift(C64::new(0.5 * dr[0], 0.0));
        assert!(e1.sub(&w1).unwrap().interior_norm() < 1e-8);
        assert!(e2.sub(&w2).unwrap().interior_norm() < 1e-8);
        // partial arc: area of d-path is (Δθ − sin Δθ)/8 for unit radius
        let want = -(t - t.sin()) / 8.0;
        assert!((beta - want).abs() < 1e-10);
    }

    #[test]
    fn closed_loop_phase_against_polyline() {
        let m = build_model(
            PhysicalParams::natural(),
            [2.0, 0.0],
            Truncation::new(48, 48, 12).unwrap(),
        )
        .unwrap();
        let circle = DrivePath::circle([0.0, 0.0], 2.0, 1.0, 0.0).unwrap();
        let t = circle.duration();
        let (_, beta) = magnetic_translation_factor(&m, &circle, t).unwrap();
        assert!((beta + PI).abs() < 1e-8);
        let poly = m_polyline_product(&m, &circle, t, 2000).unwrap();
        assert!((poly.beta - beta).abs() < 1e-5, "{} {}", poly.beta, beta);
    }

    #[test]
    fn factors_commute_and_assemble() {
        let m = model([0.0, 0.0]);
        let shape = PathShape::Circle {
            center: [0.5, 0.0],
            radius: 0.5,
            angular_rate: 1.0,
            start_angle: PI,
            turns: 1.0,
            profile: AngleProfile::EaseOut,
        };
        let path = DrivePath::new(shape).unwrap().with_epsilon(0.5).unwrap();
        let t = 0.6 * path.duration();
        let b = assemble(&m, &path, t).unwrap();
        let mdk = TensorOperator::compose(&[&b.m_factor, &b.d_factor, &b.k_factor]).unwrap();
        assert!(b.u.interior_distance(&mdk).unwrap() < 1e-12);
        for f in [
            &b.d_factor,
            &b.k_factor,
            &b.m_factor,
            &b.gauge_factor,
            &b.u,
            &b.u_l,
        ] {
            assert!(f.unitarity_defect() < 1e-10);
        }
        let gu = b.gauge_factor.mul(&b.u).unwrap();
        assert!(b.u_l.interior_distance(&gu).unwrap() < 1e-12);

        let z = assemble(&m, &path, 0.0).unwrap();
        let id = TensorOperator::identity(m.trunc);
        assert!(z.u.sub(&id).unwrap().norm() < 1e-14);
        assert!(z.u_l.sub(&id).unwrap().norm() < 1e-14);
    }

    #[test]
    fn constant_path_gives_pure_dynamics() {
        let m = model([0.3, 0.3]);
        let path = DrivePath::line([0.3, 0.3], [0.0, 0.0], 4.0).unwrap();
        let b = assemble(&m, &path, 4.0).unwrap();
        assert!(b.u.sub(&b.d_factor).unwrap().norm() < 1e-14);
        assert!(b.u_l.sub(&b.d_factor).unwrap().norm() < 1e-14);
        assert_eq!(b.phi_k_phase, 0.0);
        assert_eq!(b.beta_phase, 0.0);
    }
}
