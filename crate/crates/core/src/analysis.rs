//! Studies built on the factorized propagator: Heisenberg residuals,
//! closed-loop phases, transition spectra under slow driving and
//! wavepacket-center tracking.

use std::collections::BTreeMap;

use ndarray::Array1;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drive_path::{AngleProfile, DrivePath, PathShape};
use crate::error::{Error, Result};
use crate::fock_algebra::{Mode, StateVector, TensorOperator};
use crate::landau_model::ModelOperators;
use crate::propagator::{assemble, PropagatorBundle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergResiduals {
    /// ‖P(U†πU − πe^{−iωt} − i(qB/2c)e^{−iωt}α̃)P‖
    pub pi: f64,
    /// ‖P(U†η_μU − η_μ + (qB/2c)ε_{μν}ΔR_ν)P‖ for μ = 1, 2
    pub eta1: f64,
    pub eta2: f64,
}

impl HeisenbergResiduals {
    pub fn max(&self) -> f64 {
        self.pi.max(self.eta1).max(self.eta2)
    }
}

fn conjugate(u: &TensorOperator, x: &TensorOperator) -> Result<TensorOperator> {
    u.adjoint().mul(x)?.mul(u)
}

fn eta_targets(model: &ModelOperators, path: &DrivePath, t: f64) -> Result<[TensorOperator; 2]> {
    let dr = path.displacement(t)?;
    let k = 0.5 * model.params.kappa();
    Ok([
        model.eta1.shift(C64::new(-k * dr[1], 0.0)),
        model.eta2.shift(C64::new(k * dr[0], 0.0)),
    ])
}

pub fn heisenberg_check(
    bundle: &PropagatorBundle,
    model: &ModelOperators,
    path: &DrivePath,
) -> Result<HeisenbergResiduals> {
    let t = bundle.t;
    let u = &bundle.u;
    let rot = C64::from_polar(1.0, -model.params.omega() * t);
    let pi = model.pi_op();
    let shift = C64::new(0.0, 0.5 * model.params.kappa()) * rot * bundle.alpha_tilde;
    let pi_want = pi.scale(rot).shift(shift);
    let pi_res = conjugate(u, &pi)?.sub(&pi_want)?.interior_norm();
    let [w1, w2] = eta_targets(model, path, t)?;
    Ok(HeisenbergResiduals {
        pi: pi_res,
        eta1: conjugate(u, &model.eta1)?.sub(&w1)?.interior_norm(),
        eta2: conjugate(u, &model.eta2)?.sub(&w2)?.interior_norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementResiduals {
    /// ‖P(K†πK − π − i(qB/2c)α̃)P‖
    pub k: f64,
    /// max over μ of ‖P(M†η_μM − η_μ + (qB/2c)ε_{μν}ΔR_ν)P‖
    pub m: f64,
}

pub fn displacement_check(
    bundle: &PropagatorBundle,
    model: &ModelOperators,
    path: &DrivePath,
) -> Result<DisplacementResiduals> {
    let pi = model.pi_op();
    let shift = C64::new(0.0, 0.5 * model.params.kappa()) * bundle.alpha_tilde;
    let k = conjugate(&bundle.k_factor, &pi)?
        .sub(&pi.shift(shift))?
        .interior_norm();
    let [w1, w2] = eta_targets(model, path, bundle.t)?;
    let m1 = conjugate(&bundle.m_factor, &model.eta1)?
        .sub(&w1)?
        .interior_norm();
    let m2 = conjugate(&bundle.m_factor, &model.eta2)?
        .sub(&w2)?
        .interior_norm();
    Ok(DisplacementResiduals { k, m: m1.max(m2) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub epsilon: f64,
    pub duration: f64,
    /// β from the ordering-phase quadrature.
    pub beta_geometric: f64,
    /// −(q/ħc)·B·loop_area_d
    pub beta_flux: f64,
    /// Phase of ⟨0,0|M|0,0⟩ (d = 0 at the end of a closed loop), wrapped.
    pub beta_from_factor: f64,
    pub phi_k: f64,
    pub loop_area_d: f64,
    /// −E_n T/ħ for each interior cyclotron level.
    pub dynamical_phase: Vec<f64>,
}

/// Wraps into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

pub fn geometric_phase_closed_loop(
    path: &DrivePath,
    model: &ModelOperators,
    epsilon: f64,
) -> Result<PhaseReport> {
    if !path.is_closed() {
        return Err(Error::Contract(
            "phase-loop study requires a closed path".into(),
        ));
    }
    let path = path.with_epsilon(epsilon)?;
    let t = path.duration();
    let bundle = assemble(model, &path, t)?;
    let area = path.signed_area_d_path()?;
    let p = &model.params;
    let beta_flux = -p.q() / (p.hbar() * p.c()) * p.field() * area;
    let (ma, mb) = bundle
        .m_factor
        .as_product()
        .ok_or_else(|| Error::Contract("M lost its product form".into()))?;
    let beta_from_factor = (ma[[0, 0]] * mb[[0, 0]]).arg();
    let (h0a, _) = model.h0.kron_sum_parts().expect("h0 is a Kronecker sum");
    let dynamical_phase = (0..model.trunc.interior(Mode::A))
        .map(|n| -h0a[[n, n]].re * t / p.hbar())
        .collect();
    Ok(PhaseReport {
        epsilon,
        duration: t,
        beta_geometric: bundle.beta_phase,
        beta_flux,
        beta_from_factor,
        phi_k: bundle.phi_k_phase,
        loop_area_d: area,
        dynamical_phase,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub n_initial: usize,
    pub epsilon: f64,
    /// Final cyclotron level → probability, summed over interior
    /// guiding-center levels.
    pub probabilities: BTreeMap<usize, f64>,
    pub survival: f64,
    /// 1 − survival
    pub total_out: f64,
    /// Weight outside the interior window.
    pub leakage: f64,
    /// |α̃(T)|
    pub alpha_abs: f64,
    /// ‖P(K(T) − e^{iφ_K}I)P‖
    pub k_deviation: f64,
    /// Log-log slope of total_out against ε over the sweep.
    pub fitted_slope: Option<f64>,
    /// Log-log slope of k_deviation against ε over the sweep.
    pub k_slope: Option<f64>,
}

impl TransitionReport {
    pub fn most_probable_level(&self) -> Option<usize> {
        self.probabilities
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(n, _)| *n)
    }

    pub fn transitions(&self) -> f64 {
        self.probabilities
            .iter()
            .filter(|(n, _)| **n != self.n_initial)
            .map(|(_, p)| p)
            .sum()
    }
}

/// A circle of radius r around (r, 0), starting from the origin, traversed
/// once counterclockwise at mean angular rate `rate` (before ε scaling) with
/// an angle profile that leaves at twice the mean rate and arrives at rest.
/// Closed, and non-resonant for every ε (a uniform traversal makes α̃(T)
/// vanish whenever rate/ε is an integer).
pub fn adiabatic_loop(radius: f64, rate: f64) -> Result<DrivePath> {
    DrivePath::new(PathShape::Circle {
        center: [radius, 0.0],
        radius,
        angular_rate: rate,
        start_angle: std::f64::consts::PI,
        turns: 1.0,
        profile: AngleProfile::EaseOut,
    })
}

fn check_level(model: &ModelOperators, n: usize) -> Result<()> {
    if n >= model.trunc.interior(Mode::A) {
        return Err(Error::Contract(format!(
            "initial level {n} lies outside the interior window ({} levels)",
            model.trunc.interior(Mode::A)
        )));
    }
    Ok(())
}

pub fn transition_at(
    path: &DrivePath,
    model: &ModelOperators,
    n_initial: usize,
    epsilon: f64,
) -> Result<TransitionReport> {
    check_level(model, n_initial)?;
    if !path.is_closed() {
        return Err(Error::Contract(
            "transition sweep requires a closed path".into(),
        ));
    }
    let path = path.with_epsilon(epsilon)?;
    let bundle = assemble(model, &path, path.duration())?;
    let psi = bundle
        .u
        .apply(&StateVector::basis(model.trunc, n_initial, 0)?)?;
    let trunc = model.trunc;
    let (ia, ib) = (trunc.interior(Mode::A), trunc.interior(Mode::B));
    let mut probabilities = BTreeMap::new();
    for n in 0..ia {
        let p: f64 = (0..ib).map(|m| psi.amplitude(n, m).norm_sqr()).sum();
        probabilities.insert(n, p);
    }
    let survival = probabilities[&n_initial];
    let phase = TensorOperator::identity(trunc).scale(C64::from_polar(1.0, bundle.phi_k_phase));
    Ok(TransitionReport {
        n_initial,
        epsilon,
        probabilities,
        survival,
        total_out: 1.0 - survival,
        leakage: psi.exterior_weight(),
        alpha_abs: bundle.alpha_tilde.norm(),
        k_deviation: bundle.k_factor.interior_distance(&phase)?,
        fitted_slope: None,
        k_slope: None,
    })
}

/// Least-squares slope of log y against log x.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    if xs.iter().chain(ys).any(|v| v.is_nan() || *v <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Below this ε the initial level must stay the most probable one.
pub const ADIABATIC_EPSILON: f64 = 0.1;

/// One report per ε (in the given order), evaluated in parallel, with the
/// sweep's log-log slopes filled in.
pub fn transition_sweep(
    path: &DrivePath,
    model: &ModelOperators,
    n_initial: usize,
    epsilons: &[f64],
) -> Result<Vec<TransitionReport>> {
    check_level(model, n_initial)?;
    let mut reports = epsilons
        .par_iter()
        .map(|&eps| transition_at(path, model, n_initial, eps))
        .collect::<Result<Vec<_>>>()?;
    for r in reports.iter().filter(|r| r.epsilon <= ADIABATIC_EPSILON) {
        if r.most_probable_level() != Some(n_initial) {
            return Err(Error::Numerical(format!(
                "at epsilon {} the most probable final level is {:?}, not the initial level {n_initial}",
                r.epsilon,
                r.most_probable_level()
            )));
        }
    }
    let eps: Vec<f64> = reports.iter().map(|r| r.epsilon).collect();
    let out: Vec<f64> = reports.iter().map(|r| r.total_out).collect();
    let kd: Vec<f64> = reports.iter().map(|r| r.k_deviation).collect();
    let slope = log_log_slope(&eps, &out);
    let k_slope = log_log_slope(&eps, &kd);
    for r in &mut reports {
        r.fitted_slope = slope;
        r.k_slope = k_slope;
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDependenceReport {
    pub epsilon: f64,
    pub alpha_abs: f64,
    pub levels: Vec<usize>,
    pub total_out: Vec<f64>,
    /// P_out(n)/P_out(0)
    pub ratio: Vec<f64>,
    /// First-order prediction (2n+1)|λ|², |λ| = √(2ħκ)|α̃|/(4ħ).
    pub first_order: Vec<f64>,
    /// max_n |ratio/(2n+1) − 1|
    pub max_rel_dev_2n1: f64,
    /// max_{n≥1} |[P_out(n)/P_out(1)]/n² − 1|, reported only.
    pub max_rel_dev_n2: f64,
    /// Least-squares exponent p of P_out(n) ∝ n^p over n ≥ 1, reported only.
    pub power_law_exponent: Option<f64>,
}

pub fn level_dependence(
    path: &DrivePath,
    model: &ModelOperators,
    levels: &[usize],
    epsilon: f64,
) -> Result<LevelDependenceReport> {
    if !levels.contains(&0) {
        return Err(Error::Config("level study needs n = 0 as reference".into()));
    }
    let reports = levels
        .par_iter()
        .map(|&n| transition_at(path, model, n, epsilon))
        .collect::<Result<Vec<_>>>()?;
    let p0 = reports[levels.iter().position(|n| *n == 0).expect("checked")].total_out;
    let out: Vec<f64> = reports.iter().map(|r| r.total_out).collect();
    let ratio: Vec<f64> = out.iter().map(|p| p / p0).collect();
    let alpha = reports[0].alpha_abs;
    let p = &model.params;
    let lambda = (2.0 * p.hbar() * p.kappa()).sqrt() * alpha / (4.0 * p.hbar());
    let first_order = levels
        .iter()
        .map(|n| (2 * n + 1) as f64 * lambda * lambda)
        .collect();
    let max_rel_dev_2n1 = levels
        .iter()
        .zip(&ratio)
        .map(|(n, r)| (r / (2 * n + 1) as f64 - 1.0).abs())
        .fold(0.0, f64::max);
    let p1 = levels.iter().position(|n| *n == 1).map(|i| out[i]);
    let max_rel_dev_n2 = match p1 {
        Some(p1) => levels
            .iter()
            .zip(&out)
            .filter(|(n, _)| **n >= 1)
            .map(|(n, o)| (o / p1 / (n * n) as f64 - 1.0).abs())
            .fold(0.0, f64::max),
        None => f64::NAN,
    };
    let (ns, ps): (Vec<f64>, Vec<f64>) = levels
        .iter()
        .zip(&out)
        .filter(|(n, _)| **n >= 1)
        .map(|(n, o)| (*n as f64, *o))
        .unzip();
    Ok(LevelDependenceReport {
        epsilon,
        alpha_abs: alpha,
        levels: levels.to_vec(),
        total_out: out,
        ratio,
        first_order,
        max_rel_dev_2n1,
        max_rel_dev_n2,
        power_law_exponent: log_log_slope(&ns, &ps),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterSample {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
}

/// ⟨x₁⟩, ⟨x₂⟩ of U_L(t)|initial⟩ on each time of the grid.
pub fn wavepacket_center_track(
    path: &DrivePath,
    model: &ModelOperators,
    initial: &StateVector,
    t_grid: &[f64],
) -> Result<Vec<CenterSample>> {
    let norm = initial.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Contract(format!("initial state has norm {norm}")));
    }
    if initial.exterior_weight() > 1e-12 {
        return Err(Error::Contract(
            "initial state is not interior-supported".into(),
        ));
    }
    t_grid
        .par_iter()
        .map(|&t| {
            let bundle = assemble(model, path, t)?;
            let psi = bundle.u_l.apply(initial)?;
            center_of(model, &psi, t)
        })
        .collect()
}

pub fn center_of(model: &ModelOperators, psi: &StateVector, t: f64) -> Result<CenterSample> {
    Ok(CenterSample {
        t,
        x1: model.x1.expectation(psi)?.re,
        x2: model.x2.expectation(psi)?.re,
    })
}

/// Mean velocity between the first and last sample; over whole cyclotron
/// periods the oscillation cancels.
pub fn drift_velocity(samples: &[CenterSample]) -> Result<[f64; 2]> {
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(f), Some(l)) if l.t > f.t => (f, l),
        _ => {
            return Err(Error::Config(
                "drift needs two samples at distinct times".into(),
            ))
        }
    };
    let dt = last.t - first.t;
    Ok([(last.x1 - first.x1) / dt, (last.x2 - first.x2) / dt])
}

/// Ground state of both modes.
pub fn ground_state(model: &ModelOperators) -> Result<StateVector> {
    StateVector::basis(model.trunc, 0, 0)
}

/// Coherent state of the cyclotron mode (amplitude z) times the
/// guiding-center ground state.
pub fn cyclotron_coherent_state(model: &ModelOperators, z: C64) -> Result<StateVector> {
    let na = model.trunc.na();
    let mut psi_a = Array1::zeros(na);
    let mut c = C64::new((-0.5 * z.norm_sqr()).exp(), 0.0);
    for n in 0..na {
        if n > 0 {
            c = c * z / (n as f64).sqrt();
        }
        psi_a[n] = c;
    }
    let mut psi_b = Array1::zeros(model.trunc.nb());
    psi_b[0] = C64::new(1.0, 0.0);
    StateVector::product(model.trunc, &psi_a, &psi_b)?.normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeReport {
    /// ‖P(gauge − I)P‖
    pub gauge_minus_identity: f64,
    /// ‖P(U_L − U)P‖
    pub u_l_minus_u: f64,
    /// ‖P(U_L − gauge·U)P‖
    pub u_l_minus_gauge_u: f64,
}

pub fn gauge_consistency(bundle: &PropagatorBundle) -> Result<GaugeReport> {
    let id = TensorOperator::identity(bundle.u.trunc());
    let gu = bundle.gauge_factor.mul(&bundle.u)?;
    Ok(GaugeReport {
        gauge_minus_identity: bundle.gauge_factor.interior_distance(&id)?,
        u_l_minus_u: bundle.u_l.interior_distance(&bundle.u)?,
        u_l_minus_gauge_u: bundle.u_l.interior_distance(&gu)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock_algebra::Truncation;
    use crate::landau_model::{build_model, PhysicalParams};

    fn model(r0: [f64; 2]) -> ModelOperators {
        build_model(
            PhysicalParams::natural(),
            r0,
            Truncation::new(40, 40, 10).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn wrap_phase_range() {
        let pi = std::f64::consts::PI;
        assert!((wrap_phase(-pi) - pi).abs() < 1e-15);
        assert!((wrap_phase(3.0 * pi / 2.0) + pi / 2.0).abs() < 1e-15);
        assert_eq!(wrap_phase(0.25), 0.25);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(2.5)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() - 2.5).abs() < 1e-12);
        assert!(log_log_slope(&[1.0], &[1.0]).is_none());
        assert!(log_log_slope(&[1.0, 2.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn constant_path_has_trivial_residuals() {
        let m = model([0.5, 0.5]);
        let path = DrivePath::line([0.5, 0.5], [0.0, 0.0], 7.0).unwrap();
        let b = assemble(&m, &path, 3.3).unwrap();
        let r = heisenberg_check(&b, &m, &path).unwrap();
        assert!(r.max() < 1e-10, "{r:?}");
    }

    #[test]
    fn line_drive_residuals() {
        let m = model([0.0, 0.0]);
        let path = DrivePath::line([0.0, 0.0], [0.1, 0.0], 6.0).unwrap();
        let b = assemble(&m, &path, 5.0).unwrap();
        let r = heisenberg_check(&b, &m, &path).unwrap();
        assert!(r.max() < 1e-7, "{r:?}");
        let d = displacement_check(&b, &m, &path).unwrap();
        assert!(d.k < 1e-8 && d.m < 1e-8, "{d:?}");
    }

    #[test]
    fn flipped_eta_fails_check() {
        let mut m = model([0.0, 0.0]);
        let path = DrivePath::line([0.0, 0.0], [0.1, 0.05], 6.0).unwrap();
        let b = assemble(&m, &path, 5.0).unwrap();
        m.eta1 = m.eta1.scale_re(-1.0);
        let r = heisenberg_check(&b, &m, &path).unwrap();
        assert!(r.eta1 > 1e-3);
    }

    #[test]
    fn closed_loop_phase_report() {
        let m = model([0.0, 0.0]);
        let loop_path = adiabatic_loop(1.0, 1.0).unwrap();
        let r = geometric_phase_closed_loop(&loop_path, &m, 0.5).unwrap();
        let want = -std::f64::consts::PI / 4.0;
        assert!((r.beta_geometric - want).abs() < 1e-9);
        assert!((r.beta_flux - want).abs() < 1e-9);
        assert!(wrap_phase(r.beta_from_factor - r.beta_geometric).abs() < 1e-9);
        let rev = geometric_phase_closed_loop(&loop_path.reversed(), &m, 0.5).unwrap();
        assert!((rev.beta_geometric + r.beta_geometric).abs() < 1e-9);
        let open = DrivePath::line([0.0, 0.0], [1.0, 0.0], 1.0).unwrap();
        assert!(geometric_phase_closed_loop(&open, &m, 1.0).is_err());
    }

    #[test]
    fn transition_bookkeeping() {
        let m = model([0.0, 0.0]);
        let path = adiabatic_loop(0.5, 1.0).unwrap();
        let r = transition_at(&path, &m, 2, 0.2).unwrap();
        let total = r.survival + r.transitions() + r.leakage;
        assert!((total - 1.0).abs() < 1e-8, "{total}");
        assert!(r.probabilities.values().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(r.most_probable_level(), Some(2));
        assert!(transition_at(&path, &m, 30, 0.2).is_err());
    }

    #[test]
    fn drift_of_samples() {
        let s = [
            CenterSample {
                t: 0.0,
                x1: 0.0,
                x2: 1.0,
            },
            CenterSample {
                t: 2.0,
                x1: 0.5,
                x2: 1.0,
            },
        ];
        assert_eq!(drift_velocity(&s).unwrap(), [0.25, 0.0]);
        assert!(drift_velocity(&s[..1]).is_err());
    }

    #[test]
    fn static_coherent_state_circles_without_drift() {
        let m = model([0.0, 0.0]);
        let path = DrivePath::line([0.0, 0.0], [0.0, 0.0], 2.0 * std::f64::consts::PI).unwrap();
        let psi = cyclotron_coherent_state(&m, C64::new(1.0, 0.0)).unwrap();
        let grid: Vec<f64> = (0..=8)
            .map(|k| k as f64 * std::f64::consts::PI / 4.0)
            .collect();
        let track = wavepacket_center_track(&path, &m, &psi, &grid).unwrap();
        let first = track[0];
        let last = track[track.len() - 1];
        assert!((first.x1 - last.x1).abs() < 1e-10 && (first.x2 - last.x2).abs() < 1e-10);
        let spread = track.iter().map(|s| s.x1).fold(f64::NEG_INFINITY, f64::max)
            - track.iter().map(|s| s.x1).fold(f64::INFINITY, f64::min);
        assert!(spread > 0.5);
    }
}
