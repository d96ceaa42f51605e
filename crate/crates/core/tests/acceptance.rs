//! Acceptance suite: one PASS/FAIL line per criterion, natural units,
//! na = nb = 48, buffer 12 unless noted.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use magtrans_core::analysis::{
    adiabatic_loop, center_of, displacement_check, gauge_consistency, geometric_phase_closed_loop,
    heisenberg_check, level_dependence, log_log_slope, transition_sweep, wavepacket_center_track,
    wrap_phase,
};
use magtrans_core::drive_path::DrivePath;
use magtrans_core::fock_algebra::{Mode, StateVector, TensorOperator, Truncation};
use magtrans_core::landau_model::{
    build_h_l_at, build_model, h_coefficients, h_terms, ModelOperators, PhysicalParams,
};
use magtrans_core::propagator::{assemble, m_polyline_product};
use magtrans_core::reference_integrator::{
    propagate_reference_from, IntegratorConfig, KronSumBasis, ProductPropagator,
};
use magtrans_core::Result;
use num_complex::Complex64 as C64;

const NA: usize = 48;
const NB: usize = 48;
const BUFFER: usize = 12;
const RATE: f64 = 0.5;

type Criterion = (u8, &'static str, fn() -> Result<Outcome>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn model_at(r0: [f64; 2]) -> ModelOperators {
    build_model(
        PhysicalParams::natural(),
        r0,
        Truncation::new(NA, NB, BUFFER).unwrap(),
    )
    .unwrap()
}

fn criterion_1() -> Result<Outcome> {
    let start = Instant::now();
    let m = model_at([0.0, 0.0]);
    let i = C64::new(0.0, 1.0);
    let id = TensorOperator::identity(m.trunc);
    let c_pi = m.pi1.commutator(&m.pi2)?.sub(&id.scale(i))?.interior_norm();
    let c_eta = m
        .eta1
        .commutator(&m.eta2)?
        .sub(&id.scale(-i))?
        .interior_norm();
    let mut c_mix: f64 = 0.0;
    for p in m.pi_components() {
        for e in m.eta() {
            c_mix = c_mix.max(p.commutator(e)?.interior_norm());
        }
    }
    let (h0a, h0b) = m.h0.kron_sum_parts().expect("h0 is a Kronecker sum");
    let mut level_err: f64 = 0.0;
    for n in 0..m.trunc.interior(Mode::A) {
        level_err = level_err.max((h0a[[n, n]].re + h0b[[0, 0]].re - (n as f64 + 0.5)).abs());
    }
    let off = h0a
        .indexed_iter()
        .filter(|((r, c), _)| r != c)
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let worst = c_pi.max(c_eta).max(c_mix).max(level_err).max(off);
    Ok(Outcome {
        pass: worst <= 1e-10 && elapsed < Duration::from_secs(5),
        detail: format!(
            "[pi1,pi2]-i {c_pi:.2e}, [eta1,eta2]+i {c_eta:.2e}, [pi,eta] {c_mix:.2e}, spectrum {level_err:.2e}, {elapsed:.2?}"
        ),
    })
}

fn circle_run() -> DrivePath {
    DrivePath::circle([1.0, 0.0], 1.0, 1.0, PI)
        .unwrap()
        .with_epsilon(0.1)
        .unwrap()
}

/// Reference propagator for H(t) on an enlarged guiding-center truncation,
/// evolving only the columns of the 48/12 interior.
fn reference_circle(path: &DrivePath, dt: f64, order: u8) -> Result<ProductPropagator> {
    let big_t = Truncation::new(NA, 72, BUFFER)?;
    let big = build_model(PhysicalParams::natural(), path.start(), big_t)?;
    let basis = KronSumBasis::new(&h_terms(&big))?;
    let cfg = IntegratorConfig::new(dt, order, path.duration())?;
    let cols = NA - BUFFER;
    let r = propagate_reference_from(
        |t| basis.combine(&h_coefficients(&big, path, t)?),
        &cfg,
        1.0,
        ProductPropagator::identity(big_t, cols, cols),
    )?;
    Ok(r.u)
}

fn criterion_2() -> Result<Outcome> {
    let start = Instant::now();
    let m = model_at([0.0, 0.0]);
    let path = circle_run();
    let bundle = assemble(&m, &path, path.duration())?;
    let err = reference_circle(&path, 1e-3, 4)?.window_distance(&bundle.u)?;
    let elapsed = start.elapsed();
    let mut slopes = Vec::new();
    for (order, dts) in [(2u8, [0.1, 0.05, 0.025]), (4, [0.4, 0.2, 0.1])] {
        let errs = dts
            .iter()
            .map(|dt| reference_circle(&path, *dt, order)?.window_distance(&bundle.u))
            .collect::<Result<Vec<_>>>()?;
        slopes.push((order, log_log_slope(&dts, &errs).unwrap_or(f64::NAN), errs));
    }
    let slopes_ok = slopes
        .iter()
        .all(|(o, s, _)| (s - *o as f64).abs() <= 0.1 * *o as f64);
    let slope_text: Vec<String> = slopes
        .iter()
        .map(|(o, s, e)| {
            format!(
                "order {o} slope {s:.3} (errs {:.2e}/{:.2e}/{:.2e})",
                e[0], e[1], e[2]
            )
        })
        .collect();
    Ok(Outcome {
        pass: err <= 1e-6 && slopes_ok && elapsed < Duration::from_secs(120),
        detail: format!(
            "|P(U_fact-U_ref)P| {err:.2e} at dt=1e-3 ({elapsed:.2?}); {}",
            slope_text.join("; ")
        ),
    })
}

fn criterion_3() -> Result<Outcome> {
    let m = model_at([0.0, 0.0]);
    let path = circle_run();
    let t = path.duration();
    let bundle = assemble(&m, &path, t)?;
    let h = heisenberg_check(&bundle, &m, &path)?;
    let d = displacement_check(&bundle, &m, &path)?;
    let mid = assemble(&m, &path, 0.25 * t)?;
    let hm = heisenberg_check(&mid, &m, &path)?;
    Ok(Outcome {
        pass: h.max() <= 1e-7 && d.k <= 1e-8 && d.m <= 1e-8,
        detail: format!(
            "pi {:.2e}, eta1 {:.2e}, eta2 {:.2e}, K {:.2e}, M {:.2e}; quarter loop (|d|=0.71, informational) max {:.2e}",
            h.pi, h.eta1, h.eta2, d.k, d.m, hm.max()
        ),
    })
}

fn criterion_4() -> Result<Outcome> {
    let m = model_at([0.0, 0.0]);
    let path = circle_run();
    let mut order_err: f64 = 0.0;
    let mut unit_err: f64 = 0.0;
    for frac in [0.1, 0.25, 0.5, 1.0] {
        let b = assemble(&m, &path, frac * path.duration())?;
        let dkm = TensorOperator::compose(&[&b.d_factor, &b.k_factor, &b.m_factor])?;
        let mdk = TensorOperator::compose(&[&b.m_factor, &b.d_factor, &b.k_factor])?;
        order_err = order_err.max(dkm.interior_distance(&mdk)?);
        for f in [
            &b.d_factor,
            &b.k_factor,
            &b.m_factor,
            &b.gauge_factor,
            &b.u,
            &b.u_l,
        ] {
            unit_err = unit_err.max(f.unitarity_defect());
        }
    }
    Ok(Outcome {
        pass: order_err <= 1e-8 && unit_err <= 1e-10,
        detail: format!("|P(DKM-MDK)P| {order_err:.2e}, unitarity {unit_err:.2e}"),
    })
}

fn criterion_5() -> Result<Outcome> {
    let m = model_at([0.0, 0.0]);
    let circle = DrivePath::circle([2.0, 0.0], 2.0, 1.0, PI)?;
    let mut betas = Vec::new();
    for eps in [0.1, 0.05, 0.025] {
        betas.push(geometric_phase_closed_loop(&circle, &m, eps)?);
    }
    let beta = betas[0].beta_geometric;
    let flux_err = betas
        .iter()
        .map(|r| (r.beta_geometric + PI).abs())
        .fold(0.0, f64::max);
    let spread = betas
        .iter()
        .map(|r| (r.beta_geometric - beta).abs())
        .fold(0.0, f64::max);
    let factor_err = betas
        .iter()
        .map(|r| wrap_phase(r.beta_from_factor - r.beta_geometric).abs())
        .fold(0.0, f64::max);
    let rev = geometric_phase_closed_loop(&circle.reversed(), &m, 0.1)?;
    let odd = (rev.beta_geometric + beta).abs();
    let path = circle.with_epsilon(0.1)?;
    let poly = m_polyline_product(&m, &path, path.duration(), 10_000)?;
    let oracle = (poly.beta - beta).abs();
    Ok(Outcome {
        pass: flux_err <= 1e-6 && spread <= 1e-8 && odd <= 1e-6 && oracle <= 1e-6 && factor_err <= 1e-6,
        detail: format!(
            "beta {beta:.10} (|beta+pi| {flux_err:.2e}), eps spread {spread:.2e}, reversed sum {odd:.2e}, 1e4-segment oracle {oracle:.2e}, factor phase {factor_err:.2e}"
        ),
    })
}

fn criterion_6() -> Result<Outcome> {
    let m = model_at([0.0, 0.0]);
    let path = adiabatic_loop(1.0, RATE)?;
    let eps = [0.1, 0.05, 0.025, 0.0125];
    let reports = transition_sweep(&path, &m, 0, &eps)?;
    let slope = reports[0].fitted_slope.unwrap_or(f64::NAN);
    let k_slope = reports[0].k_slope.unwrap_or(f64::NAN);
    let outs: Vec<String> = reports
        .iter()
        .map(|r| format!("{:.2e}", r.total_out))
        .collect();
    Ok(Outcome {
        pass: (slope - 2.0).abs() <= 0.1 && (k_slope - 1.0).abs() <= 0.1,
        detail: format!(
            "P_out slope {slope:.3} ({}), |P(K-e^(i phi_K))P| slope {k_slope:.3}",
            outs.join(", ")
        ),
    })
}

fn criterion_7() -> Result<Outcome> {
    let m = model_at([0.0, 0.0]);
    let path = adiabatic_loop(0.04, 1.0)?;
    let r = level_dependence(&path, &m, &[0, 1, 2, 5, 10], 0.1)?;
    let ratios: Vec<String> = r.ratio.iter().map(|x| format!("{x:.4}")).collect();
    Ok(Outcome {
        pass: r.alpha_abs <= 1e-2 && r.max_rel_dev_2n1 <= 0.05,
        detail: format!(
            "|alpha| {:.2e}, ratios [{}], max dev from 2n+1 {:.2e}; n^2 comparison (informational): max dev {:.2e}, fitted exponent {:.3}",
            r.alpha_abs,
            ratios.join(", "),
            r.max_rel_dev_2n1,
            r.max_rel_dev_n2,
            r.power_law_exponent.unwrap_or(f64::NAN)
        ),
    })
}

fn criterion_8() -> Result<Outcome> {
    let v = 0.2;
    let m = model_at([0.0, 0.0]);
    let t_end = 5.0 * 2.0 * PI;
    let path = DrivePath::line([0.0, 0.0], [v, 0.0], t_end)?;
    let ground = StateVector::basis(m.trunc, 0, 0)?;
    let track = wavepacket_center_track(&path, &m, &ground, &[0.0, t_end])?;
    let fact = [
        (track[1].x1 - track[0].x1) / t_end,
        (track[1].x2 - track[0].x2) / t_end,
    ];
    let cfg = IntegratorConfig::new(1e-2, 4, t_end)?;
    let r = propagate_reference_from(
        |t| build_h_l_at(&m, &path, t),
        &cfg,
        1.0,
        ProductPropagator::identity(m.trunc, 1, 1),
    )?;
    let (a, b) = r.u.factors();
    let psi = StateVector::product(m.trunc, &a.column(0).to_owned(), &b.column(0).to_owned())?;
    let end = center_of(&m, &psi, t_end)?;
    let orc = [
        (end.x1 - track[0].x1) / t_end,
        (end.x2 - track[0].x2) / t_end,
    ];
    let rel = |w: [f64; 2]| ((w[0] - v / 2.0).powi(2) + w[1].powi(2)).sqrt() / (v / 2.0);
    Ok(Outcome {
        pass: rel(fact) <= 0.02 && rel(orc) <= 0.02,
        detail: format!(
            "U_L drift ({:.6}, {:.2e}) rel {:.2e}; H_L oracle drift ({:.6}, {:.2e}) rel {:.2e}",
            fact[0],
            fact[1],
            rel(fact),
            orc[0],
            orc[1],
            rel(orc)
        ),
    })
}

fn criterion_9() -> Result<Outcome> {
    let m = model_at([0.0, 0.0]);
    let mut closed: f64 = 0.0;
    for (path, eps) in [
        (circle_run(), 1.0),
        (DrivePath::circle([2.0, 0.0], 2.0, 1.0, PI)?, 0.05),
        (adiabatic_loop(1.0, 1.0)?, 0.1),
    ] {
        let p = path.with_epsilon(eps)?;
        let g = gauge_consistency(&assemble(&m, &p, p.duration())?)?;
        closed = closed.max(g.gauge_minus_identity).max(g.u_l_minus_u);
    }
    let open = DrivePath::line([0.0, 0.0], [0.1, 0.05], 5.0)?;
    let t = open.duration();
    let b = assemble(&m, &open, t)?;
    let by_construction = gauge_consistency(&b)?.u_l_minus_gauge_u;
    let big_t = Truncation::new(72, NB, BUFFER)?;
    let big = build_model(PhysicalParams::natural(), open.start(), big_t)?;
    let cols = NA - BUFFER;
    let cfg = IntegratorConfig::new(1e-2, 4, t)?;
    let r = propagate_reference_from(
        |s| build_h_l_at(&big, &open, s),
        &cfg,
        1.0,
        ProductPropagator::identity(big_t, cols, cols),
    )?;
    let oracle = r.u.window_distance(&b.u_l)?;
    Ok(Outcome {
        pass: closed <= 1e-9 && by_construction <= 1e-12 && oracle <= 1e-5,
        detail: format!(
            "closed loops |P(U_L-U)P|, |P(G-I)P| {closed:.2e}; open |P(U_L-G U)P| {by_construction:.2e}, vs H_L oracle {oracle:.2e}"
        ),
    })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "algebra", criterion_1),
        (2, "factorization vs reference", criterion_2),
        (3, "Heisenberg residuals", criterion_3),
        (4, "factor order and unitarity", criterion_4),
        (5, "closed-loop geometric phase", criterion_5),
        (6, "adiabatic scaling", criterion_6),
        (7, "level dependence", criterion_7),
        (8, "drift under U_L", criterion_8),
        (9, "gauge consistency", criterion_9),
    ];
    let filter: Vec<u8> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id} ({name}): {} [{:.1?}] {detail}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
