use std::collections::BTreeMap;

use magtrans_core::analysis::{
    center_of, cyclotron_coherent_state, displacement_check, drift_velocity, gauge_consistency,
    geometric_phase_closed_loop, heisenberg_check, transition_sweep, wavepacket_center_track,
    wrap_phase, TransitionReport,
};
use magtrans_core::fock_algebra::{Mode, StateVector, TensorOperator, Truncation};
use magtrans_core::landau_model::{build_model, h_coefficients, h_terms, ModelOperators};
use magtrans_core::propagator::{assemble, dynamical_factor};
use magtrans_core::reference_integrator::{
    propagate_reference_from, KronSumBasis, ProductPropagator,
};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{InitialState, RunConfig, Study};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }
}

/// Fixed-column table; every cell is already formatted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub study: Study,
    pub results: Value,
    pub checks: Vec<Check>,
    pub series: Series,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn level_columns(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k}")).collect()
}

pub fn model_for(cfg: &RunConfig) -> Result<ModelOperators, CliError> {
    Ok(build_model(
        cfg.units.params(),
        cfg.path.start(),
        cfg.truncation,
    )?)
}

pub fn run(cfg: &RunConfig, study: Study) -> Result<Report, CliError> {
    let model = model_for(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.study_options.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match study {
        Study::Verify => verify(cfg, &model),
        Study::Evolve => evolve(cfg, &model),
        Study::PhaseLoop => phase_loop(cfg, &model),
        Study::SweepEpsilon => sweep_epsilon(cfg, &model),
        Study::TrackCenter => track_center(cfg, &model),
    })
}

/// Full invariant suite on `model` (which the caller may have altered) along
/// the configured path.
pub fn verify(cfg: &RunConfig, model: &ModelOperators) -> Result<Report, CliError> {
    let tol = &cfg.tolerances;
    let p = model.params;
    let hk = p.hbar() * p.kappa();
    let id = TensorOperator::identity(model.trunc);
    let i = C64::new(0.0, 1.0);
    let mut checks = vec![
        Check::new(
            "commutator_pi1_pi2",
            model
                .pi1
                .commutator(&model.pi2)?
                .sub(&id.scale(i * hk))?
                .interior_norm(),
            tol.commutator * hk.max(1.0),
        ),
        Check::new(
            "commutator_eta1_eta2",
            model
                .eta1
                .commutator(&model.eta2)?
                .sub(&id.scale(-i * hk))?
                .interior_norm(),
            tol.commutator * hk.max(1.0),
        ),
    ];
    let mut mixed: f64 = 0.0;
    for a in model.pi_components() {
        for b in model.eta() {
            mixed = mixed.max(a.commutator(b)?.interior_norm());
        }
    }
    checks.push(Check::new(
        "commutator_pi_eta",
        mixed,
        tol.commutator * hk.max(1.0),
    ));
    let spectrum = match model.h0.kron_sum_parts() {
        Some((ha, hb)) => {
            let e0 = p.hbar() * p.omega();
            let mut worst: f64 = 0.0;
            for r in 0..model.trunc.interior(Mode::A) {
                for c in 0..model.trunc.interior(Mode::A) {
                    let want = if r == c { e0 * (r as f64 + 0.5) } else { 0.0 };
                    let shift = if r == c { hb[[0, 0]].re } else { 0.0 };
                    worst = worst.max((ha[[r, c]] + shift - want).norm());
                }
            }
            worst / e0
        }
        None => f64::INFINITY,
    };
    checks.push(Check::new("h0_spectrum", spectrum, tol.spectrum));

    let path = &cfg.path;
    let t = cfg.t_final();
    let bundle = assemble(model, path, t)?;
    let dkm = TensorOperator::compose(&[&bundle.d_factor, &bundle.k_factor, &bundle.m_factor])?;
    let mdk = TensorOperator::compose(&[&bundle.m_factor, &bundle.d_factor, &bundle.k_factor])?;
    checks.push(Check::new(
        "factor_order",
        dkm.interior_distance(&mdk)?,
        tol.factor_order,
    ));
    for (name, f) in [
        ("unitarity_d", &bundle.d_factor),
        ("unitarity_k", &bundle.k_factor),
        ("unitarity_m", &bundle.m_factor),
        ("unitarity_gauge", &bundle.gauge_factor),
        ("unitarity_u", &bundle.u),
    ] {
        checks.push(Check::new(name, f.unitarity_defect(), tol.unitarity));
    }
    let h = heisenberg_check(&bundle, model, path)?;
    let scale = hk.sqrt().max(1.0);
    checks.push(Check::new("heisenberg_pi", h.pi, tol.heisenberg * scale));
    checks.push(Check::new(
        "heisenberg_eta1",
        h.eta1,
        tol.heisenberg * scale,
    ));
    checks.push(Check::new(
        "heisenberg_eta2",
        h.eta2,
        tol.heisenberg * scale,
    ));
    let d = displacement_check(&bundle, model, path)?;
    checks.push(Check::new("displacement_k", d.k, tol.displacement * scale));
    checks.push(Check::new("displacement_m", d.m, tol.displacement * scale));

    let it = cfg.integrator_config()?;
    let tr = model.trunc;
    let big_t = Truncation::new(
        tr.na() + cfg.integrator.padding,
        tr.nb() + cfg.integrator.padding,
        tr.buffer(),
    )?;
    let big = build_model(p, model.r0, big_t)?;
    let basis = KronSumBasis::new(&h_terms(&big))?;
    let reference = propagate_reference_from(
        |s| basis.combine(&h_coefficients(&big, path, s)?),
        &it,
        p.hbar(),
        ProductPropagator::identity(big_t, tr.interior(Mode::A), tr.interior(Mode::B)),
    )?;
    let oracle = reference.u.window_distance(&bundle.u)?;
    checks.push(Check::new("oracle_distance", oracle, tol.oracle));
    let gauge = gauge_consistency(&bundle)?;

    let series = Series {
        header: ["check", "residual", "tolerance", "pass"]
            .map(String::from)
            .to_vec(),
        rows: checks
            .iter()
            .map(|c| {
                vec![
                    c.name.clone(),
                    num(c.residual),
                    num(c.tolerance),
                    c.pass.to_string(),
                ]
            })
            .collect(),
    };
    Ok(Report {
        study: Study::Verify,
        results: json!({
            "t": t,
            "alpha_tilde": [bundle.alpha_tilde.re, bundle.alpha_tilde.im],
            "beta": bundle.beta_phase,
            "phi_k": bundle.phi_k_phase,
            "reference_steps": reference.steps,
            "reference_error_estimate": reference.error_estimate,
            "reference_flagged": reference.flagged,
            "gauge": gauge,
            "path_closed": path.is_closed(),
        }),
        checks,
        series,
    })
}

fn initial_state(cfg: &RunConfig, model: &ModelOperators) -> Result<StateVector, CliError> {
    Ok(match cfg.study_options.initial {
        InitialState::Basis { n_a, n_b } => StateVector::basis(model.trunc, n_a, n_b)?,
        InitialState::Coherent { re, im } => cyclotron_coherent_state(model, C64::new(re, im))?,
    })
}

fn time_grid(cfg: &RunConfig) -> Vec<f64> {
    let n = cfg.study_options.samples;
    let t = cfg.t_final();
    (0..n).map(|k| t * k as f64 / (n - 1) as f64).collect()
}

fn level_populations(psi: &StateVector) -> Vec<f64> {
    let t = psi.trunc();
    (0..t.interior(Mode::A))
        .map(|n| {
            (0..t.interior(Mode::B))
                .map(|m| psi.amplitude(n, m).norm_sqr())
                .sum()
        })
        .collect()
}

pub fn evolve(cfg: &RunConfig, model: &ModelOperators) -> Result<Report, CliError> {
    let psi0 = initial_state(cfg, model)?;
    let grid = time_grid(cfg);
    let states = grid
        .par_iter()
        .map(|&t| Ok(assemble(model, &cfg.path, t)?.u.apply(&psi0)?))
        .collect::<Result<Vec<_>, CliError>>()?;
    let levels = model.trunc.interior(Mode::A);
    let mut header: Vec<String> = ["t", "overlap_re", "overlap_im", "norm", "leakage"]
        .map(String::from)
        .to_vec();
    header.extend(level_columns("p", levels));
    let mut rows = Vec::with_capacity(grid.len());
    let mut norm_defect: f64 = 0.0;
    for (t, psi) in grid.iter().zip(&states) {
        let o = psi0.inner(psi);
        norm_defect = norm_defect.max((psi.norm() - 1.0).abs());
        let mut row = vec![
            num(*t),
            num(o.re),
            num(o.im),
            num(psi.norm()),
            num(psi.exterior_weight()),
        ];
        row.extend(level_populations(psi).into_iter().map(num));
        rows.push(row);
    }
    let t_end = *grid.last().expect("at least two samples");
    let last = states.last().expect("at least two samples");
    let free = dynamical_factor(model, t_end)?.apply(&psi0)?;
    let diff: f64 = last
        .amplitudes()
        .iter()
        .zip(free.amplitudes())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(Report {
        study: Study::Evolve,
        results: json!({
            "t_final": t_end,
            "final_populations": level_populations(last),
            "final_leakage": last.exterior_weight(),
            "distance_to_free_evolution": diff,
        }),
        checks: vec![Check::new("norm", norm_defect, cfg.tolerances.unitarity)],
        series: Series { header, rows },
    })
}

pub fn phase_loop(cfg: &RunConfig, model: &ModelOperators) -> Result<Report, CliError> {
    let tol = &cfg.tolerances;
    let reports = cfg
        .study_options
        .epsilons
        .par_iter()
        .map(|&e| geometric_phase_closed_loop(&cfg.path, model, e))
        .collect::<Result<Vec<_>, _>>()?;
    let mut sorted = reports.clone();
    sorted.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let mut checks = Vec::new();
    let mut flux: f64 = 0.0;
    let mut factor: f64 = 0.0;
    for r in &sorted {
        flux = flux.max((r.beta_geometric - r.beta_flux).abs());
        factor = factor.max(wrap_phase(r.beta_from_factor - r.beta_geometric).abs());
    }
    checks.push(Check::new("beta_vs_flux", flux, tol.beta));
    checks.push(Check::new("beta_vs_factor_phase", factor, tol.beta));
    let b0 = sorted[0].beta_geometric;
    let spread = sorted
        .iter()
        .map(|r| (r.beta_geometric - b0).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new("beta_epsilon_spread", spread, tol.beta_spread));
    let header = [
        "epsilon",
        "duration",
        "beta_geometric",
        "beta_flux",
        "beta_from_factor",
        "phi_k",
        "loop_area_d",
    ]
    .map(String::from)
    .to_vec();
    let rows = sorted
        .iter()
        .map(|r| {
            [
                r.epsilon,
                r.duration,
                r.beta_geometric,
                r.beta_flux,
                r.beta_from_factor,
                r.phi_k,
                r.loop_area_d,
            ]
            .map(num)
            .to_vec()
        })
        .collect();
    Ok(Report {
        study: Study::PhaseLoop,
        results: json!({ "beta": b0, "loops": sorted }),
        checks,
        series: Series { header, rows },
    })
}

/// (2n+1)/(2n₀+1) and n²/max(n₀², 1) next to the measured P_out(n)/P_out(n₀).
fn level_ratios(base: &[TransitionReport], other: &[TransitionReport]) -> Value {
    let n0 = base[0].n_initial as f64;
    let n = other[0].n_initial as f64;
    let measured: Vec<f64> = base
        .iter()
        .zip(other)
        .map(|(b, o)| o.total_out / b.total_out)
        .collect();
    json!({
        "n": other[0].n_initial,
        "measured": measured,
        "first_order_2n_plus_1": (2.0 * n + 1.0) / (2.0 * n0 + 1.0),
        "n_squared": n * n / (n0 * n0).max(1.0),
    })
}

pub fn sweep_epsilon(cfg: &RunConfig, model: &ModelOperators) -> Result<Report, CliError> {
    let opts = &cfg.study_options;
    let mut eps = opts.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut levels = vec![opts.n_initial];
    for n in &opts.compare_levels {
        if !levels.contains(n) {
            levels.push(*n);
        }
    }
    let sweeps = levels
        .iter()
        .map(|&n| transition_sweep(&cfg.path, model, n, &eps))
        .collect::<Result<Vec<_>, _>>()?;
    let mut checks = Vec::new();
    let mut bookkeeping: f64 = 0.0;
    for sweep in &sweeps {
        let n = sweep[0].n_initial;
        let slope = sweep[0].fitted_slope.unwrap_or(f64::NAN);
        checks.push(Check::new(
            format!("slope_n{n}"),
            (slope - 2.0).abs(),
            cfg.tolerances.slope,
        ));
        for r in sweep {
            bookkeeping = bookkeeping.max((r.survival + r.transitions() + r.leakage - 1.0).abs());
        }
    }
    checks.push(Check::new(
        "probability_bookkeeping",
        bookkeeping,
        cfg.tolerances.bookkeeping,
    ));
    let n_levels = model.trunc.interior(Mode::A);
    let mut header: Vec<String> = [
        "n_initial",
        "epsilon",
        "total_out",
        "survival",
        "leakage",
        "alpha_abs",
        "k_deviation",
    ]
    .map(String::from)
    .to_vec();
    header.extend(level_columns("p", n_levels));
    let mut rows = Vec::new();
    for sweep in &sweeps {
        for r in sweep {
            let mut row = vec![r.n_initial.to_string()];
            row.extend(
                [
                    r.epsilon,
                    r.total_out,
                    r.survival,
                    r.leakage,
                    r.alpha_abs,
                    r.k_deviation,
                ]
                .map(num),
            );
            row.extend((0..n_levels).map(|k| num(r.probabilities[&k])));
            rows.push(row);
        }
    }
    let mut slopes = BTreeMap::new();
    for sweep in &sweeps {
        slopes.insert(
            sweep[0].n_initial.to_string(),
            json!({ "total_out": sweep[0].fitted_slope, "k_deviation": sweep[0].k_slope }),
        );
    }
    let ratios: Vec<Value> = sweeps[1..]
        .iter()
        .map(|s| level_ratios(&sweeps[0], s))
        .collect();
    Ok(Report {
        study: Study::SweepEpsilon,
        results: json!({
            "epsilons": eps,
            "slopes": slopes,
            "level_ratios": ratios,
            "reports": sweeps,
        }),
        checks,
        series: Series { header, rows },
    })
}

pub fn track_center(cfg: &RunConfig, model: &ModelOperators) -> Result<Report, CliError> {
    let psi0 = initial_state(cfg, model)?;
    let grid = time_grid(cfg);
    let track = wavepacket_center_track(&cfg.path, model, &psi0, &grid)?;
    let start = center_of(model, &psi0, 0.0)?;
    let r0 = cfg.path.start();
    let mut rows = Vec::with_capacity(track.len());
    for s in &track {
        let r = cfg.path.evaluate(s.t)?;
        rows.push(
            [
                s.t,
                s.x1,
                s.x2,
                start.x1 + 0.5 * (r[0] - r0[0]),
                start.x2 + 0.5 * (r[1] - r0[1]),
            ]
            .map(num)
            .to_vec(),
        );
    }
    let t_end = grid[grid.len() - 1];
    let end_r = cfg.path.evaluate(t_end)?;
    let drift = drift_velocity(&track)?;
    Ok(Report {
        study: Study::TrackCenter,
        results: json!({
            "mean_velocity": drift,
            "half_drive_velocity": [0.5 * (end_r[0] - r0[0]) / t_end, 0.5 * (end_r[1] - r0[1]) / t_end],
            "final_center": [track[track.len() - 1].x1, track[track.len() - 1].x2],
        }),
        checks: Vec::new(),
        series: Series {
            header: ["t", "x1", "x2", "half_shift_x1", "half_shift_x2"]
                .map(String::from)
                .to_vec(),
            rows,
        },
    })
}
