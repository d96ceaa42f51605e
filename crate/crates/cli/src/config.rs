use std::path::{Path, PathBuf};

use magtrans_core::drive_path::DrivePath;
use magtrans_core::fock_algebra::{Mode, Truncation};
use magtrans_core::landau_model::PhysicalParams;
use magtrans_core::reference_integrator::IntegratorConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Verify,
    Evolve,
    PhaseLoop,
    SweepEpsilon,
    TrackCenter,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Verify => "verify",
            Study::Evolve => "evolve",
            Study::PhaseLoop => "phase-loop",
            Study::SweepEpsilon => "sweep-epsilon",
            Study::TrackCenter => "track-center",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Units {
    #[default]
    Natural,
    Explicit(PhysicalParams),
}

impl Units {
    pub fn params(&self) -> PhysicalParams {
        match self {
            Units::Natural => PhysicalParams::natural(),
            Units::Explicit(p) => *p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    #[serde(default = "default_order")]
    pub order: u8,
    /// Defaults to the full drive duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// Richardson error estimate, flagged above this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub richardson_tolerance: Option<f64>,
    /// Extra levels per mode for the reference run, so that the comparison
    /// window stays clear of the reference's own cutoff.
    #[serde(default = "default_padding")]
    pub padding: usize,
}

fn default_order() -> u8 {
    4
}

fn default_padding() -> usize {
    24
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            order: 4,
            t_final: None,
            richardson_tolerance: None,
            padding: default_padding(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// |n_a, n_b⟩
    Basis { n_a: usize, n_b: usize },
    /// Cyclotron coherent state of amplitude z times the guiding-center
    /// ground state.
    Coherent { re: f64, im: f64 },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Basis { n_a: 0, n_b: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub n_initial: usize,
    /// Further initial levels swept alongside `n_initial`.
    pub compare_levels: Vec<usize>,
    pub epsilons: Vec<f64>,
    /// Number of time samples for evolve and track-center.
    pub samples: usize,
    pub initial: InitialState,
    /// Worker threads for sweeps; 0 picks the machine's parallelism.
    pub workers: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            n_initial: 0,
            compare_levels: Vec::new(),
            epsilons: vec![0.1, 0.05, 0.025, 0.0125],
            samples: 101,
            initial: InitialState::default(),
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub commutator: f64,
    pub spectrum: f64,
    pub factor_order: f64,
    pub unitarity: f64,
    pub heisenberg: f64,
    pub displacement: f64,
    pub oracle: f64,
    pub beta: f64,
    /// Spread of β across ε for one geometric loop.
    pub beta_spread: f64,
    /// Allowed |slope − 2| of the transition-probability fit.
    pub slope: f64,
    /// |survival + transitions + leakage − 1|
    pub bookkeeping: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            commutator: 1e-10,
            spectrum: 1e-10,
            factor_order: 1e-8,
            unitarity: 1e-10,
            heisenberg: 1e-7,
            displacement: 1e-8,
            oracle: 1e-6,
            beta: 1e-6,
            beta_spread: 1e-8,
            slope: 0.1,
            bookkeeping: 1e-8,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 11] {
        [
            ("commutator", self.commutator),
            ("spectrum", self.spectrum),
            ("factor_order", self.factor_order),
            ("unitarity", self.unitarity),
            ("heisenberg", self.heisenberg),
            ("displacement", self.displacement),
            ("oracle", self.oracle),
            ("beta", self.beta),
            ("beta_spread", self.beta_spread),
            ("slope", self.slope),
            ("bookkeeping", self.bookkeeping),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("runs"),
            formats: vec![Format::Json, Format::Csv],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<Study>,
    #[serde(default)]
    pub units: Units,
    pub truncation: Truncation,
    pub path: DrivePath,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub study_options: StudySection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (name, v) in self.tolerances.entries() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!(
                    "tolerance {name} must be positive, got {v}"
                )));
            }
        }
        let it = &self.integrator;
        if let Some(tol) = it.richardson_tolerance {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(CliError::Config(
                    "richardson_tolerance must be positive".into(),
                ));
            }
        }
        let t_final = self.t_final();
        if t_final > self.path.duration() * (1.0 + 1e-12) {
            return Err(CliError::Config(format!(
                "t_final {t_final} exceeds the path duration {}",
                self.path.duration()
            )));
        }
        IntegratorConfig::new(it.dt, it.order, t_final)?;
        let interior = self.truncation.interior(Mode::A);
        for n in std::iter::once(self.study_options.n_initial)
            .chain(self.study_options.compare_levels.iter().copied())
        {
            if n >= interior {
                return Err(CliError::Config(format!(
                    "level {n} is outside the interior window of {interior} levels"
                )));
            }
        }
        if let InitialState::Basis { n_a, n_b } = self.study_options.initial {
            if n_a >= interior || n_b >= self.truncation.interior(Mode::B) {
                return Err(CliError::Config(
                    "initial basis state outside the interior".into(),
                ));
            }
        }
        if self
            .study_options
            .epsilons
            .iter()
            .any(|e| !(*e > 0.0 && e.is_finite()))
        {
            return Err(CliError::Config("epsilons must be positive".into()));
        }
        if self.study_options.samples < 2 {
            return Err(CliError::Config("samples must be at least 2".into()));
        }
        Truncation::new(
            self.truncation.na() + it.padding,
            self.truncation.nb() + it.padding,
            self.truncation.buffer(),
        )?;
        Ok(())
    }

    pub fn t_final(&self) -> f64 {
        self.integrator
            .t_final
            .unwrap_or_else(|| self.path.duration())
    }

    pub fn integrator_config(&self) -> Result<IntegratorConfig, CliError> {
        let it = &self.integrator;
        let mut cfg = IntegratorConfig::new(it.dt, it.order, self.t_final())?;
        if let Some(tol) = it.richardson_tolerance {
            cfg = cfg.with_richardson(Some(tol));
        }
        Ok(cfg)
    }

    /// Hex SHA-256 prefix of the canonical TOML form; excludes the output
    /// section so that the same run lands in the same place under any root.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self, out: Option<&Path>) -> PathBuf {
        out.unwrap_or(&self.output.directory).join(self.hash())
    }
}

impl From<magtrans_core::Error> for CliError {
    fn from(e: magtrans_core::Error) -> Self {
        use magtrans_core::Error as E;
        match e {
            E::Config(_) | E::Contract(_) | E::Domain { .. } => CliError::Config(e.to_string()),
            E::Quadrature { .. } | E::Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

/// `a.b.c=value`, where value is any TOML value and falls back to a bare
/// string.
fn apply_override(table: &mut toml::Table, entry: &str) -> Result<(), CliError> {
    let (key, raw) = entry
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {entry:?} is not key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!(
            "override key {key:?} is malformed"
        )));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("override key {key:?} crosses a non-table value"))
        })?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
