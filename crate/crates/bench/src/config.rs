//! Scenario configuration: a flat `key = value` text format with sectioned
//! noise-mixture blocks. The grammar is documented in the repository README.

use std::fmt;

use meef_core::models::{MixtureComponent, NoiseCase};
use meef_core::{MixtureNoise, Variant};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line number, absent for whole-file problems.
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    Ungm,
    Vehicle,
}

impl ModelId {
    pub fn state_dim(self) -> usize {
        match self {
            ModelId::Ungm => 1,
            ModelId::Vehicle => 4,
        }
    }

    pub fn meas_dim(self) -> usize {
        self.state_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelId,
    pub process_noise: MixtureNoise,
    pub measurement_noise: MixtureNoise,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub known_noise: bool,
    pub x0: Vec<f64>,
    pub x_hat0: Vec<f64>,
    /// Diagonal of `P₀`.
    pub p0: Vec<f64>,
    /// `Q̂₀ = q_multiplier · Q` when the noise is unknown.
    pub q_multiplier: f64,
    /// `R̂₁ = r_multiplier · R` when the noise is unknown.
    pub r_multiplier: f64,
    pub estimators: Vec<Variant>,
    pub mcc_sigma: Option<f64>,
    pub mee_sigma: Option<f64>,
    /// Fixed `(τ, σ1, σ2)` for the `meef` estimator.
    pub meef_params: Option<(f64, f64, f64)>,
    /// Candidate widths for training the baselines.
    pub width_grid: Vec<f64>,
    pub training_runs: usize,
    /// Number of Monte-Carlo runs replayed serially for timing.
    pub timing_runs: usize,
}

pub const DEFAULT_RUNS: usize = 100;
pub const DEFAULT_SEED: u64 = 2023;
pub const DEFAULT_ESTIMATORS: [Variant; 5] = [
    Variant::Ukf,
    Variant::Aukf,
    Variant::Mcc,
    Variant::Mee,
    Variant::AMeef,
];

impl ScenarioConfig {
    /// Defaults for a model; noise specs and `name` still need filling in.
    pub fn defaults(model: ModelId) -> Self {
        let gaussian = |v| MixtureNoise::gaussian(v).expect("positive variance");
        let (horizon, x0, x_hat0, p0, q) = match model {
            ModelId::Ungm => (100, vec![0.0], vec![1.0], vec![10.0], 1e-7),
            ModelId::Vehicle => (
                500,
                vec![0.0, 0.0, 5.0, 10.0],
                vec![1.0, 1.0, 4.0, 8.0],
                vec![10.0, 10.0, 50.0, 100.0],
                0.001,
            ),
        };
        ScenarioConfig {
            name: String::from("scenario"),
            model,
            process_noise: gaussian(q),
            measurement_noise: gaussian(match model {
                ModelId::Ungm => 0.01,
                ModelId::Vehicle => 10.0,
            }),
            horizon,
            runs: DEFAULT_RUNS,
            seed: DEFAULT_SEED,
            known_noise: true,
            x0,
            x_hat0,
            p0,
            q_multiplier: 0.01,
            r_multiplier: 10.0,
            estimators: DEFAULT_ESTIMATORS.to_vec(),
            mcc_sigma: None,
            mee_sigma: None,
            meef_params: None,
            width_grid: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            training_runs: 10,
            timing_runs: 3,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.model.state_dim();
        let err = |m: String| Err(ConfigError::global(m));
        if self.runs == 0 {
            return err("runs must be at least 1".into());
        }
        if self.horizon == 0 {
            return err("horizon must be at least 1".into());
        }
        if !(self.q_multiplier > 0.0 && self.r_multiplier > 0.0) {
            return err("noise multipliers must be positive".into());
        }
        for (key, v) in [("x0", &self.x0), ("x_hat0", &self.x_hat0), ("p0", &self.p0)] {
            if v.len() != n {
                return err(format!("{key} needs {n} entries, got {}", v.len()));
            }
        }
        if self.p0.iter().any(|p| !(*p > 0.0)) {
            return err("p0 entries must be positive".into());
        }
        if self.width_grid.is_empty() || self.width_grid.iter().any(|w| !(*w > 0.0)) {
            return err("width_grid must hold positive widths".into());
        }
        if self.training_runs == 0 {
            return err("training_runs must be at least 1".into());
        }
        Ok(())
    }
}

fn parse_f64(line: usize, s: &str) -> Result<f64, ConfigError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| ConfigError::at(line, format!("'{}' is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(ConfigError::at(line, format!("'{}' is not finite", s.trim())));
    }
    Ok(v)
}

fn parse_list(line: usize, s: &str) -> Result<Vec<f64>, ConfigError> {
    s.split(',').map(|t| parse_f64(line, t)).collect()
}

fn parse_count(line: usize, s: &str) -> Result<usize, ConfigError> {
    s.trim()
        .parse()
        .map_err(|_| ConfigError::at(line, format!("'{}' is not a non-negative integer", s.trim())))
}

fn parse_bool(line: usize, s: &str) -> Result<bool, ConfigError> {
    match s.trim() {
        "true" | "yes" => Ok(true),
        "false" | "no" => Ok(false),
        other => Err(ConfigError::at(line, format!("'{other}' is not a boolean"))),
    }
}

#[derive(Debug, Default)]
struct NoiseBlock {
    case: Option<NoiseCase>,
    components: Vec<MixtureComponent>,
    header_line: usize,
}

impl NoiseBlock {
    fn build(self) -> Result<Option<MixtureNoise>, ConfigError> {
        match (self.case, self.components.is_empty()) {
            (None, true) => Err(ConfigError::at(self.header_line, "empty noise section")),
            (Some(_), false) => Err(ConfigError::at(
                self.header_line,
                "noise section mixes 'case' with explicit components",
            )),
            (Some(c), true) => Ok(Some(c.mixture())),
            (None, false) => MixtureNoise::new(self.components)
                .map(Some)
                .map_err(|e| ConfigError::at(self.header_line, e.to_string())),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Scenario,
    Process,
    Measurement,
}

/// Parses a scenario file. Unset keys take the model's defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    let mut blocks: [Option<NoiseBlock>; 2] = [None, None];
    let mut section = Section::Scenario;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(lineno, "unterminated section header"))?
                .trim();
            section = match name {
                "scenario" => Section::Scenario,
                "process_noise" => Section::Process,
                "measurement_noise" => Section::Measurement,
                other => return Err(ConfigError::at(lineno, format!("unknown section '{other}'"))),
            };
            if section != Section::Scenario {
                let slot = &mut blocks[(section == Section::Measurement) as usize];
                if slot.is_some() {
                    return Err(ConfigError::at(lineno, format!("duplicate section '{name}'")));
                }
                *slot = Some(NoiseBlock {
                    header_line: lineno,
                    ..NoiseBlock::default()
                });
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::at(lineno, "expected 'key = value'"))?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(ConfigError::at(lineno, format!("missing value for '{key}'")));
        }
        match section {
            Section::Scenario => {
                if entries.iter().any(|(_, k, _)| k == key) {
                    return Err(ConfigError::at(lineno, format!("duplicate key '{key}'")));
                }
                entries.push((lineno, key.to_string(), value.to_string()));
            }
            Section::Process | Section::Measurement => {
                let block = blocks[(section == Section::Measurement) as usize]
                    .as_mut()
                    .expect("section opened");
                match key {
                    "case" => {
                        if block.case.is_some() {
                            return Err(ConfigError::at(lineno, "duplicate 'case'"));
                        }
                        block.case = Some(NoiseCase::from_letter(value).ok_or_else(|| {
                            ConfigError::at(lineno, format!("unknown noise case '{value}'"))
                        })?);
                    }
                    "variance" => block.components.push(MixtureComponent {
                        weight: 1.0,
                        mean: 0.0,
                        variance: parse_f64(lineno, value)?,
                    }),
                    "component" => {
                        let v = parse_list(lineno, value)?;
                        if v.len() != 3 {
                            return Err(ConfigError::at(
                                lineno,
                                "component needs 'weight, mean, variance'",
                            ));
                        }
                        block.components.push(MixtureComponent {
                            weight: v[0],
                            mean: v[1],
                            variance: v[2],
                        });
                    }
                    other => {
                        return Err(ConfigError::at(lineno, format!("unknown noise key '{other}'")))
                    }
                }
            }
        }
    }

    let model_entry = entries
        .iter()
        .find(|(_, k, _)| k == "model")
        .ok_or_else(|| ConfigError::global("missing required key 'model'"))?;
    let model = match model_entry.2.as_str() {
        "ungm" => ModelId::Ungm,
        "vehicle" => ModelId::Vehicle,
        other => return Err(ConfigError::at(model_entry.0, format!("unknown model '{other}'"))),
    };
    let mut cfg = ScenarioConfig::defaults(model);

    for (line, key, value) in &entries {
        let line = *line;
        match key.as_str() {
            "model" => {}
            "name" => cfg.name = value.clone(),
            "horizon" => cfg.horizon = parse_count(line, value)?,
            "runs" => cfg.runs = parse_count(line, value)?,
            "seed" => {
                cfg.seed = value
                    .parse()
                    .map_err(|_| ConfigError::at(line, format!("'{value}' is not a valid seed")))?
            }
            "known_noise" => cfg.known_noise = parse_bool(line, value)?,
            "x0" => cfg.x0 = parse_list(line, value)?,
            "x_hat0" => cfg.x_hat0 = parse_list(line, value)?,
            "p0" => cfg.p0 = parse_list(line, value)?,
            "q_multiplier" => cfg.q_multiplier = parse_f64(line, value)?,
            "r_multiplier" => cfg.r_multiplier = parse_f64(line, value)?,
            "estimators" if value == "none" => cfg.estimators.clear(),
            "estimators" => {
                cfg.estimators = value
                    .split(',')
                    .map(|t| t.parse::<Variant>().map_err(|e| ConfigError::at(line, e.to_string())))
                    .collect::<Result<_, _>>()?;
            }
            "mcc_sigma" => cfg.mcc_sigma = Some(parse_f64(line, value)?),
            "mee_sigma" => cfg.mee_sigma = Some(parse_f64(line, value)?),
            "meef" => {
                let v = parse_list(line, value)?;
                if v.len() != 3 {
                    return Err(ConfigError::at(line, "meef needs 'tau, sigma1, sigma2'"));
                }
                cfg.meef_params = Some((v[0], v[1], v[2]));
            }
            "width_grid" => cfg.width_grid = parse_list(line, value)?,
            "training_runs" => cfg.training_runs = parse_count(line, value)?,
            "timing_runs" => cfg.timing_runs = parse_count(line, value)?,
            other => return Err(ConfigError::at(line, format!("unknown key '{other}'"))),
        }
    }

    let [process, measurement] = blocks;
    if let Some(b) = process {
        cfg.process_noise = b.build()?.expect("nonempty");
    }
    if let Some(b) = measurement {
        cfg.measurement_noise = b.build()?.expect("nonempty");
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Names of the built-in scenarios, in listing order.
pub fn builtin_names() -> Vec<String> {
    let mut names = vec!["table1".to_string(), "table1-q1e-6".to_string(), "table2".to_string()];
    for case in NoiseCase::ALL {
        for mode in ["known", "unknown"] {
            names.push(format!("vehicle-{}-{mode}", case.letter()));
        }
    }
    names
}

/// Config text of a built-in scenario.
pub fn builtin_text(name: &str) -> Option<String> {
    let ungm = |name: &str, q: &str, r: &str| {
        format!(
            "name = {name}\nmodel = ungm\nhorizon = 100\nx0 = 0\nx_hat0 = 1\np0 = 10\n\
             \n[process_noise]\nvariance = {q}\n\n[measurement_noise]\nvariance = {r}\n"
        )
    };
    match name {
        "table1" => Some(ungm(name, "1e-7", "0.01")),
        "table1-q1e-6" => Some(ungm(name, "1e-6", "0.01")),
        "table2" => Some(ungm(name, "1", "100")),
        _ => {
            let rest = name.strip_prefix("vehicle-")?;
            let (case, mode) = rest.split_once('-')?;
            let case = NoiseCase::from_letter(case)?;
            let known = match mode {
                "known" => true,
                "unknown" => false,
                _ => return None,
            };
            Some(format!(
                "name = {name}\nmodel = vehicle\nhorizon = 500\nknown_noise = {known}\n\
                 x0 = 0, 0, 5, 10\nx_hat0 = 1, 1, 4, 8\np0 = 10, 10, 50, 100\n\
                 q_multiplier = 0.01\nr_multiplier = 10\n\
                 \n[process_noise]\nvariance = 0.001\n\n[measurement_noise]\ncase = {}\n",
                case.letter()
            ))
        }
    }
}

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    builtin_text(name).map(|t| parse_config(&t).expect("built-in scenarios parse"))
}
