use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::baselines::{BaselineKind, EtaGuessPolicy};
use crate::error::{Error, Result};
use crate::sim::{Fading, FadingMode, TransmitPolicy};
use crate::solver::{MuPolicy, SolverConfig};

/// One of the five compared schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Proposed,
    Baseline(BaselineKind),
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Proposed,
        Scheme::Baseline(BaselineKind::ProposedKnownPower),
        Scheme::Baseline(BaselineKind::ProposedBaseline),
        Scheme::Baseline(BaselineKind::ReferenceKnownPower),
        Scheme::Baseline(BaselineKind::ReferenceUnknownPower),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Baseline(k) => k.name(),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "proposed" => Ok(Scheme::Proposed),
            other => other
                .parse::<BaselineKind>()
                .map(Scheme::Baseline)
                .map_err(|_| format!("unknown scheme `{other}`")),
        }
    }
}

/// How the sparsity target follows the number of slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KRule {
    /// `K = M`.
    EqualM,
    /// `K = round(sum psi)`.
    Expected,
    Fixed(usize),
}

impl FromStr for KRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "M" | "m" | "equal_m" => Ok(KRule::EqualM),
            "expected" => Ok(KRule::Expected),
            other => other
                .parse()
                .map(KRule::Fixed)
                .map_err(|_| format!("k_rule must be `M`, `expected` or a count, got `{other}`")),
        }
    }
}

impl fmt::Display for KRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KRule::EqualM => f.write_str("M"),
            KRule::Expected => f.write_str("expected"),
            KRule::Fixed(k) => write!(f, "{k}"),
        }
    }
}

/// Upper bound `eta_max` handed to the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerBound {
    /// `sqrt(P_max)` for every sensor.
    Uniform,
    /// `sqrt(min(P_max, rho |h_n|^2 P_e))`: the harvested budget, computable
    /// at the fusion center from the channel it already knows.
    HarvestBudget,
}

impl FromStr for PowerBound {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "uniform" => Ok(PowerBound::Uniform),
            "harvest_budget" => Ok(PowerBound::HarvestBudget),
            other => Err(format!("unknown power bound `{other}`")),
        }
    }
}

/// Whether the signature matrix is shared by all frames of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiPolicy {
    Fixed,
    PerFrame,
}

impl FromStr for PhiPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "fixed" => Ok(PhiPolicy::Fixed),
            "per_frame" => Ok(PhiPolicy::PerFrame),
            other => Err(format!("unknown signature policy `{other}`")),
        }
    }
}

/// How the two activation probabilities are spread over the sensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    /// Half of the sensors at `psi_high`, the rest at `psi_low`.
    Halves,
    /// The high group is sized per `M` so that the expected number of
    /// active sensors is as close as possible to `K`.
    MatchK,
}

impl FromStr for Activity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "halves" => Ok(Self::Halves),
            "match_k" => Ok(Self::MatchK),
            other => Err(format!("unknown activity rule `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_sensors: usize,
    pub area_side_m: f64,
    pub knn_k: usize,
    pub sigma2: f64,
    pub delta: f64,
    pub m_values: Vec<usize>,
    pub k_rule: KRule,
    pub n_frames: usize,
    pub seed: u64,
    pub noise_power_w: f64,
    pub p_e_w: f64,
    pub p_max_w: f64,
    pub t_e: f64,
    pub rho: f64,
    pub psi_high: f64,
    pub psi_low: f64,
    pub activity: Activity,
    pub fading_mode: FadingMode,
    pub fading: Fading,
    pub transmit_policy: TransmitPolicy,
    pub power_bound: PowerBound,
    pub phi_policy: PhiPolicy,
    pub eta_guess: EtaGuessPolicy,
    /// Reference-scheme slack as a multiple of the noise amplitude.
    pub cs_slack_factor: f64,
    pub schemes: Vec<Scheme>,
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_sensors: 30,
            area_side_m: 10.0,
            knn_k: 8,
            sigma2: 5.0,
            delta: 0.01,
            m_values: vec![5, 10, 15, 20, 25],
            k_rule: KRule::EqualM,
            n_frames: 200,
            seed: 1,
            noise_power_w: 1e-13,
            p_e_w: 0.1,
            p_max_w: 0.1,
            t_e: 1.0,
            rho: 0.9,
            psi_high: 0.9,
            psi_low: 0.1,
            activity: Activity::MatchK,
            fading_mode: FadingMode::Real,
            fading: Fading::Rayleigh,
            transmit_policy: TransmitPolicy::FullBudget,
            power_bound: PowerBound::HarvestBudget,
            phi_policy: PhiPolicy::Fixed,
            eta_guess: EtaGuessPolicy::EtaMax,
            cs_slack_factor: 3.0,
            schemes: Scheme::ALL.to_vec(),
            solver: SolverConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn scalar_text(key: &str, value: &toml::Value) -> Result<String> {
    use toml::Value;
    Ok(match value {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::Array(_) | Value::Table(_) => Err(Error::Config(format!("`{key}`: nested values are not allowed"))),
                v => scalar_text(key, v),
            })
            .collect::<Result<Vec<_>>>()?
            .join(","),
        _ => return Err(Error::Config(format!("`{key}`: expected a scalar or a list"))),
    })
}

impl ExperimentConfig {
    /// Sets one `key = value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "n_sensors" => self.n_sensors = parse(key, v)?,
            "area_side_m" => self.area_side_m = parse(key, v)?,
            "knn_k" => self.knn_k = parse(key, v)?,
            "sigma2" => self.sigma2 = parse(key, v)?,
            "delta" => self.delta = parse(key, v)?,
            "m_values" => self.m_values = parse_list(key, v)?,
            "k_rule" => self.k_rule = parse(key, v)?,
            "n_frames" => self.n_frames = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "noise_power_w" => self.noise_power_w = parse(key, v)?,
            "p_e_w" => self.p_e_w = parse(key, v)?,
            "p_max_w" => self.p_max_w = parse(key, v)?,
            "t_e" => self.t_e = parse(key, v)?,
            "rho" => self.rho = parse(key, v)?,
            "psi_high" => self.psi_high = parse(key, v)?,
            "psi_low" => self.psi_low = parse(key, v)?,
            "activity" => self.activity = parse(key, v)?,
            "fading_mode" => self.fading_mode = parse(key, v)?,
            "fading" => {
                self.fading = match v {
                    "rayleigh" => Fading::Rayleigh,
                    "none" => Fading::None,
                    other => return Err(Error::Config(format!("`fading`: unknown value `{other}`"))),
                }
            }
            "transmit_policy" => self.transmit_policy = parse(key, v)?,
            "power_bound" => self.power_bound = parse(key, v)?,
            "phi_policy" => self.phi_policy = parse(key, v)?,
            "eta_guess" => self.eta_guess = parse(key, v)?,
            "cs_slack_factor" => self.cs_slack_factor = parse(key, v)?,
            "schemes" => self.schemes = parse_list(key, v)?,
            "mu" => {
                self.solver.mu = match v.split_once(':') {
                    Some(("relative", f)) => MuPolicy::Relative(parse(key, f)?),
                    Some(("absolute", f)) => MuPolicy::Absolute(parse(key, f)?),
                    _ => {
                        return Err(Error::Config(format!(
                            "`mu`: expected `relative:<f>` or `absolute:<f>`, got `{v}`"
                        )))
                    }
                }
            }
            "gamma" => self.solver.gamma = parse(key, v)?,
            "max_outer_iters" => self.solver.max_outer_iters = parse(key, v)?,
            "x_convergence_tol" => self.solver.x_convergence_tol = parse(key, v)?,
            "max_pivots" => self.solver.max_pivots = parse(key, v)?,
            "epsilon_floor" => self.solver.epsilon_floor = parse(key, v)?,
            "epsilon_widenings" => self.solver.epsilon_widenings = parse(key, v)?,
            "epsilon_widen_start" => self.solver.epsilon_widen_start = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a TOML document of top-level `key = value` entries on top of
    /// `self`. Lists may be given as arrays or as comma-separated strings.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        for (key, value) in &table {
            self.set(key, &scalar_text(key, value)?)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Number of sensors at `psi_high` in the cell with `m` slots.
    pub fn high_count(&self, m: usize) -> usize {
        let n = self.n_sensors;
        let spread = self.psi_high - self.psi_low;
        match self.activity {
            Activity::MatchK if spread > 0.0 => {
                let k = self.k_for(m) as f64;
                ((k - n as f64 * self.psi_low) / spread).round().clamp(0.0, n as f64) as usize
            }
            _ => n - n / 2,
        }
    }

    pub fn k_for(&self, m: usize) -> usize {
        match self.k_rule {
            KRule::EqualM => m,
            KRule::Fixed(k) => k,
            KRule::Expected => {
                let half = self.n_sensors / 2;
                let sum = (self.n_sensors - half) as f64 * self.psi_high + half as f64 * self.psi_low;
                (sum.round() as usize).max(1)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_sensors == 0 || self.knn_k == 0 || self.n_frames == 0 {
            return fail("n_sensors, knn_k and n_frames must be at least 1".into());
        }
        if self.knn_k >= self.n_sensors {
            return fail(format!("knn_k = {} needs more than {} sensors", self.knn_k, self.n_sensors));
        }
        if self.m_values.is_empty() || self.m_values.contains(&0) {
            return fail("m_values must be a non-empty list of positive counts".into());
        }
        if self.schemes.is_empty() {
            return fail("at least one scheme is required".into());
        }
        for (name, v) in [
            ("area_side_m", self.area_side_m),
            ("sigma2", self.sigma2),
            ("delta", self.delta),
            ("noise_power_w", self.noise_power_w),
            ("p_e_w", self.p_e_w),
            ("p_max_w", self.p_max_w),
            ("t_e", self.t_e),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("rho", self.rho), ("psi_high", self.psi_high), ("psi_low", self.psi_low)] {
            if !(v > 0.0 && v <= 1.0) {
                return fail(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        if !(self.cs_slack_factor.is_finite() && self.cs_slack_factor >= 0.0) {
            return fail("cs_slack_factor must be non-negative".into());
        }
        for &m in &self.m_values {
            let k = self.k_for(m);
            if k == 0 || k > self.n_sensors {
                return fail(format!("K = {k} for M = {m} is outside 1..={}", self.n_sensors));
            }
        }
        self.solver
            .validate(self.n_sensors)
            .map_err(|e| Error::Config(e.to_string()))
    }
}
