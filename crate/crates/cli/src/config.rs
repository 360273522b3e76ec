//! Run configuration: a JSON file whose fields may be overridden by flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use nalgebra::DVector;
use relrobust::market::{estimate_params, FeasibleSet, FeasibleSetConfig, MarketParams, ReturnsSample};
use relrobust::mvo::MvoVariant;
use relrobust::scenarios::Adversary;
use relrobust::uncertainty::UncertaintySet;
use relrobust::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Classical,
    Absolute,
    Relative,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Classical => "classical",
            Mode::Absolute => "absolute",
            Mode::Relative => "relative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    MinVariance,
    MaxReturn,
    RiskAdjusted,
    MaxSharpe,
}

/// Either a path to a JSON file or the value inline.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub returns: Option<PathBuf>,
    #[serde(default)]
    pub shrinkage: f64,
    pub params: Option<Source<MarketParams>>,
    pub feasible_set: Option<Source<FeasibleSetConfig>>,
    pub uncertainty: Option<Source<UncertaintySet>>,
    pub mode: Option<Mode>,
    pub variant: Option<VariantName>,
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub sigma2: Option<f64>,
    pub rf: Option<f64>,
    pub adversary: Option<Adversary>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub rho_grid: Option<Vec<f64>>,
    pub portfolio: Option<Vec<f64>>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base: PathBuf,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: Some(e.line() as u64),
        message: format!("{}: {e}", path.display()),
    })
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let mut cfg: RunConfig = read_json(path)?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn load_source<T: DeserializeOwned + Clone>(&self, s: &Source<T>) -> Result<T> {
        match s {
            Source::Path(p) => read_json(&self.resolve(p)),
            Source::Inline(v) => Ok(v.clone()),
        }
    }

    pub fn uncertainty(&self) -> Result<Option<UncertaintySet>> {
        let u = self.uncertainty.as_ref().map(|s| self.load_source(s)).transpose()?;
        if let Some(u) = &u {
            u.validate()?;
        }
        Ok(u)
    }

    /// Nominal parameters: explicit, estimated from returns, or the centre of `U`.
    pub fn params(&self, u: Option<&UncertaintySet>) -> Result<MarketParams> {
        if let Some(s) = &self.params {
            return self.load_source(s);
        }
        if let Some(path) = &self.returns {
            let sample = ReturnsSample::from_csv_path(self.resolve(path))?;
            return estimate_params(&sample, self.shrinkage);
        }
        u.map(UncertaintySet::centroid)
            .ok_or_else(|| Error::InvalidInput("config needs params, returns or uncertainty".into()))
    }

    /// The configured feasible set, or the long-only simplex.
    pub fn feasible_set(&self, n: usize) -> Result<FeasibleSet> {
        match &self.feasible_set {
            Some(s) => {
                let x = self.load_source(s)?.build()?;
                if x.n() != n {
                    return Err(Error::InvalidInput(format!(
                        "feasible set has {} assets, market has {n}",
                        x.n()
                    )));
                }
                Ok(x)
            }
            None => Ok(FeasibleSet::simplex(n)),
        }
    }

    pub fn variant(&self) -> Result<MvoVariant> {
        let name = self
            .variant
            .ok_or_else(|| Error::InvalidInput("no model variant given".into()))?;
        let need = |v: Option<f64>, flag: &str| {
            v.ok_or_else(|| Error::InvalidInput(format!("variant {name:?} needs --{flag}")))
        };
        let v = match name {
            VariantName::MinVariance => MvoVariant::MinVariance(need(self.rho, "rho")?),
            VariantName::MaxReturn => MvoVariant::MaxReturn(need(self.sigma2, "sigma2")?),
            VariantName::RiskAdjusted => MvoVariant::RiskAdjusted(need(self.lambda, "lambda")?),
            VariantName::MaxSharpe => MvoVariant::MaxSharpe(self.rf.unwrap_or(0.0)),
        };
        v.validate()?;
        Ok(v)
    }

    pub fn portfolio(&self) -> Option<DVector<f64>> {
        self.portfolio.as_ref().map(|p| DVector::from_vec(p.clone()))
    }
}
