//! Run configuration: defaults, a flat TOML file and command-line overrides.
//!
//! Layers apply in order defaults, file, flags; a later layer wins.

use std::path::Path;

use obayes_core::discrimination::{Criterion, DEFAULT_MAX_DESIGNS};
use obayes_core::factorial::InteractionOrder;
use obayes_core::posterior::ModelSpacePrior;
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Report file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(CliError::Config(format!("format must be csv or json, got {other:?}"))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

/// Parses `beta:a,b` or `pi:v`.
pub fn parse_prior(s: &str) -> Result<ModelSpacePrior> {
    let bad = || CliError::Config(format!("prior must be beta:a,b or pi:v, got {s:?}"));
    let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
    let prior = match kind.trim().to_ascii_lowercase().as_str() {
        "beta" => {
            let (a, b) = rest.split_once(',').ok_or_else(bad)?;
            ModelSpacePrior::BetaBinomial { a: num(a)?, b: num(b)? }
        }
        "pi" => ModelSpacePrior::FixedPi(num(rest)?),
        _ => return Err(bad()),
    };
    prior.validate()?;
    Ok(prior)
}

pub fn parse_criterion(s: &str) -> Result<Criterion> {
    match s.trim().to_ascii_lowercase().as_str() {
        "omd" => Ok(Criterion::Omd),
        "cmd" => Ok(Criterion::Cmd),
        other => Err(CliError::Config(format!("criterion must be omd or cmd, got {other:?}"))),
    }
}

/// One layer of optional settings, as read from a file or from flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub order: Option<usize>,
    pub prior: Option<String>,
    pub criterion: Option<String>,
    pub gamma: Option<f64>,
    pub pi: Option<f64>,
    pub n_star: Option<usize>,
    pub top_k: Option<usize>,
    pub prob_floor: Option<f64>,
    pub block: Option<bool>,
    pub seed: Option<u64>,
    pub format: Option<String>,
    pub exchange: Option<bool>,
    pub starts: Option<usize>,
    pub max_designs: Option<u64>,
}

impl Overrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| CliError::input(path, e.to_string()))
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub order: InteractionOrder,
    /// Explicit model-space prior; `None` picks the criterion's default.
    pub prior: Option<ModelSpacePrior>,
    pub criterion: Criterion,
    /// Conventional prior scale of the model terms.
    pub gamma: f64,
    /// Conventional factor activity probability.
    pub pi: f64,
    pub n_star: usize,
    pub top_k: usize,
    pub prob_floor: f64,
    pub with_block: bool,
    pub seed: u64,
    pub format: Format,
    pub exchange: bool,
    /// Random starts of the exchange search.
    pub starts: usize,
    pub max_designs: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            order: InteractionOrder::Two,
            prior: None,
            criterion: Criterion::Omd,
            gamma: 2.0,
            pi: 0.25,
            n_star: 4,
            top_k: 5,
            prob_floor: 0.0,
            with_block: false,
            seed: 7,
            format: Format::Csv,
            exchange: false,
            starts: 20,
            max_designs: DEFAULT_MAX_DESIGNS,
        }
    }
}

impl ExperimentConfig {
    pub fn apply(mut self, o: &Overrides) -> Result<Self> {
        if let Some(v) = o.order {
            self.order = InteractionOrder::from_order(v)?;
        }
        if let Some(v) = &o.prior {
            self.prior = Some(parse_prior(v)?);
        }
        if let Some(v) = &o.criterion {
            self.criterion = parse_criterion(v)?;
        }
        if let Some(v) = &o.format {
            self.format = Format::parse(v)?;
        }
        macro_rules! take {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = o.$field { self.$target = v; })*
            };
        }
        take!(gamma => gamma, pi => pi, n_star => n_star, top_k => top_k,
              prob_floor => prob_floor, block => with_block, seed => seed,
              exchange => exchange, starts => starts, max_designs => max_designs);
        self.validate()?;
        Ok(self)
    }

    /// Defaults, then the file at `path` if any, then `flags`.
    pub fn resolve(path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            cfg = cfg.apply(&Overrides::read(p)?)?;
        }
        cfg.apply(flags)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CliError::Config(m));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return fail(format!("pi must lie in (0, 1), got {}", self.pi));
        }
        if self.n_star == 0 {
            return fail("n-star must be at least 1".to_string());
        }
        if self.top_k == 0 {
            return fail("top-k must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&self.prob_floor) {
            return fail(format!("prob-floor must lie in [0, 1), got {}", self.prob_floor));
        }
        if self.starts == 0 {
            return fail("starts must be at least 1".to_string());
        }
        if let Some(p) = &self.prior {
            p.validate()?;
        }
        Ok(())
    }

    /// The model-space prior in effect: the explicit one, otherwise
    /// beta-binomial(1, 1) for the objective analysis and fixed π for the
    /// conventional one.
    pub fn model_prior(&self) -> ModelSpacePrior {
        self.prior.unwrap_or(match self.criterion {
            Criterion::Omd => ModelSpacePrior::default(),
            Criterion::Cmd => ModelSpacePrior::FixedPi(self.pi),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn priors() {
        assert_eq!(
            parse_prior("beta:1,2").unwrap(),
            ModelSpacePrior::BetaBinomial { a: 1.0, b: 2.0 }
        );
        assert_eq!(parse_prior("pi:0.25").unwrap(), ModelSpacePrior::FixedPi(0.25));
        assert!(parse_prior("pi:1.5").is_err());
        assert!(parse_prior("beta:1").is_err());
        assert!(parse_prior("gamma:1").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = Overrides::from_toml("order = 3\ntop_k = 9\ncriterion = \"cmd\"\ngamma = 0.4\n").unwrap();
        let flags = Overrides {
            top_k: Some(2),
            ..Overrides::default()
        };
        let cfg = ExperimentConfig::default().apply(&file).unwrap().apply(&flags).unwrap();
        assert_eq!(cfg.order, InteractionOrder::Three);
        assert_eq!(cfg.top_k, 2);
        assert_eq!(cfg.criterion, Criterion::Cmd);
        assert_eq!(cfg.gamma, 0.4);
        assert_eq!(cfg.model_prior(), ModelSpacePrior::FixedPi(0.25));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(Overrides::from_toml("colour = 1").is_err());
        let bad = Overrides {
            pi: Some(0.0),
            ..Overrides::default()
        };
        assert!(ExperimentConfig::default().apply(&bad).is_err());
    }
}
