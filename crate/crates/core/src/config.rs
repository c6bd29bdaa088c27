//! Text forms of measures, functionals and rate experiments.
//!
//! Measures: `uniform_cube:d`, `std_normal:d`, `brownian_kl:k[:G]`,
//! `brownian[:G]` (exact at grid points), `gbm:a:b:u0[:k[:G]]`.
//!
//! Functionals: `coord_at(t)`, `abs_coord_at(t)`, `sup_norm`, `l1_integral`,
//! `coord(i)`, `abs_dev(c1,..)`, `dist_to_point(c1,..)`,
//! `dist_to_codebook(file)`.

use std::path::Path as FsPath;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{config, Error, Result};
use crate::experiments::{Algorithm, CodebookSource, RateExperiment, Reference, Transform};
use crate::functionals;
use crate::measures::{DiffusionSpec, MeasureSpec, DEFAULT_GRID, DEFAULT_KL_TERMS};
use crate::paths::{Functional, Grid};
use crate::quadrature::SmallBallProfile;
use crate::quantize::LloydOptions;
use crate::rng::SeedSpec;

/// A parsed measure, with the diffusion it came from when there is one.
#[derive(Debug, Clone)]
pub struct MeasureArg {
    pub measure: MeasureSpec,
    pub diffusion: Option<DiffusionSpec>,
    pub grid: Option<Arc<Grid>>,
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad {what} '{s}'")))
}

pub fn parse_measure(s: &str) -> Result<MeasureArg> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    let grid_at = |i: usize| -> Result<Arc<Grid>> {
        Grid::uniform(match parts.get(i) {
            Some(g) => num(g, "grid size")?,
            None => DEFAULT_GRID,
        })
    };
    let arity = |lo: usize, hi: usize| -> Result<()> {
        if parts.len() < lo || parts.len() > hi {
            return config(format!("measure '{s}' has the wrong number of fields"));
        }
        Ok(())
    };
    let plain = |measure: MeasureSpec| {
        let grid = measure.grid().cloned();
        MeasureArg {
            measure,
            diffusion: None,
            grid,
        }
    };
    match parts[0] {
        "uniform_cube" => {
            arity(2, 2)?;
            Ok(plain(MeasureSpec::uniform_cube(num(parts[1], "dimension")?)?))
        }
        "std_normal" => {
            arity(2, 2)?;
            Ok(plain(MeasureSpec::std_normal(num(parts[1], "dimension")?)?))
        }
        "brownian_kl" => {
            arity(1, 3)?;
            let k = match parts.get(1) {
                Some(k) => num(k, "term count")?,
                None => DEFAULT_KL_TERMS,
            };
            Ok(plain(MeasureSpec::brownian_kl(k, grid_at(2)?)?))
        }
        "brownian" => {
            arity(1, 2)?;
            let grid = grid_at(1)?;
            Ok(MeasureArg {
                measure: MeasureSpec::brownian_grid(grid.clone())?,
                diffusion: Some(DiffusionSpec::brownian()),
                grid: Some(grid),
            })
        }
        "gbm" => {
            arity(4, 6)?;
            let spec = DiffusionSpec::gbm(num(parts[1], "drift a")?, num(parts[2], "volatility b")?, num(parts[3], "u0")?);
            let grid = grid_at(5)?;
            let k = match parts.get(4) {
                Some(k) => num(k, "step count")?,
                None => grid.len(),
            };
            Ok(MeasureArg {
                measure: MeasureSpec::diffusion(spec.clone(), k, grid.clone())?,
                diffusion: Some(spec),
                grid: Some(grid),
            })
        }
        other => config(format!("unknown measure kind '{other}'")),
    }
}

fn split_call(s: &str) -> Result<(&str, Vec<&str>)> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s, Vec::new())),
        Some(i) => {
            let inner = s[i + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::Config(format!("unbalanced parentheses in '{s}'")))?;
            let args = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner.split(',').map(str::trim).collect()
            };
            Ok((s[..i].trim(), args))
        }
    }
}

pub fn parse_functional(s: &str) -> Result<Functional> {
    let (name, args) = split_call(s)?;
    let one = || -> Result<&str> {
        match args.as_slice() {
            [a] => Ok(a),
            _ => config(format!("'{name}' takes exactly one argument")),
        }
    };
    let none = || -> Result<()> {
        if args.is_empty() {
            Ok(())
        } else {
            config(format!("'{name}' takes no arguments"))
        }
    };
    let floats = || -> Result<Vec<f64>> { args.iter().map(|a| num(a, "coordinate")).collect() };
    match name {
        "coord_at" => functionals::coord_at(num(one()?, "time")?),
        "abs_coord_at" => functionals::abs_coord_at(num(one()?, "time")?),
        "sup_norm" => none().map(|_| functionals::sup_norm()),
        "l1_integral" => none().map(|_| functionals::l1_integral()),
        "coord" => Ok(functionals::coord(num(one()?, "index")?)),
        "abs_dev" => functionals::abs_dev(floats()?),
        "dist_to_point" => functionals::dist_to_point(floats()?),
        "dist_to_codebook" => {
            let cb = crate::io::load_codebook(FsPath::new(one()?))?;
            Ok(functionals::dist_to_codebook(cb))
        }
        other => config(format!("unknown functional '{other}'")),
    }
}

fn default_replications() -> usize {
    200
}

fn default_weight_samples() -> usize {
    1_000_000
}

fn default_reference_k() -> usize {
    4096
}

fn default_transform() -> Transform {
    Transform::LogLog
}

/// TOML description of a rate experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub name: String,
    /// `mc`, `vrmc`, `euler` or `gauss-sub`.
    pub algorithm: String,
    pub measure: String,
    pub functional: String,
    /// Sizes `n` for `mc`/`vrmc`, cost budgets `N` otherwise.
    pub ladder: Vec<u64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Known value of the integral.
    pub reference: Option<f64>,
    /// Draws for a Monte Carlo reference when no exact value is given.
    pub reference_budget: Option<usize>,
    /// Law for the Monte Carlo reference; defaults to a fine version of `measure`.
    pub reference_measure: Option<String>,
    /// Euler steps of the default reference for `euler`.
    #[serde(default = "default_reference_k")]
    pub reference_k: usize,
    #[serde(default = "default_transform")]
    pub transform: Transform,
    pub bracket: Option<[f64; 2]>,
    #[serde(default)]
    pub require_decreasing: bool,
    pub codebook: Option<CodebookSource>,
    #[serde(default = "default_weight_samples")]
    pub weight_samples: usize,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

impl RatesConfig {
    pub fn from_toml(text: &str) -> Result<RatesConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid experiment config: {e}")))
    }

    pub fn build(&self, seed: SeedSpec) -> Result<RateExperiment> {
        let arg = parse_measure(&self.measure)?;
        let functional = parse_functional(&self.functional)?;
        let algorithm = match self.algorithm.as_str() {
            "mc" => Algorithm::Mc,
            "vrmc" => Algorithm::VrMc {
                source: self.codebook.unwrap_or(CodebookSource::Lloyd),
                lloyd: LloydOptions::default(),
                weight_samples: self.weight_samples,
            },
            "euler" => Algorithm::Euler {
                spec: arg
                    .diffusion
                    .clone()
                    .ok_or_else(|| Error::Config("euler needs a diffusion measure (gbm:... or brownian)".into()))?,
                grid: arg.grid.clone().unwrap(),
            },
            "gauss-sub" => Algorithm::GaussSub {
                profile: SmallBallProfile::new(self.alpha.unwrap_or(2.0), self.beta.unwrap_or(0.0))?,
                grid: arg
                    .grid
                    .clone()
                    .ok_or_else(|| Error::Config("gauss-sub needs a path measure".into()))?,
            },
            other => return config(format!("unknown algorithm '{other}'")),
        };
        let reference = match (self.reference, self.reference_budget) {
            (Some(v), None) => Reference::Exact(v),
            (None, Some(budget)) => {
                let measure = match (&self.reference_measure, &algorithm) {
                    (Some(m), _) => parse_measure(m)?.measure,
                    (None, Algorithm::Euler { spec, grid }) => MeasureSpec::diffusion(spec.clone(), self.reference_k, grid.clone())?,
                    (None, _) => arg.measure.clone(),
                };
                Reference::MonteCarlo { measure, budget }
            }
            _ => return config("give exactly one of 'reference' and 'reference_budget'"),
        };
        Ok(RateExperiment {
            name: self.name.clone(),
            measure: Some(arg.measure),
            functional,
            algorithm,
            ladder: self.ladder.clone(),
            replications: self.replications,
            reference,
            transform: self.transform,
            bracket: self.bracket.map(|[a, b]| (a, b)),
            require_decreasing: self.require_decreasing,
            seed,
        })
    }
}
