//! TOML problem description -> [`ProblemSpec`] + optimizer options.
//!
//! Every leaf is optional at the serde level so that a half-written file
//! produces a full list of `missing key \`section.key\`` messages instead of
//! bailing at the first gap. Unknown keys are rejected outright — a typo in
//! a section or key name should never silently fall back to a default.

use nonlocal_control::grid::{Field, Grid, Interval};
use nonlocal_control::reaction::ReactionFunction;
use nonlocal_control::state::{ProblemSpec, TargetSpec};
use nonlocal_control::OptimizeOptions;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    grid: Option<GridSection>,
    reaction: Option<ReactionSection>,
    time: Option<TimeSection>,
    cost: Option<CostSection>,
    #[serde(rename = "box")]
    bounds: Option<BoxSection>,
    init: Option<InitSection>,
    target: Option<TargetSection>,
    opt: Option<OptSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    #[serde(rename = "L")]
    length: Option<f64>,
    n: Option<usize>,
    omega_lo: Option<f64>,
    omega_hi: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactionSection {
    kind: Option<String>,
    a0: Option<f64>,
    a1: Option<f64>,
    k: Option<f64>,
    #[serde(rename = "M")]
    declared_bound: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    #[serde(rename = "T")]
    horizon: Option<f64>,
    nt: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    mu: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxSection {
    alpha: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitSection {
    y0: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetSection {
    yd: Option<String>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OptSection {
    tol: Option<f64>,
    max_iters: Option<usize>,
    seed: Option<u64>,
}

/// Spatial profile expression: `const:<value>` or `cosine:<amplitude>`,
/// the latter meaning `amp * cos(pi x / L)` (flat at both walls, so it is
/// compatible with the no-flux boundary).
enum Profile {
    Const(f64),
    Cosine(f64),
}

impl Profile {
    fn parse(key: &str, text: &str) -> Result<Profile, String> {
        let err = || {
            format!(
                "key `{key}`: expected `const:<value>` or `cosine:<amplitude>`, got {text:?}"
            )
        };
        let (kind, number) = text.split_once(':').ok_or_else(err)?;
        let value: f64 = number.trim().parse().map_err(|_| err())?;
        if !value.is_finite() {
            return Err(err());
        }
        match kind.trim() {
            "const" => Ok(Profile::Const(value)),
            "cosine" => Ok(Profile::Cosine(value)),
            _ => Err(err()),
        }
    }

    fn realize(&self, grid: &Grid) -> Field {
        match *self {
            Profile::Const(v) => Field::constant(grid.n(), v),
            Profile::Cosine(amp) => Field::from_fn(grid, |x| {
                amp * (std::f64::consts::PI * x / grid.length()).cos()
            }),
        }
    }
}

impl RawConfig {
    pub fn load(path: &std::path::Path) -> Result<RawConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
    }

    /// Resolve the raw sections into a problem instance and optimizer
    /// options. All complaints are collected before returning so the user
    /// sees every missing or malformed key at once.
    pub fn build(&self) -> Result<(ProblemSpec, OptimizeOptions), String> {
        self.build_inner(None)
    }

    /// Like [`RawConfig::build`] but with the regularization weight supplied
    /// by the caller; `cost.mu` may then be absent from the file.
    pub fn build_with_mu(&self, mu: f64) -> Result<(ProblemSpec, OptimizeOptions), String> {
        self.build_inner(Some(mu))
    }

    fn build_inner(
        &self,
        mu_override: Option<f64>,
    ) -> Result<(ProblemSpec, OptimizeOptions), String> {
        let mut errors = Vec::new();
        fn missing(key: &str) -> String {
            format!("missing key `{key}`")
        }

        macro_rules! require {
            ($section:expr, $field:ident, $key:literal) => {
                match $section.as_ref().and_then(|s| s.$field) {
                    Some(v) => Some(v),
                    None => {
                        errors.push(missing($key));
                        None
                    }
                }
            };
        }

        let length = require!(self.grid, length, "grid.L");
        let n = require!(self.grid, n, "grid.n");
        let omega_lo = require!(self.grid, omega_lo, "grid.omega_lo");
        let omega_hi = require!(self.grid, omega_hi, "grid.omega_hi");
        let a0 = require!(self.reaction, a0, "reaction.a0");
        let horizon = require!(self.time, horizon, "time.T");
        let nt = require!(self.time, nt, "time.nt");
        let mu = match mu_override {
            Some(mu) => Some(mu),
            None => require!(self.cost, mu, "cost.mu"),
        };
        let alpha = require!(self.bounds, alpha, "box.alpha");
        let beta = require!(self.bounds, beta, "box.beta");

        let kind = match self.reaction.as_ref().and_then(|s| s.kind.as_deref()) {
            Some(k) => Some(k.to_string()),
            None => {
                errors.push(missing("reaction.kind"));
                None
            }
        };
        let y0_text = match self.init.as_ref().and_then(|s| s.y0.as_deref()) {
            Some(t) => Some(t.to_string()),
            None => {
                errors.push(missing("init.y0"));
                None
            }
        };
        let yd_text = match self.target.as_ref().and_then(|s| s.yd.as_deref()) {
            Some(t) => Some(t.to_string()),
            None => {
                errors.push(missing("target.yd"));
                None
            }
        };

        // Which extra parameters the reaction needs depends on its kind, so
        // report those requirements even when `a0` itself is also missing.
        let mut reaction = None;
        if let Some(kind) = kind.as_deref() {
            let section = self.reaction.as_ref().unwrap();
            let built = match kind {
                "constant" => {
                    for (name, value) in [("a1", section.a1), ("k", section.k)] {
                        if value.is_some() {
                            errors.push(format!(
                                "key `reaction.{name}` is not used when `reaction.kind` is \"constant\""
                            ));
                        }
                    }
                    a0.map(|a0| ReactionFunction::constant(a0).map_err(|e| e.to_string()))
                }
                "logistic" | "smooth_clamp" => {
                    if section.a1.is_none() {
                        errors.push(missing("reaction.a1"));
                    }
                    if section.k.is_none() {
                        errors.push(missing("reaction.k"));
                    }
                    match (a0, section.a1, section.k) {
                        (Some(a0), Some(a1), Some(k)) => Some(if kind == "logistic" {
                            ReactionFunction::logistic(a0, a1, k).map_err(|e| e.to_string())
                        } else {
                            ReactionFunction::smooth_clamp(a0, a1, k).map_err(|e| e.to_string())
                        }),
                        _ => None, // every absence already reported
                    }
                }
                other => Some(Err(format!(
                    "key `reaction.kind`: expected \"constant\", \"logistic\" or \"smooth_clamp\", got {other:?}"
                ))),
            };
            match built {
                Some(Ok(r)) => {
                    reaction = Some(match section.declared_bound {
                        Some(bound) => r.with_declared_bound(bound),
                        None => r,
                    });
                }
                Some(Err(msg)) => errors.push(format!("section [reaction]: {msg}")),
                None => {}
            }
        }

        let mut grid = None;
        if let (Some(length), Some(n), Some(lo), Some(hi)) = (length, n, omega_lo, omega_hi) {
            match Grid::build(length, n, Interval::new(lo, hi)) {
                Ok(g) => grid = Some(g),
                Err(e) => errors.push(format!("section [grid]: {e}")),
            }
        }

        let y0_profile = y0_text
            .as_deref()
            .and_then(|t| match Profile::parse("init.y0", t) {
                Ok(p) => Some(p),
                Err(msg) => {
                    errors.push(msg);
                    None
                }
            });
        let yd_profile = yd_text
            .as_deref()
            .and_then(|t| match Profile::parse("target.yd", t) {
                Ok(p) => Some(p),
                Err(msg) => {
                    errors.push(msg);
                    None
                }
            });

        let opt_section = self.opt.as_ref();
        let defaults = OptimizeOptions::default();
        let opts = OptimizeOptions {
            tol: opt_section.and_then(|s| s.tol).unwrap_or(defaults.tol),
            max_iters: opt_section
                .and_then(|s| s.max_iters)
                .unwrap_or(defaults.max_iters),
            seed: opt_section.and_then(|s| s.seed).unwrap_or(defaults.seed),
            ..defaults
        };
        if !(opts.tol.is_finite() && opts.tol > 0.0) {
            errors.push(format!("key `opt.tol`: must be positive, got {}", opts.tol));
        }
        if opts.max_iters == 0 {
            errors.push("key `opt.max_iters`: must be at least 1".to_string());
        }

        if errors.is_empty() {
            let grid = grid.unwrap();
            let y0 = y0_profile.unwrap().realize(&grid);
            let yd = yd_profile.unwrap().realize(&grid);
            match ProblemSpec::new(
                grid,
                reaction.unwrap(),
                y0,
                TargetSpec::Static(yd),
                mu.unwrap(),
                horizon.unwrap(),
                nt.unwrap(),
                alpha.unwrap(),
                beta.unwrap(),
            ) {
                Ok(spec) => return Ok((spec, opts)),
                Err(e) => errors.push(e.to_string()),
            }
        }
        Err(errors.join("\n"))
    }
}
