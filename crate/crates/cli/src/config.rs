//! Run configuration: a flat TOML document whose keys mirror the long flags.
//!
//! Precedence: built-in defaults, then the `--config` file, then command-line flags.

use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use dfcontour::contour::{ContourParams, TwistKind};
use dfcontour::engine::{default_contour, EngineOptions, SheetStrategy};
use dfcontour::geometry::MollifierParams;
use dfcontour::quad::QuadSpec;
use dfcontour::signature::{ParamSet, Signature};
use num_complex::Complex64;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A complex literal: a bare number, or text such as `0.3-0.02i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cx(pub Complex64);

impl fmt::Display for Cx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.im == 0.0 {
            write!(f, "{:?}", self.0.re)
        } else {
            write!(f, "{:?}{:+?}i", self.0.re, self.0.im)
        }
    }
}

pub fn parse_complex(text: &str) -> Result<Complex64, String> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("cannot parse complex number {text:?}");
    let Some(body) = t.strip_suffix(['i', 'j']) else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    // The split is the last sign that is neither leading nor part of an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |s: &str| -> Result<f64, String> {
        match s {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => s.parse::<f64>().map_err(|_| bad()),
        }
    };
    match split {
        Some(k) => Ok(Complex64::new(body[..k].parse::<f64>().map_err(|_| bad())?, imag(&body[k..])?)),
        None => Ok(Complex64::new(0.0, imag(body)?)),
    }
}

impl std::str::FromStr for Cx {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_complex(s).map(Cx)
    }
}

impl Serialize for Cx {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.im == 0.0 {
            s.serialize_f64(self.0.re)
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Cx {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Cx;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a complex literal like \"0.3-0.02i\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Cx, E> {
                Ok(Cx(Complex64::new(v, 0.0)))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Cx, E> {
                Ok(Cx(Complex64::new(v as f64, 0.0)))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Cx, E> {
                Ok(Cx(Complex64::new(v as f64, 0.0)))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Cx, E> {
                parse_complex(v).map(Cx).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Twist {
    Mobius,
    Rotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    ControlVariate,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Alpha,
    Beta,
    Gamma,
}

/// Every setting a run can take. Unset fields fall back to defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sig: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<Cx>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<Cx>>,
    /// Upper triangle `γ_{j,k}`, `j < k`, row-major.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<Cx>>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub twist: Option<Twist>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_subdivisions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_order: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allow_large: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collar_width: Option<f64>,

    /// `verify`: residual threshold for exit status 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,

    /// `continue`: which parameter to sweep and over what grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_param: Option<SweepParam>,
    /// One-based position in the swept array.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_from: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_to: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_steps: Option<usize>,
}

/// A usage problem: missing or inconsistent inputs. Maps to exit status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).context("parsing run configuration")
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// `top` wins wherever it is set.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay!(base, top; sig, alpha, beta, gamma, eps, delta, eps_p, digamma, twist, rel_tol, abs_tol,
            max_subdivisions, base_order, strategy, allow_large, collar_width, tol, sweep_param,
            sweep_index, sweep_from, sweep_to, sweep_steps)
    }

    pub fn signature(&self) -> Result<Signature> {
        let &[l, m, n] = self.sig.as_deref().ok_or_else(|| usage("missing --sig"))? else {
            return Err(usage("--sig takes three integers l,m,n"));
        };
        Signature::new(l, m, n).map_err(|e| usage(e.to_string()))
    }

    pub fn params(&self, sig: &Signature) -> Result<ParamSet> {
        let take = |v: &Option<Vec<Cx>>, name: &str| -> Result<Vec<Complex64>> {
            match v {
                Some(v) => Ok(v.iter().map(|c| c.0).collect()),
                None if name == "gamma" && sig.pair_count() == 0 => Ok(Vec::new()),
                None => Err(usage(format!("missing --{name}"))),
            }
        };
        let (a, b, g) = (take(&self.alpha, "alpha")?, take(&self.beta, "beta")?, take(&self.gamma, "gamma")?);
        ParamSet::new(sig, a, b, g).map_err(|e| usage(e.to_string()))
    }

    pub fn mollifier(&self) -> Result<MollifierParams> {
        match self.eps {
            Some(e) => MollifierParams::new(e).map_err(|e| usage(e.to_string())),
            None => Ok(MollifierParams::default()),
        }
    }

    fn has_contour_overrides(&self) -> bool {
        self.eps.is_some() || self.delta.is_some() || self.eps_p.is_some() || self.digamma.is_some() || self.twist.is_some()
    }

    /// The tuned default contour, or one assembled from the overrides (missing fields taken
    /// from `fallback`).
    pub fn contour_with(&self, sig: &Signature, fallback: impl FnOnce() -> Result<ContourParams>) -> Result<ContourParams> {
        if !self.has_contour_overrides() {
            return fallback();
        }
        let base = match (self.delta, self.eps) {
            (Some(_), _) | (_, Some(_)) => None,
            _ => Some(fallback()?),
        };
        let delta = self.delta.or(base.map(|b| b.delta)).unwrap_or(0.05);
        let eps_p = self.eps_p.or(base.map(|b| b.eps_p)).unwrap_or(delta / 4.0);
        let digamma = self.digamma.or(base.map(|b| b.digamma)).unwrap_or(64.0 * sig.dim() as f64);
        let twist = match self.twist {
            Some(Twist::Rotation) => TwistKind::Rotation,
            _ => TwistKind::Mobius,
        };
        Ok(ContourParams::new(self.mollifier()?, delta, eps_p, digamma).map_err(|e| usage(e.to_string()))?.with_twist(twist))
    }

    pub fn contour(&self, sig: &Signature) -> Result<ContourParams> {
        self.contour_with(sig, || Ok(default_contour(sig)?))
    }

    pub fn quad(&self, dim: usize) -> Result<QuadSpec> {
        let d = QuadSpec::for_dim(dim);
        QuadSpec::new(
            self.rel_tol.unwrap_or(d.rel_tol),
            self.abs_tol.unwrap_or(d.abs_tol),
            self.max_subdivisions.unwrap_or(d.max_subdivisions),
            self.base_order.unwrap_or(d.base_order),
        )
        .map_err(|e| usage(e.to_string()))
    }

    pub fn engine(&self) -> EngineOptions {
        let d = EngineOptions::default();
        EngineOptions {
            strategy: match self.strategy {
                Some(Strategy::Independent) => SheetStrategy::Independent,
                Some(Strategy::ControlVariate) => SheetStrategy::ControlVariate,
                None => d.strategy,
            },
            allow_large: self.allow_large.unwrap_or(d.allow_large),
            collar_width: self.collar_width.unwrap_or(d.collar_width),
        }
    }
}
