//! Turning model flags into descriptors.

use clap::Args;
use lzscatter::models::{ModelDescriptor, ParamValue};

use crate::Failure;

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// Model family (lz2, spin, adjoint3, bowtie3, bowtieN, su3six, su3adj8).
    #[arg(long)]
    pub family: Option<String>,
    /// Dimension, for spin and bowtieN.
    #[arg(long)]
    pub k: Option<usize>,
    /// Coupling: a number, or a comma list for bowtieN.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    /// Slope: a number, or a comma list for bowtieN.
    #[arg(long, allow_hyphen_values = true)]
    pub slope: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<String>,
    /// Full descriptor as JSON, or @path to a file holding one.
    #[arg(long, conflicts_with_all = ["family", "k", "delta", "slope", "eps"])]
    pub descriptor: Option<String>,
}

/// A flag value: fixed, or swept as `start:stop:step`.
#[derive(Debug, Clone, PartialEq)]
pub enum Param {
    Fixed(ParamValue),
    Range(Vec<f64>),
}

fn number(s: &str, name: &str) -> Result<f64, Failure> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Failure::input(format!("--{name}: '{s}' is not a finite number")))
}

/// Inclusive range values; empty when `start > stop`.
pub fn parse_range(text: &str, name: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Failure::input(format!("--{name}: ranges are start:stop:step")));
    }
    let (start, stop, step) = (number(parts[0], name)?, number(parts[1], name)?, number(parts[2], name)?);
    if !(step > 0.0) {
        return Err(Failure::input(format!("--{name}: range step must be positive")));
    }
    let mut values = Vec::new();
    let mut n = 0usize;
    loop {
        let x = start + n as f64 * step;
        // tolerate round-off at the inclusive end
        if x > stop + 1e-9 * step {
            break;
        }
        values.push(x);
        n += 1;
    }
    Ok(values)
}

pub fn parse_param(text: &str, name: &str) -> Result<Param, Failure> {
    if text.contains(':') {
        return parse_range(text, name).map(Param::Range);
    }
    let values = text
        .split(',')
        .map(|s| number(s, name))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(Param::Fixed(if values.len() == 1 {
        ParamValue::Scalar(values[0])
    } else {
        ParamValue::List(values)
    }))
}

/// Descriptor template plus at most one swept parameter.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub base: ModelDescriptor,
    pub sweep: Option<(&'static str, Vec<f64>)>,
}

impl ModelSpec {
    pub fn at(&self, value: f64) -> ModelDescriptor {
        let mut d = self.base.clone();
        match self.sweep.as_ref().map(|s| s.0) {
            Some("delta") => d.delta = ParamValue::Scalar(value),
            Some("slope") => d.slope = ParamValue::Scalar(value),
            Some("eps") => d.eps = Some(value),
            _ => {}
        }
        d
    }
}

impl ModelArgs {
    pub fn spec(&self) -> Result<ModelSpec, Failure> {
        if let Some(text) = &self.descriptor {
            let json = match text.strip_prefix('@') {
                Some(path) => std::fs::read_to_string(path)
                    .map_err(|e| Failure::input(format!("cannot read descriptor {path}: {e}")))?,
                None => text.clone(),
            };
            let base = ModelDescriptor::from_json(&json).map_err(Failure::from)?;
            return Ok(ModelSpec { base, sweep: None });
        }
        let family = self
            .family
            .clone()
            .ok_or_else(|| Failure::input("--family (or --descriptor) is required"))?;
        let mut sweep = None;
        let mut take = |name: &'static str, text: &Option<String>| -> Result<Option<ParamValue>, Failure> {
            match text {
                None => Ok(None),
                Some(t) => match parse_param(t, name)? {
                    Param::Fixed(v) => Ok(Some(v)),
                    Param::Range(values) => {
                        if sweep.is_some() {
                            return Err(Failure::input("only one parameter may be a range"));
                        }
                        sweep = Some((name, values));
                        Ok(Some(ParamValue::Scalar(f64::NAN)))
                    }
                },
            }
        };
        let delta = take("delta", &self.delta)?.ok_or_else(|| Failure::input("--delta is required"))?;
        let slope = take("slope", &self.slope)?.ok_or_else(|| Failure::input("--slope is required"))?;
        let eps = match take("eps", &self.eps)? {
            None => None,
            Some(v) => Some(v.scalar("eps").map_err(Failure::from)?),
        };
        Ok(ModelSpec {
            base: ModelDescriptor { family, k: self.k, delta, slope, eps },
            sweep,
        })
    }

    /// Descriptor with every parameter fixed.
    pub fn descriptor(&self) -> Result<ModelDescriptor, Failure> {
        let spec = self.spec()?;
        if let Some((name, _)) = spec.sweep {
            return Err(Failure::input(format!("--{name}: ranges are only accepted by sweep")));
        }
        Ok(spec.base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_inclusive() {
        assert_eq!(parse_range("0.1:2.0:0.1", "delta").unwrap().len(), 20);
        assert_eq!(parse_range("1:1:0.5", "delta").unwrap(), vec![1.0]);
        assert!(parse_range("2:1:0.5", "delta").unwrap().is_empty());
        assert!(parse_range("0:1:0", "delta").is_err());
        assert!(parse_range("0:1", "delta").is_err());
    }

    #[test]
    fn lists_and_scalars() {
        assert_eq!(parse_param("0.5", "delta").unwrap(), Param::Fixed(ParamValue::Scalar(0.5)));
        assert_eq!(
            parse_param("1,-2", "slope").unwrap(),
            Param::Fixed(ParamValue::List(vec![1.0, -2.0]))
        );
        assert!(parse_param("x", "delta").is_err());
        assert!(parse_param("inf", "delta").is_err());
    }

    #[test]
    fn one_range_only() {
        let args = ModelArgs {
            family: Some("lz2".into()),
            delta: Some("0:1:0.5".into()),
            slope: Some("1:2:1".into()),
            ..Default::default()
        };
        assert_eq!(args.spec().unwrap_err().code, 2);
    }
}
