use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// JSON descriptor of a catalog model.
///
/// Field order is the serialization order, so descriptors diff cleanly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub delta: ParamValue,
    pub slope: ParamValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

impl Default for ModelDescriptor {
    fn default() -> Self {
        Self {
            family: String::new(),
            k: None,
            delta: ParamValue::Scalar(0.0),
            slope: ParamValue::Scalar(1.0),
            eps: None,
        }
    }
}

impl ModelDescriptor {
    pub fn scalar(family: &str, delta: f64, slope: f64, eps: Option<f64>) -> Self {
        Self {
            family: family.to_string(),
            k: None,
            delta: ParamValue::Scalar(delta),
            slope: ParamValue::Scalar(slope),
            eps,
        }
    }

    pub fn spin(k: usize, delta: f64, slope: f64) -> Self {
        Self {
            k: Some(k),
            ..Self::scalar("spin", delta, slope, None)
        }
    }

    pub fn bowtie_n(deltas: Vec<f64>, slopes: Vec<f64>, eps: f64) -> Self {
        Self {
            family: "bowtieN".into(),
            k: Some(slopes.len() + 2),
            delta: ParamValue::List(deltas),
            slope: ParamValue::List(slopes),
            eps: Some(eps),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("descriptor serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidParameter(format!("bad descriptor: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    List(Vec<f64>),
}

impl ParamValue {
    pub fn values(&self) -> Vec<f64> {
        match self {
            ParamValue::Scalar(x) => vec![*x],
            ParamValue::List(v) => v.clone(),
        }
    }

    pub fn first(&self) -> f64 {
        match self {
            ParamValue::Scalar(x) => *x,
            ParamValue::List(v) => v.first().copied().unwrap_or(f64::NAN),
        }
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        match self {
            ParamValue::Scalar(x) => Ok(*x),
            ParamValue::List(v) if v.len() == 1 => Ok(v[0]),
            ParamValue::List(v) => Err(Error::InvalidParameter(format!(
                "{name} must be a single number, got {} values",
                v.len()
            ))),
        }
    }

    /// Scalar repeated `n` times, or a list of exactly `n` values.
    pub fn broadcast(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            ParamValue::Scalar(x) => Ok(vec![*x; n]),
            ParamValue::List(v) if v.len() == n => Ok(v.clone()),
            ParamValue::List(v) => Err(Error::InvalidParameter(format!(
                "expected {n} values, got {}",
                v.len()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn optional_fields_are_omitted() {
        let d = ModelDescriptor::scalar("lz2", 1.0, 2.5, None);
        assert_eq!(d.to_json(), r#"{"family":"lz2","delta":1.0,"slope":2.5}"#);
        let d = ModelDescriptor::bowtie_n(vec![0.1, 0.2], vec![1.0, -2.0], 0.5);
        assert_eq!(
            d.to_json(),
            r#"{"family":"bowtieN","k":4,"delta":[0.1,0.2],"slope":[1.0,-2.0],"eps":0.5}"#
        );
    }

    #[test]
    fn integer_literals_parse_as_numbers() {
        let d = ModelDescriptor::from_json(r#"{"family":"spin","k":3,"delta":1,"slope":2}"#).unwrap();
        assert_eq!(d, ModelDescriptor::spin(3, 1.0, 2.0));
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(
            delta in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO,
            slopes in proptest::collection::vec(proptest::num::f64::NORMAL, 1..6),
            eps in proptest::option::of(proptest::num::f64::NORMAL),
        ) {
            let d = ModelDescriptor {
                family: "bowtieN".into(),
                k: Some(slopes.len() + 2),
                delta: ParamValue::Scalar(delta),
                slope: ParamValue::List(slopes),
                eps,
            };
            let back = ModelDescriptor::from_json(&d.to_json()).unwrap();
            prop_assert_eq!(back.delta.first().to_bits(), delta.to_bits());
            prop_assert_eq!(&back, &d);
            for (x, y) in back.slope.values().iter().zip(d.slope.values()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
