//! Unified checkpoint: scoring head, readout gate, classifier and
//! standardizer in one JSON object.
//!
//! Every real is written as a decimal string with 17 significant digits,
//! which round-trips any `f64` exactly. Keys are emitted in sorted order, so
//! identical models produce identical files.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::classifier::ClfParams;
use crate::error::{Error, Result};
use crate::numerics::Standardizer;
use crate::odl::OdlParams;
use crate::readout::{FusionParams, ReadoutKind, ReadoutMode};

pub const CHECKPOINT_VERSION: u64 = 1;

/// A trained judge: both stages plus the attribution statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub odl: OdlParams,
    pub clf: ClfParams,
}

fn real(x: f64) -> Value {
    Value::String(format!("{x:.16e}"))
}

fn reals(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| real(x)).collect())
}

fn rows(xs: &[f64], width: usize) -> Value {
    Value::Array(xs.chunks(width.max(1)).map(reals).collect())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| bad(format!("missing field {key:?}")))
}

fn get_usize(obj: &Map<String, Value>, key: &str) -> Result<usize> {
    field(obj, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| bad(format!("{key} must be a non-negative integer")))
}

fn parse_real(v: &Value, what: &str) -> Result<f64> {
    let s = v
        .as_str()
        .ok_or_else(|| bad(format!("{what}: reals are stored as strings")))?;
    let x: f64 = s
        .parse()
        .map_err(|_| bad(format!("{what}: cannot parse {s:?}")))?;
    if !x.is_finite() {
        return Err(bad(format!("{what}: non-finite value {s}")));
    }
    Ok(x)
}

fn parse_reals(v: &Value, what: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| bad(format!("{what} must be an array")))?
        .iter()
        .map(|x| parse_real(x, what))
        .collect()
}

fn parse_rows(v: &Value, n_rows: usize, width: usize, what: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| bad(format!("{what} must be an array of rows")))?;
    if arr.len() != n_rows {
        return Err(bad(format!(
            "{what}: expected {n_rows} rows, found {}",
            arr.len()
        )));
    }
    let mut out = Vec::with_capacity(n_rows * width);
    for row in arr {
        let r = parse_reals(row, what)?;
        if r.len() != width {
            return Err(bad(format!(
                "{what}: expected rows of {width}, found {}",
                r.len()
            )));
        }
        out.extend(r);
    }
    Ok(out)
}

impl Model {
    pub fn to_json(&self) -> Value {
        let o = &self.odl;
        let c = &self.clf;
        let fusion = o.readout.fusion().unwrap_or_default();
        json!({
            "version": CHECKPOINT_VERSION,
            "d": o.dim,
            "K": o.num_dims,
            "r": o.levels,
            "readout": o.readout.kind().to_string(),
            "fusion": { "w_first": real(fusion.w_first), "w_last": real(fusion.w_last) },
            "W_p": rows(&o.weights, o.dim),
            "b": reals(&o.bias),
            "s_raw": reals(&o.log_scale),
            "classifier": {
                "W_F": rows(&c.weights, c.num_dims),
                "bias": c.bias.map(|b| reals(&b)).unwrap_or(Value::Null),
                "standardizer": {
                    "mean": reals(&c.standardizer.mean),
                    "std": reals(&c.standardizer.std),
                },
            },
        })
    }

    pub fn to_string_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| bad("checkpoint must be a JSON object"))?;
        let version = field(obj, "version")?
            .as_u64()
            .ok_or_else(|| bad("version must be an integer"))?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!(
                "unsupported checkpoint version {version} (this build reads version {CHECKPOINT_VERSION})"
            )));
        }
        let d = get_usize(obj, "d")?;
        let k = get_usize(obj, "K")?;
        let r = get_usize(obj, "r")?;
        let kind: ReadoutKind = field(obj, "readout")?
            .as_str()
            .ok_or_else(|| bad("readout must be a string"))?
            .parse()?;
        let fobj = field(obj, "fusion")?
            .as_object()
            .ok_or_else(|| bad("fusion must be an object"))?;
        let fusion = FusionParams {
            w_first: parse_real(field(fobj, "w_first")?, "fusion.w_first")?,
            w_last: parse_real(field(fobj, "w_last")?, "fusion.w_last")?,
        };
        let readout = match kind {
            ReadoutKind::Fused => ReadoutMode::Fused(fusion),
            other => ReadoutMode::from_kind(other),
        };
        let odl = OdlParams {
            num_dims: k,
            dim: d,
            levels: r,
            weights: parse_rows(field(obj, "W_p")?, k, d, "W_p")?,
            bias: parse_reals(field(obj, "b")?, "b")?,
            log_scale: parse_reals(field(obj, "s_raw")?, "s_raw")?,
            readout,
        };
        odl.validate().map_err(|e| bad(e.to_string()))?;

        let cobj = field(obj, "classifier")?
            .as_object()
            .ok_or_else(|| bad("classifier must be an object"))?;
        let bias = match field(cobj, "bias")? {
            Value::Null => None,
            v => {
                let b = parse_reals(v, "classifier.bias")?;
                Some(
                    <[f64; 2]>::try_from(b)
                        .map_err(|_| bad("classifier.bias must have 2 entries"))?,
                )
            }
        };
        let sobj = field(cobj, "standardizer")?
            .as_object()
            .ok_or_else(|| bad("standardizer must be an object"))?;
        let clf = ClfParams {
            num_dims: k,
            weights: parse_rows(field(cobj, "W_F")?, 2, k, "W_F")?,
            bias,
            standardizer: Standardizer {
                mean: parse_reals(field(sobj, "mean")?, "standardizer.mean")?,
                std: parse_reals(field(sobj, "std")?, "standardizer.std")?,
            },
        };
        clf.validate().map_err(|e| bad(e.to_string()))?;
        Ok(Self { odl, clf })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_string_pretty()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: Value =
            serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_json(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(vals: &[f64], kind: ReadoutKind) -> Model {
        let (k, d) = (2, 3);
        let mut odl = OdlParams::zeros(k, d, 5, 2.1, ReadoutMode::from_kind(kind));
        let mut it = vals.iter().cycle();
        let mut flat = odl.to_flat();
        flat.iter_mut().for_each(|x| *x = *it.next().unwrap());
        odl.set_flat(&flat).unwrap();
        let clf = ClfParams {
            num_dims: k,
            weights: (0..4).map(|_| *it.next().unwrap()).collect(),
            bias: None,
            standardizer: Standardizer {
                mean: vec![*it.next().unwrap(), 0.25],
                std: vec![1e-8, 3.5],
            },
        };
        Model { odl, clf }
    }

    #[test]
    fn reals_use_seventeen_digits() {
        assert_eq!(real(0.1), Value::String("1.0000000000000001e-1".into()));
        assert_eq!(real(-2.0), Value::String("-2.0000000000000000e0".into()));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let m = model(&[0.5, -1.25, 3.0], ReadoutKind::Fused);
        let mut v = m.to_json();
        v["version"] = json!(2);
        let err = Model::from_json(&v).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn malformed_fields_are_rejected() {
        let m = model(&[0.5, -1.25, 3.0], ReadoutKind::Mean);
        let mut v = m.to_json();
        v["W_p"][0][1] = json!(1.5);
        assert!(Model::from_json(&v).is_err());
        let mut v = m.to_json();
        v["s_raw"] = json!(["1.0"]);
        assert!(Model::from_json(&v).is_err());
        let mut v = m.to_json();
        v["classifier"]["standardizer"]["std"][0] = json!("0.0");
        assert!(Model::from_json(&v).is_err());
        let mut v = m.to_json();
        v["readout"] = json!("attention");
        assert!(Model::from_json(&v).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        let m = model(&[0.1, 1.0 / 3.0, -7e-300, 12345.678], ReadoutKind::Fused);
        m.save(&p).unwrap();
        let back = Model::load(&p).unwrap();
        assert_eq!(back, m);
        back.save(dir.path().join("again.json")).unwrap();
        assert_eq!(
            std::fs::read(&p).unwrap(),
            std::fs::read(dir.path().join("again.json")).unwrap()
        );
    }

    proptest! {
        #[test]
        fn exact_round_trip(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 4..12),
                            kind in prop_oneof![Just(ReadoutKind::Mean), Just(ReadoutKind::Last), Just(ReadoutKind::Fused)]) {
            let m = model(&vals, kind);
            let back = Model::from_json(&serde_json::from_str(&m.to_string_pretty()).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
