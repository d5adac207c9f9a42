use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lda::LdaHyperParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Integer,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub low: f64,
    pub high: f64,
}

impl ParamSpec {
    pub fn new(name: &str, kind: ParamKind, low: f64, high: f64) -> Self {
        Self {
            name: name.to_string(),
            kind,
            low,
            high,
        }
    }

    /// Maps `p` in `[0,1]` onto the range; integers round half away from
    /// zero and are clamped.
    pub fn decode(&self, p: f64) -> f64 {
        let v = self.low + p.clamp(0.0, 1.0) * (self.high - self.low);
        match self.kind {
            ParamKind::Real => v,
            ParamKind::Integer => v.round().clamp(self.low, self.high),
        }
    }

    pub fn encode(&self, value: f64) -> f64 {
        ((value - self.low) / (self.high - self.low)).clamp(0.0, 1.0)
    }
}

// Tunable hyperparameters and their kinds.
const TUNABLE: [(&str, ParamKind); 6] = [
    ("num_topics", ParamKind::Integer),
    ("chunksize", ParamKind::Integer),
    ("passes", ParamKind::Integer),
    ("decay", ParamKind::Real),
    ("eval_every", ParamKind::Integer),
    ("iterations", ParamKind::Integer),
];

fn get_param(h: &LdaHyperParams, name: &str) -> f64 {
    match name {
        "num_topics" => h.num_topics as f64,
        "chunksize" => h.chunksize as f64,
        "passes" => h.passes as f64,
        "decay" => h.decay,
        "eval_every" => h.eval_every as f64,
        "iterations" => h.iterations as f64,
        _ => unreachable!("validated name {name}"),
    }
}

fn set_param(h: &mut LdaHyperParams, name: &str, v: f64) {
    match name {
        "num_topics" => h.num_topics = v as usize,
        "chunksize" => h.chunksize = v as usize,
        "passes" => h.passes = v as usize,
        "decay" => h.decay = v,
        "eval_every" => h.eval_every = v as usize,
        "iterations" => h.iterations = v as usize,
        _ => unreachable!("validated name {name}"),
    }
}

/// Box of tunable LDA hyperparameters, searched as the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    dims: Vec<ParamSpec>,
}

impl Default for SearchSpace {
    /// num_topics 20–2000, chunksize 1–4096, passes 1–10, decay 0.5–1.0,
    /// eval_every 1–10, iterations 5–200.
    fn default() -> Self {
        use ParamKind::*;
        Self {
            dims: vec![
                ParamSpec::new("num_topics", Integer, 20.0, 2000.0),
                ParamSpec::new("chunksize", Integer, 1.0, 4096.0),
                ParamSpec::new("passes", Integer, 1.0, 10.0),
                ParamSpec::new("decay", Real, 0.5, 1.0),
                ParamSpec::new("eval_every", Integer, 1.0, 10.0),
                ParamSpec::new("iterations", Integer, 5.0, 200.0),
            ],
        }
    }
}

impl SearchSpace {
    pub fn new(dims: Vec<ParamSpec>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Precondition("search space has no dimensions".into()));
        }
        let mut seen = BTreeSet::new();
        for d in &dims {
            let Some(&(_, kind)) = TUNABLE.iter().find(|(n, _)| *n == d.name) else {
                return Err(Error::Precondition(format!("{:?} is not a tunable hyperparameter", d.name)));
            };
            if kind != d.kind {
                return Err(Error::Precondition(format!("{} must be {kind:?}", d.name)));
            }
            if !seen.insert(d.name.as_str()) {
                return Err(Error::Precondition(format!("duplicate dimension {}", d.name)));
            }
            if !(d.low.is_finite() && d.high.is_finite() && d.low < d.high) {
                return Err(Error::Precondition(format!("{}: need finite low < high, got {}..{}", d.name, d.low, d.high)));
            }
            if d.kind == ParamKind::Integer && (d.low.fract() != 0.0 || d.high.fract() != 0.0 || d.low < 0.0) {
                return Err(Error::Precondition(format!("{}: integer bounds must be non-negative integers", d.name)));
            }
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[ParamSpec] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.dims.iter().map(|d| d.name.as_str()).collect()
    }

    /// Keeps only the named dimensions, in the given order.
    pub fn subset(&self, names: &[&str]) -> Result<Self> {
        let dims = names
            .iter()
            .map(|n| {
                self.dims
                    .iter()
                    .find(|d| d.name == *n)
                    .cloned()
                    .ok_or_else(|| Error::Precondition(format!("unknown dimension {n}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims)
    }

    /// Applies `name=low:high`, replacing the range of an existing
    /// dimension or adding a new one.
    pub fn with_override(&self, spec: &str) -> Result<Self> {
        let bad = || Error::Precondition(format!("space override {spec:?} is not name=low:high"));
        let (name, range) = spec.split_once('=').ok_or_else(bad)?;
        let (low, high) = range.split_once(':').ok_or_else(bad)?;
        let low: f64 = low.trim().parse().map_err(|_| bad())?;
        let high: f64 = high.trim().parse().map_err(|_| bad())?;
        let name = name.trim();
        let kind = TUNABLE
            .iter()
            .find(|(n, _)| *n == name)
            .map(|&(_, k)| k)
            .ok_or_else(|| Error::Precondition(format!("{name:?} is not a tunable hyperparameter")))?;
        let mut dims = self.dims.clone();
        match dims.iter_mut().find(|d| d.name == name) {
            Some(d) => {
                d.low = low;
                d.high = high;
            }
            None => dims.push(ParamSpec::new(name, kind, low, high)),
        }
        Self::new(dims)
    }

    /// Per-dimension decoded values.
    pub fn decode_values(&self, point: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(point).map(|(d, &p)| d.decode(p)).collect()
    }

    /// Decodes a unit-cube point; hyperparameters outside the space come
    /// from `base`.
    pub fn decode(&self, point: &[f64], base: &LdaHyperParams) -> Result<LdaHyperParams> {
        if point.len() != self.len() {
            return Err(Error::DimensionMismatch(format!("point has {} coordinates, space has {}", point.len(), self.len())));
        }
        let mut h = base.clone();
        for (d, v) in self.dims.iter().zip(self.decode_values(point)) {
            set_param(&mut h, &d.name, v);
        }
        Ok(h)
    }

    /// Inverse of [`decode`](Self::decode) up to rounding, clamped into the cube.
    pub fn encode(&self, h: &LdaHyperParams) -> Vec<f64> {
        self.dims.iter().map(|d| d.encode(get_param(h, &d.name))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table2_optimum() -> LdaHyperParams {
        LdaHyperParams {
            num_topics: 1241,
            chunksize: 2877,
            passes: 5,
            decay: 0.5,
            eval_every: 10,
            iterations: 188,
            ..Default::default()
        }
    }

    #[test]
    fn boundaries() {
        let s = SearchSpace::default();
        let base = LdaHyperParams::default();
        let lo = s.decode(&[0.0; 6], &base).unwrap();
        let hi = s.decode(&[1.0; 6], &base).unwrap();
        assert_eq!((lo.num_topics, hi.num_topics), (20, 2000));
        assert_eq!((lo.chunksize, hi.chunksize), (1, 4096));
        assert_eq!((lo.passes, hi.passes), (1, 10));
        assert_eq!((lo.decay, hi.decay), (0.5, 1.0));
        assert_eq!((lo.eval_every, hi.eval_every), (1, 10));
        assert_eq!((lo.iterations, hi.iterations), (5, 200));
    }

    #[test]
    fn midpoint_rounds_half_away_from_zero() {
        let h = SearchSpace::default().decode(&[0.5; 6], &LdaHyperParams::default()).unwrap();
        assert_eq!(h.decay, 0.75);
        assert_eq!(h.passes, 6);
        assert_eq!(h.num_topics, 1010);
        assert_eq!(h.eval_every, 6);
    }

    #[test]
    fn table2_optimum_round_trips() {
        let s = SearchSpace::default();
        let opt = table2_optimum();
        let back = s.decode(&s.encode(&opt), &LdaHyperParams::default()).unwrap();
        assert_eq!(back, opt);
    }

    #[test]
    fn every_integer_is_reachable() {
        let s = SearchSpace::default();
        for d in s.dims().iter().filter(|d| d.kind == ParamKind::Integer) {
            for v in (d.low as i64)..=(d.high as i64) {
                assert_eq!(d.decode(d.encode(v as f64)), v as f64, "{}", d.name);
            }
        }
    }

    #[test]
    fn overrides_and_validation() {
        let s = SearchSpace::default().with_override("num_topics=2:50").unwrap();
        assert_eq!(s.dims()[0].high, 50.0);
        assert!(SearchSpace::default().with_override("num_topics=50:2").is_err());
        assert!(SearchSpace::default().with_override("alpha=0:1").is_err());
        assert!(SearchSpace::default().with_override("num_topics").is_err());
        assert!(SearchSpace::new(vec![ParamSpec::new("decay", ParamKind::Integer, 0.0, 1.0)]).is_err());
        let sub = SearchSpace::default().subset(&["passes", "num_topics"]).unwrap();
        assert_eq!(sub.names(), vec!["passes", "num_topics"]);
        assert!(sub.decode(&[0.0], &LdaHyperParams::default()).is_err());
    }

    proptest! {
        #[test]
        fn decode_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for d in SearchSpace::default().dims() {
                prop_assert!(d.decode(lo) <= d.decode(hi));
                let v = d.decode(lo);
                prop_assert!(v >= d.low && v <= d.high);
            }
        }
    }
}
