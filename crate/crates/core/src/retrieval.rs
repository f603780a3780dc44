//! Exact nearest-neighbour search over labelled feature sets.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::metrics::PredictionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`, clamped to `[0, 2]`. A zero vector has similarity 0
    /// with everything.
    Cosine,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::InvalidArgument(format!(
                "unknown metric `{other}` (expected euclidean or cosine)"
            ))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub patch_id: String,
    pub distance: f64,
    pub class_id: u32,
}

struct Entry {
    patch_id: String,
    class_id: u32,
    values: Vec<f64>,
    norm: f64,
}

/// Brute-force index; immutable once built.
pub struct RetrievalIndex {
    metric: Metric,
    dim: usize,
    entries: Vec<Entry>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl RetrievalIndex {
    pub fn build(set: &FeatureSet, metric: Metric) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot index an empty feature set".into(),
            ));
        }
        let entries = set
            .vectors()
            .iter()
            .map(|v| {
                let class_id = v
                    .label
                    .ok_or_else(|| Error::MissingLabel(v.patch_id.clone()))?;
                let values: Vec<f64> = v.values.iter().map(|&x| f64::from(x)).collect();
                Ok(Entry {
                    patch_id: v.patch_id.clone(),
                    class_id,
                    norm: norm(&values),
                    values,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            metric,
            dim: set.dim(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    fn distance(&self, query: &[f64], query_norm: f64, e: &Entry) -> f64 {
        match self.metric {
            Metric::Euclidean => query
                .iter()
                .zip(&e.values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let denom = query_norm * e.norm;
                let sim = if denom > 0.0 {
                    query.iter().zip(&e.values).map(|(a, b)| a * b).sum::<f64>() / denom
                } else {
                    0.0
                };
                (1.0 - sim).clamp(0.0, 2.0)
            }
        }
    }

    /// The `min(k, len)` closest entries, nearest first; equal distances are
    /// ordered by patch id.
    pub fn query(&self, x: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "query has {} values, index is {}-d",
                x.len(),
                self.dim
            )));
        }
        let q: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        let qn = norm(&q);
        let mut scored: Vec<(f64, &Entry)> = self
            .entries
            .iter()
            .map(|e| (self.distance(&q, qn, e), e))
            .collect();
        let by_rank = |a: &(f64, &Entry), b: &(f64, &Entry)| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.1.patch_id.cmp(&b.1.patch_id))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        Ok(scored
            .into_iter()
            .map(|(distance, e)| Neighbor {
                patch_id: e.patch_id.clone(),
                distance,
                class_id: e.class_id,
            })
            .collect())
    }

    /// Queries every vector of `set`, in order.
    pub fn query_all(&self, set: &FeatureSet, k: usize) -> Result<Vec<(String, Vec<Neighbor>)>> {
        set.vectors()
            .par_iter()
            .map(|v| Ok((v.patch_id.clone(), self.query(&v.values, k)?)))
            .collect()
    }
}

/// Majority class among neighbours; ties go to the smallest class id.
pub fn vote(neighbors: &[Neighbor]) -> Option<u32> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for n in neighbors {
        *counts.entry(n.class_id).or_default() += 1;
    }
    // BTreeMap iterates ascending; keep the first maximum
    counts
        .into_iter()
        .fold(
            None,
            |best: Option<(u32, usize)>, (class, count)| match best {
                Some((_, c)) if c >= count => best,
                _ => Some((class, count)),
            },
        )
        .map(|(class, _)| class)
}

pub fn classify_knn(index: &RetrievalIndex, set: &FeatureSet, k: usize) -> Result<PredictionSet> {
    let results = index.query_all(set, k)?;
    PredictionSet::from_pairs(
        results
            .into_iter()
            .map(|(id, neighbors)| (id, vote(&neighbors).expect("index is never empty"))),
    )
}

/// `%.9g`-style rendering: 9 significant digits, trailing zeros dropped.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= digits as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}

/// `query_id <TAB> rank <TAB> neighbor_id <TAB> distance <TAB> neighbor_class`,
/// ranks from 1, distances to 9 significant digits.
pub fn neighbors_tsv(results: &[(String, Vec<Neighbor>)]) -> String {
    let mut out = String::new();
    for (query, neighbors) in results {
        for (rank, n) in neighbors.iter().enumerate() {
            let _ = writeln!(
                out,
                "{query}\t{}\t{}\t{}\t{}",
                rank + 1,
                n.patch_id,
                format_significant(n.distance, 9),
                n.class_id
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;

    fn set(points: &[(&str, u32, f32)]) -> FeatureSet {
        FeatureSet::new(
            "t",
            1,
            points
                .iter()
                .map(|&(id, c, v)| FeatureVector::new(id, Some(c), vec![v]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn build_requires_labels() {
        let s = FeatureSet::new("t", 1, vec![FeatureVector::new("a", None, vec![0.0])]).unwrap();
        assert!(matches!(
            RetrievalIndex::build(&s, Metric::Euclidean),
            Err(Error::MissingLabel(_))
        ));
        let ten = set(&(0..10)
            .map(|i| {
                (
                    ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"][i],
                    0,
                    i as f32,
                )
            })
            .collect::<Vec<_>>());
        assert_eq!(
            RetrievalIndex::build(&ten, Metric::Euclidean)
                .unwrap()
                .len(),
            10
        );
    }

    #[test]
    fn hand_placed_points() {
        let idx = RetrievalIndex::build(
            &set(&[("zero", 0, 0.0), ("one", 1, 1.0), ("five", 2, 5.0)]),
            Metric::Euclidean,
        )
        .unwrap();
        let got = idx.query(&[0.4], 2).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].patch_id, "zero");
        assert_eq!(got[1].patch_id, "one");
        assert!((got[0].distance - 0.4).abs() < 1e-7);
        assert!((got[1].distance - 0.6).abs() < 1e-7);
        assert_eq!(idx.query(&[0.4], 100).unwrap().len(), 3);
        assert!(matches!(idx.query(&[0.4, 1.0], 1), Err(Error::Shape(_))));
    }

    #[test]
    fn self_retrieval_and_duplicates() {
        let idx = RetrievalIndex::build(
            &set(&[("a", 0, 2.5), ("b", 1, 2.5), ("c", 2, -1.0)]),
            Metric::Euclidean,
        )
        .unwrap();
        let got = idx.query(&[2.5], 2).unwrap();
        assert_eq!((got[0].patch_id.as_str(), got[0].distance), ("a", 0.0));
        assert_eq!((got[1].patch_id.as_str(), got[1].distance), ("b", 0.0));
    }

    #[test]
    fn cosine_distance_range() {
        let s = FeatureSet::new(
            "t",
            2,
            vec![
                FeatureVector::new("same", Some(0), vec![2.0, 0.0]),
                FeatureVector::new("opposite", Some(1), vec![-1.0, 0.0]),
                FeatureVector::new("zero", Some(2), vec![0.0, 0.0]),
            ],
        )
        .unwrap();
        let idx = RetrievalIndex::build(&s, Metric::Cosine).unwrap();
        let got = idx.query(&[1.0, 0.0], 3).unwrap();
        assert_eq!(got[0].patch_id, "same");
        assert!(got[0].distance.abs() < 1e-12);
        assert_eq!(got[1].patch_id, "zero");
        assert_eq!(got[1].distance, 1.0);
        assert_eq!(got[2].distance, 2.0);
    }

    #[test]
    fn voting_rules() {
        let n = |c| Neighbor {
            patch_id: String::new(),
            distance: 0.0,
            class_id: c,
        };
        assert_eq!(vote(&[n(2), n(2), n(7)]), Some(2));
        assert_eq!(vote(&[n(5), n(3)]), Some(3));
        assert_eq!(vote(&[n(7), n(2), n(7), n(2)]), Some(2));
        assert_eq!(vote(&[]), None);
    }

    #[test]
    fn knn_with_k1_returns_own_class() {
        let train = set(&[("a", 4, 0.0), ("b", 9, 10.0)]);
        let idx = RetrievalIndex::build(&train, Metric::Euclidean).unwrap();
        let preds = classify_knn(&idx, &train, 1).unwrap();
        assert_eq!(preds.get("a"), Some(4));
        assert_eq!(preds.get("b"), Some(9));
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(0.0, 9), "0");
        assert_eq!(format_significant(0.4, 9), "0.4");
        assert_eq!(format_significant(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(format_significant(123456.789012, 9), "123456.789");
        assert_eq!(format_significant(1234567890.0, 9), "1.23456789e+09");
        assert_eq!(format_significant(0.00001234, 9), "1.234e-05");
        assert_eq!(format_significant(9.9999999999, 9), "10");
    }

    #[test]
    fn tsv_layout() {
        let rows = vec![(
            "q".to_string(),
            vec![Neighbor {
                patch_id: "n".into(),
                distance: 0.5,
                class_id: 3,
            }],
        )];
        assert_eq!(neighbors_tsv(&rows), "q\t1\tn\t0.5\t3\n");
    }
}
