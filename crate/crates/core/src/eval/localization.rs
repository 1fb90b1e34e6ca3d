use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::Point3;

use crate::error::{Error, Result};

/// Default distance bucket edges, meters.
pub const DEFAULT_BUCKETS: [f64; 2] = [10.0, 25.0];

/// An object position in the camera frame of `frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Localization {
    pub frame: usize,
    pub id: i64,
    pub position: Point3<f64>,
}

/// Streaming mean and population variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then_some(self.mean)
    }

    pub fn std(&self) -> Option<f64> {
        (self.count > 0).then(|| (self.m2 / self.count as f64).max(0.0).sqrt())
    }
}

/// Error statistics of the localizations whose true distance lies in
/// `(lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketStats {
    pub lower: f64,
    pub upper: Option<f64>,
    pub count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl BucketStats {
    fn new(lower: f64, upper: Option<f64>, w: &Welford) -> Self {
        Self {
            lower,
            upper,
            count: w.count(),
            mean: w.mean(),
            std: w.std(),
        }
    }

    pub fn label(&self) -> String {
        match self.upper {
            Some(u) if u.is_finite() => format!("<={u}m"),
            _ if self.lower == 0.0 => "overall".to_string(),
            _ => format!(">{}m", self.lower),
        }
    }

    /// `mean (std)` or `N/A` for an empty bucket.
    pub fn cell(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{m:.2} ({s:.2})"),
            _ => "N/A".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationReport {
    /// Disjoint distance buckets in increasing order.
    pub buckets: Vec<BucketStats>,
    pub overall: BucketStats,
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.iter().any(|e| !(*e > 0.0 && e.is_finite())) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("bucket edges must be positive and strictly increasing"));
    }
    Ok(())
}

impl LocalizationReport {
    /// Builds the report from `(true distance, error)` pairs.
    pub fn from_errors(pairs: &[(f64, f64)], edges: &[f64]) -> Result<Self> {
        check_edges(edges)?;
        if pairs.is_empty() {
            return Err(Error::EmptyReport("no matched localizations".into()));
        }
        let mut acc = vec![Welford::default(); edges.len() + 1];
        let mut all = Welford::default();
        for &(d, e) in pairs {
            let b = edges.iter().position(|u| d <= *u).unwrap_or(edges.len());
            acc[b].push(e);
            all.push(e);
        }
        let buckets = acc
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let lower = if i == 0 { 0.0 } else { edges[i - 1] };
                BucketStats::new(lower, edges.get(i).copied(), w)
            })
            .collect();
        Ok(Self {
            buckets,
            overall: BucketStats::new(0.0, None, &all),
        })
    }

    /// Header line of [`Self::table_row`].
    pub fn table_header(&self) -> String {
        let mut s = format!("{:<28}", "method");
        for b in &self.buckets {
            let _ = write!(s, " {:>16}", b.label());
        }
        let _ = write!(s, " {:>16}", "overall");
        s
    }

    /// One row: `mean (std)` per bucket, then overall.
    pub fn table_row(&self, name: &str) -> String {
        let mut s = format!("{name:<28}");
        for b in self.buckets.iter().chain(std::iter::once(&self.overall)) {
            let _ = write!(s, " {:>16}", b.cell());
        }
        s
    }

    /// CSV rows `method,bucket,count,mean,std`; empty buckets leave mean and
    /// std blank.
    pub fn csv_rows(&self, name: &str) -> String {
        let mut s = String::new();
        for b in self.buckets.iter().chain(std::iter::once(&self.overall)) {
            let f = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
            let _ = writeln!(s, "{name},{},{},{},{}", b.label(), b.count, f(b.mean), f(b.std));
        }
        s
    }
}

pub const CSV_HEADER: &str = "method,bucket,count,mean,std";

/// Errors of estimates against truth matched by `(frame, id)`, bucketed by
/// the true distance from the camera.
pub fn localization_report(
    est: &[Localization],
    truth: &[Localization],
    edges: &[f64],
) -> Result<LocalizationReport> {
    let truth: HashMap<(usize, i64), &Localization> = truth.iter().map(|t| ((t.frame, t.id), t)).collect();
    let pairs: Vec<(f64, f64)> = est
        .iter()
        .filter_map(|e| {
            let t = truth.get(&(e.frame, e.id))?;
            Some((t.position.coords.norm(), (e.position - t.position).norm()))
        })
        .collect();
    LocalizationReport::from_errors(&pairs, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn loc(frame: usize, id: i64, x: f64, z: f64) -> Localization {
        Localization {
            frame,
            id,
            position: Point3::new(x, 0.0, z),
        }
    }

    #[test]
    fn exact_estimates() {
        let t: Vec<_> = (0..30).map(|i| loc(i, 1, 0.0, i as f64 + 1.0)).collect();
        let r = localization_report(&t, &t, &DEFAULT_BUCKETS).unwrap();
        assert_eq!(r.overall.mean, Some(0.0));
        assert_eq!(r.overall.std, Some(0.0));
        assert_eq!(r.buckets.iter().map(|b| b.count).sum::<usize>(), 30);
    }

    #[test]
    fn constant_offset_near() {
        let t: Vec<_> = (0..10).map(|i| loc(i, 2, 0.0, 5.0)).collect();
        let e: Vec<_> = (0..10).map(|i| loc(i, 2, 1.0, 5.0)).collect();
        let r = localization_report(&e, &t, &DEFAULT_BUCKETS).unwrap();
        assert!((r.overall.mean.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.overall.std.unwrap() < 1e-12);
        assert_eq!(r.buckets[0].count, 10);
        assert!(r.buckets[1].mean.is_none() && r.buckets[2].mean.is_none());
        assert!(r.table_row("x").contains("N/A"));
    }

    #[test]
    fn no_matches_is_empty_report() {
        let t = vec![loc(0, 1, 0.0, 5.0)];
        let e = vec![loc(0, 2, 0.0, 5.0)];
        assert!(matches!(localization_report(&e, &t, &DEFAULT_BUCKETS), Err(Error::EmptyReport(_))));
    }

    #[test]
    fn labels() {
        let r = LocalizationReport::from_errors(&[(30.0, 1.0)], &DEFAULT_BUCKETS).unwrap();
        let labels: Vec<_> = r.buckets.iter().map(|b| b.label()).collect();
        assert_eq!(labels, ["<=10m", "<=25m", ">25m"]);
        assert_eq!(r.csv_rows("m").lines().count(), 4);
    }

    proptest! {
        #[test]
        fn streaming_matches_two_pass(pairs in proptest::collection::vec((0.5f64..60.0, 0.0f64..20.0), 1..200)) {
            let r = LocalizationReport::from_errors(&pairs, &DEFAULT_BUCKETS).unwrap();
            for b in r.buckets.iter().chain(std::iter::once(&r.overall)) {
                let hi = b.upper.unwrap_or(f64::INFINITY);
                let xs: Vec<f64> = pairs.iter().filter(|(d, _)| *d > b.lower && *d <= hi).map(|p| p.1).collect();
                prop_assert_eq!(xs.len(), b.count);
                if xs.is_empty() {
                    prop_assert!(b.mean.is_none());
                    continue;
                }
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
                prop_assert!((b.mean.unwrap() - mean).abs() < 1e-12);
                prop_assert!((b.std.unwrap().powi(2) - var).abs() <= 1e-12 * (1.0 + var));
                prop_assert!(b.std.unwrap() >= 0.0);
            }
        }
    }
}
