use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::Point2;

use crate::error::{Error, Result};

/// Seed location with a fixed-length descriptor used for frame-to-frame
/// correspondence.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePoint {
    pub pixel: Point2<f64>,
    pub descriptor: Vec<f64>,
}

/// Source of per-frame features.
pub trait FeatureProvider {
    fn features(&self, frame: usize) -> Result<Vec<FeaturePoint>>;
}

/// Features keyed by frame, as read from a feature file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    frames: BTreeMap<usize, Vec<FeaturePoint>>,
    descriptor_len: Option<usize>,
}

impl FeatureTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame: usize, feature: FeaturePoint) -> Result<()> {
        match self.descriptor_len {
            Some(n) if n != feature.descriptor.len() => {
                return Err(Error::invalid(format!(
                    "descriptor length {} differs from {n}",
                    feature.descriptor.len()
                )))
            }
            None => self.descriptor_len = Some(feature.descriptor.len()),
            _ => {}
        }
        self.frames.entry(frame).or_default().push(feature);
        Ok(())
    }

    pub fn descriptor_len(&self) -> Option<usize> {
        self.descriptor_len
    }

    /// Parses `frame x y d1 ... dN` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Self::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 3 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "expected 'frame x y d1 ... dN'".into(),
                });
            }
            let frame: usize = fields[0].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad frame index '{}'", fields[0]),
            })?;
            let nums: Vec<f64> = fields[1..]
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("bad number '{s}'"),
                    })
                })
                .collect::<Result<_>>()?;
            let feature = FeaturePoint {
                pixel: Point2::new(nums[0], nums[1]),
                descriptor: nums[2..].to_vec(),
            };
            table.insert(frame, feature).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (frame, feats) in &self.frames {
            for f in feats {
                let _ = write!(out, "{frame} {} {}", f.pixel.x, f.pixel.y);
                for d in &f.descriptor {
                    let _ = write!(out, " {d}");
                }
                out.push('\n');
            }
        }
        out
    }
}

impl FeatureProvider for FeatureTable {
    fn features(&self, frame: usize) -> Result<Vec<FeaturePoint>> {
        Ok(self.frames.get(&frame).cloned().unwrap_or_default())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mutual nearest-neighbor descriptor matches passing a ratio test.
/// Returns `(index_in_a, index_in_b)` pairs ordered by `index_in_a`.
pub fn match_features(a: &[FeaturePoint], b: &[FeaturePoint], ratio: f64) -> Vec<(usize, usize)> {
    let nearest = |query: &FeaturePoint, pool: &[FeaturePoint]| -> Option<(usize, f64, f64)> {
        let mut best = (usize::MAX, f64::INFINITY);
        let mut second = f64::INFINITY;
        for (j, cand) in pool.iter().enumerate() {
            let d = squared_distance(&query.descriptor, &cand.descriptor);
            if d < best.1 {
                second = best.1;
                best = (j, d);
            } else if d < second {
                second = d;
            }
        }
        (best.0 != usize::MAX).then_some((best.0, best.1, second))
    };
    let mut matches = Vec::new();
    for (i, fa) in a.iter().enumerate() {
        let Some((j, d1, d2)) = nearest(fa, b) else {
            continue;
        };
        if d2.is_finite() && d1 > ratio * ratio * d2 {
            continue;
        }
        if let Some((back, _, _)) = nearest(&b[j], a) {
            if back == i {
                matches.push((i, j));
            }
        }
    }
    matches
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        let text = "0 10 20 0.1 0.2\n0 30 40 0.3 0.4\n2 5 6 0.5 0.6\n";
        let table = FeatureTable::parse(text).unwrap();
        assert_eq!(table.features(0).unwrap().len(), 2);
        assert_eq!(table.features(1).unwrap().len(), 0);
        assert_eq!(table.to_text(), text);
    }

    #[test]
    fn inconsistent_descriptor_length_names_line() {
        match FeatureTable::parse("0 1 2 0.5\n1 1 2 0.5 0.6\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mutual_matches() {
        let f = |x: f64, d: [f64; 2]| FeaturePoint {
            pixel: Point2::new(x, 0.0),
            descriptor: d.to_vec(),
        };
        let a = vec![f(0.0, [1.0, 0.0]), f(1.0, [0.0, 1.0]), f(2.0, [5.0, 5.0])];
        let b = vec![f(0.0, [0.0, 1.02]), f(1.0, [1.01, 0.0])];
        assert_eq!(match_features(&a, &b, 0.8), vec![(0, 1), (1, 0)]);
    }
}
