use nalgebra::{Point2, Point3};

use super::{DenseDepthMap, DepthHypothesis, WindowFrame};
use crate::error::{Error, Result};
use crate::geometry::{relative_pose, CameraIntrinsics, Pose};

#[derive(Debug, Clone, PartialEq)]
pub struct DensifyConfig {
    /// Half-size of the photometric comparison block.
    pub block_half_size: usize,
    /// Frames (largest baselines first) used to score a candidate.
    pub max_scoring_frames: usize,
    /// Relative perturbations tried around the best propagated candidate.
    pub refine_steps: Vec<f64>,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            block_half_size: 1,
            max_scoring_frames: 4,
            refine_steps: vec![0.02, 0.008, 0.003, 0.001],
        }
    }
}

struct Scorer<'a> {
    k: &'a CameraIntrinsics,
    reference: &'a crate::image::IntensityImage,
    views: Vec<(Pose, &'a crate::image::IntensityImage)>,
    half: i64,
}

impl Scorer<'_> {
    /// Mean squared intensity difference over all views that see the block.
    fn cost(&self, x: usize, y: usize, depth: f64) -> f64 {
        let h = self.half;
        let w = self.reference.width() as i64;
        let hgt = self.reference.height() as i64;
        let mut total = 0.0;
        let mut count = 0usize;
        for (cur_from_ref, image) in &self.views {
            let mut ssd = 0.0;
            let mut ok = true;
            'block: for dy in -h..=h {
                for dx in -h..=h {
                    let (rx, ry) = (x as i64 + dx, y as i64 + dy);
                    if rx < 0 || ry < 0 || rx >= w || ry >= hgt {
                        ok = false;
                        break 'block;
                    }
                    let px = Point2::new(rx as f64, ry as f64);
                    let p: Point3<f64> = cur_from_ref.transform_point(&self.k.backproject(&px, depth));
                    if p.z <= 0.0 {
                        ok = false;
                        break 'block;
                    }
                    let q = Point2::new(
                        self.k.f * p.x / p.z + self.k.cx,
                        self.k.f * p.y / p.z + self.k.cy,
                    );
                    match image.sample(&q) {
                        Some(v) => {
                            let r = v - self.reference.get(rx as usize, ry as usize);
                            ssd += r * r;
                        }
                        None => {
                            ok = false;
                            break 'block;
                        }
                    }
                }
            }
            if ok {
                total += ssd;
                count += 1;
            }
        }
        if count == 0 {
            f64::INFINITY
        } else {
            total / count as f64
        }
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn inside_hull(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    const EPS: f64 = 1e-9;
    match hull.len() {
        0 => false,
        1 => (hull[0].0 - p.0).abs() < 0.5 && (hull[0].1 - p.1).abs() < 0.5,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            let dist = cross(a, b, p).abs() / len;
            let t = ((p.0 - a.0) * (b.0 - a.0) + (p.1 - a.1) * (b.1 - a.1)) / (len * len);
            dist <= 0.5 && (-EPS..=1.0 + EPS).contains(&t)
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= -EPS),
    }
}

/// Fills the convex hull of converged seeds by propagating depth candidates
/// from neighbors and keeping the one with least multi-view photometric
/// error. `frames[0]` is the reference view the seeds live in.
pub fn densify(
    seeds: &[(Point2<f64>, DepthHypothesis)],
    frames: &[WindowFrame<'_>],
    k: &CameraIntrinsics,
    cfg: &DensifyConfig,
) -> Result<DenseDepthMap> {
    if seeds.len() < 3 {
        return Err(Error::InsufficientSeeds {
            available: seeds.len(),
            required: 3,
        });
    }
    let reference = frames
        .first()
        .ok_or_else(|| Error::invalid("densification needs the reference frame"))?;
    let (w, h) = (reference.image.width(), reference.image.height());
    let mut map = DenseDepthMap::unknown(w, h);
    let mut is_seed = vec![false; w * h];

    // Lowest-variance seed wins a pixel.
    let mut seed_px: Vec<(usize, usize, DepthHypothesis)> = Vec::new();
    for (p, hyp) in seeds {
        let (x, y) = (p.x.round(), p.y.round());
        if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
            continue;
        }
        let (x, y) = (x as usize, y as usize);
        let i = y * w + x;
        if !is_seed[i] || hyp.sigma2 < map.variances()[i] {
            is_seed[i] = true;
            map.set(x, y, hyp.mu, hyp.sigma2);
        }
        seed_px.push((x, y, *hyp));
    }
    if seed_px.len() < 3 {
        return Err(Error::InsufficientSeeds {
            available: seed_px.len(),
            required: 3,
        });
    }
    let d_lo = seed_px.iter().map(|s| s.2.mu).fold(f64::INFINITY, f64::min);
    let d_hi = seed_px.iter().map(|s| s.2.mu).fold(0.0, f64::max);
    let hull = convex_hull(seed_px.iter().map(|s| (s.0 as f64, s.1 as f64)).collect());
    let (x0, x1) = hull
        .iter()
        .fold((usize::MAX, 0), |(lo, hi), p| (lo.min(p.0 as usize), hi.max(p.0 as usize)));
    let (y0, y1) = hull
        .iter()
        .fold((usize::MAX, 0), |(lo, hi), p| (lo.min(p.1 as usize), hi.max(p.1 as usize)));
    let mut in_hull = vec![false; w * h];
    for y in y0..=y1 {
        for x in x0..=x1 {
            in_hull[y * w + x] = inside_hull(&hull, (x as f64, y as f64));
        }
    }

    let mut views: Vec<(f64, usize, Pose)> = frames
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, f)| {
            let rel = relative_pose(&reference.world_from_camera, &f.world_from_camera);
            (rel.translation().norm(), i, rel)
        })
        .collect();
    views.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let scorer = Scorer {
        k,
        reference: reference.image,
        views: views
            .into_iter()
            .take(cfg.max_scoring_frames)
            .map(|(_, i, rel)| (rel, frames[i].image))
            .collect(),
        half: cfg.block_half_size as i64,
    };

    for forward in [true, false] {
        let rows: Vec<usize> = if forward {
            (y0..=y1).collect()
        } else {
            (y0..=y1).rev().collect()
        };
        let cols: Vec<usize> = if forward {
            (x0..=x1).collect()
        } else {
            (x0..=x1).rev().collect()
        };
        // Neighbor offsets in the sweep direction.
        let dirs: [(i64, i64); 2] = if forward { [(-1, 0), (0, -1)] } else { [(1, 0), (0, 1)] };
        for &y in &rows {
            for &x in &cols {
                let i = y * w + x;
                if !in_hull[i] || is_seed[i] {
                    continue;
                }
                if let Some((d, v)) = best_candidate(&map, &scorer, x, y, &dirs, (d_lo, d_hi), cfg) {
                    map.set(x, y, d, v);
                }
            }
        }
    }
    Ok(map)
}

fn best_candidate(
    map: &DenseDepthMap,
    scorer: &Scorer<'_>,
    x: usize,
    y: usize,
    dirs: &[(i64, i64); 2],
    (d_lo, d_hi): (f64, f64),
    cfg: &DensifyConfig,
) -> Option<(f64, f64)> {
    let at = |dx: i64, dy: i64| -> Option<(f64, f64)> {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx < 0 || ny < 0 {
            return None;
        }
        let (nx, ny) = (nx as usize, ny as usize);
        Some((map.depth(nx, ny)?, map.variance(nx, ny)?))
    };
    let mut candidates: Vec<f64> = Vec::with_capacity(8);
    if let Some((d, _)) = at(0, 0) {
        candidates.push(d);
    }
    for &(dx, dy) in dirs {
        if let Some((d1, _)) = at(dx, dy) {
            candidates.push(d1);
            if let Some((d2, _)) = at(2 * dx, 2 * dy) {
                // Inverse depth is affine in the image for planar surfaces.
                let inv = 2.0 / d1 - 1.0 / d2;
                if inv > 0.0 {
                    candidates.push(1.0 / inv);
                }
            }
        }
    }
    let neighbors: Vec<(f64, f64)> = [(-1, 0), (1, 0), (0, -1), (0, 1)]
        .iter()
        .filter_map(|&(dx, dy)| at(dx, dy))
        .collect();
    if neighbors.is_empty() {
        return None;
    }
    let n = neighbors.len() as f64;
    let mean_inv = neighbors.iter().map(|(d, _)| 1.0 / d).sum::<f64>() / n;
    candidates.push(1.0 / mean_inv);
    let variance = neighbors.iter().map(|(_, v)| v).sum::<f64>() / n;

    let mut best_d = f64::NAN;
    let mut best_cost = f64::INFINITY;
    for d in candidates {
        let d = d.clamp(d_lo, d_hi);
        let c = scorer.cost(x, y, d);
        if c < best_cost || best_d.is_nan() {
            best_cost = c;
            best_d = d;
        }
    }
    for &s in &cfg.refine_steps {
        let center = best_d;
        for d in [center * (1.0 - s), center * (1.0 + s)] {
            let d = d.clamp(d_lo, d_hi);
            let c = scorer.cost(x, y, d);
            if c < best_cost {
                best_cost = c;
                best_d = d;
            }
        }
    }
    Some((best_d, variance))
}
