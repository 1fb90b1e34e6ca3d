use nalgebra::{DMatrix, Matrix3, Point2, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{triangulate_relative, CameraIntrinsics, Pose};

/// Relative pose with unit-norm translation and the depths of the
/// correspondences in the reference camera (same, arbitrary scale).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoViewGeometry {
    pub cur_from_ref: Pose,
    /// `Some(depth)` per correspondence that triangulated in front of both cameras.
    pub depths: Vec<Option<f64>>,
}

/// Linear eight-point estimate of the essential matrix from normalized
/// coordinates, projected onto the essential manifold.
pub fn essential_matrix(ref_rays: &[Vector3<f64>], cur_rays: &[Vector3<f64>]) -> Result<Matrix3<f64>> {
    let n = ref_rays.len();
    if n < 8 || cur_rays.len() != n {
        return Err(Error::InsufficientConstraints {
            available: n.min(cur_rays.len()),
            required: 8,
        });
    }
    let mut a = DMatrix::<f64>::zeros(n, 9);
    for (i, (p, q)) in ref_rays.iter().zip(cur_rays).enumerate() {
        let (x1, y1) = (p.x / p.z, p.y / p.z);
        let (x2, y2) = (q.x / q.z, q.y / q.z);
        let row = [x2 * x1, x2 * y1, x2, y2 * x1, y2 * y1, y2, x1, y1, 1.0];
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    // Null vector of A via the smallest eigenvector of A^T A.
    let ata = a.transpose() * &a;
    let eig = nalgebra::SymmetricEigen::new(ata);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .ok_or_else(|| Error::degenerate("empty system"))?;
    let e = eig.eigenvectors.column(imin);
    let raw = Matrix3::new(e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8]);
    let svd = raw.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let s = (svd.singular_values[0] + svd.singular_values[1]) / 2.0;
    if !(s > 0.0) {
        return Err(Error::degenerate("essential matrix vanished"));
    }
    Ok(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)) * vt)
}

/// The four `(R, t)` factorizations of an essential matrix.
fn decompositions(e: &Matrix3<f64>) -> Vec<(Matrix3<f64>, Vector3<f64>)> {
    let svd = e.svd(true, true);
    let mut u = svd.u.unwrap();
    let mut vt = svd.v_t.unwrap();
    if u.determinant() < 0.0 {
        u = -u;
    }
    if vt.determinant() < 0.0 {
        vt = -vt;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let t: Vector3<f64> = u.column(2).into();
    let r1 = u * w * vt;
    let r2 = u * w.transpose() * vt;
    vec![(r1, t), (r1, -t), (r2, t), (r2, -t)]
}

/// Linear estimate of the homography `cur ~ H ref` between normalized
/// coordinates.
pub fn homography(ref_rays: &[Vector3<f64>], cur_rays: &[Vector3<f64>]) -> Result<Matrix3<f64>> {
    let n = ref_rays.len();
    if n < 4 || cur_rays.len() != n {
        return Err(Error::InsufficientConstraints {
            available: n.min(cur_rays.len()),
            required: 4,
        });
    }
    let mut a = DMatrix::<f64>::zeros(2 * n, 9);
    for (i, (p, q)) in ref_rays.iter().zip(cur_rays).enumerate() {
        let (x, y) = (p.x / p.z, p.y / p.z);
        let (u, v) = (q.x / q.z, q.y / q.z);
        let r0 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        let r1 = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    // Right singular vector of the smallest singular value.
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::degenerate("homography SVD failed"))?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .ok_or_else(|| Error::degenerate("empty system"))?;
    let h = vt.row(imin);
    Ok(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]))
}

/// Mean transfer error of `H` in normalized coordinates.
fn transfer_error(h: &Matrix3<f64>, ref_rays: &[Vector3<f64>], cur_rays: &[Vector3<f64>]) -> f64 {
    let total: f64 = ref_rays
        .iter()
        .zip(cur_rays)
        .map(|(p, q)| {
            let m = h * p;
            if m.z.abs() < 1e-12 {
                return f64::INFINITY;
            }
            ((m.x / m.z - q.x / q.z).powi(2) + (m.y / m.z - q.y / q.z).powi(2)).sqrt()
        })
        .sum();
    total / ref_rays.len() as f64
}

/// The eight `(R, t)` candidates of a plane-induced homography
/// `H = R + t n^T / d` (SVD construction; `t` up to scale).
fn homography_decompositions(h: &Matrix3<f64>) -> Result<Vec<(Matrix3<f64>, Vector3<f64>)>> {
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| svd.singular_values[*b].partial_cmp(&svd.singular_values[*a]).unwrap());
    let u = Matrix3::from_columns(&[u.column(order[0]), u.column(order[1]), u.column(order[2])]);
    let v = vt.transpose();
    let v = Matrix3::from_columns(&[v.column(order[0]), v.column(order[1]), v.column(order[2])]);
    let (d1, d2, d3) = (
        svd.singular_values[order[0]],
        svd.singular_values[order[1]],
        svd.singular_values[order[2]],
    );
    if d1 / d2 < 1.00001 || d2 / d3 < 1.00001 {
        return Err(Error::degenerate("homography has repeated singular values (no parallax)"));
    }
    let s = u.determinant() * v.determinant();
    let vt = v.transpose();
    let aux1 = ((d1 * d1 - d2 * d2) / (d1 * d1 - d3 * d3)).sqrt();
    let aux3 = ((d2 * d2 - d3 * d3) / (d1 * d1 - d3 * d3)).sqrt();
    let x1 = [aux1, aux1, -aux1, -aux1];
    let x3 = [aux3, -aux3, aux3, -aux3];
    let root = ((d1 * d1 - d2 * d2) * (d2 * d2 - d3 * d3)).sqrt();
    let mut out = Vec::with_capacity(8);
    // d' = d2.
    let st = root / ((d1 + d3) * d2);
    let ct = (d2 * d2 + d1 * d3) / ((d1 + d3) * d2);
    for (i, sign) in [1.0, -1.0, -1.0, 1.0].iter().enumerate() {
        let sti = st * sign;
        let rp = Matrix3::new(ct, 0.0, -sti, 0.0, 1.0, 0.0, sti, 0.0, ct);
        let tp = Vector3::new(x1[i], 0.0, -x3[i]) * (d1 - d3);
        out.push((s * u * rp * vt, u * tp));
    }
    // d' = -d2.
    let sp = root / ((d1 - d3) * d2);
    let cp = (d1 * d3 - d2 * d2) / ((d1 - d3) * d2);
    for (i, sign) in [1.0, -1.0, -1.0, 1.0].iter().enumerate() {
        let spi = sp * sign;
        let rp = Matrix3::new(cp, 0.0, spi, 0.0, -1.0, 0.0, spi, 0.0, -cp);
        let tp = Vector3::new(x1[i], 0.0, x3[i]) * (d1 + d3);
        out.push((s * u * rp * vt, u * tp));
    }
    Ok(out)
}

/// Transfer error (normalized units) below which correspondences are
/// treated as coming from a plane.
const PLANAR_TRANSFER_ERROR: f64 = 1e-3;

/// Relative pose of two calibrated views from pixel correspondences.
///
/// Correspondences explained by a homography (a planar scene, where the
/// eight-point system is degenerate) are decomposed through it; otherwise
/// the essential matrix is used. Among the candidate factorizations the one
/// with most points in front of both cameras wins; for the homography, ties
/// within 10% go to the smallest rotation, which resolves its twofold
/// ambiguity at video frame rates.
pub fn two_view_pose(
    k: &CameraIntrinsics,
    ref_pixels: &[Point2<f64>],
    cur_pixels: &[Point2<f64>],
    min_ray_angle: f64,
) -> Result<TwoViewGeometry> {
    let ref_rays: Vec<Vector3<f64>> = ref_pixels.iter().map(|p| k.ray(p)).collect();
    let cur_rays: Vec<Vector3<f64>> = cur_pixels.iter().map(|p| k.ray(p)).collect();
    if ref_rays.len() < 8 {
        return Err(Error::InsufficientConstraints {
            available: ref_rays.len(),
            required: 8,
        });
    }
    let h = homography(&ref_rays, &cur_rays)?;
    let planar = transfer_error(&h, &ref_rays, &cur_rays) < PLANAR_TRANSFER_ERROR;
    let candidates = if planar {
        homography_decompositions(&h)?
    } else {
        decompositions(&essential_matrix(&ref_rays, &cur_rays)?)
    };
    let mut scored = Vec::with_capacity(candidates.len());
    for (r, t) in candidates {
        let Some(t) = t.try_normalize(1e-12) else { continue };
        let rot = Rotation3::from_matrix_eps(&r, 1e-12, 100, Rotation3::identity());
        let pose = Pose::new(rot, t);
        let depths: Vec<Option<f64>> = ref_pixels
            .iter()
            .zip(cur_pixels)
            .map(|(a, b)| {
                let tri = triangulate_relative(&pose, a, b, k, min_ray_angle).ok()?;
                let in_cur = pose.transform_point(&tri.point);
                (in_cur.z > 0.0).then_some(tri.depth)
            })
            .collect();
        let good = depths.iter().flatten().count();
        scored.push((good, rot.angle(), TwoViewGeometry {
            cur_from_ref: pose,
            depths,
        }));
    }
    let most = scored.iter().map(|s| s.0).max().unwrap_or(0);
    if most < 8 {
        return Err(Error::degenerate(format!(
            "only {most} correspondences triangulate in front of both views"
        )));
    }
    let floor = if planar { (most as f64 * 0.9).ceil() as usize } else { most };
    let (_, _, geometry) = scored
        .into_iter()
        .filter(|s| s.0 >= floor)
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .expect("best candidate passes its own floor");
    Ok(geometry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Point3, Vector3};

    fn scene() -> Vec<Point3<f64>> {
        (0..40)
            .map(|i| {
                let a = i as f64;
                Point3::new((a * 0.37).sin() * 2.0, (a * 0.71).cos() * 1.5, 4.0 + (a * 0.23).sin() * 1.5)
            })
            .collect()
    }

    #[test]
    fn recovers_pose_direction_and_relative_depths() {
        let k = CameraIntrinsics::new(500.0, 320.0, 240.0, 640, 480).unwrap();
        let truth = Pose::new(
            Rotation3::from_euler_angles(0.02, -0.05, 0.01),
            Vector3::new(-0.4, 0.05, 0.1),
        );
        let pts = scene();
        let a: Vec<Point2<f64>> = pts.iter().map(|p| k.project_camera(p).unwrap()).collect();
        let b: Vec<Point2<f64>> = pts
            .iter()
            .map(|p| k.project_camera(&truth.transform_point(p)).unwrap())
            .collect();
        let g = two_view_pose(&k, &a, &b, 0.1f64.to_radians()).unwrap();
        assert!(g.cur_from_ref.rotation_angle_to(&truth) < 1e-8);
        let dir = truth.translation().normalize();
        assert!((g.cur_from_ref.translation() - dir).norm() < 1e-8);
        let scale = truth.translation().norm();
        for (p, d) in pts.iter().zip(&g.depths) {
            assert!((d.unwrap() * scale - p.z).abs() < 1e-6);
        }
    }

    #[test]
    fn planar_scene_uses_homography() {
        let k = CameraIntrinsics::new(160.0, 160.0, 120.0, 320, 240).unwrap();
        let truth = Pose::new(Rotation3::from_euler_angles(0.002, -0.004, 0.001), Vector3::new(-0.05, 0.01, 0.0));
        let pts: Vec<Point3<f64>> = (0..60)
            .map(|i| {
                let a = i as f64;
                Point3::new((a * 0.37).sin() * 0.8, (a * 0.71).cos() * 0.6, 1.0)
            })
            .collect();
        let a: Vec<Point2<f64>> = pts.iter().map(|p| k.project_camera(p).unwrap()).collect();
        let b: Vec<Point2<f64>> = pts
            .iter()
            .map(|p| k.project_camera(&truth.transform_point(p)).unwrap())
            .collect();
        let g = two_view_pose(&k, &a, &b, 0.1f64.to_radians()).unwrap();
        assert!(g.cur_from_ref.rotation_angle_to(&truth) < 1e-8);
        let dir = truth.translation().normalize();
        assert!((g.cur_from_ref.translation() - dir).norm() < 1e-8);
        let scale = truth.translation().norm();
        for d in &g.depths {
            assert!((d.unwrap() * scale - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_points() {
        let r = vec![Vector3::new(0.0, 0.0, 1.0); 7];
        assert!(matches!(
            essential_matrix(&r, &r),
            Err(Error::InsufficientConstraints { .. })
        ));
    }
}
