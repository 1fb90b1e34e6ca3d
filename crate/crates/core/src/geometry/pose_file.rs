//! Text pose files: `frame r11 r12 r13 r21 r22 r23 r31 r32 r33 tx ty tz`.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use super::Pose;
use crate::error::{Error, Result};

pub fn write_poses<'a>(poses: impl IntoIterator<Item = (usize, &'a Pose)>) -> String {
    let mut out = String::new();
    for (frame, pose) in poses {
        let r = pose.rotation_matrix();
        let t = pose.translation();
        let _ = write!(out, "{frame}");
        for i in 0..3 {
            for j in 0..3 {
                let _ = write!(out, " {}", r[(i, j)]);
            }
        }
        let _ = writeln!(out, " {} {} {}", t.x, t.y, t.z);
    }
    out
}

pub fn read_poses(text: &str) -> Result<Vec<(usize, Pose)>> {
    let mut poses = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 13 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 13 fields, found {}", fields.len()),
            });
        }
        let frame: usize = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad frame index '{}'", fields[0]),
        })?;
        let mut vals = [0.0f64; 12];
        for (v, s) in vals.iter_mut().zip(&fields[1..]) {
            *v = s.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad number '{s}'"),
            })?;
        }
        let r = Matrix3::from_row_slice(&vals[..9]);
        let t = Vector3::new(vals[9], vals[10], vals[11]);
        let pose = Pose::from_matrix(&r, t).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        poses.push((frame, pose));
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn round_trip_is_exact() {
        let poses = [
            Pose::identity(),
            Pose::new(
                Rotation3::new(Vector3::new(0.1, -0.3, 0.7)),
                Vector3::new(1.5, -2.25, 1e-7),
            ),
        ];
        let text = write_poses(poses.iter().enumerate());
        let back = read_poses(&text).unwrap();
        assert_eq!(back.len(), 2);
        for ((i, p), (j, q)) in poses.iter().enumerate().zip(&back) {
            assert_eq!(i, *j);
            assert!((p.rotation_matrix() - q.rotation_matrix()).norm() < 1e-12);
            assert_eq!(p.translation(), q.translation());
        }
    }

    #[test]
    fn reports_line_of_bad_row() {
        let text = "0 1 0 0 0 1 0 0 0 1 0 0 0\n1 1 0 0\n";
        match read_poses(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
