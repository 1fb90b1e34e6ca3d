//! Localization CSV `frame,track_id,x,y,z,distance_m`.

use std::fmt::Write as _;

use nalgebra::Point3;
use skyloc_core::eval::Localization;
use skyloc_core::{Error, Result};

pub const LOCALIZATION_HEADER: &str = "frame,track_id,x,y,z,distance_m";

/// Rows ordered as given; distance is the norm of the position.
pub fn write_localizations(rows: &[Localization]) -> String {
    let mut out = format!("{LOCALIZATION_HEADER}\n");
    for r in rows {
        let p = r.position;
        let _ = writeln!(out, "{},{},{},{},{},{}", r.frame, r.id, p.x, p.y, p.z, p.coords.norm());
    }
    out
}

pub fn read_localizations(text: &str) -> Result<Vec<Localization>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() || row.starts_with('#') || (idx == 0 && row == LOCALIZATION_HEADER) {
            continue;
        }
        let err = |message: String| Error::Parse { line, message };
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, got {}", fields.len())));
        }
        let frame = fields[0].parse::<usize>().map_err(|_| err(format!("bad frame '{}'", fields[0])))?;
        let id = fields[1].parse::<i64>().map_err(|_| err(format!("bad track id '{}'", fields[1])))?;
        let mut v = [0.0; 4];
        for (slot, s) in v.iter_mut().zip(&fields[2..]) {
            *slot = s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| err(format!("bad number '{s}'")))?;
        }
        let position = Point3::new(v[0], v[1], v[2]);
        if (position.coords.norm() - v[3]).abs() > 1e-6 * v[3].abs().max(1.0) {
            return Err(err(format!("distance {} disagrees with the position", v[3])));
        }
        out.push(Localization { frame, id, position });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let rows = vec![
            Localization { frame: 0, id: 3, position: Point3::new(1.5, 10.0, 20.25) },
            Localization { frame: 7, id: -1, position: Point3::new(-0.1, 9.0, 1.0 / 3.0) },
        ];
        assert_eq!(read_localizations(&write_localizations(&rows)).unwrap(), rows);
        assert_eq!(write_localizations(&[]), format!("{LOCALIZATION_HEADER}\n"));
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let text = format!("{LOCALIZATION_HEADER}\n0,1,0,0,1,1\n0,1,0,x,1,1\n");
        assert!(matches!(read_localizations(&text), Err(Error::Parse { line: 3, .. })));
    }
}
