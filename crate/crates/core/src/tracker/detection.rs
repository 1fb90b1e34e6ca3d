use std::fmt::Write as _;

use nalgebra::{Matrix3, Point2, Vector3};

use crate::error::{Error, Result};

/// Axis-aligned box, top-left origin, pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("box needs positive finite size, got {w}x{h}")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> Point2<f64> {
        Point2::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Bottom-center pixel, where the object touches the ground.
    pub fn footpoint(&self) -> Point2<f64> {
        Point2::new(self.x + self.w / 2.0, self.y + self.h)
    }

    /// `(x0, y0, x1, y1)`.
    pub fn corners(&self) -> [f64; 4] {
        [self.x, self.y, self.x + self.w, self.y + self.h]
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let [a0, a1, a2, a3] = self.corners();
        let [b0, b1, b2, b3] = other.corners();
        let iw = (a2.min(b2) - a0.max(b0)).max(0.0);
        let ih = (a3.min(b3) - a1.max(b1)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// Box enclosing the homography image of the four corners.
    pub fn warped(&self, h: &Matrix3<f64>) -> Option<BBox> {
        let [x0, y0, x1, y1] = self.corners();
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (x, y) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
            let p = h * Vector3::new(x, y, 1.0);
            if p.z <= 0.0 {
                return None;
            }
            let (u, v) = (p.x / p.z, p.y / p.z);
            lo = (lo.0.min(u), lo.1.min(v));
            hi = (hi.0.max(u), hi.1.max(v));
        }
        BBox::from_corners(lo.0, lo.1, hi.0, hi.1).ok()
    }

    pub fn lerp(&self, other: &BBox, t: f64) -> BBox {
        BBox {
            x: self.x + (other.x - self.x) * t,
            y: self.y + (other.y - self.y) * t,
            w: self.w + (other.w - self.w) * t,
            h: self.h + (other.h - self.h) * t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: usize,
    /// Identity; `-1` for raw detector output.
    pub id: i64,
    pub bbox: BBox,
    pub score: f64,
    pub class: i64,
    pub embedding: Option<Vec<f64>>,
}

impl Detection {
    pub fn new(frame: usize, bbox: BBox, score: f64, class: i64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            frame,
            id: -1,
            bbox,
            score,
            class,
            embedding: None,
        })
    }
}

fn fmt_num(out: &mut String, v: f64) {
    // Shortest round-trip representation keeps files stable and lossless.
    let _ = write!(out, "{v}");
}

/// Writes `frame,id,x,y,w,h,score,class[,e1,...]` rows, one per detection.
pub fn write_detections<'a>(dets: impl IntoIterator<Item = &'a Detection>) -> String {
    let mut out = String::new();
    for d in dets {
        let _ = write!(out, "{},{},", d.frame, d.id);
        for v in [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.score] {
            fmt_num(&mut out, v);
            out.push(',');
        }
        let _ = write!(out, "{}", d.class);
        if let Some(e) = &d.embedding {
            for v in e {
                out.push(',');
                fmt_num(&mut out, *v);
            }
        }
        out.push('\n');
    }
    out
}

/// Parses detection/track CSV. Track files may carry a score of `-1` on
/// interpolated rows, which is accepted and mapped to 0 with `interpolated`
/// semantics left to the caller.
pub fn read_detections(text: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    let mut emb_len: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 8 {
            return Err(err(format!("expected at least 8 fields, got {}", fields.len())));
        }
        let int = |s: &str, what: &str| -> Result<i64> {
            s.parse::<i64>()
                .map_err(|_| err(format!("bad {what} '{s}'")))
        };
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad {what} '{s}'")))
        };
        let frame = int(fields[0], "frame")?;
        if frame < 0 {
            return Err(err(format!("negative frame {frame}")));
        }
        let id = int(fields[1], "id")?;
        let bbox = BBox::new(
            num(fields[2], "x")?,
            num(fields[3], "y")?,
            num(fields[4], "w")?,
            num(fields[5], "h")?,
        )
        .map_err(|e| err(e.to_string()))?;
        let score = num(fields[6], "score")?;
        if !((0.0..=1.0).contains(&score) || score == -1.0) {
            return Err(err(format!("score {score} outside [0, 1]")));
        }
        let class = int(fields[7], "class")?;
        let embedding = if fields.len() > 8 {
            let e: Vec<f64> = fields[8..]
                .iter()
                .map(|s| num(s, "embedding value"))
                .collect::<Result<_>>()?;
            match emb_len {
                Some(n) if n != e.len() => {
                    return Err(err(format!("embedding length {} differs from {n}", e.len())))
                }
                _ => emb_len = Some(e.len()),
            }
            Some(e)
        } else {
            None
        };
        out.push(Detection {
            frame: frame as usize,
            id,
            bbox,
            score,
            class,
            embedding,
        });
    }
    Ok(out)
}

/// Groups detections by frame index into `frames` buckets (dropping any
/// beyond the range).
pub fn group_by_frame(dets: &[Detection], frames: usize) -> Vec<Vec<Detection>> {
    let mut out = vec![Vec::new(); frames];
    for d in dets {
        if d.frame < frames {
            out[d.frame].push(d.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_of_shifted_boxes() {
        let a = BBox::new(0.0, 0.0, 50.0, 50.0).unwrap();
        let b = a.translated(2.0, 0.0);
        assert!((a.iou(&b) - 48.0 / 52.0).abs() < 1e-12);
        assert_eq!(a.iou(&a.translated(60.0, 0.0)), 0.0);
        assert_eq!(a.iou(&a), 1.0);
    }

    #[test]
    fn identity_warp() {
        let a = BBox::new(3.0, 4.0, 5.0, 6.0).unwrap();
        assert_eq!(a.warped(&Matrix3::identity()).unwrap(), a);
    }

    #[test]
    fn csv_round_trip() {
        let mut d = Detection::new(3, BBox::new(1.5, 2.0, 10.0, 20.0).unwrap(), 0.75, 1).unwrap();
        d.embedding = Some(vec![0.1, -0.2]);
        let text = write_detections([&d]);
        assert_eq!(text, "3,-1,1.5,2,10,20,0.75,1,0.1,-0.2\n");
        assert_eq!(read_detections(&text).unwrap(), vec![d]);
    }

    #[test]
    fn malformed_row_names_line() {
        let text = "0,-1,1,2,3,4,0.5,1\n1,-1,1,2,abc,4,0.5,1\n";
        match read_detections(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_width_rejected() {
        assert!(read_detections("0,-1,1,2,0,4,0.5,1\n").is_err());
    }
}
