use crate::error::{Error, Result};
use crate::image::PixelBlock;

/// Block correlation form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NccMode {
    /// `sum(a*b) / sqrt(sum(a^2) * sum(b^2))` on raw intensities. Invariant to
    /// intensity scale, not to offsets.
    #[default]
    Raw,
    /// Zero-mean variant, invariant to gain and offset.
    MeanCentered,
}

/// Normalized cross-correlation of two equally sized blocks, in `[-1, 1]`.
pub fn ncc_score(a: &PixelBlock, b: &PixelBlock) -> Result<f64> {
    ncc_score_with(a, b, NccMode::Raw)
}

pub fn ncc_score_with(a: &PixelBlock, b: &PixelBlock, mode: NccMode) -> Result<f64> {
    if a.intensities.len() != b.intensities.len() {
        return Err(Error::invalid(format!(
            "block sizes differ: {} vs {}",
            a.intensities.len(),
            b.intensities.len()
        )));
    }
    ncc_slices(&a.intensities, &b.intensities, mode)
}

pub(crate) fn ncc_slices(a: &[f64], b: &[f64], mode: NccMode) -> Result<f64> {
    let (ma, mb) = match mode {
        NccMode::Raw => (0.0, 0.0),
        NccMode::MeanCentered => {
            let n = a.len() as f64;
            (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n)
        }
    };
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let x = x - ma;
        let y = y - mb;
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa <= 0.0 || bb <= 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((ab / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}
