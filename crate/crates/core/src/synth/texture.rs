/// Deterministic 64-bit mix (splitmix64 finalizer).
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform value in `[0, 1)` attached to an integer lattice point.
pub(crate) fn lattice_value(seed: u64, ix: i64, iz: i64, channel: u64) -> f64 {
    let h = mix64(seed ^ mix64(ix as u64 ^ mix64(iz as u64 ^ mix64(channel))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Quintic fade: C2-continuous, so rendered images have continuous gradients.
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Band-limited value noise on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub base: f64,
    pub amplitude: f64,
    /// Size of the coarsest noise cell, meters.
    pub cell: f64,
    pub octaves: u32,
    pub seed: u64,
}

impl Texture {
    fn octave(&self, x: f64, z: f64, o: u32) -> f64 {
        let (ix, iz) = (x.floor(), z.floor());
        let (fx, fz) = (fade(x - ix), fade(z - iz));
        let (ix, iz) = (ix as i64, iz as i64);
        let v = |dx: i64, dz: i64| lattice_value(self.seed, ix + dx, iz + dz, o as u64);
        let a = v(0, 0) + (v(1, 0) - v(0, 0)) * fx;
        let b = v(0, 1) + (v(1, 1) - v(0, 1)) * fx;
        a + (b - a) * fz
    }

    /// Intensity at world ground coordinates `(x, z)`, within
    /// `base +- amplitude`.
    pub fn intensity(&self, x: f64, z: f64) -> f64 {
        if self.amplitude == 0.0 {
            return self.base;
        }
        let mut total = 0.0;
        let mut weight = 0.0;
        let mut freq = 1.0 / self.cell;
        let mut amp = 1.0;
        for o in 0..self.octaves.max(1) {
            total += amp * (self.octave(x * freq, z * freq, o) * 2.0 - 1.0);
            weight += amp;
            freq *= 2.0;
            amp *= 0.5;
        }
        self.base + self.amplitude * total / weight
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_and_deterministic() {
        let t = Texture {
            base: 0.5,
            amplitude: 0.3,
            cell: 0.1,
            octaves: 3,
            seed: 9,
        };
        for i in 0..500 {
            let (x, z) = (i as f64 * 0.0137 - 3.0, i as f64 * 0.0291 + 1.0);
            let v = t.intensity(x, z);
            assert!((0.2..=0.8).contains(&v));
            assert_eq!(v, t.intensity(x, z));
        }
    }

    #[test]
    fn continuous_across_cells() {
        let t = Texture {
            base: 0.5,
            amplitude: 0.3,
            cell: 1.0,
            octaves: 1,
            seed: 1,
        };
        let eps = 1e-9;
        assert!((t.intensity(2.0 - eps, 0.3) - t.intensity(2.0 + eps, 0.3)).abs() < 1e-8);
    }
}
