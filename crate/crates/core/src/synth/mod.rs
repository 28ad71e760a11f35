//! Deterministic synthetic scenes and parametric degradations.
//!
//! Scenes are textured rectangles over a textured background. Every
//! texture is a hashed lattice function of world coordinates, so frames,
//! flows and masks are exact and reproducible from the seed.

mod degrade;
mod drive;
mod scene;

use thiserror::Error;

pub use degrade::{degrade_flow, degrade_low_light, degrade_sample, DegradeSpec};
pub use drive::{write_kitti_drive, KittiDriveSpec, KittiObject};
pub use scene::{gen_scene, write_scene, write_scene_dataset, ObjectSpec, SceneSpec};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("object {index} leaves the {height}x{width} image by frame {frame}")]
    ObjectOutOfBounds { index: usize, frame: usize, height: usize, width: usize },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),

    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),

    #[error(transparent)]
    Annotation(#[from] crate::annotation::AnnotationError),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

/// SplitMix64 finalizer; the basis of every lattice texture.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform value in `[0, 1)` at an integer lattice point.
pub(crate) fn lattice(seed: u64, x: i64, y: i64, channel: u64) -> f32 {
    let h = mix(seed ^ mix((x as u64).wrapping_mul(0x1000_0000_01B3) ^ mix(y as u64 ^ (channel << 48))));
    (h >> 40) as f32 / (1u64 << 24) as f32
}

/// Bilinearly interpolated value noise with lattice spacing `scale`.
pub(crate) fn value_noise(seed: u64, x: f32, y: f32, scale: f32, channel: u64) -> f32 {
    let (fx, fy) = (x / scale, y / scale);
    let (x0, y0) = (fx.floor(), fy.floor());
    let (tx, ty) = (fx - x0, fy - y0);
    let (ix, iy) = (x0 as i64, y0 as i64);
    let v = |dx: i64, dy: i64| lattice(seed, ix + dx, iy + dy, channel);
    let top = v(0, 0) * (1.0 - tx) + v(1, 0) * tx;
    let bottom = v(0, 1) * (1.0 - tx) + v(1, 1) * tx;
    top * (1.0 - ty) + bottom * ty
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_deterministic_and_bounded() {
        for i in 0..200 {
            let (x, y) = (i as f32 * 1.7 - 100.0, i as f32 * 0.3);
            let a = value_noise(5, x, y, 6.0, 1);
            assert_eq!(a, value_noise(5, x, y, 6.0, 1));
            assert!((0.0..1.0).contains(&a));
        }
        assert_ne!(lattice(1, 0, 0, 0), lattice(2, 0, 0, 0));
    }
}
