//! Rigid transforms, OXTS-to-pose conversion, the rectified projection
//! chain and 3-D box corners.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Rotation3, Vector3, Vector4};
use thiserror::Error;

use crate::ingest::{CalibCamToCam, CalibVeloToCam, OxtsRecord, Tracklet};

/// Equatorial Earth radius (m) used by the Mercator projection.
pub const EARTH_RADIUS: f64 = 6_378_137.0;

const ORTHONORMAL_TOL: f64 = 1e-4;
const BEHIND_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("rotation deviates from orthonormal by {0:.3e}")]
    NonOrthonormal(f64),

    #[error("latitude {0} degrees is at or beyond a pole")]
    PoleSingularity(f64),

    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),

    #[error("time stamps are not strictly increasing at sample {0}")]
    NonMonotonicTime(usize),

    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),

    #[error("pose index {index} out of range for {len} poses")]
    PoseIndex { index: usize, len: usize },
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

/// Proper rigid motion `p ↦ R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    let gram = (r.transpose() * r - Matrix3::identity()).abs().max();
    gram.max((r.determinant() - 1.0).abs())
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Validates `rotation` to within 1e-4.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = orthonormality_error(&rotation);
        if !(err <= ORTHONORMAL_TOL) {
            return Err(GeometryError::NonOrthonormal(err));
        }
        Ok(RigidTransform { rotation, translation })
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        RigidTransform { rotation: Matrix3::identity(), translation: t }
    }

    pub fn rot_z(angle: f64) -> Self {
        RigidTransform { rotation: rot_z(angle), translation: Vector3::zeros() }
    }

    pub fn validate(&self) -> Result<()> {
        RigidTransform::new(self.rotation, self.translation).map(|_| ())
    }

    /// 4×4 homogeneous matrix.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// `a ∘ b`: apply `b` first.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> Result<RigidTransform> {
    a.validate()?;
    b.validate()?;
    Ok(RigidTransform {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    })
}

pub fn invert(a: &RigidTransform) -> Result<RigidTransform> {
    a.validate()?;
    let rt = a.rotation.transpose();
    Ok(RigidTransform { rotation: rt, translation: -(rt * a.translation) })
}

pub fn apply(a: &RigidTransform, p: &Vector3<f64>) -> Vector3<f64> {
    a.rotation * p + a.translation
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::x_axis(), a).matrix()
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::y_axis(), a).matrix()
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::z_axis(), a).matrix()
}

/// World pose of an OXTS sample: Mercator position scaled by the origin
/// latitude, altitude as z, attitude `Rz(yaw)·Ry(pitch)·Rx(roll)`.
pub fn oxts_to_pose(rec: &OxtsRecord, origin: &OxtsRecord) -> Result<RigidTransform> {
    for lat in [rec.lat, origin.lat] {
        if !(lat.abs() < 90.0) {
            return Err(GeometryError::PoleSingularity(lat));
        }
    }
    let s = (origin.lat * PI / 180.0).cos();
    let x = s * EARTH_RADIUS * rec.lon * PI / 180.0;
    let y = s * EARTH_RADIUS * (PI / 4.0 + rec.lat * PI / 360.0).tan().ln();
    let rotation = rot_z(rec.yaw) * rot_y(rec.pitch) * rot_x(rec.roll);
    Ok(RigidTransform { rotation, translation: Vector3::new(x, y, rec.alt) })
}

/// Rectified pinhole chain for camera 02.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub p_rect: Matrix3x4<f64>,
    pub r_rect: Matrix3<f64>,
    pub velo_to_cam: RigidTransform,
    /// Image extent `(width, height)` in pixels, used for clamping.
    pub image_size: (usize, usize),
}

/// A projected point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl CameraModel {
    pub fn from_calib(cam: &CalibCamToCam, velo: &CalibVeloToCam, image_size: (usize, usize)) -> Result<Self> {
        let r = orthonormality_error(&cam.r_rect_00);
        if !(r <= ORTHONORMAL_TOL) {
            return Err(GeometryError::NonOrthonormal(r));
        }
        Ok(CameraModel {
            p_rect: cam.p_rect_02,
            r_rect: cam.r_rect_00,
            velo_to_cam: RigidTransform::new(velo.rotation, velo.translation)?,
            image_size,
        })
    }

    /// Identity rectification and extrinsics with `P = [I | 0]`.
    pub fn identity(image_size: (usize, usize)) -> Self {
        CameraModel {
            p_rect: Matrix3x4::identity(),
            r_rect: Matrix3::identity(),
            velo_to_cam: RigidTransform::identity(),
            image_size,
        }
    }

    /// `P · pad4(R_rect) · pad4(velo_to_cam)` as one 3×4 matrix.
    pub fn matrix(&self) -> Matrix3x4<f64> {
        let mut r = Matrix4::identity();
        r.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.r_rect);
        self.p_rect * r * self.velo_to_cam.to_homogeneous()
    }

    /// Homogeneous image coordinates of a Velodyne point.
    pub fn project_homogeneous(&self, p: &Vector4<f64>) -> Vector3<f64> {
        self.matrix() * p
    }
}

/// Projects a Velodyne-frame point to pixels.
pub fn project(cam: &CameraModel, p_velo: &Vector3<f64>) -> Result<Pixel> {
    let y = cam.project_homogeneous(&p_velo.push(1.0));
    if y.z <= BEHIND_EPS {
        return Err(GeometryError::BehindCamera(y.z));
    }
    Ok(Pixel { u: y.x / y.z, v: y.y / y.z, depth: y.z })
}

/// The eight corners of a tracklet box at one pose, Velodyne frame.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxCorners {
    pub corners: [Vector3<f64>; 8],
}

/// Corners `Rz(rz)·(±l/2, ±w/2, {0,h}) + t`. Order: bottom face
/// counter-clockwise from `(+l/2, +w/2)`, then the top face.
pub fn box_corners(t: &Tracklet, pose_index: usize) -> Result<BoxCorners> {
    let pose = t
        .poses
        .get(pose_index)
        .ok_or(GeometryError::PoseIndex { index: pose_index, len: t.poses.len() })?;
    let r = rot_z(pose.rz);
    let centre = Vector3::new(pose.tx, pose.ty, pose.tz);
    let (hl, hw) = (t.l / 2.0, t.w / 2.0);
    let footprint = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
    let mut corners = [Vector3::zeros(); 8];
    for (i, z) in [0.0, t.h].into_iter().enumerate() {
        for (j, &(x, y)) in footprint.iter().enumerate() {
            corners[4 * i + j] = r * Vector3::new(x, y, z) + centre;
        }
    }
    Ok(BoxCorners { corners })
}

/// Axis-aligned image rectangle (pixels), inclusive of `min`, exclusive of
/// nothing: callers rasterize `floor(min)..ceil(max)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox2d {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    pub all_behind: bool,
}

impl BBox2d {
    pub fn area(&self) -> f64 {
        if self.all_behind {
            return 0.0;
        }
        (self.u_max - self.u_min).max(0.0) * (self.v_max - self.v_min).max(0.0)
    }

    /// Whether pixel `(x, y)`'s centre lies inside the box grown by
    /// `margin` pixels on every side.
    pub fn contains_pixel(&self, x: usize, y: usize, margin: f64) -> bool {
        if self.all_behind {
            return false;
        }
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        cx >= self.u_min - margin && cx <= self.u_max + margin && cy >= self.v_min - margin && cy <= self.v_max + margin
    }
}

/// Hull of the in-front corners, clamped to `[0, width] × [0, height]`.
pub fn corners_to_bbox2d(cam: &CameraModel, b: &BoxCorners) -> BBox2d {
    let projected: Vec<Pixel> = b.corners.iter().filter_map(|c| project(cam, c).ok()).collect();
    if projected.is_empty() {
        return BBox2d { u_min: 0.0, v_min: 0.0, u_max: 0.0, v_max: 0.0, all_behind: true };
    }
    let (w, h) = (cam.image_size.0 as f64, cam.image_size.1 as f64);
    let fold = |f: fn(f64, f64) -> f64, init: f64, g: fn(&Pixel) -> f64| projected.iter().map(g).fold(init, f);
    BBox2d {
        u_min: fold(f64::min, f64::INFINITY, |p| p.u).clamp(0.0, w),
        v_min: fold(f64::min, f64::INFINITY, |p| p.v).clamp(0.0, h),
        u_max: fold(f64::max, f64::NEG_INFINITY, |p| p.u).clamp(0.0, w),
        v_max: fold(f64::max, f64::NEG_INFINITY, |p| p.v).clamp(0.0, h),
        all_behind: false,
    }
}

/// Forward differences; the last sample repeats the previous velocity.
pub fn finite_velocity(positions: &[Vector3<f64>], times: &[f64]) -> Result<Vec<Vector3<f64>>> {
    let n = positions.len();
    if n < 2 || times.len() != n {
        return Err(GeometryError::TooFewSamples(n.min(times.len())));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n - 1 {
        let dt = times[i + 1] - times[i];
        if !(dt > 0.0) {
            return Err(GeometryError::NonMonotonicTime(i + 1));
        }
        out.push((positions[i + 1] - positions[i]) / dt);
    }
    out.push(out[n - 2]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TrackletPose;

    fn close(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
        (a - b).abs().max() <= tol
    }

    #[test]
    fn compose_identity() {
        let i = RigidTransform::identity();
        assert_eq!(compose(&i, &i).unwrap(), i);
    }

    #[test]
    fn quarter_turn() {
        let p = apply(&RigidTransform::rot_z(PI / 2.0), &Vector3::new(1.0, 0.0, 0.0));
        assert!(close(&p, &Vector3::new(0.0, 1.0, 0.0), 1e-15));
    }

    #[test]
    fn rejects_non_orthonormal() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = 1.01;
        assert!(matches!(RigidTransform::new(r, Vector3::zeros()), Err(GeometryError::NonOrthonormal(_))));
        let bad = RigidTransform { rotation: r, translation: Vector3::zeros() };
        assert!(invert(&bad).is_err());
        // a reflection is orthogonal but not a rotation
        let refl = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(refl, Vector3::zeros()).is_err());
    }

    #[test]
    fn identity_projection() {
        let cam = CameraModel::identity((100, 100));
        let px = project(&cam, &Vector3::new(2.0, 1.0, 4.0)).unwrap();
        assert_eq!((px.u, px.v, px.depth), (0.5, 0.25, 4.0));
        assert!(matches!(project(&cam, &Vector3::new(1.0, 1.0, 0.0)), Err(GeometryError::BehindCamera(_))));
    }

    #[test]
    fn unit_box_corners() {
        let t = Tracklet {
            object_type: "Car".into(),
            h: 2.0,
            w: 2.0,
            l: 2.0,
            first_frame: 0,
            poses: vec![TrackletPose { tx: 0.0, ty: 0.0, tz: 0.0, rz: 0.0 }],
        };
        let b = box_corners(&t, 0).unwrap();
        for c in &b.corners {
            assert_eq!(c.x.abs(), 1.0);
            assert_eq!(c.y.abs(), 1.0);
            assert!(c.z == 0.0 || c.z == 2.0);
        }
        assert!(matches!(box_corners(&t, 1), Err(GeometryError::PoseIndex { index: 1, len: 1 })));
    }

    #[test]
    fn yaw_swaps_axes() {
        let t = Tracklet {
            object_type: "Car".into(),
            h: 1.0,
            w: 2.0,
            l: 4.0,
            first_frame: 0,
            poses: vec![TrackletPose { tx: 0.0, ty: 0.0, tz: 0.0, rz: PI / 2.0 }],
        };
        let b = box_corners(&t, 0).unwrap();
        let x_extent = b.corners.iter().map(|c| c.x).fold(f64::MIN, f64::max);
        let y_extent = b.corners.iter().map(|c| c.y).fold(f64::MIN, f64::max);
        assert!((x_extent - 1.0).abs() < 1e-12);
        assert!((y_extent - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bbox_all_behind() {
        let cam = CameraModel::identity((10, 10));
        let t = Tracklet {
            object_type: "Car".into(),
            h: 1.0,
            w: 1.0,
            l: 1.0,
            first_frame: 0,
            poses: vec![TrackletPose { tx: 0.0, ty: 0.0, tz: -5.0, rz: 0.0 }],
        };
        let bb = corners_to_bbox2d(&cam, &box_corners(&t, 0).unwrap());
        assert!(bb.all_behind);
        assert_eq!(bb.area(), 0.0);
    }

    #[test]
    fn velocity_basics() {
        let p: Vec<_> = (0..4).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let t: Vec<_> = (0..4).map(|i| i as f64 * 0.1).collect();
        for v in finite_velocity(&p, &t).unwrap() {
            assert!((v.x - 10.0).abs() < 1e-9);
        }
        let still = vec![Vector3::new(3.0, 4.0, 5.0); 3];
        assert!(finite_velocity(&still, &t[..3]).unwrap().iter().all(|v| *v == Vector3::zeros()));
        assert_eq!(finite_velocity(&p[..2], &[0.0, 0.0]), Err(GeometryError::NonMonotonicTime(1)));
        assert_eq!(finite_velocity(&p[..1], &[0.0]), Err(GeometryError::TooFewSamples(1)));
    }

    #[test]
    fn pole() {
        let mut rec = OxtsRecord::zero();
        rec.lat = 90.0;
        assert_eq!(oxts_to_pose(&rec, &OxtsRecord::zero()), Err(GeometryError::PoleSingularity(90.0)));
    }
}
