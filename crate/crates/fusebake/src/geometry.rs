//! Camera models and rigid motion.
//!
//! All distances are millimetres. Camera space follows the usual computer
//! vision convention: x right, y down, z forward along the optical axis.
//! Pixel coordinates are continuous with integer coordinates at pixel
//! centers, so pixel (0, 0) covers the square from (-0.5, -0.5) to
//! (0.5, 0.5).

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// 3-vector of f64, used for points, directions, and translations.
pub type Vec3 = Vector3<f64>;

/// 3x3 matrix of f64, used for rotations.
pub type Mat3 = Matrix3<f64>;

/// Pinhole camera intrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    /// Focal length along x, in pixels.
    pub fx: f64,
    /// Focal length along y, in pixels.
    pub fy: f64,
    /// Principal point x, in pixels.
    pub cx: f64,
    /// Principal point y, in pixels.
    pub cy: f64,
    /// Image width in pixels.
    pub width: u32,
    /// Image height in pixels.
    pub height: u32,
}

impl CameraIntrinsics {
    /// Creates validated intrinsics.
    ///
    /// Focal lengths must be positive and the principal point must lie
    /// inside the image.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx = {fx}, fy = {fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidIntrinsics(format!(
                "image size must be nonzero, got {width}x{height}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite())
            || cx <= 0.0
            || cy <= 0.0
            || cx >= f64::from(width)
            || cy >= f64::from(height)
        {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Projects a camera-space point to continuous pixel coordinates.
    ///
    /// Returns [`Error::BehindCamera`] when the point has non-positive
    /// depth.
    pub fn project(&self, point: Vec3) -> Result<(f64, f64)> {
        if point.z <= 0.0 || !point.z.is_finite() {
            return Err(Error::BehindCamera { z: point.z });
        }
        let u = self.fx * point.x / point.z + self.cx;
        let v = self.fy * point.y / point.z + self.cy;
        Ok((u, v))
    }

    /// Back-projects a pixel at the given depth to a camera-space point.
    ///
    /// `depth` is the z coordinate of the result, in mm, and must be
    /// positive and finite.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Result<Vec3> {
        if depth <= 0.0 || !depth.is_finite() {
            return Err(Error::InvalidDepth { depth });
        }
        Ok(Vec3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        ))
    }

    /// Whether a continuous pixel coordinate rounds to a pixel inside the
    /// image.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5
            && v >= -0.5
            && u < f64::from(self.width) - 0.5
            && v < f64::from(self.height) - 0.5
    }
}

/// Rotation plus translation, mapping points between coordinate frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    /// Rotation part, orthonormal with determinant +1.
    pub rotation: Mat3,
    /// Translation part, in mm.
    pub translation: Vec3,
}

impl RigidTransform {
    /// Creates a validated transform.
    ///
    /// The rotation must be orthonormal with determinant +1 within 1e-6.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let drift = (rotation.transpose() * rotation - Mat3::identity()).abs().max();
        if drift > 1e-6 || (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidTransform(format!(
                "rotation not orthonormal: drift {drift:.2e}, det {}",
                rotation.determinant()
            )));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidTransform(format!(
                "translation not finite: {translation:?}"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// The identity transform.
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Applies the transform to a point.
    pub fn transform_point(&self, point: Vec3) -> Vec3 {
        self.rotation * point + self.translation
    }

    /// Rotates a direction without translating it.
    pub fn transform_vector(&self, vector: Vec3) -> Vec3 {
        self.rotation * vector
    }

    /// Composition `self` after `other`: the result applies `other` first.
    ///
    /// Accumulated floating point drift in the rotation is snapped back to
    /// the nearest proper rotation.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let rotation = renormalize_rotation(self.rotation * other.rotation);
        RigidTransform {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// The inverse transform.
    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Projects a possibly drifted rotation matrix back onto SO(3).
fn renormalize_rotation(m: Mat3) -> Mat3 {
    let drift = (m.transpose() * m - Mat3::identity()).abs().max();
    if drift <= 1e-12 {
        return m;
    }
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Builds the world-to-camera transform for a camera at `eye` looking at
/// `target`.
///
/// `down_hint` breaks the roll ambiguity; it should roughly point along the
/// image's downward direction in world coordinates. Fails if the view
/// direction is parallel to the hint or `eye` equals `target`.
pub fn look_at(eye: Vec3, target: Vec3, down_hint: Vec3) -> Result<RigidTransform> {
    let forward = target - eye;
    if forward.norm() < 1e-9 {
        return Err(Error::InvalidTransform(
            "look_at: eye and target coincide".into(),
        ));
    }
    let forward = forward.normalize();
    let right = down_hint.cross(&forward);
    if right.norm() < 1e-9 {
        return Err(Error::InvalidTransform(
            "look_at: view direction parallel to down hint".into(),
        ));
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let rotation = Mat3::from_rows(&[
        right.transpose(),
        down.transpose(),
        forward.transpose(),
    ]);
    RigidTransform::new(rotation, -(rotation * eye))
}

/// Intrinsics and extrinsics of a combined depth plus high resolution
/// colour rig.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdCalibration {
    /// Depth camera intrinsics.
    pub depth: CameraIntrinsics,
    /// High resolution colour camera intrinsics.
    pub hd: CameraIntrinsics,
    /// Maps depth camera space to colour camera space.
    pub depth_to_hd: RigidTransform,
}

impl RgbdCalibration {
    /// A synthetic rig: VGA depth camera and a 2048x1536 colour camera with
    /// the same field of view, offset 25 mm along x.
    pub fn synthetic_default() -> Self {
        let depth = CameraIntrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480)
            .expect("default depth intrinsics are valid");
        let hd = CameraIntrinsics::new(1680.0, 1680.0, 1023.5, 767.5, 2048, 1536)
            .expect("default hd intrinsics are valid");
        let depth_to_hd = RigidTransform {
            rotation: Mat3::identity(),
            translation: Vec3::new(25.0, 0.0, 0.0),
        };
        Self {
            depth,
            hd,
            depth_to_hd,
        }
    }

    /// Maps a depth pixel with a measured depth to the corresponding pixel
    /// of the colour camera.
    ///
    /// Back-projects through the depth intrinsics, moves the point into
    /// colour camera space, and reprojects. The result may fall outside the
    /// colour image; callers check with [`CameraIntrinsics::contains`].
    pub fn depth_pixel_to_hd_pixel(&self, u: f64, v: f64, depth: f64) -> Result<(f64, f64)> {
        let point = self.depth.unproject(u, v, depth)?;
        let in_hd = self.depth_to_hd.transform_point(point);
        self.hd.project(in_hd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn intr(fx: f64, fy: f64, cx: f64, cy: f64) -> CameraIntrinsics {
        CameraIntrinsics::new(fx, fy, cx, cy, 640, 480).unwrap()
    }

    #[test]
    fn project_known_point() {
        let k = intr(500.0, 500.0, 320.0, 240.0);
        let (u, v) = k.project(Vec3::new(100.0, 0.0, 1000.0)).unwrap();
        assert_relative_eq!(u, 370.0, max_relative = 1e-12);
        assert_relative_eq!(v, 240.0, max_relative = 1e-12);
    }

    #[test]
    fn project_rejects_non_positive_depth() {
        let k = intr(500.0, 500.0, 320.0, 240.0);
        assert!(matches!(
            k.project(Vec3::new(0.0, 0.0, 0.0)),
            Err(Error::BehindCamera { .. })
        ));
        assert!(matches!(
            k.project(Vec3::new(10.0, 10.0, -5.0)),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn unproject_inverts_project() {
        let k = intr(500.0, 500.0, 320.0, 240.0);
        let p = k.unproject(370.0, 240.0, 1000.0).unwrap();
        assert_relative_eq!(p, Vec3::new(100.0, 0.0, 1000.0), epsilon = 1e-9);
    }

    #[test]
    fn unproject_rejects_bad_depth() {
        let k = intr(500.0, 500.0, 320.0, 240.0);
        assert!(matches!(
            k.unproject(10.0, 10.0, 0.0),
            Err(Error::InvalidDepth { .. })
        ));
        assert!(matches!(
            k.unproject(10.0, 10.0, f64::NAN),
            Err(Error::InvalidDepth { .. })
        ));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(-1.0, 500.0, 320.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 700.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 0, 480).is_err());
    }

    #[test]
    fn rotation_quarter_turn_about_z() {
        let r = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let t = RigidTransform::new(r, Vec3::zeros()).unwrap();
        assert_relative_eq!(
            t.transform_point(Vec3::new(1.0, 0.0, 0.0)),
            Vec3::new(0.0, 1.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -0.8, 1.1);
        let t = RigidTransform::new(*r.matrix(), Vec3::new(10.0, -20.0, 35.0)).unwrap();
        let id = t.compose(&t.inverse());
        assert_relative_eq!(id.rotation, Mat3::identity(), epsilon = 1e-9);
        assert_relative_eq!(id.translation, Vec3::zeros(), epsilon = 1e-9);
    }

    #[test]
    fn compose_applies_right_operand_first() {
        let a = RigidTransform::new(Mat3::identity(), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let rz = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let b = RigidTransform::new(rz, Vec3::zeros()).unwrap();
        let p = a.compose(&b).transform_point(Vec3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(p, Vec3::new(1.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn transform_rejects_non_rotation() {
        let m = Mat3::new(2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(m, Vec3::zeros()).is_err());
        let reflect = Mat3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(reflect, Vec3::zeros()).is_err());
    }

    #[test]
    fn look_at_forward_is_identity_rotation() {
        let t = look_at(
            Vec3::zeros(),
            Vec3::new(0.0, 0.0, 100.0),
            Vec3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        assert_relative_eq!(t.rotation, Mat3::identity(), epsilon = 1e-12);
        assert_relative_eq!(t.translation, Vec3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn look_at_points_camera_axis_at_target() {
        let eye = Vec3::new(300.0, -120.0, 50.0);
        let target = Vec3::new(0.0, 40.0, 600.0);
        let t = look_at(eye, target, Vec3::new(0.0, 1.0, 0.0)).unwrap();
        let in_cam = t.transform_point(target);
        assert_relative_eq!(in_cam.x, 0.0, epsilon = 1e-9);
        assert_relative_eq!(in_cam.y, 0.0, epsilon = 1e-9);
        assert_relative_eq!(in_cam.z, (target - eye).norm(), epsilon = 1e-9);
        assert_relative_eq!(t.transform_point(eye), Vec3::zeros(), epsilon = 1e-9);
    }

    #[test]
    fn hd_mapping_with_doubled_intrinsics_doubles_pixels() {
        let calib = RgbdCalibration {
            depth: intr(525.0, 525.0, 319.5, 239.5),
            hd: CameraIntrinsics::new(1050.0, 1050.0, 639.0, 479.0, 1280, 960).unwrap(),
            depth_to_hd: RigidTransform::identity(),
        };
        let (u, v) = calib.depth_pixel_to_hd_pixel(100.0, 50.0, 800.0).unwrap();
        assert_relative_eq!(u, 200.0, epsilon = 1e-9);
        assert_relative_eq!(v, 100.0, epsilon = 1e-9);
    }

    #[test]
    fn hd_mapping_with_baseline_shifts_by_disparity() {
        let calib = RgbdCalibration {
            depth: intr(500.0, 500.0, 320.0, 240.0),
            hd: intr(500.0, 500.0, 320.0, 240.0),
            depth_to_hd: RigidTransform {
                rotation: Mat3::identity(),
                translation: Vec3::new(50.0, 0.0, 0.0),
            },
        };
        let (u, v) = calib.depth_pixel_to_hd_pixel(320.0, 240.0, 1000.0).unwrap();
        // disparity = fx * baseline / depth = 500 * 50 / 1000
        assert_relative_eq!(u, 345.0, epsilon = 1e-9);
        assert_relative_eq!(v, 240.0, epsilon = 1e-9);
    }
}
