//! Pinhole camera over a flat ground plane.
//!
//! World frame: `x`, `y` span the ground plane, `z` points up and the ground
//! sits at `z = 0`. Pixel coordinates are continuous; pixel `(i, j)` covers
//! `[i, i + 1) x [j, j + 1)`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Minimum camera height above the ground plane, in meters.
pub const MIN_POSE_HEIGHT: f64 = 0.1;
/// Optical axes closer than this (in cosine) to the ground plane are degenerate.
pub const DEGENERATE_INCIDENCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidCamera(&'static str),
    #[error("camera is {0:.3} m above the ground plane (minimum {MIN_POSE_HEIGHT} m)")]
    PoseTooLow(f64),
    #[error("camera optical axis is parallel to the ground plane")]
    DegeneratePose,
    #[error("camera is not nadir-dominant (optical axis {0:.1} deg from straight down)")]
    NotNadir(f64),
    #[error("image ray does not intersect the ground plane")]
    RayMissesGround,
    #[error("homography system is rank deficient")]
    SingularConfiguration,
    #[error("homography held-out residual {0:e} m exceeds tolerance")]
    RegistrationResidual(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidCamera("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidCamera("image must be non-empty"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(GeometryError::InvalidCamera("cx outside the image"));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidCamera("cy outside the image"));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Image corners in pixel coordinates, counter-clockwise from the origin.
    pub fn corners(&self) -> [Pixel; 4] {
        let (w, h) = (self.width as f64, self.height as f64);
        [
            Pixel { u: 0.0, v: 0.0 },
            Pixel { u: w, v: 0.0 },
            Pixel { u: w, v: h },
            Pixel { u: 0.0, v: h },
        ]
    }
}

impl Default for CameraModel {
    /// 240x240 nadir camera whose footprint at 5 m AGL is 6.67 m wide.
    fn default() -> Self {
        Self {
            fx: 180.0,
            fy: 180.0,
            cx: 120.0,
            cy: 120.0,
            width: 240,
            height: 240,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameTag {
    WorldToCamera,
    CameraToWorld,
}

/// Rigid transform `p_to = rotation * p_from + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub tag: FrameTag,
}

impl RigidPose {
    /// World-to-camera pose of a camera centered at `(x, y, height)` looking
    /// straight down, with the image `x` axis along `heading` (radians,
    /// counter-clockwise from world `x`).
    pub fn nadir(x: f64, y: f64, height: f64, heading: f64) -> Self {
        Self::tilted(x, y, height, heading, 0.0, 0.0)
    }

    /// Like [`RigidPose::nadir`] with the camera additionally rotated by
    /// `pitch` about its own `x` axis and `roll` about its own `y` axis.
    pub fn tilted(x: f64, y: f64, height: f64, heading: f64, roll: f64, pitch: f64) -> Self {
        let (s, c) = heading.sin_cos();
        let nadir = Matrix3::new(c, s, 0.0, s, -c, 0.0, 0.0, 0.0, -1.0);
        let (sp, cp) = pitch.sin_cos();
        let (sr, cr) = roll.sin_cos();
        let about_x = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
        let about_y = Matrix3::new(cr, 0.0, sr, 0.0, 1.0, 0.0, -sr, 0.0, cr);
        let rotation = about_y * about_x * nadir;
        let center = Vector3::new(x, y, height);
        Self {
            rotation,
            translation: -(rotation * center),
            tag: FrameTag::WorldToCamera,
        }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
            tag: match self.tag {
                FrameTag::WorldToCamera => FrameTag::CameraToWorld,
                FrameTag::CameraToWorld => FrameTag::WorldToCamera,
            },
        }
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
            tag: self.tag,
        }
    }

    /// Camera center in world coordinates (for a world-to-camera pose).
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Optical axis expressed in world coordinates.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }

    fn check_projectable(&self) -> Result<(), GeometryError> {
        let h = self.camera_center().z;
        if !(h > MIN_POSE_HEIGHT) {
            return Err(GeometryError::PoseTooLow(h));
        }
        if self.optical_axis().z.abs() < DEGENERATE_INCIDENCE {
            return Err(GeometryError::DegeneratePose);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
}

impl GroundPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &GroundPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    /// Integer pixel containing this coordinate, if inside the image.
    pub fn index(&self, cam: &CameraModel) -> Option<(usize, usize)> {
        if self.u >= 0.0 && self.v >= 0.0 {
            let (i, j) = (self.u as usize, self.v as usize);
            if i < cam.width && j < cam.height {
                return Some((i, j));
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    InView(Pixel),
    OutOfView,
}

/// Projects a ground point into the image, without bounds checks.
///
/// Returns `None` when the point lies behind the camera.
pub fn project_to_image_plane(p: &GroundPoint, cam: &CameraModel, pose: &RigidPose) -> Option<Pixel> {
    let pc = pose.transform(&p.homogeneous());
    if pc.z <= 0.0 {
        return None;
    }
    let s = cam.intrinsics() * pc;
    Some(Pixel {
        u: s.x / s.z,
        v: s.y / s.z,
    })
}

/// Projects a ground point to a pixel, or reports it out of view.
pub fn project_ground_to_pixel(
    p: &GroundPoint,
    cam: &CameraModel,
    pose: &RigidPose,
) -> Result<Projection, GeometryError> {
    pose.check_projectable()?;
    Ok(match project_to_image_plane(p, cam, pose) {
        Some(px) if px.index(cam).is_some() => Projection::InView(px),
        _ => Projection::OutOfView,
    })
}

/// Intersects the ray through pixel coordinate `px` with the ground plane.
pub fn back_project_pixel(
    px: &Pixel,
    cam: &CameraModel,
    pose: &RigidPose,
) -> Result<GroundPoint, GeometryError> {
    pose.check_projectable()?;
    let ray_cam = Vector3::new((px.u - cam.cx) / cam.fx, (px.v - cam.cy) / cam.fy, 1.0);
    let ray = pose.rotation.transpose() * ray_cam;
    let center = pose.camera_center();
    if ray.z >= 0.0 {
        return Err(GeometryError::RayMissesGround);
    }
    let s = -center.z / ray.z;
    Ok(GroundPoint::new(center.x + s * ray.x, center.y + s * ray.y))
}

/// Ground quadrilateral seen by the camera, corners in image-corner order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub corners: [GroundPoint; 4],
}

impl Footprint {
    pub fn area(&self) -> f64 {
        let c = &self.corners;
        let mut twice = 0.0;
        for k in 0..4 {
            let (a, b) = (c[k], c[(k + 1) % 4]);
            twice += a.x * b.y - b.x * a.y;
        }
        0.5 * twice.abs()
    }

    pub fn centroid(&self) -> GroundPoint {
        let (sx, sy) = self
            .corners
            .iter()
            .fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
        GroundPoint::new(sx / 4.0, sy / 4.0)
    }
}

/// Back-projects the four image corners onto the ground.
pub fn ground_footprint(cam: &CameraModel, pose: &RigidPose) -> Result<Footprint, GeometryError> {
    pose.check_projectable()?;
    let down = -pose.optical_axis().z;
    if down < std::f64::consts::FRAC_1_SQRT_2 {
        return Err(GeometryError::NotNadir(down.clamp(-1.0, 1.0).acos().to_degrees()));
    }
    let px = cam.corners();
    let mut corners = [GroundPoint::new(0.0, 0.0); 4];
    for (dst, p) in corners.iter_mut().zip(px.iter()) {
        *dst = back_project_pixel(p, cam, pose)?;
    }
    Ok(Footprint { corners })
}

/// Planar metric frame of an ego-anchored map: origin under the camera, `x`
/// axis along the camera heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapFrame {
    pub origin: GroundPoint,
    pub yaw: f64,
}

impl MapFrame {
    pub fn new(origin: GroundPoint, yaw: f64) -> Self {
        Self { origin, yaw }
    }

    pub fn of_pose(pose: &RigidPose) -> Self {
        let c = pose.camera_center();
        let r = pose.rotation;
        Self {
            origin: GroundPoint::new(c.x, c.y),
            yaw: r[(0, 1)].atan2(r[(0, 0)]),
        }
    }

    pub fn world_to_frame(&self, p: &GroundPoint) -> GroundPoint {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (p.x - self.origin.x, p.y - self.origin.y);
        GroundPoint::new(c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn frame_to_world(&self, p: &GroundPoint) -> GroundPoint {
        let (s, c) = self.yaw.sin_cos();
        GroundPoint::new(
            self.origin.x + c * p.x - s * p.y,
            self.origin.y + s * p.x + c * p.y,
        )
    }
}

/// Homography from the previous map's planar coordinates to the current one's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationHomography(Matrix3<f64>);

impl RegistrationHomography {
    /// Wraps a matrix, normalizing `h33` to 1.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let h33 = m[(2, 2)];
        if h33.abs() < 1e-15 {
            return Err(GeometryError::SingularConfiguration);
        }
        let m = m / h33;
        if m.determinant().abs() <= 1e-12 {
            return Err(GeometryError::SingularConfiguration);
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, p: &GroundPoint) -> GroundPoint {
        let v = self.0 * Vector3::new(p.x, p.y, 1.0);
        GroundPoint::new(v.x / v.z, v.y / v.z)
    }

    pub fn inverse(&self) -> Self {
        let inv = self
            .0
            .try_inverse()
            .expect("registration homography is invertible by construction");
        Self(inv / inv[(2, 2)])
    }

    /// `self ∘ first`.
    pub fn compose(&self, first: &RegistrationHomography) -> Matrix3<f64> {
        self.0 * first.0
    }
}

fn normalizing_transform(pts: &[GroundPoint]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
    let (mx, my) = (mx / n, my / n);
    let mean_dist = pts.iter().map(|p| (p.x - mx).hypot(p.y - my)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

/// Direct linear transform for a planar homography `dst ~ H src` from four or
/// more correspondences, with isotropic normalization of both point sets.
pub fn dlt_homography(
    src: &[GroundPoint],
    dst: &[GroundPoint],
) -> Result<RegistrationHomography, GeometryError> {
    assert_eq!(src.len(), dst.len(), "correspondence lists differ in length");
    if src.len() < 4 {
        return Err(GeometryError::SingularConfiguration);
    }
    let ts = normalizing_transform(src);
    let td = normalizing_transform(dst);
    let norm = |t: &Matrix3<f64>, p: &GroundPoint| {
        let v = t * Vector3::new(p.x, p.y, 1.0);
        (v.x, v.y)
    };

    let rows = 2 * src.len();
    let mut a = DMatrix::<f64>::zeros(rows, 8);
    let mut b = DVector::<f64>::zeros(rows);
    for (k, (s, d)) in src.iter().zip(dst).enumerate() {
        let (x, y) = norm(&ts, s);
        let (u, v) = norm(&td, d);
        let r = 2 * k;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        b[r] = u;
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r + 1] = v;
    }

    let singular = a.singular_values();
    let (smax, smin) = singular
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    if !(smin > 1e-12 * smax) {
        return Err(GeometryError::SingularConfiguration);
    }
    // normal equations with full pivoting, then one round of iterative
    // refinement against the original system
    let ata = a.transpose() * &a;
    let lu = ata.full_piv_lu();
    let solve = |rhs: &DVector<f64>| {
        lu.solve(&(a.transpose() * rhs))
            .ok_or(GeometryError::SingularConfiguration)
    };
    let mut h = solve(&b)?;
    h += solve(&(&b - &a * &h))?;
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let td_inv = td.try_inverse().ok_or(GeometryError::SingularConfiguration)?;
    RegistrationHomography::from_matrix(td_inv * hn * ts)
}

/// Tolerance on the held-out correspondence of [`registration_homography`].
pub const REGISTRATION_RESIDUAL_TOL: f64 = 1e-6;

/// Homography taking planar coordinates of the map anchored at `pose_prev`
/// to those of the map anchored at `pose_curr`, estimated from the previous
/// footprint's corners and checked on the footprint centroid.
pub fn registration_homography(
    pose_prev: &RigidPose,
    pose_curr: &RigidPose,
    cam: &CameraModel,
) -> Result<RegistrationHomography, GeometryError> {
    pose_curr.check_projectable()?;
    let footprint = ground_footprint(cam, pose_prev)?;
    let prev = MapFrame::of_pose(pose_prev);
    let curr = MapFrame::of_pose(pose_curr);
    let src: Vec<_> = footprint.corners.iter().map(|g| prev.world_to_frame(g)).collect();
    let dst: Vec<_> = footprint.corners.iter().map(|g| curr.world_to_frame(g)).collect();
    let h = dlt_homography(&src, &dst)?;

    let held_out = footprint.centroid();
    let predicted = h.apply(&prev.world_to_frame(&held_out));
    let residual = predicted.distance(&curr.world_to_frame(&held_out));
    if !(residual < REGISTRATION_RESIDUAL_TOL) {
        return Err(GeometryError::RegistrationResidual(residual));
    }
    Ok(h)
}
