use serde::{Deserialize, Serialize};

use super::Vec3;

/// Placement of an object on the ground: translation plus a yaw about the
/// vertical axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vec3,
    /// Degrees, normalized to `[-180, 180)`.
    pub yaw: f64,
}

impl Pose {
    pub fn new(translation: Vec3, yaw_deg: f64) -> Self {
        Pose { translation, yaw: normalize_yaw(yaw_deg) }
    }

    pub fn identity() -> Self {
        Pose::default()
    }

    /// Rigid transform rotating about the vertical axis through `pivot`.
    pub fn transform_about(&self, pivot: Vec3) -> RigidTransform {
        let yaw = normalize_yaw(self.yaw).to_radians();
        RigidTransform {
            cos: yaw.cos(),
            sin: yaw.sin(),
            rotate: self.yaw != 0.0,
            pivot: Vec3::new(pivot.x, pivot.y, 0.0),
            translation: self.translation,
        }
    }

    /// Compose with an offset pose: translations add and yaws add.
    pub fn offset(&self, dx: Vec3, dyaw: f64) -> Pose {
        Pose::new(self.translation + dx, self.yaw + dyaw)
    }
}

pub(crate) fn normalize_yaw(deg: f64) -> f64 {
    let y = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if y >= 180.0 {
        y - 360.0
    } else {
        y
    }
}

/// `p ↦ Rz(p − pivot) + pivot + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    cos: f64,
    sin: f64,
    rotate: bool,
    pivot: Vec3,
    translation: Vec3,
}

impl RigidTransform {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        let q = if self.rotate {
            let d = p - self.pivot;
            Vec3::new(
                self.cos * d.x - self.sin * d.y + self.pivot.x,
                self.sin * d.x + self.cos * d.y + self.pivot.y,
                p.z,
            )
        } else {
            p
        };
        q + self.translation
    }

    /// Pull a world-frame gradient back into the object frame (`Rᵀ g`).
    pub fn pullback(&self, g: Vec3) -> Vec3 {
        if !self.rotate {
            return g;
        }
        Vec3::new(
            self.cos * g.x + self.sin * g.y,
            -self.sin * g.x + self.cos * g.y,
            g.z,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yaw_normalization() {
        assert_eq!(normalize_yaw(180.0), -180.0);
        assert_eq!(normalize_yaw(-180.0), -180.0);
        assert_eq!(normalize_yaw(190.0), -170.0);
        assert_eq!(normalize_yaw(-190.0), 170.0);
        assert_eq!(normalize_yaw(720.0), 0.0);
    }

    #[test]
    fn pullback_is_rotation_transpose() {
        let t = Pose::new(Vec3::new(1.0, 2.0, 0.0), 37.0).transform_about(Vec3::ZERO);
        let g = Vec3::new(0.3, -1.2, 0.7);
        let a = Vec3::new(-0.4, 0.9, 2.0);
        // <R a, g> == <a, Rᵀ g>
        let ra = t.apply(a) - t.apply(Vec3::ZERO);
        assert!((ra.dot(g) - a.dot(t.pullback(g))).abs() < 1e-12);
    }
}
