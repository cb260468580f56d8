//! Pinhole camera intrinsics and the linear constant-velocity trajectory.

use crate::error::{Error, Result};
use crate::float::{fl, Real};

/// Pinhole intrinsics: `K = [[fx, 0, cx], [0, fy, cy], [0, 0, 1]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel<F> {
    pub fx: F,
    pub fy: F,
    pub cx: F,
    pub cy: F,
    pub width: u32,
    pub height: u32,
}

impl<F: Real> CameraModel<F> {
    pub fn new(fx: F, fy: F, cx: F, cy: F, width: u32, height: u32) -> Result<Self> {
        if fx <= F::zero() || fy <= F::zero() {
            return Err(Error::Validation(format!("focal lengths must be positive, got ({fx}, {fy})")));
        }
        if cx < F::zero() || cx >= fl(width as f64) || cy < F::zero() || cy >= fl(height as f64) {
            return Err(Error::Validation(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} sensor"
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }
}

/// Linear constant-velocity camera path parallel to the image plane.
///
/// The camera center is at the origin at `t_start`; `pose_at(ref_time)` is the
/// reference pose for refocusing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory<F> {
    velocity: [F; 3],
    t_start: u64,
    t_end: u64,
    ref_time: u64,
}

impl<F: Real> Trajectory<F> {
    pub fn new(velocity: [F; 3], t_start: u64, t_end: u64, ref_time: u64) -> Result<Self> {
        if t_start >= t_end {
            return Err(Error::Validation(format!(
                "trajectory span must be non-empty, got [{t_start}, {t_end}]"
            )));
        }
        if velocity[2] != F::zero() {
            return Err(Error::Validation(format!(
                "velocity z-component must be exactly 0, got {}",
                velocity[2]
            )));
        }
        if ref_time < t_start || ref_time > t_end {
            return Err(Error::Validation(format!(
                "ref_time {ref_time} outside [{t_start}, {t_end}]"
            )));
        }
        Ok(Self { velocity, t_start, t_end, ref_time })
    }

    /// Trajectory with the reference pose at the temporal midpoint.
    pub fn with_midpoint_ref(velocity: [F; 3], t_start: u64, t_end: u64) -> Result<Self> {
        Self::new(velocity, t_start, t_end, t_start + (t_end - t_start) / 2)
    }

    pub fn velocity(&self) -> [F; 3] {
        self.velocity
    }

    pub fn t_start(&self) -> u64 {
        self.t_start
    }

    pub fn t_end(&self) -> u64 {
        self.t_end
    }

    pub fn ref_time(&self) -> u64 {
        self.ref_time
    }

    pub fn contains(&self, t: u64) -> bool {
        t >= self.t_start && t <= self.t_end
    }

    /// Camera center at time `t` in meters; rotation is always identity.
    pub fn pose_at(&self, t: u64) -> Result<[F; 3]> {
        if !self.contains(t) {
            return Err(Error::Range(format!(
                "t = {} outside trajectory span [{}, {}]",
                t, self.t_start, self.t_end
            )));
        }
        let dt_s = fl::<F>((t - self.t_start) as f64 / 1e6);
        Ok([self.velocity[0] * dt_s, self.velocity[1] * dt_s, self.velocity[2] * dt_s])
    }

    /// The reference pose, `pose_at(ref_time)`.
    pub fn ref_pose(&self) -> [F; 3] {
        self.pose_at(self.ref_time).expect("ref_time inside span by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_at_start_is_origin() {
        let traj = Trajectory::new([0.1f64, 0.0, 0.0], 0, 1_000_000, 500_000).unwrap();
        assert_eq!(traj.pose_at(0).unwrap(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn pose_linear_in_time() {
        let traj = Trajectory::new([0.1f64, 0.0, 0.0], 0, 1_000_000, 500_000).unwrap();
        let c = traj.pose_at(500_000).unwrap();
        assert!((c[0] - 0.05).abs() < 1e-12);
        assert_eq!(c[1], 0.0);
    }

    #[test]
    fn ref_pose_matches_ref_time() {
        let traj = Trajectory::new([0.2f64, -0.1, 0.0], 100, 900_100, 300_100).unwrap();
        assert_eq!(traj.ref_pose(), traj.pose_at(300_100).unwrap());
    }

    #[test]
    fn out_of_span_is_range_error() {
        let traj = Trajectory::new([0.1f64, 0.0, 0.0], 100, 200, 150).unwrap();
        assert!(matches!(traj.pose_at(99), Err(Error::Range(_))));
        assert!(matches!(traj.pose_at(201), Err(Error::Range(_))));
    }

    #[test]
    fn nonzero_z_velocity_rejected() {
        assert!(Trajectory::new([0.1f64, 0.0, 0.01], 0, 100, 50).is_err());
    }

    #[test]
    fn camera_validation() {
        assert!(CameraModel::new(100.0f64, 100.0, 32.0, 32.0, 64, 64).is_ok());
        assert!(CameraModel::new(0.0f64, 100.0, 32.0, 32.0, 64, 64).is_err());
        assert!(CameraModel::new(100.0f64, 100.0, 64.0, 32.0, 64, 64).is_err());
    }
}
