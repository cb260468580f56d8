//! Synthetic event and frame generation for a planar occluded scene under
//! linear camera motion.
//!
//! The scene is a textured target plane at depth `d` behind a planar occluder
//! at depth `d_occ`, both centered on the optical axis of the trajectory
//! origin. Per-pixel brightness is ray-cast with nearest-neighbor plane
//! sampling, and events are emitted with the standard threshold-crossing rule:
//! a pixel whose log intensity has moved by at least `eta` from its reference
//! level emits `floor(|delta| / eta)` events and advances the reference by the
//! emitted amount.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::camera::{CameraModel, Trajectory};
use crate::error::{Error, Result};
use crate::event::{Event, EventLabel, EventStream};
use crate::float::{to_f64, Real};
use crate::image::Image;

/// Intensity floor applied before taking logs; bounds event counts for
/// black surfaces.
pub const LOG_CLAMP: f64 = 1e-4;

/// What a pixel ray hits first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    /// Opaque occluder cell.
    Occluder,
    /// The scene behind the occluder: target plane or background.
    Scene,
}

/// Parametric occluded scene; together with a camera and trajectory it fully
/// determines the simulated event stream.
#[derive(Debug, Clone)]
pub struct SceneSpec<F> {
    /// Target intensities in `[0, 1]` on the plane at `depth_target`.
    pub target_image: Image<F>,
    /// Meters per target cell.
    pub target_pitch: F,
    /// Target plane depth `d` in meters.
    pub depth_target: F,
    /// Opaque cells of the occluder plane.
    pub occluder_mask: Array2<bool>,
    /// Occluder intensities; opaque cells render 0 when absent.
    pub occluder_texture: Option<Image<F>>,
    /// Meters per occluder cell.
    pub occluder_pitch: F,
    /// Occluder plane depth `d_occ` in meters, `0 < d_occ < d`.
    pub depth_occluder: F,
    /// Intensity for rays that miss both planes.
    pub background: F,
    /// Contrast threshold `eta > 0`.
    pub eta: F,
    /// Mean physical-noise events per pixel per second.
    pub noise_rate: F,
    /// Seed for all randomness.
    pub seed: u64,
}

impl<F: Real> SceneSpec<F> {
    /// Check all scene invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_occluder > F::zero() && self.depth_occluder < self.depth_target) {
            return Err(Error::Validation(format!(
                "need 0 < d_occ < d, got d_occ = {}, d = {}",
                self.depth_occluder, self.depth_target
            )));
        }
        if self.eta <= F::zero() {
            return Err(Error::Validation(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.noise_rate < F::zero() {
            return Err(Error::Validation(format!("noise_rate must be >= 0, got {}", self.noise_rate)));
        }
        if self.target_pitch <= F::zero() || self.occluder_pitch <= F::zero() {
            return Err(Error::Validation("pitches must be > 0".into()));
        }
        let unit = |v: F| v >= F::zero() && v <= F::one();
        if !self.target_image.iter().all(|&v| unit(v)) {
            return Err(Error::Validation("target intensities must lie in [0, 1]".into()));
        }
        if !unit(self.background) {
            return Err(Error::Validation("background intensity must lie in [0, 1]".into()));
        }
        if let Some(tex) = &self.occluder_texture {
            if tex.dim() != self.occluder_mask.dim() {
                return Err(Error::Validation(format!(
                    "occluder texture {:?} does not match mask {:?}",
                    tex.dim(),
                    self.occluder_mask.dim()
                )));
            }
            if !tex.iter().all(|&v| unit(v)) {
                return Err(Error::Validation("occluder intensities must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Copy of the scene with the occluder removed; used for ground-truth
    /// reference renders.
    pub fn without_occluder(&self) -> Self {
        let mut clear = self.clone();
        clear.occluder_mask = Array2::from_elem(self.occluder_mask.dim(), false);
        clear
    }
}

/// Nearest-neighbor lookup of a plane map centered on the optical axis.
/// Returns `None` outside the map extent.
fn sample_plane<T: Copy>(map: &Array2<T>, pitch: f64, wx: f64, wy: f64) -> Option<T> {
    let (rows, cols) = map.dim();
    let col = (wx / pitch + (cols as f64 - 1.0) / 2.0).round();
    let row = (wy / pitch + (rows as f64 - 1.0) / 2.0).round();
    if col < 0.0 || row < 0.0 || col >= cols as f64 || row >= rows as f64 {
        return None;
    }
    Some(map[[row as usize, col as usize]])
}

/// Render one pinhole view of the scene: per pixel, the first surface the ray
/// hits (opaque occluder cell, target plane, or background).
pub fn render_view<F: Real>(
    scene: &SceneSpec<F>,
    cam: &CameraModel<F>,
    pose: [F; 3],
) -> Image<F> {
    render_view_with_surfaces(scene, cam, pose).0
}

/// [`render_view`] plus the per-pixel surface identity used for event labeling.
pub fn render_view_with_surfaces<F: Real>(
    scene: &SceneSpec<F>,
    cam: &CameraModel<F>,
    pose: [F; 3],
) -> (Image<F>, Array2<Surface>) {
    let (h, w) = (cam.height as usize, cam.width as usize);
    let mut intensity = Array2::from_elem((h, w), scene.background);
    let mut surface = Array2::from_elem((h, w), Surface::Scene);
    let (cx, cy) = (to_f64(cam.cx), to_f64(cam.cy));
    let (fx, fy) = (to_f64(cam.fx), to_f64(cam.fy));
    let (px, py) = (to_f64(pose[0]), to_f64(pose[1]));
    let d_occ = to_f64(scene.depth_occluder);
    let d_tgt = to_f64(scene.depth_target);
    let occ_pitch = to_f64(scene.occluder_pitch);
    let tgt_pitch = to_f64(scene.target_pitch);

    for y in 0..h {
        for x in 0..w {
            let dir_x = (x as f64 - cx) / fx;
            let dir_y = (y as f64 - cy) / fy;
            let occluded = sample_plane(
                &scene.occluder_mask,
                occ_pitch,
                px + dir_x * d_occ,
                py + dir_y * d_occ,
            )
            .unwrap_or(false);
            if occluded {
                let v = match &scene.occluder_texture {
                    Some(tex) => sample_plane(tex, occ_pitch, px + dir_x * d_occ, py + dir_y * d_occ)
                        .unwrap_or(F::zero()),
                    None => F::zero(),
                };
                intensity[[y, x]] = v;
                surface[[y, x]] = Surface::Occluder;
            } else if let Some(v) = sample_plane(
                &scene.target_image,
                tgt_pitch,
                px + dir_x * d_tgt,
                py + dir_y * d_tgt,
            ) {
                intensity[[y, x]] = v;
            }
        }
    }
    (intensity, surface)
}

/// A pixel whose per-step log-intensity change reached `5 * eta`; the chosen
/// `dt_sample` is too coarse there.
#[derive(Debug, Clone, PartialEq)]
pub struct SimWarning {
    pub t: u64,
    pub x: u32,
    pub y: u32,
    pub delta_log: f64,
}

/// Result of [`simulate_events`]: the labeled stream plus sampling warnings.
#[derive(Debug, Clone)]
pub struct SimulatedEvents {
    pub stream: EventStream,
    pub warnings: Vec<SimWarning>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn log_clamped<F: Real>(v: F) -> f64 {
    to_f64(v).max(LOG_CLAMP).ln()
}

/// Sample times covering the trajectory span: multiples of `dt_sample` from
/// `t_start`, always ending exactly at `t_end`.
fn sample_times(traj_start: u64, traj_end: u64, dt: u64) -> Vec<u64> {
    let mut times = Vec::new();
    let mut t = traj_start;
    while t < traj_end {
        times.push(t);
        t = t.saturating_add(dt);
    }
    times.push(traj_end);
    times
}

/// Simulate a ground-truth-labeled event stream from the scene.
///
/// Per pixel a reference log intensity is tracked; each sampling step emits
/// `floor(|L - L_ref| / eta)` events with timestamps spread uniformly inside
/// the step, labeled by the surface transition seen at that pixel. Poisson
/// physical noise is superimposed from a per-pixel counter-based generator,
/// so results are deterministic for a given `SceneSpec`.
pub fn simulate_events<F: Real>(
    scene: &SceneSpec<F>,
    cam: &CameraModel<F>,
    traj: &Trajectory<F>,
    dt_sample: u64,
) -> Result<SimulatedEvents> {
    scene.validate()?;
    if dt_sample == 0 {
        return Err(Error::Argument("dt_sample must be > 0".into()));
    }
    let (h, w) = (cam.height as usize, cam.width as usize);
    let times = sample_times(traj.t_start(), traj.t_end(), dt_sample);
    let eta = to_f64(scene.eta);

    let (first_img, first_surf) = render_view_with_surfaces(scene, cam, traj.pose_at(times[0])?);
    let mut l_ref = Array2::from_shape_fn((h, w), |idx| log_clamped(first_img[idx]));
    let mut prev_surf = first_surf;

    let mut tagged: Vec<(Event, EventLabel)> = Vec::new();
    let mut warnings = Vec::new();

    for step in 1..times.len() {
        let (t0, t1) = (times[step - 1], times[step]);
        let (img, surf) = render_view_with_surfaces(scene, cam, traj.pose_at(t1)?);
        let span = t1 - t0;
        for y in 0..h {
            for x in 0..w {
                let level = log_clamped(img[[y, x]]);
                let diff = level - l_ref[[y, x]];
                if diff.abs() >= 5.0 * eta {
                    warnings.push(SimWarning { t: t1, x: x as u32, y: y as u32, delta_log: diff });
                }
                let count = (diff.abs() / eta).floor() as u64;
                if count > 0 {
                    let polarity: i8 = if diff > 0.0 { 1 } else { -1 };
                    let label = match (prev_surf[[y, x]], surf[[y, x]]) {
                        (Surface::Occluder, Surface::Scene) | (Surface::Scene, Surface::Occluder) => {
                            EventLabel::SignalOa
                        }
                        (Surface::Occluder, Surface::Occluder) => EventLabel::NoiseOo,
                        (Surface::Scene, Surface::Scene) => EventLabel::NoiseAa,
                    };
                    for j in 1..=count {
                        let ts = t0 + j * span / (count + 1);
                        tagged.push((Event::new(ts, x as u32, y as u32, polarity), label));
                    }
                    l_ref[[y, x]] += count as f64 * eta * f64::from(polarity);
                }
            }
        }
        prev_surf = surf;
    }

    // Physical noise: homogeneous Poisson per pixel, independent of any
    // traversal order via a per-pixel seeded generator.
    let rate = to_f64(scene.noise_rate);
    if rate > 0.0 {
        let duration_s = (traj.t_end() - traj.t_start()) as f64 / 1e6;
        let lambda = rate * duration_s;
        for y in 0..h as u32 {
            for x in 0..w as u32 {
                let pixel_seed = splitmix64(scene.seed ^ splitmix64(u64::from(y) * w as u64 + u64::from(x)));
                let mut rng = ChaCha8Rng::seed_from_u64(pixel_seed);
                let count = Poisson::new(lambda)
                    .map_err(|e| Error::Argument(format!("noise rate: {e}")))?
                    .sample(&mut rng) as u64;
                for _ in 0..count {
                    let ts = rng.random_range(traj.t_start()..=traj.t_end());
                    let polarity: i8 = if rng.random::<bool>() { 1 } else { -1 };
                    tagged.push((Event::new(ts, x, y, polarity), EventLabel::NoisePhysical));
                }
            }
        }
    }

    tagged.sort_by_key(|(e, _)| e.t);
    let (events, labels): (Vec<_>, Vec<_>) = tagged.into_iter().unzip();
    let stream = EventStream::new(cam.width, cam.height, events, Some(labels))?;
    Ok(SimulatedEvents { stream, warnings })
}

/// Render `n_views` occluded observations at poses uniformly spaced in time;
/// the input to the frame-based shift-and-average baseline.
pub fn simulate_frames<F: Real>(
    scene: &SceneSpec<F>,
    cam: &CameraModel<F>,
    traj: &Trajectory<F>,
    n_views: usize,
) -> Result<Vec<([F; 3], Image<F>)>> {
    scene.validate()?;
    if n_views < 2 {
        return Err(Error::Argument(format!("n_views must be >= 2, got {n_views}")));
    }
    let span = traj.t_end() - traj.t_start();
    (0..n_views)
        .map(|i| {
            let t = traj.t_start() + (i as u64 * span) / (n_views as u64 - 1);
            let pose = traj.pose_at(t)?;
            Ok((pose, render_view(scene, cam, pose)))
        })
        .collect()
}
