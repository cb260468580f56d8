//! Event refocusing: project every event onto the reference imaging plane at
//! the target depth, aligning signal events and scattering noise events.
//!
//! With identity rotation the projection reduces to a per-event pixel shift
//! `(fx * Tx / d, fy * Ty / d)` where `T` is the camera translation from the
//! reference pose to the pose at the event's timestamp. That direction makes
//! events from a static point at depth `d` land on the point's reference
//! projection, which is the whole purpose of the operation.

use crate::camera::{CameraModel, Trajectory};
use crate::error::{Error, Result};
use crate::event::{Event, EventLabel, EventStream};
use crate::float::{fl, to_f64, Real};

/// How fractional refocused coordinates become pixel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    #[default]
    Nearest,
    Floor,
}

/// What happens to events that land outside the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundsPolicy {
    /// Remove the event (it carries no reconstructible light at the reference view).
    #[default]
    Drop,
    /// Clamp coordinates to the sensor border.
    Keep,
}

/// Parameters of the refocusing projection.
#[derive(Debug, Clone)]
pub struct RefocusParams<F> {
    pub cam: CameraModel<F>,
    pub traj: Trajectory<F>,
    /// Target depth `d` in meters.
    pub depth: F,
    pub rounding: Rounding,
    pub bounds_policy: BoundsPolicy,
}

impl<F: Real> RefocusParams<F> {
    pub fn new(cam: CameraModel<F>, traj: Trajectory<F>, depth: F) -> Result<Self> {
        if depth <= F::zero() {
            return Err(Error::Validation(format!("depth must be > 0, got {depth}")));
        }
        Ok(Self { cam, traj, depth, rounding: Rounding::default(), bounds_policy: BoundsPolicy::default() })
    }

    /// Pixel shift applied to events at time `t`.
    pub fn pixel_shift(&self, t: u64) -> Result<(F, F)> {
        let pose = self.traj.pose_at(t)?;
        let reference = self.traj.ref_pose();
        let tx = pose[0] - reference[0];
        let ty = pose[1] - reference[1];
        Ok((self.cam.fx * tx / self.depth, self.cam.fy * ty / self.depth))
    }
}

/// Refocused coordinates before rounding; exposed for geometric tests.
pub fn refocus_event_unrounded<F: Real>(e: Event, params: &RefocusParams<F>) -> Result<(F, F)> {
    let (sx, sy) = params.pixel_shift(e.t)?;
    Ok((fl::<F>(e.x as f64) + sx, fl::<F>(e.y as f64) + sy))
}

/// Project one event onto the reference imaging plane. Returns `None` when
/// the event leaves the sensor under the `Drop` policy. Timestamp and
/// polarity are never altered.
pub fn refocus_event<F: Real>(e: Event, params: &RefocusParams<F>) -> Result<Option<Event>> {
    let (x, y) = refocus_event_unrounded(e, params)?;
    let (x, y) = match params.rounding {
        Rounding::Nearest => (x.round(), y.round()),
        Rounding::Floor => (x.floor(), y.floor()),
    };
    let (xi, yi) = (to_f64(x) as i64, to_f64(y) as i64);
    let (w, h) = (params.cam.width as i64, params.cam.height as i64);
    let in_bounds = (0..w).contains(&xi) && (0..h).contains(&yi);
    match (in_bounds, params.bounds_policy) {
        (false, BoundsPolicy::Drop) => Ok(None),
        (false, BoundsPolicy::Keep) => Ok(Some(Event::new(
            e.t,
            xi.clamp(0, w - 1) as u32,
            yi.clamp(0, h - 1) as u32,
            e.p,
        ))),
        (true, _) => Ok(Some(Event::new(e.t, xi as u32, yi as u32, e.p))),
    }
}

/// Counters from a stream refocus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefocusReport {
    pub input_events: usize,
    pub dropped: usize,
}

/// Refocus every event of a stream; labels are carried through and ordering
/// is preserved (timestamps are unchanged).
pub fn refocus_stream<F: Real>(
    stream: &EventStream,
    params: &RefocusParams<F>,
) -> Result<(EventStream, RefocusReport)> {
    let mut events = Vec::with_capacity(stream.len());
    let mut labels = stream.labels().map(|_| Vec::with_capacity(stream.len()));
    let mut dropped = 0usize;
    for (i, (e, label)) in stream.iter_labeled().enumerate() {
        let refocused = refocus_event(e, params)
            .map_err(|err| Error::Range(format!("event {}: {}", i, err)))?;
        match refocused {
            Some(out) => {
                events.push(out);
                if let (Some(ls), Some(l)) = (&mut labels, label) {
                    ls.push(l);
                }
            }
            None => dropped += 1,
        }
    }
    let report = RefocusReport { input_events: stream.len(), dropped };
    let out = EventStream::new(params.cam.width, params.cam.height, events, labels)?;
    Ok((out, report))
}

/// Spatial spread of (optionally label-filtered) events: the population
/// variance of x plus the population variance of y, in px^2. Zero means all
/// selected events landed on a single pixel.
pub fn alignment_score<F: Real>(
    stream: &EventStream,
    label_filter: Option<EventLabel>,
) -> Result<F> {
    let mut n = 0.0f64;
    let (mut sx, mut sy, mut sxx, mut syy) = (0.0f64, 0.0, 0.0, 0.0);
    for (e, label) in stream.iter_labeled() {
        if let Some(want) = label_filter {
            if label != Some(want) {
                continue;
            }
        }
        let (x, y) = (e.x as f64, e.y as f64);
        n += 1.0;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
    }
    if n == 0.0 {
        return Err(Error::Argument("no events selected for alignment score".into()));
    }
    let var_x = (sxx / n - (sx / n).powi(2)).max(0.0);
    let var_y = (syy / n - (sy / n).powi(2)).max(0.0);
    Ok(fl(var_x + var_y))
}
