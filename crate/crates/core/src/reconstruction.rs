//! Target-image reconstruction: event accumulation (ACC), frame-based
//! shift-and-average (F-SAI), and the hybrid network path.

use ndarray::{Array2, Array3};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::event::EventStream;
use crate::float::{fl, to_f64, Real};
use crate::framing::FrameSequence;
use crate::image::Image;
use crate::network::HybridNetwork;

/// Which reconstruction produced an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Acc,
    Fsai,
    Hybrid,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Acc => "acc",
            Method::Fsai => "fsai",
            Method::Hybrid => "hybrid",
        }
    }
}

/// Source statistics carried beside every reconstruction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReconReport {
    pub input_events: Option<u64>,
    pub views: Option<u32>,
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl ReconReport {
    pub fn to_json(&self, method: Method) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("method".into(), serde_json::json!(method.name()));
        if let Some(n) = self.input_events {
            map.insert("input_events".into(), serde_json::json!(n));
        }
        if let Some(v) = self.views {
            map.insert("views".into(), serde_json::json!(v));
        }
        for (k, v) in &self.params {
            map.insert(k.clone(), v.clone());
        }
        serde_json::Value::Object(map)
    }
}

/// A reconstructed target image in `[0, 1]` plus its provenance.
#[derive(Debug, Clone)]
pub struct Reconstruction<F> {
    pub image: Image<F>,
    pub method: Method,
    pub report: ReconReport,
}

/// Accumulation baseline: per-pixel signed event count, min-max normalized.
/// All-equal counts produce a constant mid-gray image.
pub fn reconstruct_acc<F: Real>(stream: &EventStream) -> Result<Reconstruction<F>> {
    if stream.is_empty() {
        return Err(Error::Argument("cannot accumulate an empty stream".into()));
    }
    let (h, w) = (stream.height() as usize, stream.width() as usize);
    let mut counts = Array2::<i64>::zeros((h, w));
    for e in stream.events() {
        counts[[e.y as usize, e.x as usize]] += i64::from(e.p);
    }
    let min = *counts.iter().min().unwrap();
    let max = *counts.iter().max().unwrap();
    let image = if min == max {
        Array2::from_elem((h, w), fl(0.5))
    } else {
        let range = (max - min) as f64;
        counts.mapv(|c| fl::<F>((c - min) as f64 / range))
    };
    let mut report = ReconReport {
        input_events: Some(stream.len() as u64),
        ..Default::default()
    };
    report.params.insert("normalization".into(), serde_json::json!("min-max"));
    Ok(Reconstruction { image, method: Method::Acc, report })
}

/// Frame-based shift-and-average baseline: every view is shifted by its
/// refocusing translation toward the reference pose and overlapping pixels
/// are averaged over the views that contribute there.
pub fn reconstruct_fsai<F: Real>(
    views: &[([F; 3], Image<F>)],
    cam: &CameraModel<F>,
    depth: F,
    ref_pose: [F; 3],
) -> Result<Reconstruction<F>> {
    if views.len() < 2 {
        return Err(Error::Argument(format!("need >= 2 views, got {}", views.len())));
    }
    if depth <= F::zero() {
        return Err(Error::Argument(format!("depth must be > 0, got {depth}")));
    }
    let (h, w) = (cam.height as usize, cam.width as usize);
    let mut sum = Array2::<f64>::zeros((h, w));
    let mut hits = Array2::<u32>::zeros((h, w));
    for (pose, img) in views {
        if img.dim() != (h, w) {
            return Err(Error::Argument(format!(
                "view of {:?} does not match the {}x{} sensor",
                img.dim(),
                w,
                h
            )));
        }
        let shift_x = to_f64(cam.fx) * (to_f64(pose[0]) - to_f64(ref_pose[0])) / to_f64(depth);
        let shift_y = to_f64(cam.fy) * (to_f64(pose[1]) - to_f64(ref_pose[1])) / to_f64(depth);
        let (sx, sy) = (shift_x.round() as i64, shift_y.round() as i64);
        for y in 0..h as i64 {
            let ty = y + sy;
            if !(0..h as i64).contains(&ty) {
                continue;
            }
            for x in 0..w as i64 {
                let tx = x + sx;
                if !(0..w as i64).contains(&tx) {
                    continue;
                }
                sum[[ty as usize, tx as usize]] += to_f64(img[[y as usize, x as usize]]);
                hits[[ty as usize, tx as usize]] += 1;
            }
        }
    }
    let image = Array2::from_shape_fn((h, w), |idx| {
        if hits[idx] > 0 {
            fl::<F>(sum[idx] / f64::from(hits[idx]))
        } else {
            F::zero()
        }
    });
    let mut report = ReconReport { views: Some(views.len() as u32), ..Default::default() };
    report.params.insert("depth".into(), serde_json::json!(to_f64(depth)));
    report
        .params
        .insert("boundary".into(), serde_json::json!("average contributing views only"));
    Ok(Reconstruction { image, method: Method::Fsai, report })
}

/// Hybrid network path: encoder, decoder, then map `[-1, 1]` to `[0, 1]`.
pub fn reconstruct_hybrid<F: Real>(
    seq: &FrameSequence,
    net: &HybridNetwork<F>,
) -> Result<Reconstruction<F>> {
    let (out, _) = net.forward(seq)?;
    let image = to_unit_image(&out);
    let mut report = ReconReport {
        input_events: Some(seq.total()),
        ..Default::default()
    };
    report.params.insert("n_steps".into(), serde_json::json!(net.n_steps()));
    Ok(Reconstruction { image, method: Method::Hybrid, report })
}

/// Map a decoder output in `[-1, 1]` to a unit-range grayscale image.
pub fn to_unit_image<F: Real>(out: &Array3<F>) -> Image<F> {
    let (_, h, w) = out.dim();
    let half = fl::<F>(0.5);
    Array2::from_shape_fn((h, w), |(y, x)| {
        ((out[[0, y, x]] + F::one()) * half).max(F::zero()).min(F::one())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Event;
    use ndarray::Array2;

    #[test]
    fn acc_single_event_peaks_at_one() {
        let s = EventStream::new(4, 4, vec![Event::new(0, 1, 2, 1)], None).unwrap();
        let r = reconstruct_acc::<f64>(&s).unwrap();
        assert_eq!(r.image[[2, 1]], 1.0);
        assert_eq!(r.image[[0, 0]], 0.0);
        assert_eq!(r.report.input_events, Some(1));
    }

    #[test]
    fn acc_balanced_counts_give_constant() {
        let mut events = Vec::new();
        for y in 0..4u32 {
            for x in 0..4u32 {
                events.push(Event::new(0, x, y, 1));
                events.push(Event::new(1, x, y, -1));
            }
        }
        events.sort_by_key(|e| e.t);
        let s = EventStream::new(4, 4, events, None).unwrap();
        let r = reconstruct_acc::<f64>(&s).unwrap();
        assert!(r.image.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn acc_empty_rejected_and_order_invariant() {
        assert!(matches!(
            reconstruct_acc::<f64>(&EventStream::empty(4, 4)),
            Err(Error::Argument(_))
        ));
        let forward = EventStream::new(
            4,
            4,
            vec![Event::new(0, 0, 0, 1), Event::new(0, 1, 1, -1), Event::new(5, 2, 2, 1)],
            None,
        )
        .unwrap();
        let swapped = EventStream::new(
            4,
            4,
            vec![Event::new(0, 1, 1, -1), Event::new(0, 0, 0, 1), Event::new(5, 2, 2, 1)],
            None,
        )
        .unwrap();
        assert_eq!(
            reconstruct_acc::<f64>(&forward).unwrap().image,
            reconstruct_acc::<f64>(&swapped).unwrap().image
        );
    }

    #[test]
    fn fsai_identical_poses_average_to_the_image() {
        let cam = CameraModel::new(100.0, 100.0, 4.0, 4.0, 8, 8).unwrap();
        let img = Array2::from_shape_fn((8, 8), |(r, c)| ((r * 8 + c) % 11) as f64 / 10.0);
        let views = vec![([0.0, 0.0, 0.0], img.clone()); 3];
        let r = reconstruct_fsai(&views, &cam, 2.0, [0.0, 0.0, 0.0]).unwrap();
        for (a, b) in r.image.iter().zip(img.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fsai_uniform_target_stays_uniform() {
        let cam = CameraModel::new(100.0, 100.0, 4.0, 4.0, 8, 8).unwrap();
        let img = Array2::from_elem((8, 8), 0.6);
        let views: Vec<([f64; 3], Image<f64>)> = (0..5)
            .map(|i| ([0.01 * i as f64, 0.0, 0.0], img.clone()))
            .collect();
        let r = reconstruct_fsai(&views, &cam, 2.0, [0.02, 0.0, 0.0]).unwrap();
        // Every pixel that received any contribution equals 0.6.
        for &v in r.image.iter() {
            assert!(v == 0.6 || v == 0.0);
        }
        assert_eq!(r.image[[4, 4]], 0.6);
    }

    #[test]
    fn fsai_needs_two_views() {
        let cam = CameraModel::new(100.0, 100.0, 4.0, 4.0, 8, 8).unwrap();
        let views = vec![([0.0, 0.0, 0.0], Array2::<f64>::zeros((8, 8)))];
        assert!(matches!(
            reconstruct_fsai(&views, &cam, 2.0, [0.0, 0.0, 0.0]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn unit_image_mapping() {
        let out = ndarray::Array3::from_shape_vec((1, 1, 3), vec![-1.0f64, 0.0, 1.0]).unwrap();
        let img = to_unit_image(&out);
        assert_eq!(img[[0, 0]], 0.0);
        assert_eq!(img[[0, 1]], 0.5);
        assert_eq!(img[[0, 2]], 1.0);
    }
}
