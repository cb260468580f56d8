//! Conversion of event streams into the N-interval, two-polarity-channel
//! count tensor consumed by the network, plus its flat binary file format.
//!
//! File layout: magic `EFRM`, then little-endian `u32` fields `n`, `h`, `w`,
//! then `n * 2 * h * w` little-endian `u32` counts in `[interval, channel,
//! row, col]` order.

use std::fs;
use std::path::Path;

use ndarray::{Array3, Array4};

use crate::error::{Error, Result};
use crate::event::EventStream;

const MAGIC: &[u8; 4] = b"EFRM";

/// Non-negative event counts over `n` equal time intervals and two polarity
/// channels (0 = positive, 1 = negative).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequence {
    data: Array4<u32>,
    t_edges: Vec<u64>,
}

impl FrameSequence {
    pub fn n(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().2
    }

    pub fn width(&self) -> usize {
        self.data.dim().3
    }

    /// Counts indexed `[interval, channel, row, col]`.
    pub fn data(&self) -> &Array4<u32> {
        &self.data
    }

    /// The `n + 1` interval boundaries in microseconds.
    pub fn t_edges(&self) -> &[u64] {
        &self.t_edges
    }

    /// Total number of framed events.
    pub fn total(&self) -> u64 {
        self.data.iter().map(|&c| u64::from(c)).sum()
    }
}

/// Accumulate a stream into `n` equal time intervals.
///
/// The span defaults to `[first event t, last event t + 1]`. Every event
/// lands in exactly one cell: interval `floor((t - t0) * n / (t1 - t0))`
/// clamped into `0..n`, channel by polarity, pixel `(y, x)`.
pub fn voxelize(stream: &EventStream, n: usize, span: Option<(u64, u64)>) -> Result<FrameSequence> {
    if n == 0 {
        return Err(Error::Argument("interval count must be >= 1".into()));
    }
    let (t0, t1) = match span {
        Some((a, b)) => {
            if a >= b {
                return Err(Error::Argument(format!("empty span [{a}, {b})")));
            }
            (a, b)
        }
        None => {
            if stream.is_empty() {
                return Err(Error::Argument("empty stream and no span given".into()));
            }
            let first = stream.events().first().unwrap().t;
            let last = stream.events().last().unwrap().t;
            (first, last + 1)
        }
    };
    let span_len = t1 - t0;
    if span_len < n as u64 {
        return Err(Error::Argument(format!(
            "span of {span_len} us cannot be divided into {n} intervals"
        )));
    }

    let (h, w) = (stream.height() as usize, stream.width() as usize);
    let mut data = Array4::<u32>::zeros((n, 2, h, w));
    for e in stream.events() {
        let idx = if e.t <= t0 {
            0
        } else {
            (((u128::from(e.t - t0) * n as u128) / u128::from(span_len)) as usize).min(n - 1)
        };
        let channel = if e.p > 0 { 0 } else { 1 };
        data[[idx, channel, e.y as usize, e.x as usize]] += 1;
    }
    let t_edges = (0..=n as u64).map(|i| t0 + i * span_len / n as u64).collect();
    Ok(FrameSequence { data, t_edges })
}

/// Sum over the interval axis: a single `2 x H x W` count image. Total count
/// is preserved.
pub fn collapse(seq: &FrameSequence) -> Array3<u32> {
    let (n, _, h, w) = seq.data.dim();
    let mut out = Array3::<u32>::zeros((2, h, w));
    for i in 0..n {
        for c in 0..2 {
            for y in 0..h {
                for x in 0..w {
                    out[[c, y, x]] += seq.data[[i, c, y, x]];
                }
            }
        }
    }
    out
}

/// Serialize to the flat binary format.
pub fn format_frames(seq: &FrameSequence) -> Vec<u8> {
    let (n, _, h, w) = seq.data.dim();
    let mut out = Vec::with_capacity(16 + seq.data.len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [n as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &c in seq.data.iter() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

pub fn write_frames(seq: &FrameSequence, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), format_frames(seq))?;
    Ok(())
}

/// Parse the flat binary format. The file carries no time information, so the
/// loaded sequence gets synthetic unit-width interval edges.
pub fn parse_frames(bytes: &[u8]) -> Result<FrameSequence> {
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(Error::Format("frame file: bad magic or truncated header".into()));
    }
    let read_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let (n, h, w) = (read_u32(4) as usize, read_u32(8) as usize, read_u32(12) as usize);
    let cells = n
        .checked_mul(2)
        .and_then(|v| v.checked_mul(h))
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::Format("frame file: dimension overflow".into()))?;
    if n == 0 || h == 0 || w == 0 {
        return Err(Error::Format("frame file: zero dimension".into()));
    }
    if bytes.len() != 16 + cells * 4 {
        return Err(Error::Format(format!(
            "frame file: expected {} raster bytes, got {}",
            cells * 4,
            bytes.len() - 16
        )));
    }
    let counts: Vec<u32> = bytes[16..].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    let data = Array4::from_shape_vec((n, 2, h, w), counts)
        .map_err(|e| Error::Format(format!("frame file: {e}")))?;
    let t_edges = (0..=n as u64).collect();
    Ok(FrameSequence { data, t_edges })
}

pub fn read_frames(path: impl AsRef<Path>) -> Result<FrameSequence> {
    parse_frames(&fs::read(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, EventStream};
    use proptest::prelude::*;

    fn stream_of(events: Vec<Event>) -> EventStream {
        EventStream::new(16, 16, events, None).unwrap()
    }

    #[test]
    fn single_event_single_frame() {
        let s = stream_of(vec![Event::new(100, 3, 4, -1)]);
        let seq = voxelize(&s, 1, None).unwrap();
        assert_eq!(seq.total(), 1);
        assert_eq!(seq.data()[[0, 1, 4, 3]], 1);
    }

    #[test]
    fn floor_rule_interval_indices() {
        let s = stream_of(vec![
            Event::new(0, 0, 0, 1),
            Event::new(249_999, 1, 0, 1),
            Event::new(250_000, 2, 0, 1),
            Event::new(999_999, 3, 0, 1),
        ]);
        let seq = voxelize(&s, 4, Some((0, 1_000_000))).unwrap();
        assert_eq!(seq.data()[[0, 0, 0, 0]], 1);
        assert_eq!(seq.data()[[0, 0, 0, 1]], 1);
        assert_eq!(seq.data()[[1, 0, 0, 2]], 1);
        assert_eq!(seq.data()[[3, 0, 0, 3]], 1);
    }

    #[test]
    fn event_at_upper_edge_clamps_into_last_interval() {
        let s = stream_of(vec![Event::new(1_000_000, 0, 0, 1)]);
        let seq = voxelize(&s, 4, Some((0, 1_000_000))).unwrap();
        assert_eq!(seq.data()[[3, 0, 0, 0]], 1);
    }

    #[test]
    fn argument_errors() {
        let s = stream_of(vec![Event::new(0, 0, 0, 1)]);
        assert!(matches!(voxelize(&s, 0, None), Err(Error::Argument(_))));
        let empty = EventStream::empty(16, 16);
        assert!(matches!(voxelize(&empty, 4, None), Err(Error::Argument(_))));
        assert!(voxelize(&empty, 4, Some((0, 1000))).is_ok());
    }

    #[test]
    fn collapse_sums_intervals() {
        let s = stream_of(vec![
            Event::new(0, 5, 5, 1),
            Event::new(400, 5, 5, 1),
            Event::new(800, 5, 5, 1),
        ]);
        let seq = voxelize(&s, 2, Some((0, 1000))).unwrap();
        let img = collapse(&seq);
        assert_eq!(img[[0, 5, 5]], 3);
        assert_eq!(img.iter().map(|&v| u64::from(v)).sum::<u64>(), 3);
    }

    fn arb_events() -> impl Strategy<Value = Vec<Event>> {
        prop::collection::vec((0u64..1_000_000, 0u32..16, 0u32..16, prop::bool::ANY), 1..128)
            .prop_map(|raw| {
                let mut events: Vec<Event> = raw
                    .into_iter()
                    .map(|(t, x, y, pos)| Event::new(t, x, y, if pos { 1 } else { -1 }))
                    .collect();
                events.sort_by_key(|e| e.t);
                events
            })
    }

    proptest! {
        // Count conservation and the collapse/voxelize(1) partition identity.
        #[test]
        fn conservation_and_partition(events in arb_events(), n in 1usize..12) {
            let s = stream_of(events.clone());
            let span = Some((0u64, 1_000_000u64));
            let seq = voxelize(&s, n, span).unwrap();
            prop_assert_eq!(seq.total(), events.len() as u64);
            let single = voxelize(&s, 1, span).unwrap();
            let collapsed = collapse(&seq);
            for c in 0..2 {
                for y in 0..16 {
                    for x in 0..16 {
                        prop_assert_eq!(collapsed[[c, y, x]], single.data()[[0, c, y, x]]);
                    }
                }
            }
        }

        // Event order within the stream does not change the result.
        #[test]
        fn permutation_invariance(events in arb_events(), n in 1usize..8) {
            let span = Some((0u64, 1_000_000u64));
            let a = voxelize(&stream_of(events.clone()), n, span).unwrap();
            let mut shuffled = events;
            shuffled.reverse();
            shuffled.sort_by_key(|e| e.t); // stable: same times, different tie order
            let b = voxelize(&stream_of(shuffled), n, span).unwrap();
            prop_assert_eq!(a.data(), b.data());
        }

        #[test]
        fn file_round_trip(events in arb_events(), n in 1usize..8) {
            let seq = voxelize(&stream_of(events), n, Some((0, 1_000_000))).unwrap();
            let parsed = parse_frames(&format_frames(&seq)).unwrap();
            prop_assert_eq!(parsed.data(), seq.data());
        }
    }
}
