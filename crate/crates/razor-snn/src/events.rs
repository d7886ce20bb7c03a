//! Event streams: ingestion, synthesis, noise injection, and binning into
//! dense frame sequences.
//!
//! The on-disk format is a plain CSV with a geometry comment:
//!
//! ```text
//! # geometry 16 16
//! t_us,x,y,p
//! 500,3,7,1
//! ```
//!
//! A synthetic dataset is a directory of such files plus a `labels.csv`
//! with `file,label` rows.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::autograd::Tensor;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: event ({x}, {y}) outside geometry {width}x{height}")]
    Range {
        line: usize,
        x: u32,
        y: u32,
        width: usize,
        height: usize,
    },
    #[error("missing `# geometry H W` comment line before the header")]
    MissingGeometry,
    #[error("missing `t_us,x,y,p` header line")]
    MissingHeader,
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EventError>;

/// One sensor event: time, location, polarity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    /// Timestamp in microseconds.
    pub t_us: u64,
    /// Column index.
    pub x: u32,
    /// Row index.
    pub y: u32,
    /// Polarity, 0 or 1.
    pub p: u8,
}

/// A time-ordered event stream with its sensor geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    pub height: usize,
    pub width: usize,
    /// Sorted non-decreasing by `t_us`; ties keep file order.
    pub events: Vec<Event>,
    /// Class index, when known.
    pub label: Option<usize>,
    /// Set when ingestion had to re-sort non-monotone timestamps.
    pub reordered: bool,
}

impl EventStream {
    pub fn new(height: usize, width: usize) -> Self {
        EventStream {
            height,
            width,
            events: Vec::new(),
            label: None,
            reordered: false,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Dense frame representation: event counts per `(t, polarity, y, x)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    /// Shape `(T, C, H, W)`; every element is a non-negative count.
    pub data: Tensor,
    /// Accumulation window in microseconds.
    pub dt_us: u64,
}

impl FrameSequence {
    pub fn t_steps(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn frame_shape(&self) -> &[usize] {
        &self.data.shape()[1..]
    }
}

/// Parse the event CSV format. Events arriving out of order are stably
/// re-sorted and the stream's `reordered` flag is set.
pub fn parse_event_csv(text: &str) -> Result<EventStream> {
    let mut geometry: Option<(usize, usize)> = None;
    let mut header_seen = false;
    let mut events = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let fields: Vec<&str> = comment.split_whitespace().collect();
            if fields.first() == Some(&"geometry") {
                if fields.len() != 3 {
                    return Err(EventError::Parse {
                        line: line_no,
                        msg: "geometry comment must be `# geometry H W`".into(),
                    });
                }
                let h = fields[1].parse().map_err(|e| EventError::Parse {
                    line: line_no,
                    msg: format!("bad geometry height: {e}"),
                })?;
                let w = fields[2].parse().map_err(|e| EventError::Parse {
                    line: line_no,
                    msg: format!("bad geometry width: {e}"),
                })?;
                geometry = Some((h, w));
            }
            continue;
        }
        if !header_seen {
            if line != "t_us,x,y,p" {
                return Err(EventError::Parse {
                    line: line_no,
                    msg: format!("expected header `t_us,x,y,p`, got `{line}`"),
                });
            }
            if geometry.is_none() {
                return Err(EventError::MissingGeometry);
            }
            header_seen = true;
            continue;
        }

        let (height, width) = geometry.expect("geometry precedes header");
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(EventError::Parse {
                line: line_no,
                msg: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let t_us: u64 = fields[0].trim().parse().map_err(|e| EventError::Parse {
            line: line_no,
            msg: format!("bad t_us: {e}"),
        })?;
        let x: u32 = fields[1].trim().parse().map_err(|e| EventError::Parse {
            line: line_no,
            msg: format!("bad x: {e}"),
        })?;
        let y: u32 = fields[2].trim().parse().map_err(|e| EventError::Parse {
            line: line_no,
            msg: format!("bad y: {e}"),
        })?;
        let p: u8 = fields[3].trim().parse().map_err(|e| EventError::Parse {
            line: line_no,
            msg: format!("bad polarity: {e}"),
        })?;
        if p > 1 {
            return Err(EventError::Parse {
                line: line_no,
                msg: format!("polarity must be 0 or 1, got {p}"),
            });
        }
        if x as usize >= width || y as usize >= height {
            return Err(EventError::Range {
                line: line_no,
                x,
                y,
                width,
                height,
            });
        }
        events.push(Event { t_us, x, y, p });
    }

    let (height, width) = geometry.ok_or(EventError::MissingGeometry)?;
    if !header_seen {
        return Err(EventError::MissingHeader);
    }

    let sorted = events.windows(2).all(|w| w[0].t_us <= w[1].t_us);
    if !sorted {
        events.sort_by_key(|e| e.t_us);
    }
    Ok(EventStream {
        height,
        width,
        events,
        label: None,
        reordered: !sorted,
    })
}

/// Serialize a stream in the same CSV format [`parse_event_csv`] reads.
pub fn serialize_event_csv(stream: &EventStream) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# geometry {} {}", stream.height, stream.width);
    out.push_str("t_us,x,y,p\n");
    for e in &stream.events {
        let _ = writeln!(out, "{},{},{},{}", e.t_us, e.x, e.y, e.p);
    }
    out
}

/// Bin events into `T` windows of `dt_us` microseconds, counting per
/// `(t, p, y, x)` cell. Events at or past `T * dt_us` are dropped; the
/// number dropped is returned alongside the frames.
pub fn accumulate_frames(
    stream: &EventStream,
    dt_us: u64,
    t_steps: usize,
) -> Result<(FrameSequence, usize)> {
    if dt_us == 0 {
        return Err(EventError::Invalid {
            what: "window size",
            why: "dt_us must be at least 1".into(),
        });
    }
    if t_steps == 0 {
        return Err(EventError::Invalid {
            what: "timestep count",
            why: "T must be at least 1".into(),
        });
    }
    let (h, w) = (stream.height, stream.width);
    let mut data = vec![0.0f32; t_steps * 2 * h * w];
    let mut discarded = 0usize;
    for e in &stream.events {
        let t = (e.t_us / dt_us) as usize;
        if t >= t_steps {
            discarded += 1;
            continue;
        }
        let idx = ((t * 2 + e.p as usize) * h + e.y as usize) * w + e.x as usize;
        data[idx] += 1.0;
    }
    let tensor = Tensor::new(vec![t_steps, 2, h, w], data).map_err(|e| EventError::Invalid {
        what: "frame tensor",
        why: e.to_string(),
    })?;
    Ok((
        FrameSequence {
            data: tensor,
            dt_us,
        },
        discarded,
    ))
}

/// Rotation direction of the synthetic bar stimulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Cw,
    Ccw,
}

impl Direction {
    pub fn label(self) -> usize {
        match self {
            Direction::Cw => 0,
            Direction::Ccw => 1,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cw" => Ok(Direction::Cw),
            "ccw" => Ok(Direction::Ccw),
            other => Err(format!("unknown direction `{other}` (expected cw|ccw)")),
        }
    }
}

/// Window size used by the synthetic stimulus, in microseconds.
pub const SYNTH_DT_US: u64 = 1_000;

/// Synthesize a bar rotating about the grid center, one window per
/// timestep at [`SYNTH_DT_US`]. The bar advances `2*pi/T` per window
/// (counterclockwise positive); its two halves carry opposite polarity, so
/// a single frame never reveals the rotation direction but any two
/// consecutive frames do. Deterministic for fixed arguments.
pub fn synth_rotating_bar(
    height: usize,
    width: usize,
    t_steps: usize,
    direction: Direction,
    events_per_step: usize,
    seed: u64,
) -> Result<EventStream> {
    if height < 4 || width < 4 {
        return Err(EventError::Invalid {
            what: "geometry",
            why: format!("height and width must be at least 4, got {height}x{width}"),
        });
    }
    if t_steps < 2 {
        return Err(EventError::Invalid {
            what: "timestep count",
            why: format!("need at least 2 windows to encode rotation, got {t_steps}"),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let spin = match direction {
        Direction::Cw => -1.0,
        Direction::Ccw => 1.0,
    };
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let radius = (width.min(height) as f64 - 1.0) / 2.0;

    let mut events = Vec::with_capacity(t_steps * events_per_step);
    for t in 0..t_steps {
        let theta = theta0 + spin * std::f64::consts::TAU * t as f64 / t_steps as f64;
        let (sin, cos) = theta.sin_cos();
        for _ in 0..events_per_step {
            let s: f64 = rng.gen_range(-1.0..1.0);
            let x = (cx + s * radius * cos).round().clamp(0.0, width as f64 - 1.0);
            let y = (cy + s * radius * sin).round().clamp(0.0, height as f64 - 1.0);
            let jitter: u64 = rng.gen_range(0..SYNTH_DT_US);
            events.push(Event {
                t_us: t as u64 * SYNTH_DT_US + jitter,
                x: x as u32,
                y: y as u32,
                p: u8::from(s > 0.0),
            });
        }
    }
    events.sort_by_key(|e| e.t_us);
    Ok(EventStream {
        height,
        width,
        events,
        label: Some(direction.label()),
        reordered: false,
    })
}

/// Add spurious events, Poisson-distributed per `dt_us` window with mean
/// `rate_per_window` and uniform in location and polarity. The window count
/// is derived from the last event's timestamp; an empty stream is returned
/// unchanged. Deterministic per seed.
pub fn inject_noise(
    stream: &EventStream,
    rate_per_window: f64,
    dt_us: u64,
    seed: u64,
) -> Result<EventStream> {
    if rate_per_window < 0.0 {
        return Err(EventError::Invalid {
            what: "noise rate",
            why: format!("must be non-negative, got {rate_per_window}"),
        });
    }
    if dt_us == 0 {
        return Err(EventError::Invalid {
            what: "window size",
            why: "dt_us must be at least 1".into(),
        });
    }
    if rate_per_window == 0.0 || stream.events.is_empty() {
        return Ok(stream.clone());
    }

    let last_t = stream.events.last().expect("non-empty").t_us;
    let windows = last_t / dt_us + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = Poisson::new(rate_per_window).map_err(|e| EventError::Invalid {
        what: "noise rate",
        why: e.to_string(),
    })?;

    let mut out = stream.clone();
    for window in 0..windows {
        let count = poisson.sample(&mut rng) as u64;
        for _ in 0..count {
            out.events.push(Event {
                t_us: window * dt_us + rng.gen_range(0..dt_us),
                x: rng.gen_range(0..stream.width as u32),
                y: rng.gen_range(0..stream.height as u32),
                p: rng.gen_range(0..=1),
            });
        }
    }
    out.events.sort_by_key(|e| e.t_us);
    Ok(out)
}

/// A labeled, framed sample as loaded from a dataset directory.
#[derive(Clone, Debug)]
pub struct Sample {
    pub name: String,
    pub frames: FrameSequence,
    pub label: usize,
}

/// Parameters for [`write_synthetic_dataset`].
#[derive(Clone, Copy, Debug)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub t_steps: usize,
    pub samples_per_class: usize,
    pub events_per_step: usize,
    pub noise_rate: f64,
    pub seed: u64,
}

/// Write `samples_per_class` rotating-bar streams per direction into `dir`
/// as event CSVs plus a `labels.csv`. Returns the written file names in
/// labels order.
pub fn write_synthetic_dataset(dir: &Path, spec: &SynthSpec) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut seeder = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels = String::from("file,label\n");
    let mut names = Vec::new();
    for direction in [Direction::Cw, Direction::Ccw] {
        for i in 0..spec.samples_per_class {
            let sample_seed = seeder.gen::<u64>();
            let noise_seed = seeder.gen::<u64>();
            let mut stream = synth_rotating_bar(
                spec.height,
                spec.width,
                spec.t_steps,
                direction,
                spec.events_per_step,
                sample_seed,
            )?;
            if spec.noise_rate > 0.0 {
                stream = inject_noise(&stream, spec.noise_rate, SYNTH_DT_US, noise_seed)?;
            }
            let name = match direction {
                Direction::Cw => format!("cw_{i:03}.csv"),
                Direction::Ccw => format!("ccw_{i:03}.csv"),
            };
            std::fs::write(dir.join(&name), serialize_event_csv(&stream))?;
            let _ = writeln!(labels, "{},{}", name, direction.label());
            names.push(name);
        }
    }
    std::fs::write(dir.join("labels.csv"), labels)?;
    Ok(names)
}

/// Load a dataset directory written by [`write_synthetic_dataset`] (or any
/// directory following the same `labels.csv` + event-CSV layout), binning
/// each stream into frames. Sample order follows `labels.csv`.
pub fn load_dataset(dir: &Path, dt_us: u64, t_steps: usize) -> Result<Vec<Sample>> {
    let labels_path = dir.join("labels.csv");
    let text = std::fs::read_to_string(&labels_path)?;
    let mut samples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || line == "file,label" {
            continue;
        }
        let (file, label) = line.split_once(',').ok_or_else(|| EventError::Parse {
            line: line_no,
            msg: format!("labels.csv: expected `file,label`, got `{line}`"),
        })?;
        let label: usize = label.trim().parse().map_err(|e| EventError::Parse {
            line: line_no,
            msg: format!("labels.csv: bad label: {e}"),
        })?;
        let csv = std::fs::read_to_string(dir.join(file))?;
        let stream = parse_event_csv(&csv)?;
        let (frames, _) = accumulate_frames(&stream, dt_us, t_steps)?;
        samples.push(Sample {
            name: file.to_string(),
            frames,
            label,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_single_event() {
        let s = parse_event_csv("# geometry 2 2\nt_us,x,y,p\n500,0,1,1\n").unwrap();
        assert_eq!((s.height, s.width), (2, 2));
        assert_eq!(
            s.events,
            vec![Event {
                t_us: 500,
                x: 0,
                y: 1,
                p: 1
            }]
        );
        assert!(!s.reordered);
    }

    #[test]
    fn parse_empty_event_section() {
        let s = parse_event_csv("# geometry 4 4\nt_us,x,y,p\n").unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn parse_reorders_and_flags_non_monotone() {
        let s = parse_event_csv("# geometry 4 4\nt_us,x,y,p\n1500,0,0,0\n500,1,1,1\n").unwrap();
        // Oracle: sorting the row list by timestamp.
        let times: Vec<u64> = s.events.iter().map(|e| e.t_us).collect();
        assert_eq!(times, vec![500, 1500]);
        assert!(s.reordered);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = parse_event_csv("# geometry 4 4\nt_us,x,y,p\n10,0,0,1\nbogus\n").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }

    #[test]
    fn parse_rejects_out_of_geometry() {
        let err = parse_event_csv("# geometry 2 2\nt_us,x,y,p\n10,5,0,1\n").unwrap_err();
        assert!(matches!(err, EventError::Range { line: 3, x: 5, .. }), "{err}");
    }

    #[test]
    fn parse_requires_geometry() {
        let err = parse_event_csv("t_us,x,y,p\n10,0,0,1\n").unwrap_err();
        assert!(matches!(err, EventError::MissingGeometry));
    }

    #[test]
    fn accumulate_bins_by_window() {
        let s = parse_event_csv("# geometry 2 2\nt_us,x,y,p\n500,0,0,1\n1500,1,1,0\n").unwrap();
        let (frames, discarded) = accumulate_frames(&s, 1_000, 2).unwrap();
        assert_eq!(discarded, 0);
        assert_eq!(frames.data.at(&[0, 1, 0, 0]), 1.0);
        assert_eq!(frames.data.at(&[1, 0, 1, 1]), 1.0);
        assert_eq!(frames.data.sum_f64(), 2.0);
    }

    #[test]
    fn accumulate_counts_repeats_and_discards_tail() {
        let mut s = EventStream::new(2, 2);
        for _ in 0..3 {
            s.events.push(Event {
                t_us: 10,
                x: 1,
                y: 0,
                p: 1,
            });
        }
        s.events.push(Event {
            t_us: 5_000,
            x: 0,
            y: 0,
            p: 0,
        });
        let (frames, discarded) = accumulate_frames(&s, 1_000, 2).unwrap();
        assert_eq!(frames.data.at(&[0, 1, 0, 1]), 3.0);
        assert_eq!(discarded, 1);
    }

    #[test]
    fn accumulate_empty_stream_is_all_zero() {
        let s = EventStream::new(4, 4);
        let (frames, discarded) = accumulate_frames(&s, 1_000, 3).unwrap();
        assert_eq!(discarded, 0);
        assert!(frames.data.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn synth_is_deterministic_and_counts_events() {
        let a = synth_rotating_bar(16, 16, 16, Direction::Cw, 32, 9).unwrap();
        let b = synth_rotating_bar(16, 16, 16, Direction::Cw, 32, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 512);
        assert_eq!(a.label, Some(0));
    }

    #[test]
    fn synth_directions_agree_on_first_window_only() {
        let cw = synth_rotating_bar(16, 16, 8, Direction::Cw, 24, 5).unwrap();
        let ccw = synth_rotating_bar(16, 16, 8, Direction::Ccw, 24, 5).unwrap();
        let first = |s: &EventStream| {
            let mut v: Vec<(u64, u32, u32, u8)> = s
                .events
                .iter()
                .filter(|e| e.t_us < SYNTH_DT_US)
                .map(|e| (e.t_us, e.x, e.y, e.p))
                .collect();
            v.sort_unstable();
            v
        };
        assert_eq!(first(&cw), first(&ccw));
        assert_ne!(cw.events, ccw.events);
    }

    #[test]
    fn synth_directions_share_per_frame_counts() {
        let cw = synth_rotating_bar(12, 12, 6, Direction::Cw, 17, 21).unwrap();
        let ccw = synth_rotating_bar(12, 12, 6, Direction::Ccw, 17, 21).unwrap();
        let counts = |s: &EventStream| {
            let (frames, _) = accumulate_frames(s, SYNTH_DT_US, 6).unwrap();
            (0..6)
                .map(|t| {
                    (0..frames.data.len() / 6)
                        .map(|j| frames.data.data()[t * (frames.data.len() / 6) + j] as u64)
                        .sum::<u64>()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(counts(&cw), counts(&ccw));
        assert!(counts(&cw).iter().all(|&c| c == 17));
    }

    #[test]
    fn synth_rejects_tiny_geometry() {
        assert!(synth_rotating_bar(3, 16, 8, Direction::Cw, 4, 0).is_err());
        assert!(synth_rotating_bar(16, 16, 1, Direction::Cw, 4, 0).is_err());
    }

    #[test]
    fn noise_rate_zero_is_identity() {
        let s = synth_rotating_bar(8, 8, 4, Direction::Ccw, 6, 1).unwrap();
        let out = inject_noise(&s, 0.0, 1_000, 123).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let s = synth_rotating_bar(8, 8, 4, Direction::Ccw, 6, 1).unwrap();
        let a = inject_noise(&s, 3.0, 1_000, 77).unwrap();
        let b = inject_noise(&s, 3.0, 1_000, 77).unwrap();
        assert_eq!(a, b);
        assert!(a.len() > s.len());
    }

    #[test]
    fn noise_count_falls_in_poisson_bulk() {
        // Stream spanning exactly 10 windows; total added count is
        // Poisson(50). Oracle: direct pmf summation in f64 shows
        // P(20 <= X <= 90) > 0.99, and the observed draw must land there.
        let mut s = EventStream::new(8, 8);
        s.events.push(Event {
            t_us: 0,
            x: 0,
            y: 0,
            p: 0,
        });
        s.events.push(Event {
            t_us: 9_999,
            x: 1,
            y: 1,
            p: 1,
        });

        let lambda = 50.0f64;
        let mut pmf = (-lambda).exp();
        let mut bulk = 0.0;
        for k in 0..=90u32 {
            if k >= 20 {
                bulk += pmf;
            }
            pmf *= lambda / (k as f64 + 1.0);
        }
        assert!(bulk > 0.99, "oracle bulk probability {bulk}");

        let out = inject_noise(&s, 5.0, 1_000, 4242).unwrap();
        let added = out.len() - s.len();
        assert!((20..=90).contains(&added), "added {added}");
    }

    #[test]
    fn dataset_roundtrip_on_disk() {
        let dir = std::env::temp_dir().join(format!("razor-snn-events-{}", std::process::id()));
        let spec = SynthSpec {
            height: 8,
            width: 8,
            t_steps: 4,
            samples_per_class: 2,
            events_per_step: 6,
            noise_rate: 0.0,
            seed: 3,
        };
        let names = write_synthetic_dataset(&dir, &spec).unwrap();
        assert_eq!(names.len(), 4);
        let samples = load_dataset(&dir, SYNTH_DT_US, 4).unwrap();
        assert_eq!(samples.len(), 4);
        assert_eq!(samples.iter().filter(|s| s.label == 0).count(), 2);
        for s in &samples {
            assert_eq!(s.frames.data.shape(), &[4, 2, 8, 8]);
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    proptest! {
        /// Binning conserves events: tensor total + discarded = stream length.
        #[test]
        fn prop_accumulate_conserves_events(
            times in proptest::collection::vec(0u64..8_000, 0..64),
            dt in 1u64..2_000,
            t_steps in 1usize..8,
        ) {
            let mut s = EventStream::new(4, 4);
            for (i, t) in times.iter().enumerate() {
                s.events.push(Event {
                    t_us: *t,
                    x: (i % 4) as u32,
                    y: (i % 3) as u32,
                    p: (i % 2) as u8,
                });
            }
            let (frames, discarded) = accumulate_frames(&s, dt, t_steps).unwrap();
            prop_assert_eq!(frames.data.sum_f64() as usize + discarded, s.len());
        }

        /// Binning is invariant to event order.
        #[test]
        fn prop_accumulate_permutation_invariant(
            times in proptest::collection::vec(0u64..4_000, 1..48),
            rot in 0usize..48,
        ) {
            let mut s = EventStream::new(4, 4);
            for (i, t) in times.iter().enumerate() {
                s.events.push(Event {
                    t_us: *t,
                    x: (i % 4) as u32,
                    y: (i % 4) as u32,
                    p: ((i / 2) % 2) as u8,
                });
            }
            let mut shuffled = s.clone();
            let n = shuffled.events.len().max(1);
            shuffled.events.rotate_left(rot % n);
            let (a, da) = accumulate_frames(&s, 500, 4).unwrap();
            let (b, db) = accumulate_frames(&shuffled, 500, 4).unwrap();
            prop_assert_eq!(a.data, b.data);
            prop_assert_eq!(da, db);
        }

        /// Serialization round-trips through the parser.
        #[test]
        fn prop_csv_roundtrip(
            times in proptest::collection::vec(0u64..100_000, 0..32),
        ) {
            let mut s = EventStream::new(6, 5);
            let mut sorted = times.clone();
            sorted.sort_unstable();
            for (i, t) in sorted.iter().enumerate() {
                s.events.push(Event {
                    t_us: *t,
                    x: (i % 5) as u32,
                    y: (i % 6) as u32,
                    p: (i % 2) as u8,
                });
            }
            let parsed = parse_event_csv(&serialize_event_csv(&s)).unwrap();
            prop_assert_eq!(parsed.events, s.events);
            prop_assert_eq!((parsed.height, parsed.width), (s.height, s.width));
        }
    }
}
