//! Deterministic synthetic videos with known event boundaries.
//!
//! Each scene is a static noise background with a textured rectangle moving
//! at a constant integer velocity. A cut starts a new scene with fresh
//! content and colors; a motion reversal negates the velocity.

use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{Frame, RawVideo};
use crate::metrics::Annotation;
use crate::{Error, Result};

/// Minimum spacing between events in any plan.
pub const MIN_EVENT_SPACING: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Cut,
    MotionReversal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub frame: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureParams {
    /// Background noise amplitude range (uniform ± amplitude around the mean).
    pub background_noise: (u8, u8),
    /// Object texture amplitude range.
    pub object_noise: (u8, u8),
    /// Side length range of the moving rectangle, in pixels.
    pub object_size: (usize, usize),
    /// Largest per-axis speed in pixels per frame.
    pub max_speed: usize,
    /// Minimum L1 distance between the mean colors of consecutive scenes.
    pub min_palette_distance: u32,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            background_noise: (8, 32),
            object_noise: (16, 48),
            object_size: (20, 28),
            max_speed: 2,
            min_palette_distance: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub num_frames: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub events: Vec<Event>,
    pub texture: TextureParams,
    /// The codec search radius the motion must stay within.
    pub search_radius: usize,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames == 0 || self.width == 0 || self.height == 0 || !(self.fps > 0.0) {
            return Err(Error::Config("synthetic video needs positive size, length and fps".into()));
        }
        let t = &self.texture;
        if t.max_speed == 0 || t.max_speed > self.search_radius {
            return Err(Error::Config(format!(
                "object speed {} must be in 1..={} (codec search radius)",
                t.max_speed, self.search_radius
            )));
        }
        if t.object_size.0 == 0 || t.object_size.0 > t.object_size.1 || t.object_size.1 >= self.width.min(self.height) {
            return Err(Error::Config(format!("object size range {:?} does not fit the frame", t.object_size)));
        }
        if t.background_noise.0 > t.background_noise.1 || t.object_noise.0 > t.object_noise.1 {
            return Err(Error::Config("noise ranges must be ordered".into()));
        }
        for e in &self.events {
            if e.frame == 0 || e.frame >= self.num_frames {
                return Err(Error::Config(format!(
                    "event at frame {} outside (0, {})",
                    e.frame, self.num_frames
                )));
            }
        }
        for w in self.events.windows(2) {
            if w[1].frame < w[0].frame + MIN_EVENT_SPACING {
                return Err(Error::Config(format!(
                    "events at frames {} and {} are closer than {MIN_EVENT_SPACING}",
                    w[0].frame, w[1].frame
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Palette {
    background: [u8; 3],
    object: [u8; 3],
    background_noise: u8,
    object_noise: u8,
}

struct Scene {
    background: Vec<u8>,
    texture: Vec<u8>,
    size: usize,
}

fn noisy(rng: &mut Xoshiro256PlusPlus, mean: [u8; 3], amp: u8, n: usize) -> Vec<u8> {
    let amp = i32::from(amp);
    (0..n * 3)
        .map(|i| (i32::from(mean[i % 3]) + rng.random_range(-amp..=amp)).clamp(0, 255) as u8)
        .collect()
}

fn l1(a: [u8; 3], b: [u8; 3]) -> u32 {
    a.iter().zip(&b).map(|(&x, &y)| u32::from(x.abs_diff(y))).sum()
}

fn random_color(rng: &mut Xoshiro256PlusPlus) -> [u8; 3] {
    [rng.random_range(20..236), rng.random_range(20..236), rng.random_range(20..236)]
}

fn pick_palette(rng: &mut Xoshiro256PlusPlus, t: &TextureParams, previous: Option<Palette>) -> Palette {
    loop {
        let p = Palette {
            background: random_color(rng),
            object: random_color(rng),
            background_noise: rng.random_range(t.background_noise.0..=t.background_noise.1),
            object_noise: rng.random_range(t.object_noise.0..=t.object_noise.1),
        };
        // the object must stand out from its own background, and a new scene
        // from the one it replaces
        if l1(p.background, p.object) < 120 {
            continue;
        }
        if previous.is_some_and(|q| l1(q.background, p.background) < t.min_palette_distance) {
            continue;
        }
        return p;
    }
}

/// Per-axis displacement range of a trajectory that starts at 0.
fn excursion(velocity: i64, segments: &[(usize, i64)]) -> (i64, i64) {
    let (mut pos, mut lo, mut hi) = (0i64, 0i64, 0i64);
    for &(len, sign) in segments {
        pos += velocity * sign * len as i64;
        lo = lo.min(pos);
        hi = hi.max(pos);
    }
    (lo, hi)
}

/// Renders a video and its annotation. Identical specs give identical pixels.
pub fn generate_video(spec: &SynthSpec, video_id: &str) -> Result<(RawVideo, Annotation)> {
    spec.validate()?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let t = &spec.texture;

    // scene boundaries: frame 0 and every cut
    let mut scene_starts = vec![0];
    scene_starts.extend(spec.events.iter().filter(|e| e.kind == EventKind::Cut).map(|e| e.frame));
    let mut frames = Vec::with_capacity(spec.num_frames);
    let mut palette = None;
    for (si, &start) in scene_starts.iter().enumerate() {
        let end = scene_starts.get(si + 1).copied().unwrap_or(spec.num_frames);
        let p = pick_palette(&mut rng, t, palette);
        palette = Some(p);
        // sign of the velocity over each run of frames inside the scene
        let reversals: Vec<usize> = spec
            .events
            .iter()
            .filter(|e| e.kind == EventKind::MotionReversal && e.frame > start && e.frame < end)
            .map(|e| e.frame)
            .collect();
        let mut signs = vec![1i64; end - start];
        for (i, s) in signs.iter_mut().enumerate() {
            let flips = reversals.iter().filter(|&&r| start + i >= r).count();
            if flips % 2 == 1 {
                *s = -1;
            }
        }
        // displacement from frame k to k+1 uses the sign of frame k+1
        let segments: Vec<(usize, i64)> = signs.iter().skip(1).map(|&s| (1, s)).collect();

        // shrink the object if needed so that both axes can move at 1 px/frame
        let (lo, hi) = excursion(1, &segments);
        let fit = (w.min(h) as i64 - (hi - lo)).max(1) as usize;
        let size = rng.random_range(t.object_size.0..=t.object_size.1).min(fit);
        let scene = Scene {
            background: noisy(&mut rng, p.background, p.background_noise, w * h),
            texture: noisy(&mut rng, p.object, p.object_noise, size * size),
            size,
        };

        let axis = |room: usize, rng: &mut Xoshiro256PlusPlus| -> (i64, i64) {
            let mut speed = rng.random_range(1..=t.max_speed) as i64;
            if rng.random_bool(0.5) {
                speed = -speed;
            }
            loop {
                let (lo, hi) = excursion(speed, &segments);
                if hi - lo <= room as i64 || speed == 0 {
                    let (lo, hi) = excursion(speed, &segments);
                    let origin = rng.random_range(-lo..=room as i64 - hi);
                    return (speed, origin);
                }
                speed -= speed.signum();
            }
        };
        let (vy, y0) = axis(h - size, &mut rng);
        let (vx, x0) = axis(w - size, &mut rng);

        let (mut y, mut x) = (y0, x0);
        for (i, &sign) in signs.iter().enumerate() {
            if i > 0 {
                y += vy * sign;
                x += vx * sign;
            }
            frames.push(render(&scene, w, h, y as usize, x as usize));
        }
    }
    let raw = RawVideo::new(spec.fps as f32, frames)?;
    let annotation = Annotation {
        video_id: video_id.to_string(),
        fps: spec.fps,
        num_frames: spec.num_frames,
        boundaries_sec: spec.events.iter().map(|e| e.frame as f64 / spec.fps).collect(),
    };
    Ok((raw, annotation))
}

fn render(scene: &Scene, w: usize, h: usize, oy: usize, ox: usize) -> Frame {
    let mut data = scene.background.clone();
    let s = scene.size;
    for r in 0..s {
        let dst = ((oy + r) * w + ox) * 3;
        data[dst..dst + 3 * s].copy_from_slice(&scene.texture[r * s * 3..(r + 1) * s * 3]);
    }
    Frame::new(w, h, data).expect("rendered frame matches its size")
}

/// SplitMix64 finalizer, used to derive independent per-video seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Settings shared by every video of a generated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub num_frames: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    /// Inclusive range of events per video.
    pub events_per_video: (usize, usize),
    /// Minimum spacing between generated events, in frames.
    pub event_spacing: usize,
    /// Events stay at least this many frames away from either end.
    pub edge_margin: usize,
    pub texture: TextureParams,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            num_frames: 48,
            fps: 12.0,
            width: 64,
            height: 64,
            events_per_video: (1, 3),
            event_spacing: 10,
            edge_margin: 4,
            texture: TextureParams::default(),
        }
    }
}

/// Draws an event plan with the corpus spacing rules.
pub fn random_event_plan(rng: &mut Xoshiro256PlusPlus, spec: &CorpusSpec) -> Result<Vec<Event>> {
    let (lo, hi) = (spec.edge_margin.max(1), spec.num_frames.saturating_sub(spec.edge_margin));
    let spacing = spec.event_spacing.max(MIN_EVENT_SPACING);
    let (min_n, max_n) = spec.events_per_video;
    if min_n > max_n || (min_n > 0 && (hi <= lo || (min_n - 1) * spacing > hi - lo)) {
        return Err(Error::Config(format!(
            "cannot place {min_n} events {spacing} frames apart in frames {lo}..{hi}"
        )));
    }
    let n = rng.random_range(min_n..=max_n);
    for _ in 0..1000 {
        let mut frames: Vec<usize> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
        frames.sort_unstable();
        if frames.windows(2).all(|w| w[1] >= w[0] + spacing) {
            return Ok(frames
                .into_iter()
                .map(|frame| Event {
                    frame,
                    kind: if rng.random_bool(0.5) {
                        EventKind::Cut
                    } else {
                        EventKind::MotionReversal
                    },
                })
                .collect());
        }
    }
    // a dense plan can be hard to hit by rejection; fall back to fewer events
    random_event_plan(
        rng,
        &CorpusSpec {
            events_per_video: (min_n, n.saturating_sub(1).max(min_n)),
            ..spec.clone()
        },
    )
}

/// Spec of video `index` in a split; the plan and pixels depend only on
/// `(corpus_seed, index)`.
pub fn video_spec(corpus: &CorpusSpec, corpus_seed: u64, index: usize, search_radius: usize) -> Result<SynthSpec> {
    let seed = mix_seed(corpus_seed, index as u64);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let events = random_event_plan(&mut rng, corpus)?;
    Ok(SynthSpec {
        seed: mix_seed(seed, 1),
        num_frames: corpus.num_frames,
        fps: corpus.fps,
        width: corpus.width,
        height: corpus.height,
        events,
        texture: corpus.texture.clone(),
        search_radius,
    })
}

pub struct SynthVideo {
    pub video_id: String,
    pub spec: SynthSpec,
    pub video: RawVideo,
    pub annotation: Annotation,
}

/// Generates `count` videos named `{prefix}_{index:04}`, in parallel, in
/// index order.
pub fn generate_corpus(
    corpus: &CorpusSpec,
    corpus_seed: u64,
    count: usize,
    prefix: &str,
    search_radius: usize,
) -> Result<Vec<SynthVideo>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let spec = video_spec(corpus, corpus_seed, i, search_radius)?;
            let video_id = format!("{prefix}_{i:04}");
            let (video, annotation) = generate_video(&spec, &video_id)?;
            Ok(SynthVideo {
                video_id,
                spec,
                video,
                annotation,
            })
        })
        .collect()
}
