//! Synthetic handwritten-digit corpus in MNIST's IDX container format.
//!
//! Each digit is a small set of strokes (polylines and arcs) in a unit box,
//! distorted per sample by a seeded affine transform plus vertex jitter and
//! rasterized to 28×28 grayscale with an anti-aliased pen. A small fraction
//! of samples is drawn with much heavier distortion so the classes overlap
//! a little, keeping the task honest.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::idx::{write_idx, IdxData};
use super::DataError;

pub const IMAGE_SIDE: usize = 28;

/// Standard MNIST file names, in (train images, train labels, test images,
/// test labels) order.
pub const CORPUS_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Corpus shape and difficulty.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct SynthSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Fraction of samples drawn with heavy distortion, in [0, 1).
    pub ambiguity: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { n_train: 2400, n_test: 600, seed: 7, ambiguity: 0.06 }
    }
}

type Point = (f64, f64);
type Stroke = Vec<Point>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, deg0: f64, deg1: f64) -> Stroke {
    const SEGMENTS: usize = 24;
    (0..=SEGMENTS)
        .map(|i| {
            let t = deg0 + (deg1 - deg0) * (i as f64) / (SEGMENTS as f64);
            let rad = t.to_radians();
            (cx + rx * rad.cos(), cy + ry * rad.sin())
        })
        .collect()
}

fn line(a: Point, b: Point) -> Stroke {
    vec![a, b]
}

/// Stroke template for one digit, in unit coordinates with y pointing up.
fn glyph(digit: u8) -> Vec<Stroke> {
    match digit {
        0 => vec![arc(0.5, 0.5, 0.26, 0.36, 0.0, 360.0)],
        1 => vec![
            line((0.38, 0.72), (0.52, 0.9)),
            line((0.52, 0.9), (0.52, 0.08)),
        ],
        2 => vec![
            arc(0.5, 0.7, 0.22, 0.22, 170.0, -30.0),
            line((0.69, 0.59), (0.28, 0.1)),
            line((0.28, 0.1), (0.74, 0.1)),
        ],
        3 => vec![
            arc(0.48, 0.68, 0.21, 0.21, 150.0, -80.0),
            arc(0.48, 0.3, 0.23, 0.23, 80.0, -150.0),
        ],
        4 => vec![
            line((0.6, 0.9), (0.22, 0.38)),
            line((0.22, 0.38), (0.78, 0.38)),
            line((0.62, 0.66), (0.62, 0.08)),
        ],
        5 => vec![
            line((0.72, 0.9), (0.3, 0.9)),
            line((0.3, 0.9), (0.28, 0.54)),
            arc(0.47, 0.32, 0.24, 0.24, 100.0, -140.0),
        ],
        6 => vec![
            arc(0.58, 0.56, 0.32, 0.32, 100.0, 230.0),
            arc(0.48, 0.28, 0.2, 0.2, 0.0, 360.0),
        ],
        7 => vec![
            line((0.24, 0.88), (0.76, 0.88)),
            line((0.76, 0.88), (0.42, 0.08)),
        ],
        8 => vec![
            arc(0.5, 0.67, 0.17, 0.17, 0.0, 360.0),
            arc(0.5, 0.3, 0.21, 0.21, 0.0, 360.0),
        ],
        9 => vec![
            arc(0.53, 0.64, 0.2, 0.2, 0.0, 360.0),
            line((0.73, 0.64), (0.6, 0.08)),
        ],
        _ => unreachable!("digits are 0–9"),
    }
}

struct Distortion {
    rot: f64,
    scale_x: f64,
    scale_y: f64,
    shift_x: f64,
    shift_y: f64,
    vertex_jitter: f64,
    pen_width: f64,
}

impl Distortion {
    fn sample(rng: &mut ChaCha8Rng, heavy: bool) -> Self {
        let (rot, scale, shift, jitter) = if heavy {
            (0.4, 0.3, 0.12, 0.05)
        } else {
            (0.12, 0.14, 0.06, 0.015)
        };
        Distortion {
            rot: rng.gen_range(-rot..=rot),
            scale_x: rng.gen_range(1.0 - scale..=1.0 + scale * 0.6),
            scale_y: rng.gen_range(1.0 - scale..=1.0 + scale * 0.6),
            shift_x: rng.gen_range(-shift..=shift),
            shift_y: rng.gen_range(-shift..=shift),
            vertex_jitter: jitter,
            pen_width: rng.gen_range(0.04..=0.062),
        }
    }

    fn apply(&self, rng: &mut ChaCha8Rng, (x, y): Point) -> Point {
        let (cx, cy) = (0.5, 0.5);
        let (dx, dy) = ((x - cx) * self.scale_x, (y - cy) * self.scale_y);
        let (sin, cos) = self.rot.sin_cos();
        let j = self.vertex_jitter;
        (
            cx + cos * dx - sin * dy + self.shift_x + rng.gen_range(-j..=j),
            cy + sin * dx + cos * dy + self.shift_y + rng.gen_range(-j..=j),
        )
    }
}

fn dist_to_segment((px, py): Point, (ax, ay): Point, (bx, by): Point) -> f64 {
    let (vx, vy) = (bx - ax, by - ay);
    let len_sq = vx * vx + vy * vy;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        (((px - ax) * vx + (py - ay) * vy) / len_sq).clamp(0.0, 1.0)
    };
    let (nx, ny) = (ax + t * vx - px, ay + t * vy - py);
    (nx * nx + ny * ny).sqrt()
}

/// Rasterizes one digit with a fresh distortion drawn from `rng`.
fn render(digit: u8, rng: &mut ChaCha8Rng, heavy: bool) -> Vec<u8> {
    const EDGE_SOFTNESS: f64 = 0.025;
    let distortion = Distortion::sample(rng, heavy);
    let strokes: Vec<Stroke> = glyph(digit)
        .into_iter()
        .map(|s| s.into_iter().map(|p| distortion.apply(rng, p)).collect())
        .collect();

    let mut pixels = vec![0u8; IMAGE_SIDE * IMAGE_SIDE];
    let side = IMAGE_SIDE as f64;
    for row in 0..IMAGE_SIDE {
        for col in 0..IMAGE_SIDE {
            let p = (
                (col as f64 + 0.5) / side,
                1.0 - (row as f64 + 0.5) / side,
            );
            let mut dist = f64::INFINITY;
            for stroke in &strokes {
                for seg in stroke.windows(2) {
                    dist = dist.min(dist_to_segment(p, seg[0], seg[1]));
                }
            }
            let alpha = (1.0 - (dist - distortion.pen_width) / EDGE_SOFTNESS)
                .clamp(0.0, 1.0);
            pixels[row * IMAGE_SIDE + col] = (alpha * 255.0).round() as u8;
        }
    }
    // Faint sensor noise on the background.
    for px in &mut pixels {
        *px = px.saturating_add(rng.gen_range(0..8));
    }
    pixels
}

fn render_split(n: usize, ambiguity: f64, rng: &mut ChaCha8Rng) -> (IdxData, IdxData) {
    let mut pixels = Vec::with_capacity(n * IMAGE_SIDE * IMAGE_SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let digit = (i % 10) as u8;
        let heavy = rng.gen_bool(ambiguity);
        pixels.extend_from_slice(&render(digit, rng, heavy));
        labels.push(digit);
    }
    (
        IdxData::Images { n, rows: IMAGE_SIDE, cols: IMAGE_SIDE, pixels },
        IdxData::Labels(labels),
    )
}

/// Generates (train images, train labels, test images, test labels).
/// Deterministic for a given spec; train and test use disjoint RNG streams.
pub fn generate_corpus(spec: &SynthSpec) -> Result<[IdxData; 4], DataError> {
    if spec.n_train == 0 || spec.n_test == 0 {
        return Err(DataError::EmptyDataset);
    }
    if !(0.0..1.0).contains(&spec.ambiguity) {
        return Err(DataError::BadAmbiguity { value: spec.ambiguity });
    }
    let mut train_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    train_rng.set_stream(0);
    let mut test_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    test_rng.set_stream(1);
    let (train_images, train_labels) = render_split(spec.n_train, spec.ambiguity, &mut train_rng);
    let (test_images, test_labels) = render_split(spec.n_test, spec.ambiguity, &mut test_rng);
    Ok([train_images, train_labels, test_images, test_labels])
}

/// Writes the corpus under MNIST's standard file names in `dir`.
pub fn write_corpus(dir: &Path, spec: &SynthSpec) -> Result<(), DataError> {
    let parts = generate_corpus(spec)?;
    fs::create_dir_all(dir)?;
    for (name, part) in CORPUS_FILES.iter().zip(&parts) {
        fs::write(dir.join(name), write_idx(part))?;
    }
    Ok(())
}
