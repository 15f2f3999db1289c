//! Synthetic surveillance clips with known movers, for tests and demos.
//!
//! Each shot shows one of a few fixed camera scenes crossed by up to two
//! movers.
//! Vehicle-like movers are large and fast, pedestrian-like ones small and
//! slow. A mover may approach the camera (growing while drifting down) or
//! travel against the usual left-to-right flow.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::SynthConfig;
use crate::error::Result;
use crate::imgcore::io::{write_y4m, Video};
use crate::imgcore::ColorFrame;
use crate::pipeline::{ShotTruth, Split, TruthTable, TRUTH_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoverKind {
    Vehicle,
    Pedestrian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mover {
    pub kind: MoverKind,
    /// Center at frame 0.
    pub x0: f64,
    pub y0: f64,
    pub vx: f64,
    pub vy: f64,
    pub width: f64,
    pub height: f64,
    /// Relative size increase per frame.
    pub growth: f64,
    pub color: [f64; 3],
}

impl Mover {
    pub fn approaching(&self) -> bool {
        self.growth > 0.0
    }

    /// Center and size at frame `t`.
    pub fn at(&self, t: f64) -> (f64, f64, f64, f64) {
        let s = 1.0 + self.growth * t;
        (self.x0 + self.vx * t, self.y0 + self.vy * t, self.width * s, self.height * s)
    }

    /// Coverage of the pixel square at (px, py) and the color there, by 4×4
    /// supersampling.
    fn sample(&self, t: f64, px: usize, py: usize) -> Option<(f64, [f64; 3])> {
        let (cx, cy, w, h) = self.at(t);
        let mut cover = 0.0;
        let mut shade = 0.0;
        for sy in 0..4 {
            for sx in 0..4 {
                let x = px as f64 + (sx as f64 + 0.5) / 4.0 - cx;
                let y = py as f64 + (sy as f64 + 0.5) / 4.0 - cy;
                let (u, v) = (x / (0.5 * w), y / (0.5 * h));
                let inside = match self.kind {
                    MoverKind::Vehicle => u.abs() <= 1.0 && v.abs() <= 1.0,
                    MoverKind::Pedestrian => u * u + v * v <= 1.0,
                };
                if inside {
                    cover += 1.0 / 16.0;
                    shade += self.shade(u, v) / 16.0;
                }
            }
        }
        (cover > 0.0).then(|| (cover, self.color.map(|c| (c * shade / cover).clamp(0.0, 1.0))))
    }

    /// Brightness pattern in body coordinates, both in [-1, 1].
    fn shade(&self, u: f64, v: f64) -> f64 {
        match self.kind {
            // Dark window band on top, wheels at the bottom corners.
            MoverKind::Vehicle => {
                if v < -0.3 && u.abs() < 0.8 {
                    0.45
                } else if v > 0.6 && (u.abs() - 0.6).abs() < 0.2 {
                    0.25
                } else {
                    1.0 - 0.1 * u
                }
            }
            // Lighter head above a body.
            MoverKind::Pedestrian => {
                if v < -0.55 {
                    1.3
                } else {
                    0.9 + 0.1 * (3.0 * v).cos()
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthShot {
    pub id: String,
    pub video: Video,
    pub movers: Vec<Mover>,
    pub truth: ShotTruth,
}

const PALETTE: [[f64; 3]; 6] = [
    [0.85, 0.15, 0.12],
    [0.15, 0.3, 0.85],
    [0.92, 0.9, 0.85],
    [0.95, 0.75, 0.1],
    [0.1, 0.55, 0.25],
    [0.55, 0.2, 0.6],
];

/// Targets a set of movers makes positive.
pub fn truth_targets(movers: &[Mover]) -> BTreeSet<String> {
    let mut t = BTreeSet::new();
    for m in movers {
        let (moving, approaching) = match m.kind {
            MoverKind::Vehicle => ("C2", "C1"),
            MoverKind::Pedestrian => ("C4", "C3"),
        };
        t.insert(moving.to_string());
        if m.approaching() {
            t.insert(approaching.to_string());
        }
        if m.kind == MoverKind::Pedestrian && m.vx.abs() > 1.7 {
            t.insert("PersonRuns".to_string());
        }
        if m.vx < 0.0 {
            t.insert("OpposingFlow".to_string());
        }
    }
    if !movers.is_empty() {
        t.insert("C5".to_string());
    }
    t
}

fn mover(kind: MoverKind, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Mover {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let (mw, mh, speed, band) = match kind {
        MoverKind::Vehicle => (
            rng.random_range(14.0..18.0),
            rng.random_range(8.0..10.0),
            rng.random_range(2.0..3.0),
            (0.55, 0.75),
        ),
        MoverKind::Pedestrian => {
            let runs = rng.random_bool(0.2);
            let speed = if runs { rng.random_range(2.0..2.4) } else { rng.random_range(1.0..1.4) };
            (rng.random_range(4.0..5.5), rng.random_range(9.0..11.0), speed, (0.3, 0.6))
        }
    };
    let leftward = rng.random_bool(0.3);
    let approaching = rng.random_bool(0.4);
    let margin = 0.5 * mw + rng.random_range(1.0..5.0);
    let x0 = if leftward { w - margin } else { margin };
    Mover {
        kind,
        x0,
        y0: h * rng.random_range(band.0..band.1),
        vx: if leftward { -speed } else { speed },
        vy: if approaching { 0.4 } else { 0.0 },
        width: mw,
        height: mh,
        growth: if approaching { 0.04 } else { 0.0 },
        color: PALETTE[rng.random_range(0..PALETTE.len())],
    }
}

fn background(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> ColorFrame {
    let base = [
        rng.random_range(0.35..0.55),
        rng.random_range(0.4..0.55),
        rng.random_range(0.35..0.5),
    ];
    let (fx, fy) = (rng.random_range(0.05..0.15), rng.random_range(0.05..0.15));
    let phase = rng.random_range(0.0..2.0 * PI);
    let horizon = cfg.height as f64 * 0.45;
    ColorFrame::from_fn(cfg.width, cfg.height, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let tex = 0.06 * (2.0 * PI * fx * x + phase).sin() * (2.0 * PI * fy * y).cos();
        // Darker ground below the horizon.
        let ground = if y > horizon { -0.1 } else { 0.05 };
        base.map(|c| (c + tex + ground).clamp(0.0, 1.0))
    })
}

fn render(bg: &ColorFrame, movers: &[Mover], t: f64) -> ColorFrame {
    let mut f = bg.clone();
    for m in movers {
        for y in 0..bg.height() {
            for x in 0..bg.width() {
                if let Some((a, c)) = m.sample(t, x, y) {
                    let p = f.pixel(x, y);
                    f.set_pixel(x, y, [0, 1, 2].map(|i| a * c[i] + (1.0 - a) * p[i]));
                }
            }
        }
    }
    f
}

/// Number of fixed camera scenes shots are drawn from.
pub const CAMERAS: usize = 3;

/// Shots in four equal-odds compositions: a vehicle, a pedestrian, both, or
/// neither. Every third shot is held out for testing.
pub fn generate_corpus(cfg: &SynthConfig) -> Vec<SynthShot> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut kinds: Vec<usize> = (0..cfg.shots).map(|i| i % 4).collect();
    kinds.shuffle(&mut rng);
    let scenes: Vec<ColorFrame> = (0..CAMERAS).map(|_| background(cfg, &mut rng)).collect();
    kinds
        .into_iter()
        .enumerate()
        .map(|(i, composition)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1 + i as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
            let bg = &scenes[rng.random_range(0..CAMERAS)];
            let mut movers = Vec::new();
            if composition == 0 || composition == 2 {
                movers.push(mover(MoverKind::Vehicle, cfg, &mut rng));
            }
            if composition == 1 || composition == 2 {
                movers.push(mover(MoverKind::Pedestrian, cfg, &mut rng));
            }
            let frames = (0..cfg.frames).map(|t| render(bg, &movers, t as f64)).collect();
            let split = if i % 3 == 2 { Split::Test } else { Split::Train };
            SynthShot {
                id: format!("shot{i:03}"),
                video: Video {
                    width: cfg.width,
                    height: cfg.height,
                    fps: (cfg.fps, 1),
                    frames,
                },
                truth: ShotTruth {
                    split,
                    positives: truth_targets(&movers),
                },
                movers,
            }
        })
        .collect()
}

/// Writes `<id>.y4m` per shot and the ground-truth table.
pub fn write_corpus(dir: &Path, shots: &[SynthShot]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut truth = TruthTable::default();
    for s in shots {
        write_y4m(BufWriter::new(fs::File::create(dir.join(format!("{}.y4m", s.id)))?), &s.video)?;
        truth.shots.insert(s.id.clone(), s.truth.clone());
    }
    fs::write(dir.join(TRUTH_FILE), truth.to_text())?;
    Ok(())
}
