//! Deterministic stand-in for a small grayscale face corpus: 92x112 PGMs,
//! one directory per subject. Each subject has its own face geometry, skin
//! and hair tone and hair texture; each image adds a shift, a lighting
//! change and sensor noise.

#![allow(dead_code)]

use std::fs;
use std::path::Path;

use blockbayes::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const WIDTH: usize = 92;
pub const HEIGHT: usize = 112;

struct Subject {
    face_rx: f64,
    face_ry: f64,
    skin: f64,
    hair: f64,
    hairline: f64,
    stripe_period: f64,
    eye_y: f64,
    eye_dx: f64,
    eye_r: f64,
    mouth_y: f64,
    mouth_w: f64,
    background: f64,
}

impl Subject {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self {
            face_rx: rng.gen_range(26.0..38.0),
            face_ry: rng.gen_range(36.0..50.0),
            skin: rng.gen_range(120.0..210.0),
            hair: rng.gen_range(20.0..110.0),
            hairline: rng.gen_range(18.0..38.0),
            stripe_period: rng.gen_range(2.5..9.0),
            eye_y: rng.gen_range(42.0..56.0),
            eye_dx: rng.gen_range(10.0..18.0),
            eye_r: rng.gen_range(3.0..6.5),
            mouth_y: rng.gen_range(76.0..92.0),
            mouth_w: rng.gen_range(8.0..20.0),
            background: rng.gen_range(40.0..200.0),
        }
    }

    fn render(&self, rng: &mut ChaCha8Rng) -> GrayImage {
        let (sx, sy) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let gain = rng.gen_range(0.85..1.15);
        let bias = rng.gen_range(-12.0..12.0);
        let tilt = rng.gen_range(-0.3..0.3);
        let noise = Normal::new(0.0, 6.0).unwrap();
        let (cx, cy) = (46.0 + sx, 58.0 + sy);
        let mut pixels = Vec::with_capacity(WIDTH * HEIGHT);
        for row in 0..HEIGHT {
            for col in 0..WIDTH {
                let (x, y) = (col as f64, row as f64);
                let (u, v) = ((x - cx) / self.face_rx, (y - cy) / self.face_ry);
                let mut value = if u * u + v * v <= 1.0 {
                    if y < cy - self.face_ry + self.hairline {
                        let stripe = ((x + y * 0.5) / self.stripe_period).sin();
                        self.hair + 25.0 * stripe
                    } else {
                        // soft shading toward the cheeks
                        self.skin - 30.0 * u * u
                    }
                } else {
                    self.background + 0.3 * (y - 56.0)
                };
                for side in [-1.0, 1.0] {
                    let (ex, ey) = (cx + side * self.eye_dx, cy - 58.0 + self.eye_y);
                    if (x - ex).powi(2) + (y - ey).powi(2) <= self.eye_r * self.eye_r {
                        value = 25.0;
                    }
                }
                let my = cy - 58.0 + self.mouth_y;
                if (y - my).abs() <= 1.5 && (x - cx).abs() <= self.mouth_w {
                    value = 50.0;
                }
                value = value * gain + bias + tilt * (x - 46.0) + noise.sample(rng);
                pixels.push(value.round().clamp(0.0, 255.0) as u16);
            }
        }
        GrayImage::new(WIDTH, HEIGHT, 255, pixels).unwrap()
    }
}

/// Renders `per_subject` images for each of `subjects` subjects.
pub fn corpus(subjects: usize, per_subject: usize, seed: u64) -> Vec<(String, Vec<GrayImage>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..subjects)
        .map(|s| {
            let subject = Subject::draw(&mut rng);
            let images = (0..per_subject).map(|_| subject.render(&mut rng)).collect();
            (format!("s{:02}", s + 1), images)
        })
        .collect()
}

/// Writes the corpus as `<dir>/<subject>/<n>.pgm`.
pub fn write_corpus(dir: &Path, subjects: usize, per_subject: usize, seed: u64) {
    for (name, images) in corpus(subjects, per_subject, seed) {
        let sub = dir.join(&name);
        fs::create_dir_all(&sub).unwrap();
        for (i, img) in images.iter().enumerate() {
            fs::write(sub.join(format!("{:02}.pgm", i + 1)), img.encode_pgm().unwrap()).unwrap();
        }
    }
}
