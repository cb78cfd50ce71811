use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Pixel size of the clinical reconstruction grid, in millimetres.
pub const CLINICAL_PIXEL_MM: f64 = 0.6641;
/// Side length of the clinical reconstruction grid.
pub const CLINICAL_GRID: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    SheppLogan,
    EllipseSoup,
    Disk,
}

impl std::str::FromStr for PhantomKind {
    type Err = crate::error::LomaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shepp_logan" | "shepp-logan" => Ok(PhantomKind::SheppLogan),
            "ellipse_soup" | "ellipse-soup" => Ok(PhantomKind::EllipseSoup),
            "disk" => Ok(PhantomKind::Disk),
            other => Err(crate::error::LomaeError::InvalidArgument(format!(
                "unknown phantom kind '{other}'"
            ))),
        }
    }
}

/// Noise-free attenuation image on a square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub pixels: Array2<f64>,
    pub pixel_size_mm: f64,
}

impl Phantom {
    pub fn new(pixels: Array2<f64>, pixel_size_mm: f64) -> Result<Self> {
        ensure!(
            pixels.nrows() == pixels.ncols(),
            InvalidArgument,
            "phantom must be square, got {:?}",
            pixels.dim()
        );
        ensure!(
            pixel_size_mm > 0.0,
            InvalidArgument,
            "pixel size must be positive"
        );
        ensure!(
            pixels.iter().all(|v| v.is_finite() && *v >= 0.0),
            InvalidArgument,
            "phantom values must be finite and non-negative"
        );
        Ok(Self {
            pixels,
            pixel_size_mm,
        })
    }

    pub fn size(&self) -> usize {
        self.pixels.nrows()
    }
}

/// Ellipse in normalized [-1, 1] coordinates, `angle` in degrees.
#[derive(Debug, Clone, Copy)]
struct Ellipse {
    value: f64,
    a: f64,
    b: f64,
    x0: f64,
    y0: f64,
    angle: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.to_radians().sin_cos();
        let dx = x - self.x0;
        let dy = y - self.y0;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

// Modified (high-contrast) Shepp-Logan head phantom.
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

fn pixel_coords(n: usize, i: usize, j: usize) -> (f64, f64) {
    let nf = n as f64;
    let x = (2.0 * j as f64 + 1.0 - nf) / nf;
    let y = (nf - 1.0 - 2.0 * i as f64) / nf;
    (x, y)
}

/// Default pixel size for an `n`-pixel grid spanning the clinical field of view.
pub fn default_pixel_size(n: usize) -> f64 {
    CLINICAL_PIXEL_MM * CLINICAL_GRID as f64 / n as f64
}

pub fn make_phantom(kind: PhantomKind, n: usize, seed: u64) -> Result<Phantom> {
    ensure!(
        n >= 16,
        InvalidArgument,
        "phantom grid must be at least 16 pixels, got {n}"
    );
    let pixels = match kind {
        PhantomKind::Disk => Array2::from_shape_fn((n, n), |(i, j)| {
            let (x, y) = pixel_coords(n, i, j);
            if x * x + y * y <= 0.25 {
                1.0
            } else {
                0.0
            }
        }),
        PhantomKind::SheppLogan => {
            let ellipses: Vec<Ellipse> = SHEPP_LOGAN
                .iter()
                .map(|&(value, a, b, x0, y0, angle)| Ellipse {
                    value,
                    a,
                    b,
                    x0,
                    y0,
                    angle,
                })
                .collect();
            Array2::from_shape_fn((n, n), |(i, j)| {
                let (x, y) = pixel_coords(n, i, j);
                let v: f64 = ellipses
                    .iter()
                    .filter(|e| e.contains(x, y))
                    .map(|e| e.value)
                    .sum();
                v.clamp(0.0, 1.0)
            })
        }
        PhantomKind::EllipseSoup => ellipse_soup(n, seed),
    };
    Phantom::new(pixels, default_pixel_size(n))
}

/// Body-like random phantom: a soft-tissue ellipse with painted inner structures
/// (air pockets, organs, bone-like inserts).
fn ellipse_soup(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let body = Ellipse {
        value: rng.random_range(0.35..0.45),
        a: rng.random_range(0.78..0.95),
        b: rng.random_range(0.55..0.78),
        x0: rng.random_range(-0.04..0.04),
        y0: rng.random_range(-0.04..0.04),
        angle: rng.random_range(-10.0..10.0),
    };
    let mut shapes = vec![body];
    let count = rng.random_range(4..=9);
    for _ in 0..count {
        let class: f64 = rng.random();
        let value = if class < 0.15 {
            0.0
        } else if class < 0.75 {
            rng.random_range(0.45..0.65)
        } else {
            rng.random_range(0.8..1.0)
        };
        let scale = if value > 0.75 { 0.12 } else { 0.3 };
        let a = rng.random_range(0.04..scale);
        let b = rng.random_range(0.04..scale);
        // keep inserts inside the body outline
        let r = rng.random_range(0.0..0.55);
        let t = rng.random_range(0.0..std::f64::consts::TAU);
        shapes.push(Ellipse {
            value,
            a,
            b,
            x0: body.x0 + r * body.a * t.cos(),
            y0: body.y0 + r * body.b * t.sin(),
            angle: rng.random_range(0.0..180.0),
        });
    }
    Array2::from_shape_fn((n, n), |(i, j)| {
        let (x, y) = pixel_coords(n, i, j);
        let inside_body = shapes[0].contains(x, y);
        let mut v = 0.0;
        for (k, e) in shapes.iter().enumerate() {
            if (k == 0 || inside_body) && e.contains(x, y) {
                v = e.value;
            }
        }
        v
    })
}
