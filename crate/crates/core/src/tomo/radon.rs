//! Ray-driven forward projection and filtered backprojection for parallel and
//! flat-detector fan-beam scans.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use super::phantom::{Phantom, CLINICAL_PIXEL_MM};
use crate::error::{ensure, LomaeError, Result};
use crate::Slice;

/// Source to isocenter distance of the clinical scanner (mm).
pub const CLINICAL_SOURCE_ISO_MM: f64 = 595.0;
/// Source to detector distance of the clinical scanner (mm).
pub const CLINICAL_SOURCE_DETECTOR_MM: f64 = 1085.6;
pub const CLINICAL_DETECTORS: usize = 1024;
pub const CLINICAL_DETECTOR_PITCH_MM: f64 = 1.2854;

/// Linear attenuation (1/mm) represented by a phantom value of 1.0.
pub const DEFAULT_ATTENUATION_PER_MM: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Beam {
    Parallel,
    Fan {
        source_iso_mm: f64,
        source_detector_mm: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconFilter {
    Ramp,
    HannRamp,
}

impl std::str::FromStr for ReconFilter {
    type Err = LomaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp" => Ok(ReconFilter::Ramp),
            "hann" | "hann-windowed-ramp" | "hann_ramp" => Ok(ReconFilter::HannRamp),
            other => Err(LomaeError::InvalidArgument(format!(
                "unknown filter '{other}'"
            ))),
        }
    }
}

/// Scan geometry shared by the projector and the reconstructor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub beam: Beam,
    pub n_views: usize,
    pub n_detectors: usize,
    /// Detector pitch at the detector plane (mm).
    pub detector_pitch_mm: f64,
    pub grid_size: usize,
    pub pixel_size_mm: f64,
    pub attenuation_per_mm: f64,
}

impl ScanGeometry {
    /// Parallel-beam scan over 180 degrees.
    /// Detector bins are half a pixel wide and cover the grid diagonal.
    pub fn parallel(grid_size: usize, pixel_size_mm: f64, n_views: usize) -> Self {
        let diag = (2.0 * grid_size as f64 * std::f64::consts::SQRT_2).ceil() as usize + 2;
        let n_detectors = diag | 1;
        Self {
            beam: Beam::Parallel,
            n_views,
            n_detectors,
            detector_pitch_mm: pixel_size_mm / 2.0,
            grid_size,
            pixel_size_mm,
            attenuation_per_mm: DEFAULT_ATTENUATION_PER_MM,
        }
    }

    /// Flat-detector fan-beam scan over 360 degrees with the clinical scanner distances.
    pub fn clinical_fan(grid_size: usize, n_views: usize) -> Self {
        Self {
            beam: Beam::Fan {
                source_iso_mm: CLINICAL_SOURCE_ISO_MM,
                source_detector_mm: CLINICAL_SOURCE_DETECTOR_MM,
            },
            n_views,
            n_detectors: CLINICAL_DETECTORS,
            detector_pitch_mm: CLINICAL_DETECTOR_PITCH_MM,
            grid_size,
            pixel_size_mm: CLINICAL_PIXEL_MM,
            attenuation_per_mm: DEFAULT_ATTENUATION_PER_MM,
        }
    }

    pub fn with_attenuation(mut self, attenuation_per_mm: f64) -> Self {
        self.attenuation_per_mm = attenuation_per_mm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_views >= 1, InvalidArgument, "n_views must be >= 1");
        ensure!(
            self.n_detectors >= 1,
            InvalidArgument,
            "n_detectors must be >= 1"
        );
        ensure!(
            self.detector_pitch_mm > 0.0 && self.pixel_size_mm > 0.0,
            InvalidArgument,
            "pitch and pixel size must be positive"
        );
        ensure!(
            self.attenuation_per_mm > 0.0,
            InvalidArgument,
            "attenuation scale must be positive"
        );
        if let Beam::Fan {
            source_iso_mm,
            source_detector_mm,
        } = self.beam
        {
            let radius = self.grid_size as f64 * self.pixel_size_mm * std::f64::consts::FRAC_1_SQRT_2;
            ensure!(
                source_detector_mm > source_iso_mm && source_iso_mm > radius,
                InvalidArgument,
                "source must sit outside the field of view and before the detector"
            );
        }
        Ok(())
    }

    fn angular_range(&self) -> f64 {
        match self.beam {
            Beam::Parallel => PI,
            Beam::Fan { .. } => 2.0 * PI,
        }
    }

    pub fn view_angle(&self, view: usize) -> f64 {
        self.angular_range() * view as f64 / self.n_views as f64
    }

    fn detector_offset(&self, k: usize) -> f64 {
        (k as f64 - (self.n_detectors as f64 - 1.0) / 2.0) * self.detector_pitch_mm
    }

    fn fov_radius(&self) -> f64 {
        (self.grid_size as f64 / 2.0 * std::f64::consts::SQRT_2 + 1.0) * self.pixel_size_mm
    }
}

/// Projection-domain data: rows are views, columns detector bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub values: Array2<f64>,
    pub geometry: ScanGeometry,
}

impl Sinogram {
    pub fn zeros(geometry: ScanGeometry) -> Self {
        Self {
            values: Array2::zeros((geometry.n_views, geometry.n_detectors)),
            geometry,
        }
    }
}

fn bilinear(img: &Array2<f64>, row: f64, col: f64) -> f64 {
    let n = img.nrows() as isize;
    let m = img.ncols() as isize;
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let (r0, c0) = (r0 as isize, c0 as isize);
    let mut acc = 0.0;
    for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
        for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
            let (r, c) = (r0 + dr, c0 + dc);
            if r >= 0 && r < n && c >= 0 && c < m {
                let w = wr * wc;
                if w != 0.0 {
                    acc += w * img[[r as usize, c as usize]];
                }
            }
        }
    }
    acc
}

/// Line integral along the ray `origin + s * dir`, sampled symmetrically
/// around `origin` every half pixel.
fn ray_integral(img: &Array2<f64>, pixel: f64, origin: (f64, f64), dir: (f64, f64), half_len: f64) -> f64 {
    let n = img.nrows() as f64;
    let centre = (n - 1.0) / 2.0;
    let ds = pixel / 2.0;
    let steps = (half_len / ds).ceil() as i64;
    let mut sum = 0.0;
    for k in -steps..=steps {
        let s = k as f64 * ds;
        let x = origin.0 + s * dir.0;
        let y = origin.1 + s * dir.1;
        let col = x / pixel + centre;
        let row = centre - y / pixel;
        if row > -1.0 && row < n && col > -1.0 && col < n {
            sum += bilinear(img, row, col);
        }
    }
    sum * ds
}

/// Discrete line integrals of `phantom` (in units of `attenuation_per_mm`).
pub fn radon_project(phantom: &Phantom, geometry: &ScanGeometry) -> Result<Sinogram> {
    geometry.validate()?;
    ensure!(
        phantom.size() == geometry.grid_size,
        Shape,
        "phantom is {}x{} but geometry expects {}",
        phantom.size(),
        phantom.size(),
        geometry.grid_size
    );
    let img = &phantom.pixels;
    let pixel = geometry.pixel_size_mm;
    let radius = geometry.fov_radius();
    let mut sino = Sinogram::zeros(*geometry);
    for view in 0..geometry.n_views {
        let angle = geometry.view_angle(view);
        let (sin, cos) = angle.sin_cos();
        for det in 0..geometry.n_detectors {
            let u = geometry.detector_offset(det);
            let value = match geometry.beam {
                Beam::Parallel => ray_integral(img, pixel, (u * cos, u * sin), (-sin, cos), radius),
                Beam::Fan {
                    source_iso_mm,
                    source_detector_mm,
                } => {
                    let src = (source_iso_mm * cos, source_iso_mm * sin);
                    let det_pt = (
                        src.0 - source_detector_mm * cos - u * sin,
                        src.1 - source_detector_mm * sin + u * cos,
                    );
                    let (dx, dy) = (det_pt.0 - src.0, det_pt.1 - src.1);
                    let len = (dx * dx + dy * dy).sqrt();
                    let dir = (dx / len, dy / len);
                    // closest point to the isocenter along the ray
                    let t0 = -(src.0 * dir.0 + src.1 * dir.1);
                    let origin = (src.0 + t0 * dir.0, src.1 + t0 * dir.1);
                    ray_integral(img, pixel, origin, dir, radius)
                }
            };
            sino.values[[view, det]] = value * geometry.attenuation_per_mm;
        }
    }
    Ok(sino)
}

/// Frequency response of the band-limited ramp kernel, optionally Hann-windowed.
fn ramp_response(len: usize, spacing: f64, filter: ReconFilter) -> Vec<Complex64> {
    let mut kernel = vec![Complex64::new(0.0, 0.0); len];
    kernel[0].re = 1.0 / (4.0 * spacing * spacing);
    for k in 1..len / 2 {
        if k % 2 == 1 {
            let v = -1.0 / ((k * k) as f64 * PI * PI * spacing * spacing);
            kernel[k].re = v;
            kernel[len - k].re = v;
        }
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut kernel);
    if filter == ReconFilter::HannRamp {
        for (j, h) in kernel.iter_mut().enumerate() {
            let nu = j.min(len - j) as f64 / len as f64;
            *h *= 0.5 * (1.0 + (2.0 * PI * nu).cos());
        }
    }
    kernel
}

struct RowFilter {
    response: Vec<Complex64>,
    forward: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inverse: std::sync::Arc<dyn rustfft::Fft<f64>>,
    spacing: f64,
}

impl RowFilter {
    fn new(n_detectors: usize, spacing: f64, filter: ReconFilter) -> Self {
        let len = (2 * n_detectors).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            response: ramp_response(len, spacing, filter),
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            spacing,
        }
    }

    fn apply(&self, row: ArrayView1<f64>, out: &mut [f64]) {
        let len = self.response.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (b, v) in buf.iter_mut().zip(row.iter()) {
            b.re = *v;
        }
        self.forward.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&self.response) {
            *b *= h;
        }
        self.inverse.process(&mut buf);
        let scale = self.spacing / len as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
    }
}

fn interp_row(q: &[f64], idx: f64) -> f64 {
    if idx < 0.0 || idx > (q.len() - 1) as f64 {
        return 0.0;
    }
    let i0 = idx.floor() as usize;
    let f = idx - i0 as f64;
    if i0 + 1 < q.len() {
        q[i0] * (1.0 - f) + q[i0 + 1] * f
    } else {
        q[i0]
    }
}

/// Filtered backprojection onto an `n`x`n` grid in phantom units.
pub fn fbp_reconstruct(sino: &Sinogram, filter: ReconFilter, n: usize) -> Result<Slice> {
    let g = &sino.geometry;
    g.validate()?;
    ensure!(
        n == g.grid_size,
        Shape,
        "sinogram geometry reconstructs a {}-pixel grid, requested {n}",
        g.grid_size
    );
    ensure!(
        sino.values.dim() == (g.n_views, g.n_detectors),
        Shape,
        "sinogram is {:?}, geometry expects ({}, {})",
        sino.values.dim(),
        g.n_views,
        g.n_detectors
    );
    let pixel = g.pixel_size_mm;
    let centre = (n as f64 - 1.0) / 2.0;
    let det_centre = (g.n_detectors as f64 - 1.0) / 2.0;
    let mut image = Array2::<f64>::zeros((n, n));
    let mut q = vec![0.0; g.n_detectors];
    match g.beam {
        Beam::Parallel => {
            let spacing = g.detector_pitch_mm;
            let rf = RowFilter::new(g.n_detectors, spacing, filter);
            let dtheta = PI / g.n_views as f64;
            for view in 0..g.n_views {
                rf.apply(sino.values.row(view), &mut q);
                let (sin, cos) = g.view_angle(view).sin_cos();
                for ((i, j), px) in image.indexed_iter_mut() {
                    let x = (j as f64 - centre) * pixel;
                    let y = (centre - i as f64) * pixel;
                    let t = x * cos + y * sin;
                    *px += dtheta * interp_row(&q, t / spacing + det_centre);
                }
            }
        }
        Beam::Fan {
            source_iso_mm,
            source_detector_mm,
        } => {
            // rebin detector coordinates onto the virtual detector through the isocenter
            let spacing = g.detector_pitch_mm * source_iso_mm / source_detector_mm;
            let rf = RowFilter::new(g.n_detectors, spacing, filter);
            let dbeta = 2.0 * PI / g.n_views as f64;
            let mut weighted = ndarray::Array1::<f64>::zeros(g.n_detectors);
            for view in 0..g.n_views {
                for (k, w) in weighted.iter_mut().enumerate() {
                    let s = (k as f64 - det_centre) * spacing;
                    *w = sino.values[[view, k]] * source_iso_mm
                        / (source_iso_mm * source_iso_mm + s * s).sqrt();
                }
                rf.apply(weighted.view(), &mut q);
                let (sin, cos) = g.view_angle(view).sin_cos();
                for ((i, j), px) in image.indexed_iter_mut() {
                    let x = (j as f64 - centre) * pixel;
                    let y = (centre - i as f64) * pixel;
                    let dist = source_iso_mm - (x * cos + y * sin);
                    let lateral = -x * sin + y * cos;
                    let s = source_iso_mm * lateral / dist;
                    let u = dist / source_iso_mm;
                    *px += dbeta * 0.5 * interp_row(&q, s / spacing + det_centre) / (u * u);
                }
            }
        }
    }
    image.mapv_inplace(|v| v / g.attenuation_per_mm);
    Ok(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomo::phantom::{make_phantom, PhantomKind};

    fn rmse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let n = a.len() as f64;
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn zero_phantom_projects_to_zero() {
        let p = Phantom::new(Array2::zeros((32, 32)), 1.0).unwrap();
        let g = ScanGeometry::parallel(32, 1.0, 12);
        let s = radon_project(&p, &g).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
        let r = fbp_reconstruct(&s, ReconFilter::Ramp, 32).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disk_views_match() {
        let p = make_phantom(PhantomKind::Disk, 64, 0).unwrap();
        let g = ScanGeometry::parallel(64, p.pixel_size_mm, 16);
        let s = radon_project(&p, &g).unwrap();
        let first = s.values.row(0).to_owned();
        let peak = first.iter().cloned().fold(0.0, f64::max);
        for v in 1..16 {
            for (a, b) in s.values.row(v).iter().zip(first.iter()) {
                assert!((a - b).abs() < 0.05 * peak, "view {v}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn centre_pixel_peaks_on_central_detector() {
        // brute force: the only ray within half a pixel of the isocenter is the
        // central one, for every view angle
        let n = 33;
        let mut px = Array2::zeros((n, n));
        px[[16, 16]] = 1.0;
        let p = Phantom::new(px, 1.0).unwrap();
        let g = ScanGeometry::parallel(n, 1.0, 37);
        let s = radon_project(&p, &g).unwrap();
        let central = (g.n_detectors - 1) / 2;
        for v in 0..g.n_views {
            let row = s.values.row(v);
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, central, "view {v}");
        }
    }

    #[test]
    fn geometry_mismatch_rejected() {
        let g = ScanGeometry::parallel(32, 1.0, 8);
        let s = Sinogram::zeros(g);
        assert!(fbp_reconstruct(&s, ReconFilter::Ramp, 64).is_err());
    }

    #[test]
    fn fbp_is_homogeneous() {
        let p = make_phantom(PhantomKind::SheppLogan, 32, 0).unwrap();
        let g = ScanGeometry::parallel(32, p.pixel_size_mm, 45);
        let s = radon_project(&p, &g).unwrap();
        let mut scaled = s.clone();
        scaled.values.mapv_inplace(|v| v * -2.5);
        let a = fbp_reconstruct(&s, ReconFilter::HannRamp, 32).unwrap();
        let b = fbp_reconstruct(&scaled, ReconFilter::HannRamp, 32).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x * -2.5 - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn fan_beam_round_trip() {
        let n = 64;
        let p = make_phantom(PhantomKind::SheppLogan, n, 0).unwrap();
        let mut g = ScanGeometry::clinical_fan(n, 360);
        g.pixel_size_mm = p.pixel_size_mm;
        g.n_detectors = 257;
        g.detector_pitch_mm = p.pixel_size_mm * CLINICAL_SOURCE_DETECTOR_MM / CLINICAL_SOURCE_ISO_MM * 0.75;
        let phantom = Phantom::new(p.pixels.clone(), p.pixel_size_mm).unwrap();
        let s = radon_project(&phantom, &g).unwrap();
        let r = fbp_reconstruct(&s, ReconFilter::Ramp, n).unwrap();
        let err = rmse(&r, &p.pixels);
        assert!(err < 0.08, "fan-beam round trip rmse {err}");
    }

    #[test]
    fn parallel_round_trip_small() {
        let p = make_phantom(PhantomKind::SheppLogan, 64, 0).unwrap();
        let g = ScanGeometry::parallel(64, p.pixel_size_mm, 180);
        let s = radon_project(&p, &g).unwrap();
        let r = fbp_reconstruct(&s, ReconFilter::Ramp, 64).unwrap();
        let err = rmse(&r, &p.pixels);
        assert!(err < 0.05, "rmse {err}");
    }
}
