//! Differentiable synthetic image generators with closed-form Jacobians.
//!
//! Three generator families are provided. `FourBars` renders four disjoint
//! vertical bands: three intensity bars plus one smoothly translating bump,
//! so the Jacobian columns touch disjoint pixels (disjoint mechanisms).
//! `FourBarsNemr` raises the bar intensities to distinct powers so the
//! Jacobian column magnitudes change from point to point. `ColorBar` renders
//! a single horizontal bar with intensity, width and vertical position
//! controls whose Jacobian columns are mutually orthogonal but overlap in
//! pixel space (independent mechanisms only).
//!
//! Vertical profiles wrap around the image period. A hard image edge would
//! destroy the even/odd cancellation that makes the ColorBar columns
//! orthogonal once the bump gets close to the border; on the periodic grid
//! the cancellation holds for every position, with aliasing far below 1e-12
//! for the widths used here.

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Sampling domain for component scores; keeps sampled points strictly
/// interior so Jacobians are defined everywhere a sampler can land.
pub const DOMAIN_LO: f64 = 0.05;
/// Upper end of the sampling domain.
pub const DOMAIN_HI: f64 = 0.95;

/// Periodized profiles wrap this many image periods to either side; the
/// truncated terms are below 1e-40 for every admissible smoothness.
const PERIOD_TERMS: i64 = 3;

/// Ground-truth component scores, one per generative factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentVector {
    pub values: Vec<f64>,
}

impl ComponentVector {
    pub fn new(values: Vec<f64>) -> Self {
        ComponentVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl From<Vec<f64>> for ComponentVector {
    fn from(values: Vec<f64>) -> Self {
        ComponentVector { values }
    }
}

/// Rendered grayscale image with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    /// Serializes as a binary portable graymap (P5, maxval 255).
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.pixels.len() + 32);
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        for &p in &self.pixels {
            out.push((p.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Jacobian of the generator at a point: `L x K`, column `k` holds the
/// per-pixel effect of component `k`.
#[derive(Debug, Clone)]
pub struct GeneratorJacobian {
    pub matrix: Matrix,
    pub at: ComponentVector,
}

/// Which synthetic dataset to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    FourBars,
    FourBarsNemr,
    ColorBar,
}

impl GeneratorKind {
    pub fn component_count(self) -> usize {
        match self {
            GeneratorKind::FourBars | GeneratorKind::FourBarsNemr => 4,
            GeneratorKind::ColorBar => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::FourBars => "fourbars",
            GeneratorKind::FourBarsNemr => "fourbars_nemr",
            GeneratorKind::ColorBar => "colorbar",
        }
    }
}

/// Generator configuration: dataset kind, image size and bump smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    #[serde(default = "default_size")]
    pub height: usize,
    #[serde(default = "default_size")]
    pub width: usize,
    #[serde(default = "default_smoothness")]
    pub smoothness: f64,
}

fn default_size() -> usize {
    16
}

fn default_smoothness() -> f64 {
    1.5
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind) -> Self {
        GeneratorSpec {
            kind,
            height: default_size(),
            width: default_size(),
            smoothness: default_smoothness(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config(format!(
                "image size {}x{} below the 8x8 minimum",
                self.height, self.width
            )));
        }
        if self.smoothness <= 0.0 || self.smoothness > self.height as f64 / 4.0 {
            return Err(Error::Config(format!(
                "smoothness {} outside (0, {}]",
                self.smoothness,
                self.height as f64 / 4.0
            )));
        }
        Ok(())
    }

    pub fn component_count(&self) -> usize {
        self.kind.component_count()
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    fn check_in_domain(&self, z: &ComponentVector) -> Result<()> {
        let k = self.component_count();
        if z.len() != k {
            return Err(Error::DimensionMismatch {
                context: format!("{} expects {} components, got {}", self.kind.name(), k, z.len()),
            });
        }
        for (i, &v) in z.values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfDomain {
                    index: i,
                    value: v,
                    lo: 0.0,
                    hi: 1.0,
                });
            }
        }
        Ok(())
    }

    fn check_interior(&self, z: &ComponentVector) -> Result<()> {
        self.check_in_domain(z)?;
        for (i, &v) in z.values.iter().enumerate() {
            if v <= 0.0 || v >= 1.0 {
                return Err(Error::BoundaryPoint { index: i, value: v });
            }
        }
        Ok(())
    }
}

/// Gaussian profile wrapped around a period of `period` rows, with its
/// first derivatives in the offset `u` and the width `w`.
struct WrappedBump {
    value: f64,
    d_u: f64,
    d_w: f64,
}

fn wrapped_bump(u: f64, w: f64, period: f64) -> WrappedBump {
    let mut value = 0.0;
    let mut d_u = 0.0;
    let mut d_w = 0.0;
    for m in -PERIOD_TERMS..=PERIOD_TERMS {
        let t = u + m as f64 * period;
        let e = (-t * t / (2.0 * w * w)).exp();
        value += e;
        d_u += -(t / (w * w)) * e;
        d_w += (t * t / (w * w * w)) * e;
    }
    WrappedBump { value, d_u, d_w }
}

/// Discrete L2 norm of the wrapped profile over one period of rows, and its
/// derivative in `w`. Independent of the profile center up to aliasing.
fn profile_norm(w: f64, height: usize) -> (f64, f64) {
    let period = height as f64;
    let mut sum_sq = 0.0;
    let mut d_sum_sq = 0.0;
    for r in 0..height {
        let b = wrapped_bump(r as f64, w, period);
        sum_sq += b.value * b.value;
        d_sum_sq += 2.0 * b.value * b.d_w;
    }
    let n = sum_sq.sqrt();
    (n, d_sum_sq / (2.0 * n))
}

/// ColorBar width map: strictly increasing with a non-constant derivative,
/// so width and position gradient magnitudes scale differently between any
/// two points. Stays >= 2 rows to keep the discrete profile effectively
/// band-limited.
fn colorbar_width(z: f64) -> (f64, f64) {
    (2.0 + 1.5 * z * z, 3.0 * z)
}

/// Curvature of the NEMR intensity maps, one value per bar. Distinct
/// curvatures make the gradient magnitudes of the three bars scale
/// differently between any two points, while the position bar stays
/// translation invariant; all four magnitude ratios are then pairwise
/// unequal for generic point pairs.
const NEMR_CURVATURE: [f64; 3] = [0.5, 1.5, 3.0];

/// Bar intensity map and its derivative for the band-coloring components.
/// Maps fix 0 -> 0 and 1 -> 1, and the NEMR variant keeps its slope within
/// a factor of a few so the encoder Jacobians stay well conditioned.
fn band_intensity(kind: GeneratorKind, band: usize, z: f64) -> (f64, f64) {
    match kind {
        GeneratorKind::FourBars => (z, 1.0),
        GeneratorKind::FourBarsNemr => {
            let a = NEMR_CURVATURE[band];
            ((z + a * z * z) / (1.0 + a), (1.0 + 2.0 * a * z) / (1.0 + a))
        }
        GeneratorKind::ColorBar => unreachable!("ColorBar has no bands"),
    }
}

fn band_columns(width: usize, band: usize) -> std::ops::Range<usize> {
    (band * width / 4)..((band + 1) * width / 4)
}

/// Renders the image for component scores `z`; deterministic and pure.
/// Scores must lie in `[0, 1]`.
pub fn render(spec: &GeneratorSpec, z: &ComponentVector) -> Result<Image> {
    spec.validate()?;
    spec.check_in_domain(z)?;
    let (h, w) = (spec.height, spec.width);
    let mut pixels = vec![0.0; h * w];
    match spec.kind {
        GeneratorKind::FourBars | GeneratorKind::FourBarsNemr => {
            for band in 0..3 {
                let (intensity, _) = band_intensity(spec.kind, band, z.values[band]);
                for r in 0..h {
                    for c in band_columns(w, band) {
                        pixels[r * w + c] = intensity;
                    }
                }
            }
            let center = z.values[3] * (h as f64 - 1.0);
            let peak = wrapped_bump(0.0, spec.smoothness, h as f64).value;
            for r in 0..h {
                let b = wrapped_bump(r as f64 - center, spec.smoothness, h as f64);
                let v = b.value / peak;
                for c in band_columns(w, 3) {
                    pixels[r * w + c] = v;
                }
            }
        }
        GeneratorKind::ColorBar => {
            let (bar_w, _) = colorbar_width(z.values[1]);
            let (norm, _) = profile_norm(bar_w, h);
            let center = z.values[2] * (h as f64 - 1.0);
            for r in 0..h {
                let b = wrapped_bump(r as f64 - center, bar_w, h as f64);
                let v = z.values[0] * b.value / norm;
                for c in 0..w {
                    pixels[r * w + c] = v;
                }
            }
        }
    }
    for p in &mut pixels {
        *p = p.clamp(0.0, 1.0);
    }
    Ok(Image {
        height: h,
        width: w,
        channels: 1,
        pixels,
    })
}

/// Closed-form Jacobian of `render` with respect to `z`; requires a strictly
/// interior point.
pub fn jacobian(spec: &GeneratorSpec, z: &ComponentVector) -> Result<GeneratorJacobian> {
    spec.validate()?;
    spec.check_interior(z)?;
    let (h, w) = (spec.height, spec.width);
    let k = spec.component_count();
    let mut jac = Matrix::zeros(h * w, k);
    match spec.kind {
        GeneratorKind::FourBars | GeneratorKind::FourBarsNemr => {
            for band in 0..3 {
                let (_, d_intensity) = band_intensity(spec.kind, band, z.values[band]);
                for r in 0..h {
                    for c in band_columns(w, band) {
                        jac[(r * w + c, band)] = d_intensity;
                    }
                }
            }
            let center = z.values[3] * (h as f64 - 1.0);
            let peak = wrapped_bump(0.0, spec.smoothness, h as f64).value;
            for r in 0..h {
                let b = wrapped_bump(r as f64 - center, spec.smoothness, h as f64);
                // d/dz4 of bump(r - z4*(h-1)) flips the sign of the offset
                // derivative.
                let d = -b.d_u * (h as f64 - 1.0) / peak;
                for c in band_columns(w, 3) {
                    jac[(r * w + c, 3)] = d;
                }
            }
        }
        GeneratorKind::ColorBar => {
            let (bar_w, d_bar_w) = colorbar_width(z.values[1]);
            let (norm, d_norm) = profile_norm(bar_w, h);
            let center = z.values[2] * (h as f64 - 1.0);
            let amplitude = z.values[0];
            for r in 0..h {
                let b = wrapped_bump(r as f64 - center, bar_w, h as f64);
                let value = b.value / norm;
                // Norm-preserving width derivative: the profile keeps unit
                // L2 norm as the width changes, which makes this column
                // orthogonal to the intensity column.
                let d_width = (b.d_w / norm - b.value * d_norm / (norm * norm)) * d_bar_w;
                let d_position = -(b.d_u / norm) * (h as f64 - 1.0);
                for c in 0..w {
                    let px = r * w + c;
                    jac[(px, 0)] = value;
                    jac[(px, 1)] = amplitude * d_width;
                    jac[(px, 2)] = amplitude * d_position;
                }
            }
        }
    }
    Ok(GeneratorJacobian {
        matrix: jac,
        at: z.clone(),
    })
}

/// Result of checking the mechanism structure of the Jacobian at a point.
#[derive(Debug, Clone, Copy)]
pub struct MechanismReport {
    pub dma_holds: bool,
    pub ima_holds: bool,
    /// Largest off-diagonal of `|J|^T |J|` relative to its smallest diagonal.
    pub off_diag_ratio: f64,
}

const MECHANISM_TOL: f64 = 1e-6;

/// Classifies the generator mechanism at `z`: disjoint columns (DMA) and/or
/// orthogonal columns (IMA).
pub fn check_mechanism(spec: &GeneratorSpec, z: &ComponentVector) -> Result<MechanismReport> {
    let jac = jacobian(spec, z)?;
    Ok(mechanism_from_jacobian(&jac.matrix))
}

/// Same check on a raw `L x K` Jacobian; useful for synthetic fixtures.
pub fn mechanism_from_jacobian(jac: &Matrix) -> MechanismReport {
    let abs_gram = jac.abs().gram();
    let gram = jac.gram();
    let dma_holds = abs_gram.max_off_diagonal() <= MECHANISM_TOL * abs_gram.min_diagonal();
    let ima_holds = gram.max_off_diagonal() <= MECHANISM_TOL * gram.min_diagonal();
    MechanismReport {
        dma_holds,
        ima_holds,
        off_diag_ratio: abs_gram.max_off_diagonal() / abs_gram.min_diagonal(),
    }
}

/// Result of the non-equal-magnitude-ratios check between two points.
#[derive(Debug, Clone)]
pub struct NemrReport {
    pub satisfied: bool,
    /// Per-component ratio of Jacobian Gram diagonals between the points.
    pub ratios: Vec<f64>,
}

/// Checks whether the gradient magnitudes change non-uniformly between two
/// points: all pairwise ratios of the Jacobian Gram diagonals must differ.
pub fn check_nemr(
    spec: &GeneratorSpec,
    z_a: &ComponentVector,
    z_b: &ComponentVector,
) -> Result<NemrReport> {
    let gram_a = jacobian(spec, z_a)?.matrix.gram();
    let gram_b = jacobian(spec, z_b)?.matrix.gram();
    let k = gram_a.rows();
    let mut ratios = Vec::with_capacity(k);
    for i in 0..k {
        let da = gram_a[(i, i)];
        let db = gram_b[(i, i)];
        if da <= 0.0 || db <= 0.0 {
            return Err(Error::ZeroGramDiagonal { index: i });
        }
        ratios.push(db / da);
    }
    let max_ratio = ratios.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut satisfied = true;
    for i in 0..k {
        for j in (i + 1)..k {
            if (ratios[i] - ratios[j]).abs() <= MECHANISM_TOL * max_ratio {
                satisfied = false;
            }
        }
    }
    Ok(NemrReport { satisfied, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interior(values: &[f64]) -> ComponentVector {
        ComponentVector::new(values.to_vec())
    }

    #[test]
    fn fourbars_zero_intensity_bands_are_black() {
        let spec = GeneratorSpec::new(GeneratorKind::FourBars);
        let img = render(&spec, &interior(&[0.0, 0.0, 0.0, 0.5])).unwrap();
        for r in 0..16 {
            for c in 0..12 {
                assert_eq!(img.pixels[r * 16 + c], 0.0);
            }
        }
        // Bump is centered mid-image: brightest row is 7 or 8.
        let band4: Vec<f64> = (0..16).map(|r| img.pixels[r * 16 + 12]).collect();
        let peak_row = band4
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(peak_row == 7 || peak_row == 8);
    }

    #[test]
    fn fourbars_saturated_bands_are_white() {
        let spec = GeneratorSpec::new(GeneratorKind::FourBars);
        let img = render(&spec, &interior(&[1.0, 1.0, 1.0, 0.3])).unwrap();
        for r in 0..16 {
            for c in 0..12 {
                assert_eq!(img.pixels[r * 16 + c], 1.0);
            }
        }
    }

    #[test]
    fn render_is_deterministic() {
        let spec = GeneratorSpec::new(GeneratorKind::ColorBar);
        let z = interior(&[0.5, 0.5, 0.5]);
        let a = render(&spec, &z).unwrap();
        let b = render(&spec, &z).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn render_rejects_out_of_domain() {
        let spec = GeneratorSpec::new(GeneratorKind::FourBars);
        assert!(matches!(
            render(&spec, &interior(&[1.2, 0.5, 0.5, 0.5])),
            Err(Error::OutOfDomain { index: 0, .. })
        ));
    }

    #[test]
    fn jacobian_rejects_boundary_points() {
        let spec = GeneratorSpec::new(GeneratorKind::FourBars);
        assert!(matches!(
            jacobian(&spec, &interior(&[0.0, 0.5, 0.5, 0.5])),
            Err(Error::BoundaryPoint { index: 0, .. })
        ));
    }

    #[test]
    fn fourbars_intensity_columns_are_band_indicators() {
        let spec = GeneratorSpec::new(GeneratorKind::FourBars);
        let jac = jacobian(&spec, &interior(&[0.3, 0.6, 0.2, 0.5]))
            .unwrap()
            .matrix;
        for band in 0..3 {
            for r in 0..16usize {
                for c in 0..16usize {
                    let expected = if band_columns(16, band).contains(&c) {
                        1.0
                    } else {
                        0.0
                    };
                    assert_eq!(jac[(r * 16 + c, band)], expected);
                }
            }
        }
    }

    #[test]
    fn fourbars_is_dma_and_ima() {
        let spec = GeneratorSpec::new(GeneratorKind::FourBars);
        let report = check_mechanism(&spec, &interior(&[0.3, 0.6, 0.2, 0.5])).unwrap();
        assert!(report.dma_holds);
        assert!(report.ima_holds);
        // Disjoint bands make |J|^T |J| diagonal to machine precision.
        let jac = jacobian(&spec, &interior(&[0.3, 0.6, 0.2, 0.5]))
            .unwrap()
            .matrix;
        assert!(jac.abs().gram().max_off_diagonal() < 1e-10);
    }

    #[test]
    fn colorbar_is_ima_but_not_dma() {
        let spec = GeneratorSpec::new(GeneratorKind::ColorBar);
        for z in [[0.3, 0.4, 0.2], [0.9, 0.9, 0.93], [0.5, 0.1, 0.07]] {
            let report = check_mechanism(&spec, &interior(&z)).unwrap();
            assert!(report.ima_holds, "IMA should hold at {z:?}");
            assert!(!report.dma_holds, "DMA should fail at {z:?}");
            assert!(report.off_diag_ratio > 0.1);
        }
    }

    #[test]
    fn colorbar_gram_is_diagonal_within_tolerance() {
        let spec = GeneratorSpec::new(GeneratorKind::ColorBar);
        let jac = jacobian(&spec, &interior(&[0.7, 0.3, 0.8])).unwrap().matrix;
        let gram = jac.gram();
        assert!(gram.max_off_diagonal() <= 1e-6 * gram.min_diagonal());
    }

    #[test]
    fn asymmetric_bump_fixture_breaks_ima() {
        // Skewing the position column destroys the even/odd cancellation.
        let spec = GeneratorSpec::new(GeneratorKind::ColorBar);
        let mut jac = jacobian(&spec, &interior(&[0.7, 0.3, 0.5])).unwrap().matrix;
        for px in 0..jac.rows() {
            let v = jac[(px, 0)];
            jac[(px, 2)] += 0.2 * v * v;
        }
        let report = mechanism_from_jacobian(&jac);
        assert!(!report.ima_holds);
    }

    #[test]
    fn fourbars_never_satisfies_nemr() {
        let spec = GeneratorSpec::new(GeneratorKind::FourBars);
        let report = check_nemr(
            &spec,
            &interior(&[0.2, 0.3, 0.4, 0.5]),
            &interior(&[0.8, 0.7, 0.6, 0.3]),
        )
        .unwrap();
        assert!(!report.satisfied);
    }

    #[test]
    fn fourbars_nemr_variant_satisfies_nemr_generically() {
        let spec = GeneratorSpec::new(GeneratorKind::FourBarsNemr);
        let report = check_nemr(
            &spec,
            &interior(&[0.2, 0.3, 0.4, 0.5]),
            &interior(&[0.8, 0.7, 0.6, 0.3]),
        )
        .unwrap();
        assert!(report.satisfied, "ratios: {:?}", report.ratios);
    }

    #[test]
    fn identical_points_violate_nemr() {
        let spec = GeneratorSpec::new(GeneratorKind::FourBarsNemr);
        let z = interior(&[0.2, 0.3, 0.4, 0.5]);
        let report = check_nemr(&spec, &z, &z).unwrap();
        assert!(!report.satisfied);
        for r in report.ratios {
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let h = 1e-5;
        for kind in [
            GeneratorKind::FourBars,
            GeneratorKind::FourBarsNemr,
            GeneratorKind::ColorBar,
        ] {
            let spec = GeneratorSpec::new(kind);
            let k = spec.component_count();
            for _ in 0..50 {
                let z: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..0.9)).collect();
                let jac = jacobian(&spec, &z.clone().into()).unwrap().matrix;
                let scale = jac.max_abs();
                for comp in 0..k {
                    let mut zp = z.clone();
                    zp[comp] += h;
                    let plus = render(&spec, &zp.clone().into()).unwrap().pixels;
                    zp[comp] -= 2.0 * h;
                    let minus = render(&spec, &zp.into()).unwrap().pixels;
                    for px in 0..plus.len() {
                        let fd = (plus[px] - minus[px]) / (2.0 * h);
                        let exact = jac[(px, comp)];
                        let denom = exact.abs().max(fd.abs()).max(1e-6 * scale);
                        assert!(
                            (fd - exact).abs() / denom < 1e-4,
                            "{kind:?} comp {comp} px {px}: fd {fd} vs exact {exact}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn pgm_roundtrip_has_correct_header() {
        let spec = GeneratorSpec::new(GeneratorKind::FourBars);
        let img = render(&spec, &interior(&[0.5, 0.5, 0.5, 0.5])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        img.write_pgm(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n16 16\n255\n"));
        assert_eq!(bytes.len(), 13 + 256);
    }
}
