//! Datasets: seeded synthetic generators, CSV ingestion and box scaling.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::Points;
use crate::rng::seeded;

pub const DEFAULT_N: usize = 1500;

/// Blob centres shared by the `varied` and `aniso` generators.
const BLOB_CENTERS: [[f64; 2]; 3] = [
    [-8.947_091_65, -5.462_764_35],
    [-4.589_389_89, 0.088_761_78],
    [1.938_754_32, 0.505_136_13],
];
const VARIED_STDS: [f64; 3] = [1.0, 2.5, 0.5];
const ANISO_SHEAR: [[f64; 2]; 2] = [[0.6, -0.6], [-0.4, 0.8]];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub points: Points,
    pub truth: Option<Vec<i64>>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Circles,
    Moons,
    Varied,
    Aniso,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 4] = [
        SyntheticKind::Aniso,
        SyntheticKind::Circles,
        SyntheticKind::Moons,
        SyntheticKind::Varied,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Circles => "circles",
            SyntheticKind::Moons => "moons",
            SyntheticKind::Varied => "varied",
            SyntheticKind::Aniso => "aniso",
        }
    }

    /// Gaussian noise for circles/moons; blob standard deviation scale otherwise.
    pub fn default_noise(self) -> f64 {
        match self {
            SyntheticKind::Circles | SyntheticKind::Moons => 0.05,
            SyntheticKind::Varied | SyntheticKind::Aniso => 1.0,
        }
    }
}

impl std::fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SyntheticKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown dataset kind {s:?}; valid kinds: circles, moons, varied, aniso"
                ))
            })
    }
}

fn linspace(start: f64, stop: f64, n: usize, endpoint: bool) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let div = if endpoint { (n.max(2) - 1) as f64 } else { n as f64 };
    let step = (stop - start) / div;
    (0..n).map(|i| start + step * i as f64).collect()
}

/// Generates one of the two-dimensional toy sets with truth labels.
///
/// `noise` is the Gaussian noise level for `circles`/`moons` and a
/// multiplier of the blob standard deviations for `varied`/`aniso`.
pub fn gen_synthetic(kind: SyntheticKind, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 4 {
        return Err(Error::invalid(format!("need at least 4 points, got {n}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = seeded(seed);
    let mut rows: Vec<([f64; 2], i64)> = Vec::with_capacity(n);
    match kind {
        SyntheticKind::Circles | SyntheticKind::Moons => {
            let n_out = n / 2;
            let n_in = n - n_out;
            let jitter = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
            let mut push = |x: f64, y: f64, l: i64, rng: &mut rand_chacha::ChaCha8Rng| {
                if noise > 0.0 {
                    rows.push(([x + jitter.sample(rng), y + jitter.sample(rng)], l));
                } else {
                    rows.push(([x, y], l));
                }
            };
            if kind == SyntheticKind::Circles {
                for t in linspace(0.0, 2.0 * PI, n_out, false) {
                    push(t.cos(), t.sin(), 0, &mut rng);
                }
                for t in linspace(0.0, 2.0 * PI, n_in, false) {
                    push(0.5 * t.cos(), 0.5 * t.sin(), 1, &mut rng);
                }
            } else {
                for t in linspace(0.0, PI, n_out, true) {
                    push(t.cos(), t.sin(), 0, &mut rng);
                }
                for t in linspace(0.0, PI, n_in, true) {
                    push(1.0 - t.cos(), 1.0 - t.sin() - 0.5, 1, &mut rng);
                }
            }
        }
        SyntheticKind::Varied | SyntheticKind::Aniso => {
            for (c, center) in BLOB_CENTERS.iter().enumerate() {
                let count = n / 3 + usize::from(c < n % 3);
                let sd = match kind {
                    SyntheticKind::Varied => VARIED_STDS[c] * noise,
                    _ => noise,
                };
                for _ in 0..count {
                    let (x, y) = if sd > 0.0 {
                        let g = Normal::new(0.0, sd).unwrap();
                        (center[0] + g.sample(&mut rng), center[1] + g.sample(&mut rng))
                    } else {
                        (center[0], center[1])
                    };
                    let p = if kind == SyntheticKind::Aniso {
                        [
                            x * ANISO_SHEAR[0][0] + y * ANISO_SHEAR[1][0],
                            x * ANISO_SHEAR[0][1] + y * ANISO_SHEAR[1][1],
                        ]
                    } else {
                        [x, y]
                    };
                    rows.push((p, c as i64));
                }
            }
        }
    }
    rows.shuffle(&mut rng);
    let points = Points::from_rows(&rows.iter().map(|r| r.0).collect::<Vec<_>>())?;
    Ok(Dataset {
        name: kind.name().to_string(),
        points,
        truth: Some(rows.iter().map(|r| r.1).collect()),
        seed: Some(seed),
    })
}

/// The bundled iris data (150 × 4, three classes).
pub fn iris() -> Dataset {
    let mut ds = read_csv_from(include_str!("../data/iris.csv").as_bytes())
        .expect("bundled iris.csv is well formed");
    ds.name = "iris".into();
    ds
}

/// Affine per-coordinate map `y = (x - offset) * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    /// Coordinates with zero range in the fitted data; these map to 0.
    #[serde(default)]
    pub degenerate: Vec<bool>,
}

impl AffineTransform {
    pub fn identity(dim: usize) -> Self {
        AffineTransform {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
            degenerate: vec![false; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = (x[i] - self.offset[i]) * self.scale[i];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| v / s + o)
            .collect()
    }

    /// Absolute Jacobian determinant of the map.
    pub fn jacobian(&self) -> f64 {
        self.scale.iter().map(|s| s.abs()).product()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

/// Min-max maps `points` into `[-(1 - margin), 1 - margin]^d`.
///
/// A coordinate with zero range is centred at 0 and flagged in the
/// returned transform.
pub fn scale_to_box(points: &Points, margin: f64) -> Result<(Points, AffineTransform)> {
    if points.is_empty() {
        return Err(Error::invalid("cannot scale an empty point set"));
    }
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::invalid(format!("margin must lie in [0,1), got {margin}")));
    }
    let d = points.dim();
    let half = 1.0 - margin;
    let mut t = AffineTransform::identity(d);
    for j in 0..d {
        let (lo, hi) = points
            .rows()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r[j]), hi.max(r[j]))
            });
        t.offset[j] = 0.5 * (lo + hi);
        if hi > lo {
            t.scale[j] = half / (0.5 * (hi - lo));
        } else {
            t.degenerate[j] = true;
        }
    }
    let mut out = Vec::with_capacity(points.as_slice().len());
    let mut buf = vec![0.0; d];
    for r in points.rows() {
        t.apply_into(r, &mut buf);
        for v in buf.iter_mut() {
            *v = v.clamp(-half, half);
        }
        out.extend_from_slice(&buf);
    }
    Ok((Points::new(d, out)?, t))
}

/// Writes `x1,...,xd[,label]` CSV.
pub fn write_csv<W: Write>(w: W, points: &Points, labels: Option<&[i64]>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=points.dim()).map(|i| format!("x{i}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    wr.write_record(&header)?;
    for (i, r) in points.rows().enumerate() {
        let mut rec: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        wr.write_record(&rec)?;
    }
    wr.flush().map_err(|e| Error::Format(format!("csv: {e}")))?;
    Ok(())
}

pub fn write_csv_file(path: &Path, points: &Points, labels: Option<&[i64]>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(f), points, labels)
}

/// Reads `x1,...,xd[,label]` CSV. The label column is recognised by its
/// header name.
pub fn read_csv_from<R: Read>(r: R) -> Result<Dataset> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers()?.clone();
    let label_col = headers.iter().position(|h| h.eq_ignore_ascii_case("label"));
    let dim = headers.len() - usize::from(label_col.is_some());
    if dim == 0 {
        return Err(Error::Format("csv has no coordinate columns".into()));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        for (j, field) in rec.iter().enumerate() {
            if Some(j) == label_col {
                let l: f64 = field.parse().map_err(|_| {
                    Error::Format(format!("row {}: bad label {field:?}", line + 1))
                })?;
                labels.push(l as i64);
            } else {
                data.push(field.parse::<f64>().map_err(|_| {
                    Error::Format(format!("row {}: bad number {field:?}", line + 1))
                })?);
            }
        }
    }
    Ok(Dataset {
        name: String::new(),
        points: Points::new(dim, data)?,
        truth: label_col.map(|_| labels),
        seed: None,
    })
}

pub fn read_csv_file(path: &Path) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ds = read_csv_from(std::io::BufReader::new(f)).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })?;
    ds.name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(ds)
}

/// Axis-aligned Gaussian mixture with known density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<MixtureComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianMixture {
    /// Two equally weighted unit-spaced modes in `dim` dimensions, separated
    /// along the first axis.
    pub fn two_modes(dim: usize) -> Self {
        let comp = |x: f64| MixtureComponent {
            weight: 0.5,
            mean: std::iter::once(x).chain(std::iter::repeat_n(0.0, dim - 1)).collect(),
            std: vec![0.5; dim],
        };
        GaussianMixture {
            components: vec![comp(-1.0), comp(1.0)],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::invalid("mixture has no components"));
        }
        for c in &self.components {
            if c.mean.len() != d || c.std.len() != d {
                return Err(Error::invalid("mixture components disagree on dimension"));
            }
            if !(c.weight > 0.0) || c.std.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::invalid("mixture weights and stds must be positive"));
            }
        }
        Ok(())
    }

    fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        let tw = self.total_weight();
        self.components
            .iter()
            .map(|c| {
                let mut log = 0.0;
                for ((v, m), s) in x.iter().zip(&c.mean).zip(&c.std) {
                    let z = (v - m) / s;
                    log += -0.5 * z * z - (s * (2.0 * PI).sqrt()).ln();
                }
                c.weight / tw * log.exp()
            })
            .sum()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Points {
        let mut rng = seeded(seed);
        let tw = self.total_weight();
        let d = self.dim();
        let mut out = Points::empty(d);
        let mut row = vec![0.0; d];
        for _ in 0..n {
            let mut u = rng.random::<f64>() * tw;
            let mut comp = &self.components[self.components.len() - 1];
            for c in &self.components {
                if u < c.weight {
                    comp = c;
                    break;
                }
                u -= c.weight;
            }
            for k in 0..d {
                let g = Normal::new(comp.mean[k], comp.std[k]).unwrap();
                row[k] = g.sample(&mut rng);
            }
            out.push(&row);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label_counts(labels: &[i64]) -> Vec<usize> {
        let k = labels.iter().copied().max().unwrap() as usize + 1;
        let mut c = vec![0; k];
        for &l in labels {
            c[l as usize] += 1;
        }
        c
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_synthetic(SyntheticKind::Moons, 1500, 0.05, 7).unwrap();
        let b = gen_synthetic(SyntheticKind::Moons, 1500, 0.05, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1500);
        let c = gen_synthetic(SyntheticKind::Moons, 1500, 0.05, 8).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn noiseless_circles_lie_on_two_radii() {
        let ds = gen_synthetic(SyntheticKind::Circles, 400, 0.0, 1).unwrap();
        let truth = ds.truth.as_ref().unwrap();
        for (r, &l) in ds.points.rows().zip(truth) {
            let rad = (r[0] * r[0] + r[1] * r[1]).sqrt();
            let want = if l == 0 { 1.0 } else { 0.5 };
            assert!((rad - want).abs() < 1e-12);
        }
    }

    #[test]
    fn varied_blob_spreads() {
        let ds = gen_synthetic(SyntheticKind::Varied, 1500, 1.0, 3).unwrap();
        let truth = ds.truth.unwrap();
        for c in 0..3 {
            let xs: Vec<&[f64]> = ds
                .points
                .rows()
                .zip(&truth)
                .filter(|(_, &l)| l == c)
                .map(|(r, _)| r)
                .collect();
            let n = xs.len() as f64;
            // Pooled per-coordinate sample std.
            let mut var = 0.0;
            for k in 0..2 {
                let m = xs.iter().map(|r| r[k]).sum::<f64>() / n;
                var += xs.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / (n - 1.0);
            }
            let sd = (var / 2.0).sqrt();
            let want = VARIED_STDS[c as usize];
            assert!((sd - want).abs() / want < 0.10, "blob {c}: {sd} vs {want}");
        }
    }

    #[test]
    fn class_balance() {
        for kind in SyntheticKind::ALL {
            let ds = gen_synthetic(kind, 1501, kind.default_noise(), 0).unwrap();
            let counts = label_counts(ds.truth.as_ref().unwrap());
            let expect = match kind {
                SyntheticKind::Circles | SyntheticKind::Moons => 2,
                _ => 3,
            };
            assert_eq!(counts.len(), expect);
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{kind}: {counts:?}");
        }
    }

    #[test]
    fn unknown_kind_names_valid_ones() {
        let err = "bogus".parse::<SyntheticKind>().unwrap_err().to_string();
        assert!(err.contains("moons") && err.contains("circles"));
        assert!(gen_synthetic(SyntheticKind::Moons, 3, 0.1, 0).is_err());
    }

    #[test]
    fn scale_identity_and_single_point() {
        let pts = Points::from_rows(&[[-1.0, -1.0], [1.0, 1.0], [0.25, -0.5]]).unwrap();
        let (out, t) = scale_to_box(&pts, 0.0).unwrap();
        for (a, b) in out.as_slice().iter().zip(pts.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(!t.is_degenerate());

        let single = Points::from_rows(&[[3.0, -7.0]]).unwrap();
        let (out, t) = scale_to_box(&single, 0.05).unwrap();
        assert_eq!(out.row(0), &[0.0, 0.0]);
        assert!(t.is_degenerate());
    }

    #[test]
    fn csv_round_trip_with_and_without_labels() {
        let ds = gen_synthetic(SyntheticKind::Aniso, 30, 1.0, 2).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &ds.points, ds.truth.as_deref()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,label\n"));
        let back = read_csv_from(buf.as_slice()).unwrap();
        assert_eq!(back.points, ds.points);
        assert_eq!(back.truth, ds.truth);

        let back = read_csv_from("x1,x2\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(back.truth, None);
        assert_eq!(back.points.len(), 2);
        assert!(read_csv_from("x1,x2\n1,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn iris_is_bundled() {
        let ds = iris();
        assert_eq!(ds.points.len(), 150);
        assert_eq!(ds.points.dim(), 4);
        assert_eq!(label_counts(ds.truth.as_ref().unwrap()), vec![50, 50, 50]);
    }

    #[test]
    fn mixture_density_integrates_to_one() {
        let mix = GaussianMixture::two_modes(1);
        let h = 1e-3;
        let total: f64 = (0..12_000).map(|i| mix.pdf(&[-6.0 + (i as f64 + 0.5) * h]) * h).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn scale_round_trips_and_stays_in_box(
            rows in prop::collection::vec(prop::array::uniform3(-1e3f64..1e3), 2..40),
            margin in 0.0f64..0.5,
        ) {
            let pts = Points::from_rows(&rows).unwrap();
            let (out, t) = scale_to_box(&pts, margin).unwrap();
            let half = 1.0 - margin;
            for (x, y) in pts.rows().zip(out.rows()) {
                prop_assert!(y.iter().all(|v| v.abs() <= half));
                let back = t.inverse(y);
                for (k, (a, b)) in back.iter().zip(x).enumerate() {
                    if !t.degenerate[k] {
                        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
                    }
                }
            }
        }
    }
}
