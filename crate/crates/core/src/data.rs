//! Synthetic point clouds and point-cloud CSV I/O.
//!
//! Geometry (all frozen constants):
//!
//! - `c_arc`: a 270° arc of the unit circle from 45° to 315°, opening toward +x.
//! - `y_two_branch`: a stem from (0, −1) to the origin, then two unit branches
//!   at ±45° from the stem axis.
//! - `y_three_branch`: three unit branches from the origin at 90°, 210°, 330°.
//!
//! Points are assigned to pieces round-robin (so piece populations differ by at
//! most one), placed uniformly along the piece, then jittered with isotropic
//! Gaussian noise.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::loss::DataCloud;
use crate::{Error, Result, StateVector};

/// Default jitter for generated shapes.
pub const DEFAULT_NOISE_STD: f64 = 0.05;

const ARC_START: f64 = FRAC_PI_4;
const ARC_SPAN: f64 = 1.5 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    CArc,
    YTwoBranch,
    YThreeBranch,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::CArc, ShapeKind::YTwoBranch, ShapeKind::YThreeBranch];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::CArc => "c_arc",
            ShapeKind::YTwoBranch => "y_two_branch",
            ShapeKind::YThreeBranch => "y_three_branch",
        }
    }

    /// Where trajectories start: the tip of the C, the base of the Y stem,
    /// the junction of the three-branch shape.
    pub fn anchor(self) -> StateVector {
        match self {
            ShapeKind::CArc => StateVector::new(ARC_START.cos(), ARC_START.sin()),
            ShapeKind::YTwoBranch => StateVector::new(0.0, -1.0),
            ShapeKind::YThreeBranch => StateVector::ZERO,
        }
    }

    /// Straight pieces as `(start, end)`; empty for the arc.
    pub fn segments(self) -> Vec<(StateVector, StateVector)> {
        let o = StateVector::ZERO;
        match self {
            ShapeKind::CArc => Vec::new(),
            ShapeKind::YTwoBranch => vec![
                (StateVector::new(0.0, -1.0), o),
                (o, StateVector::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2)),
                (o, StateVector::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2)),
            ],
            ShapeKind::YThreeBranch => [90.0f64, 210.0, 330.0]
                .iter()
                .map(|deg| {
                    let a = deg.to_radians();
                    (o, StateVector::new(a.cos(), a.sin()))
                })
                .collect(),
        }
    }

    fn n_pieces(self) -> usize {
        match self {
            ShapeKind::CArc => 1,
            _ => 3,
        }
    }

    /// Noiseless point at fraction `t ∈ [0, 1]` along piece `piece`.
    fn point_on(self, piece: usize, t: f64) -> StateVector {
        match self {
            ShapeKind::CArc => {
                let a = ARC_START + t * ARC_SPAN;
                StateVector::new(a.cos(), a.sin())
            }
            _ => {
                let (a, b) = self.segments()[piece];
                a + (b - a) * t
            }
        }
    }

    /// Euclidean distance from `p` to the noiseless curve.
    pub fn distance_to_curve(self, p: StateVector) -> f64 {
        match self {
            ShapeKind::CArc => {
                let mut angle = p.y.atan2(p.x);
                if angle < 0.0 {
                    angle += 2.0 * PI;
                }
                if (ARC_START..=ARC_START + ARC_SPAN).contains(&angle) {
                    (p.norm() - 1.0).abs()
                } else {
                    let end = ARC_START + ARC_SPAN;
                    let a = StateVector::new(ARC_START.cos(), ARC_START.sin());
                    let b = StateVector::new(end.cos(), end.sin());
                    p.distance(a).min(p.distance(b))
                }
            }
            _ => self
                .segments()
                .into_iter()
                .map(|(a, b)| {
                    let ab = b - a;
                    let t = ((p - a).dot(ab) / ab.norm_squared()).clamp(0.0, 1.0);
                    p.distance(a + ab * t)
                })
                .fold(f64::INFINITY, f64::min),
        }
    }
}

impl std::fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown shape '{s}' (expected c_arc, y_two_branch or y_three_branch)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub n_points: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, n_points: usize, noise_std: f64, seed: u64) -> Result<Self> {
        if n_points < 10 {
            return Err(Error::config(format!("n_points must be at least 10, got {n_points}")));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::config(format!("noise_std must be non-negative, got {noise_std}")));
        }
        Ok(Self {
            kind,
            n_points,
            noise_std,
            seed,
        })
    }
}

/// Piece index of every generated point, in generation order.
pub fn piece_of(kind: ShapeKind, index: usize) -> usize {
    index % kind.n_pieces()
}

pub fn generate(spec: &ShapeSpec) -> Result<DataCloud> {
    let spec = ShapeSpec::new(spec.kind, spec.n_points, spec.noise_std, spec.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points = (0..spec.n_points)
        .map(|i| {
            let t: f64 = rng.gen();
            let base = spec.kind.point_on(piece_of(spec.kind, i), t);
            let nx: f64 = StandardNormal.sample(&mut rng);
            let ny: f64 = StandardNormal.sample(&mut rng);
            base + StateVector::new(nx, ny) * spec.noise_std
        })
        .collect();
    DataCloud::new(points, spec.kind.name())
}

/// Point-cloud CSV: header `x,y`, one point per row.
pub fn write_cloud<W: Write>(mut w: W, cloud: &DataCloud) -> Result<()> {
    writeln!(w, "x,y")?;
    for p in &cloud.points {
        writeln!(w, "{},{}", p.x, p.y)?;
    }
    Ok(())
}

pub fn read_cloud<R: Read>(r: R, name: &str) -> Result<DataCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(r);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::Format("empty point-cloud file".into())),
        Some(rec) => rec?,
    };
    if header.len() != 2 || &header[0] != "x" || &header[1] != "y" {
        return Err(Error::Format(format!(
            "missing header 'x,y' (found '{}')",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut points = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("'{s}' is not a number"),
            })
        };
        points.push(StateVector::new(parse(&rec[0])?, parse(&rec[1])?));
    }
    if points.is_empty() {
        return Err(Error::Format("point-cloud file has no data rows".into()));
    }
    DataCloud::new(points, name)
}

pub fn save_cloud(path: impl AsRef<Path>, cloud: &DataCloud) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    write_cloud(&mut w, cloud)?;
    w.flush()?;
    Ok(())
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<DataCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_cloud(file, &name)
}
