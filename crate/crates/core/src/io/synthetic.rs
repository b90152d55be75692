use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::kernel::{sample_mst, KernelParams};
use crate::seed::derive_seed;

/// One planar skew-t component; matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub n: usize,
    pub mu: [f64; 2],
    pub sigma: [f64; 4],
    pub delta: [f64; 4],
    pub nu: f64,
}

impl ComponentSpec {
    pub fn kernel(&self) -> Result<KernelParams<f64>> {
        KernelParams::new(
            DVector::from_column_slice(&self.mu),
            DMatrix::from_row_slice(2, 2, &self.sigma),
            DMatrix::from_row_slice(2, 2, &self.delta),
            self.nu,
        )
    }
}

/// Two skew-t clusters in a square, plus outliers at both ends of the line
/// separating them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub components: [ComponentSpec; 2],
    pub outliers: usize,
    /// Outliers fall within this distance of the line ends.
    pub outlier_spread: f64,
    /// Side of the bounding square `[0, side]²`.
    pub side: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            components: [
                ComponentSpec {
                    n: 1000,
                    mu: [25.0, 25.0],
                    sigma: [30.0, 10.0, 10.0, 20.0],
                    delta: [10.0, 0.0, 5.0, 8.0],
                    nu: 4.0,
                },
                ComponentSpec {
                    n: 1000,
                    mu: [75.0, 70.0],
                    sigma: [25.0, -5.0, -5.0, 35.0],
                    delta: [-8.0, 2.0, 0.0, -12.0],
                    nu: 4.0,
                },
            ],
            outliers: 10,
            outlier_spread: 3.0,
            side: 100.0,
        }
    }
}

impl SyntheticSpec {
    pub fn with_seed(seed: u64) -> Self {
        SyntheticSpec { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.side > 0.0 && self.side.is_finite()) {
            return Err(Error::InvalidParameter(format!("side must be positive, got {}", self.side)));
        }
        if !(self.outlier_spread >= 0.0 && self.outlier_spread.is_finite()) {
            return Err(Error::InvalidParameter("outlier_spread must be non-negative".into()));
        }
        if self.components[0].mu == self.components[1].mu {
            return Err(Error::InvalidParameter("components need distinct locations".into()));
        }
        for c in &self.components {
            c.kernel()?;
        }
        Ok(())
    }
}

/// Points and ground-truth labels (0 or 1). Outliers take the label of the
/// nearer component location.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(DataMatrix<f64>, Vec<usize>)> {
    spec.validate()?;
    let side = spec.side;
    let clamp = |v: f64| v.clamp(0.0, side);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, comp) in spec.components.iter().enumerate() {
        if comp.n == 0 {
            continue;
        }
        let draws = sample_mst(&comp.kernel()?, comp.n, derive_seed(spec.seed, &[c as u64]))?;
        for r in draws.rows() {
            rows.push(DVector::from_vec(vec![clamp(r[0]), clamp(r[1])]));
            labels.push(c);
        }
    }
    let (a, b) = (spec.components[0].mu, spec.components[1].mu);
    let ends = separating_line_ends(a, b, side);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[2]));
    for k in 0..spec.outliers {
        let e = ends[k % 2];
        let r = spec.outlier_spread * rng.gen::<f64>().sqrt();
        let t = std::f64::consts::TAU * rng.gen::<f64>();
        let p = [clamp(e[0] + r * t.cos()), clamp(e[1] + r * t.sin())];
        let da = (p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2);
        let db = (p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2);
        rows.push(DVector::from_vec(p.to_vec()));
        labels.push(usize::from(db < da));
    }
    if rows.is_empty() {
        return Err(Error::InvalidParameter("synthetic spec produces no points".into()));
    }
    Ok((DataMatrix::from_rows(rows)?, labels))
}

/// Where the perpendicular bisector of `a`–`b` leaves `[0, side]²`.
fn separating_line_ends(a: [f64; 2], b: [f64; 2], side: f64) -> [[f64; 2]; 2] {
    let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let d = [-(b[1] - a[1]), b[0] - a[0]];
    let exit = |sign: f64| {
        let mut t_max = f64::INFINITY;
        for k in 0..2 {
            let dk = sign * d[k];
            if dk > 0.0 {
                t_max = t_max.min((side - m[k]) / dk);
            } else if dk < 0.0 {
                t_max = t_max.min(-m[k] / dk);
            }
        }
        let t = if t_max.is_finite() { t_max.max(0.0) } else { 0.0 };
        [
            (m[0] + sign * d[0] * t).clamp(0.0, side),
            (m[1] + sign * d[1] * t).clamp(0.0, side),
        ]
    };
    [exit(1.0), exit(-1.0)]
}
