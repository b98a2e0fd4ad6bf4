//! Real spherical harmonics (ACN ordering, N3D normalization), wideband
//! beamformers and direction dictionaries.
//!
//! Channel `l² + l + m` holds degree `l`, order `m`. With N3D the omni channel
//! is identically 1 and `‖y‖² = (L+1)²` for every direction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub fn channel_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Ambisonic order implied by a channel count, if it is a perfect square.
pub fn order_from_channels(channels: usize) -> Option<usize> {
    let root = (channels as f64).sqrt().round() as usize;
    (root >= 1 && root * root == channels).then(|| root - 1)
}

/// Azimuth in (−π, π], elevation in [−π/2, π/2], both radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

impl Direction {
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !azimuth.is_finite() || !elevation.is_finite() {
            return invalid("direction angles must be finite");
        }
        if elevation.abs() > PI / 2.0 + 1e-12 {
            return invalid(format!("elevation {elevation} outside [-pi/2, pi/2]"));
        }
        Ok(Self {
            azimuth: wrap_azimuth(azimuth),
            elevation: elevation.clamp(-PI / 2.0, PI / 2.0),
        })
    }

    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Result<Self> {
        Self::new(azimuth_deg.to_radians(), elevation_deg.to_radians())
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth.to_degrees()
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation.to_degrees()
    }

    /// Unit vector with x toward azimuth 0, y toward azimuth π/2, z up.
    pub fn to_cartesian(&self) -> [f64; 3] {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [ce * ca, ce * sa, se]
    }

    pub fn from_cartesian(v: [f64; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroInput);
        }
        let el = (v[2] / norm).clamp(-1.0, 1.0).asin();
        let az = v[1].atan2(v[0]);
        Self::new(az, el)
    }

    /// Great-circle angle to `other`, radians in [0, π].
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let a = self.to_cartesian();
        let b = other.to_cartesian();
        // atan2 form stays accurate for nearly identical directions.
        let cross = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        let sin = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
        let cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        sin.atan2(cos)
    }

    pub fn angle_to_deg(&self, other: &Direction) -> f64 {
        self.angle_to(other).to_degrees()
    }
}

fn wrap_azimuth(az: f64) -> f64 {
    let mut a = az % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Real SH encoding vector of order `order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShVector {
    pub order: usize,
    pub coeffs: Vec<f64>,
}

impl ShVector {
    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.coeffs, other)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coeffs)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Associated Legendre functions P_l^m(x) without the Condon–Shortley phase,
/// returned as a triangular table indexed `[l][m]`.
fn legendre_table(order: usize, x: f64) -> Vec<Vec<f64>> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut p = vec![vec![0.0; order + 1]; order + 1];
    p[0][0] = 1.0;
    for m in 1..=order {
        p[m][m] = p[m - 1][m - 1] * (2 * m - 1) as f64 * s;
    }
    for m in 0..order {
        p[m + 1][m] = x * (2 * m + 1) as f64 * p[m][m];
    }
    for m in 0..=order {
        for l in (m + 2)..=order {
            p[l][m] = ((2 * l - 1) as f64 * x * p[l - 1][m] - (l + m - 1) as f64 * p[l - 2][m])
                / (l - m) as f64;
        }
    }
    p
}

/// N3D normalization sqrt((2l+1)(2−δ_m0)(l−m)!/(l+m)!).
fn n3d_factor(l: usize, m: usize) -> f64 {
    // (l-m)!/(l+m)! as a running product to avoid overflow.
    let mut ratio = 1.0;
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    let delta = if m == 0 { 1.0 } else { 2.0 };
    ((2 * l + 1) as f64 * delta * ratio).sqrt()
}

pub fn encode(dir: &Direction, order: usize) -> ShVector {
    let p = legendre_table(order, dir.elevation.sin());
    let mut coeffs = vec![0.0; channel_count(order)];
    for l in 0..=order {
        for m in -(l as i64)..=(l as i64) {
            let am = m.unsigned_abs() as usize;
            let trig = if m >= 0 {
                (m as f64 * dir.azimuth).cos()
            } else {
                (am as f64 * dir.azimuth).sin()
            };
            let acn = (l * l + l) as i64 + m;
            coeffs[acn as usize] = n3d_factor(l, am) * p[l][am] * trig;
        }
    }
    ShVector { order, coeffs }
}

/// Per-channel gain converting SN3D-normalized channels to N3D.
pub fn sn3d_to_n3d_gains(order: usize) -> Vec<f64> {
    (0..=order)
        .flat_map(|l| std::iter::repeat_n(((2 * l + 1) as f64).sqrt(), 2 * l + 1))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beamformer {
    pub order: usize,
    pub weights: Vec<f64>,
    pub steering: Option<Direction>,
}

impl Beamformer {
    /// Spatial response `wᵀy` toward an encoding vector.
    pub fn response(&self, y: &[f64]) -> f64 {
        dot(&self.weights, y)
    }

    pub fn is_omni(&self) -> bool {
        self.steering.is_none()
            && self.weights.first() == Some(&1.0)
            && self.weights[1..].iter().all(|&w| w == 0.0)
    }
}

/// Maximum-directivity (plane-wave decomposition) beamformer, normalized to a
/// unit response toward `steering`.
pub fn max_directivity_beamformer(steering: Direction, order: usize) -> Beamformer {
    let y = encode(&steering, order);
    let scale = 1.0 / channel_count(order) as f64;
    Beamformer {
        order,
        weights: y.coeffs.iter().map(|c| c * scale).collect(),
        steering: Some(steering),
    }
}

/// The omni reference `e0`.
pub fn omni_beamformer(order: usize) -> Beamformer {
    let mut weights = vec![0.0; channel_count(order)];
    weights[0] = 1.0;
    Beamformer {
        order,
        weights,
        steering: None,
    }
}

/// Near-uniform direction dictionary with unit-norm SH atoms.
#[derive(Debug, Clone)]
pub struct DirectionGrid {
    pub resolution_deg: f64,
    pub order: usize,
    pub directions: Vec<Direction>,
    /// Row-major, one row of `(L+1)²` coefficients per direction.
    atoms: Vec<f64>,
}

impl DirectionGrid {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        let c = channel_count(self.order);
        &self.atoms[i * c..(i + 1) * c]
    }

    /// Scores every atom with `score` and returns the arg-max index.
    pub(crate) fn best_by<F: Fn(&[f64]) -> f64>(&self, score: F) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for i in 0..self.len() {
            let s = score(self.atom(i));
            if s > best.1 {
                best = (i, s);
            }
        }
        best
    }
}

/// Fibonacci-lattice grid with roughly `41253 / resolution²` directions.
pub fn build_grid(resolution_deg: f64, order: usize) -> Result<DirectionGrid> {
    if !(0.5..=30.0).contains(&resolution_deg) {
        return invalid(format!(
            "grid resolution {resolution_deg} deg outside [0.5, 30]"
        ));
    }
    let sphere_deg2 = 4.0 * PI * (180.0 / PI).powi(2);
    let n = (sphere_deg2 / (resolution_deg * resolution_deg)).round().max(2.0) as usize;
    let golden = PI * (3.0 - 5f64.sqrt());
    let c = channel_count(order);
    let scale = 1.0 / (order + 1) as f64;
    let mut directions = Vec::with_capacity(n);
    let mut atoms = Vec::with_capacity(n * c);
    for i in 0..n {
        let z = 1.0 - (2 * i + 1) as f64 / n as f64;
        let dir = Direction::new(i as f64 * golden, z.asin())?;
        atoms.extend(encode(&dir, order).coeffs.iter().map(|x| x * scale));
        directions.push(dir);
    }
    Ok(DirectionGrid {
        resolution_deg,
        order,
        directions,
        atoms,
    })
}

/// Grid direction whose atom has the largest absolute normalized inner product
/// with `v`. The returned correlation lies in [0, 1].
pub fn nearest_direction(v: &[f64], grid: &DirectionGrid) -> Result<(Direction, f64)> {
    if v.len() != channel_count(grid.order) {
        return invalid(format!(
            "vector of length {} does not match grid order {}",
            v.len(),
            grid.order
        ));
    }
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroInput);
    }
    let (i, s) = grid.best_by(|atom| dot(atom, v).abs());
    Ok((grid.directions[i], (s / n).min(1.0)))
}
