//! Ground-truth alignment, peak matching and scoring of echo estimates.

use serde::{Deserialize, Serialize};

use crate::axis::CenteredMatrix;
use crate::echoes::{extract_echoes, EchoEstimate, ExtractOptions};
use crate::error::{invalid, Error, Result};
use crate::ism::IsmScene;
use crate::sh::{dot, encode, norm, Direction, DirectionGrid};
use crate::signal::AmbisonicSignal;

#[derive(Debug, Clone)]
pub struct AlignedRir {
    pub matrix: CenteredMatrix,
    /// Offset applied to RIR sample indices (−argmax ζ).
    pub shift: i64,
    pub scale: f64,
}

/// Shifts the RIR so its strongest column sits at j = 0 and scales it so that
/// column's channel-0 entry is 1.
pub fn align_ground_truth(rir: &AmbisonicSignal, axis_len: usize) -> Result<AlignedRir> {
    if axis_len < 2 || axis_len % 2 != 0 {
        return invalid("axis length must be even");
    }
    let zeta: Vec<f64> = (0..rir.len()).map(|n| norm(&rir.frame(n))).collect();
    let (peak, &zmax) = zeta
        .iter()
        .enumerate()
        .fold((0, &0.0), |best, (i, z)| if *z > *best.1 { (i, z) } else { best });
    if zmax == 0.0 {
        return Err(Error::ZeroInput);
    }
    let c0 = rir.channels[0][peak];
    if c0.abs() < 1e-12 * zmax {
        return Err(Error::ZeroInput);
    }
    let scale = 1.0 / c0;
    let mut m = CenteredMatrix::zeros(rir.order, axis_len, rir.sample_rate);
    for j in m.j_min()..=m.j_max() {
        let n = peak as i64 + j;
        if n < 0 || n as usize >= rir.len() {
            continue;
        }
        for l in 0..m.rows() {
            m.set(l, j, rir.channels[l][n as usize] * scale);
        }
    }
    Ok(AlignedRir {
        matrix: m,
        shift: -(peak as i64),
        scale,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Relative delays in samples, ascending.
    pub delays: Vec<i64>,
    pub directions: Vec<Direction>,
    /// Reference columns used for coherence.
    pub columns: Vec<Vec<f64>>,
}

impl GroundTruth {
    /// Exact wavefront parameters, limited to the `peaks` strongest within
    /// [0, j_max] (the direct path always kept).
    pub fn from_scene(scene: &IsmScene, peaks: usize, j_max: usize) -> Self {
        let fs = scene.sample_rate;
        let mut idx: Vec<usize> = (0..scene.wavefronts.len())
            .filter(|&n| {
                let d = (scene.relative_delay(n) * fs).round();
                d >= 0.0 && d <= j_max as f64
            })
            .collect();
        idx.sort_by(|&a, &b| {
            let ga = if a == 0 { f64::INFINITY } else { scene.relative_gain(a).abs() };
            let gb = if b == 0 { f64::INFINITY } else { scene.relative_gain(b).abs() };
            gb.total_cmp(&ga)
        });
        idx.truncate(peaks);
        idx.sort_by(|&a, &b| scene.relative_delay(a).total_cmp(&scene.relative_delay(b)));
        let mut gt = GroundTruth {
            delays: Vec::new(),
            directions: Vec::new(),
            columns: Vec::new(),
        };
        for n in idx {
            let wf = &scene.wavefronts[n];
            gt.delays.push((scene.relative_delay(n) * fs).round() as i64);
            gt.directions.push(wf.direction);
            gt.columns.push(
                encode(&wf.direction, scene.order)
                    .coeffs
                    .iter()
                    .map(|y| y * scene.relative_gain(n))
                    .collect(),
            );
        }
        gt
    }

    /// Peaks picked on an aligned RIR, with raw direction fits.
    pub fn from_aligned(aligned: &AlignedRir, grid: &DirectionGrid, opts: &ExtractOptions) -> Result<Self> {
        let echoes = extract_echoes(&aligned.matrix, grid, opts, None)?;
        Ok(GroundTruth {
            delays: echoes.iter().map(|e| e.delay).collect(),
            directions: echoes.iter().map(|e| e.direction).collect(),
            columns: echoes.into_iter().map(|e| e.raw_column).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }
}

/// Greedy one-to-one matching within ±tolerance, closest pairs first (ties
/// broken by ground-truth then estimate delay). Returns (gt index, est index)
/// pairs sorted by ground-truth index.
pub fn match_peaks(gt: &[i64], est: &[i64], tolerance: usize) -> Vec<(usize, usize)> {
    let mut cand: Vec<(u64, i64, i64, usize, usize)> = Vec::new();
    for (i, &g) in gt.iter().enumerate() {
        for (k, &e) in est.iter().enumerate() {
            let d = (g - e).unsigned_abs();
            if d <= tolerance as u64 {
                cand.push((d, g, e, i, k));
            }
        }
    }
    cand.sort_unstable();
    let mut gt_used = vec![false; gt.len()];
    let mut est_used = vec![false; est.len()];
    let mut pairs = Vec::new();
    for (_, _, _, i, k) in cand {
        if !gt_used[i] && !est_used[k] {
            gt_used[i] = true;
            est_used[k] = true;
            pairs.push((i, k));
        }
    }
    pairs.sort_unstable();
    pairs
}

pub fn coherence(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        (dot(a, b).abs() / d).min(1.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WavefrontMatch {
    pub gt_delay: i64,
    pub matched: bool,
    pub est_delay: Option<i64>,
    pub angular_error_deg: Option<f64>,
    pub coherence: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean over matched pairs; `None` without matches.
    pub angular_error_deg: Option<f64>,
    pub median_angular_error_deg: Option<f64>,
    pub coherence: Option<f64>,
    pub detection_rate: f64,
    pub matched: usize,
    /// Number of ground-truth peaks scored against.
    pub peaks: usize,
    pub tolerance: usize,
    pub max_delay_error: Option<u64>,
    pub per_wavefront: Vec<WavefrontMatch>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn score(gt: &GroundTruth, est: &[EchoEstimate], tolerance: usize) -> EvalReport {
    let mut order: Vec<usize> = (0..est.len()).collect();
    order.sort_by_key(|&k| est[k].delay);
    let est_delays: Vec<i64> = order.iter().map(|&k| est[k].delay).collect();
    let pairs = match_peaks(&gt.delays, &est_delays, tolerance);

    let mut per_wavefront: Vec<WavefrontMatch> = gt
        .delays
        .iter()
        .map(|&d| WavefrontMatch {
            gt_delay: d,
            matched: false,
            est_delay: None,
            angular_error_deg: None,
            coherence: None,
        })
        .collect();
    let mut errors = Vec::new();
    let mut cohs = Vec::new();
    let mut max_delay_error = None;
    for &(i, k) in &pairs {
        let e = &est[order[k]];
        let ang = gt.directions[i].angle_to_deg(&e.direction);
        // Echo lists read from CSV carry no columns.
        let coh = (!e.raw_column.is_empty()).then(|| coherence(&gt.columns[i], &e.raw_column));
        let de = (gt.delays[i] - e.delay).unsigned_abs();
        max_delay_error = Some(max_delay_error.map_or(de, |m: u64| m.max(de)));
        per_wavefront[i] = WavefrontMatch {
            gt_delay: gt.delays[i],
            matched: true,
            est_delay: Some(e.delay),
            angular_error_deg: Some(ang),
            coherence: coh,
        };
        errors.push(ang);
        cohs.extend(coh);
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    EvalReport {
        angular_error_deg: mean(&errors),
        median_angular_error_deg: median(errors.clone()),
        coherence: mean(&cohs),
        detection_rate: if gt.is_empty() {
            0.0
        } else {
            pairs.len() as f64 / gt.len() as f64
        },
        matched: pairs.len(),
        peaks: gt.len(),
        tolerance,
        max_delay_error,
        per_wavefront,
    }
}

/// Means of the per-scene metrics, skipping scenes without matches for the
/// angular and coherence averages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSummary {
    pub scenes: usize,
    pub angular_error_deg: Option<f64>,
    pub median_angular_error_deg: Option<f64>,
    pub coherence: Option<f64>,
    pub detection_rate: f64,
}

impl ReportSummary {
    pub fn from_reports(reports: &[EvalReport]) -> Self {
        let ang: Vec<f64> = reports.iter().filter_map(|r| r.angular_error_deg).collect();
        let per_pair: Vec<f64> = reports
            .iter()
            .flat_map(|r| r.per_wavefront.iter().filter_map(|w| w.angular_error_deg))
            .collect();
        let coh: Vec<f64> = reports.iter().filter_map(|r| r.coherence).collect();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        Self {
            scenes: reports.len(),
            angular_error_deg: mean(&ang),
            median_angular_error_deg: median(per_pair),
            coherence: mean(&coh),
            detection_rate: if reports.is_empty() {
                0.0
            } else {
                reports.iter().map(|r| r.detection_rate).sum::<f64>() / reports.len() as f64
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ism::{synthesize_rir, Wavefront};
    use crate::sh::build_grid;
    use proptest::prelude::*;

    fn dir(az: f64, el: f64) -> Direction {
        Direction::from_degrees(az, el).unwrap()
    }

    fn scene(delay_samples: f64) -> IsmScene {
        IsmScene::new(
            vec![
                Wavefront::new(delay_samples / 16000.0, 0.8, dir(10.0, 5.0)),
                Wavefront::new((delay_samples + 30.0) / 16000.0, 0.5, dir(-70.0, 20.0)),
                Wavefront::new((delay_samples + 75.0) / 16000.0, 0.3, dir(150.0, -10.0)),
            ],
            2,
            16000.0,
            8,
        )
        .unwrap()
    }

    fn echo(delay: i64, d: Direction, col: Vec<f64>) -> EchoEstimate {
        EchoEstimate {
            delay,
            direction: d,
            gain: 1.0,
            raw_column: col,
            correlation: 1.0,
        }
    }

    #[test]
    fn alignment_examples() {
        let s = scene(0.0);
        let rir = synthesize_rir(&s, 200).unwrap();
        let a = align_ground_truth(&rir, 256).unwrap();
        assert_eq!(a.shift, 0);
        assert!((a.scale - 1.0 / 0.8).abs() < 1e-12);

        let delayed = synthesize_rir(&scene(93.0), 300).unwrap();
        let b = align_ground_truth(&delayed, 256).unwrap();
        assert_eq!(b.shift, -93);
        for (x, y) in a.matrix.data().iter().zip(b.matrix.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let c = align_ground_truth(&delayed.scaled(3.5), 256).unwrap();
        for (x, y) in b.matrix.data().iter().zip(c.matrix.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(align_ground_truth(&AmbisonicSignal::zeros(1, 16000.0, 10), 16).is_err());
    }

    #[test]
    fn ground_truth_from_rir_matches_scene() {
        let s = scene(40.0);
        let rir = synthesize_rir(&s, 300).unwrap();
        let a = align_ground_truth(&rir, 256).unwrap();
        let grid = build_grid(3.0, 2).unwrap();
        let opts = ExtractOptions {
            peaks: 3,
            j_max: 100,
            ..Default::default()
        };
        let picked = GroundTruth::from_aligned(&a, &grid, &opts).unwrap();
        let exact = GroundTruth::from_scene(&s, 3, 100);
        assert_eq!(picked.delays, exact.delays);
        assert_eq!(exact.delays, vec![0, 30, 75]);
        for (p, e) in picked.directions.iter().zip(&exact.directions) {
            assert!(p.angle_to_deg(e) < 3.0);
        }
    }

    #[test]
    fn matching_examples() {
        assert_eq!(match_peaks(&[0, 50, 80], &[1, 49, 200], 2), vec![(0, 0), (1, 1)]);
        assert_eq!(match_peaks(&[0, 10, 20], &[0, 10, 20], 2).len(), 3);
        assert!(match_peaks(&[0, 10, 20], &[3, 13, 23], 2).is_empty());
        // Closest pair wins a contested estimate.
        assert_eq!(match_peaks(&[10, 12], &[11, 13], 2), vec![(0, 0), (1, 1)]);
        assert_eq!(match_peaks(&[10, 12], &[12], 2), vec![(1, 0)]);
    }

    #[test]
    fn score_examples() {
        let s = scene(0.0);
        let gt = GroundTruth::from_scene(&s, 3, 100);
        let est: Vec<EchoEstimate> = (0..3)
            .map(|i| echo(gt.delays[i], gt.directions[i], gt.columns[i].clone()))
            .collect();
        let r = score(&gt, &est, 2);
        assert_eq!(r.angular_error_deg, Some(0.0));
        assert!((r.coherence.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.detection_rate, 1.0);

        // Rotate one of two matched wavefronts by 10°.
        let rotated = Direction::from_degrees(gt.directions[1].azimuth_deg() + 10.0, 0.0).unwrap();
        let base = Direction::from_degrees(gt.directions[1].azimuth_deg(), 0.0).unwrap();
        let mut gt2 = gt.clone();
        gt2.directions[1] = base;
        let est2 = vec![
            echo(0, gt2.directions[0], gt2.columns[0].clone()),
            echo(gt2.delays[1], rotated, gt2.columns[1].clone()),
        ];
        let r = score(&gt2, &est2, 2);
        assert!((r.angular_error_deg.unwrap() - 5.0).abs() < 1e-9);
        assert!((r.detection_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!(!r.per_wavefront[2].matched);
    }

    #[test]
    fn coherence_scale_invariant() {
        let a = vec![0.3, -0.2, 0.9, 0.1];
        let b = vec![0.1, 0.4, 0.5, -0.7];
        let c = coherence(&a, &b);
        let scaled: Vec<f64> = b.iter().map(|x| x * 7.0).collect();
        assert!((coherence(&a, &scaled) - c).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&c));
    }

    proptest! {
        #[test]
        fn score_permutation_symmetric(seed in 0u64..500) {
            use rand::{seq::SliceRandom, SeedableRng};
            let s = scene(0.0);
            let gt = GroundTruth::from_scene(&s, 3, 100);
            let mut est: Vec<EchoEstimate> = (0..3)
                .map(|i| echo(gt.delays[i] + 1, dir(i as f64 * 40.0, 0.0), gt.columns[(i + 1) % 3].clone()))
                .collect();
            let a = score(&gt, &est, 2);
            est.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = score(&gt, &est, 2);
            prop_assert_eq!(a.angular_error_deg, b.angular_error_deg);
            prop_assert_eq!(a.coherence, b.coherence);
            prop_assert_eq!(a.detection_rate, b.detection_rate);
        }

        #[test]
        fn detection_one_iff_all_matched(gt in proptest::collection::btree_set(0i64..20, 1..8), shift in -4i64..5) {
            let gt: Vec<i64> = gt.into_iter().map(|d| 10 * d).collect();
            let est: Vec<i64> = gt.iter().map(|d| d + shift).collect();
            let pairs = match_peaks(&gt, &est, 2);
            prop_assert_eq!(pairs.len() == gt.len(), shift.abs() <= 2);
        }
    }
}
