//! Shared oracles for the integration and acceptance suites.
//!
//! Everything in here is deliberately written as the most direct possible
//! computation — exhaustive enumeration, textbook formulas, table-driven
//! CRC — independent of the implementation paths it is used to check.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use vigil::association::{assign, Assignment, GatedCostMatrix};
use vigil::geometry::{iou, Detection};
use vigil::motion::TrackState;

/// Exhaustive minimum-cost matching: tries every way of assigning rows to
/// distinct feasible columns, preferring more matches, then lower total
/// cost, then the lexicographically smallest pair list. Factorial time;
/// keep inputs small.
pub fn brute_force_assign(m: &GatedCostMatrix) -> Assignment {
    struct Best {
        matches: Vec<(usize, usize)>,
        cost: f64,
    }
    fn recurse(
        m: &GatedCostMatrix,
        row: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<(usize, usize)>,
        cost: f64,
        best: &mut Option<Best>,
    ) {
        if row == m.rows() {
            let better = match best {
                None => true,
                Some(b) => {
                    (current.len() > b.matches.len())
                        || (current.len() == b.matches.len() && cost < b.cost)
                        || (current.len() == b.matches.len()
                            && cost == b.cost
                            && current.as_slice() < b.matches.as_slice())
                }
            };
            if better {
                *best = Some(Best {
                    matches: current.clone(),
                    cost,
                });
            }
            return;
        }
        // Option 1: leave this row unmatched.
        recurse(m, row + 1, used, current, cost, best);
        // Option 2: match it to any free feasible column.
        for col in 0..m.cols() {
            if used[col] {
                continue;
            }
            if let Some(c) = m.get(row, col) {
                used[col] = true;
                current.push((row, col));
                recurse(m, row + 1, used, current, cost + c, best);
                current.pop();
                used[col] = false;
            }
        }
    }

    let mut best = None;
    recurse(
        m,
        0,
        &mut vec![false; m.cols()],
        &mut Vec::new(),
        0.0,
        &mut best,
    );
    let matches = best.map(|b| b.matches).unwrap_or_default();
    let matched_rows: Vec<usize> = matches.iter().map(|&(r, _)| r).collect();
    let matched_cols: Vec<usize> = matches.iter().map(|&(_, c)| c).collect();
    Assignment {
        unmatched_rows: (0..m.rows())
            .filter(|r| !matched_rows.contains(r))
            .collect(),
        unmatched_cols: (0..m.cols())
            .filter(|c| !matched_cols.contains(c))
            .collect(),
        matches,
    }
}

/// Checks `assign` against the exhaustive oracle on one matrix.
pub fn assert_assignment_optimal(m: &GatedCostMatrix) {
    let got = assign(m);
    let want = brute_force_assign(m);
    assert_eq!(
        got, want,
        "assignment disagrees with exhaustive search on {m:?}"
    );
}

/// Gaussian-conditioning oracle for the Kalman measurement update.
///
/// Treats (state, measurement) as one joint Gaussian and conditions on the
/// measurement with a generic matrix inverse:
///   x' = x + P Hᵀ S⁻¹ (z − H x),   P' = P − P Hᵀ S⁻¹ H P,   S = H P Hᵀ + R.
/// Dynamic-size matrices and an explicit inverse keep the arithmetic path
/// disjoint from the filter's static-size Cholesky solve.
pub fn conditioning_update(
    state: &TrackState,
    z: [f64; 4],
    noise_diag: [f64; 4],
) -> (DVector<f64>, DMatrix<f64>) {
    let x = DVector::from_iterator(8, state.mean.iter().copied());
    let p = DMatrix::from_fn(8, 8, |i, j| state.covariance[(i, j)]);
    let mut h = DMatrix::zeros(4, 8);
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    let r = DMatrix::from_diagonal(&DVector::from_row_slice(&noise_diag));
    let s = &h * &p * h.transpose() + r;
    let s_inv = s.try_inverse().expect("oracle covariance invertible");
    let gain = &p * h.transpose() * &s_inv;
    let innovation = DVector::from_row_slice(&z) - &h * &x;
    let mean = &x + &gain * innovation;
    let cov = &p - &gain * &h * &p;
    (mean, cov)
}

/// Quadratic-time non-maximum suppression: repeatedly pick the highest
/// confidence remaining box (lowest index on ties) and discard everything
/// overlapping it beyond the threshold.
pub fn brute_force_nms(detections: &[Detection], overlap: f64) -> Vec<Detection> {
    let mut alive: Vec<usize> = (0..detections.len()).collect();
    let mut kept = Vec::new();
    while !alive.is_empty() {
        let &lead = alive
            .iter()
            .max_by(|&&a, &&b| {
                detections[a]
                    .confidence
                    .partial_cmp(&detections[b].confidence)
                    .unwrap()
                    .then(b.cmp(&a))
            })
            .unwrap();
        kept.push(detections[lead].clone());
        alive.retain(|&i| i != lead && iou(&detections[lead].bbox, &detections[i].bbox) <= overlap);
    }
    kept
}

/// O(P·N) AUC: counts every positive/negative pair directly. The final
/// expression mirrors the rank-based implementation so exact agreement is
/// bitwise, not approximate.
pub fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins: u64 = 0;
    let mut ties: u64 = 0;
    let mut positives: u64 = 0;
    let mut negatives: u64 = 0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        positives += 1;
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                wins += 1;
            } else if scores[i] == scores[j] {
                ties += 1;
            }
        }
    }
    for &l in labels {
        if !l {
            negatives += 1;
        }
    }
    (wins as f64 + ties as f64 / 2.0) / (positives as f64 * negatives as f64)
}

/// Table-driven CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF), built the
/// classic byte-at-a-time way as an independent reference.
pub fn reference_crc16(bytes: &[u8]) -> u16 {
    let mut table = [0u16; 256];
    for (b, entry) in table.iter_mut().enumerate() {
        let mut crc = (b as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
        *entry = crc;
    }
    let mut crc: u16 = 0xFFFF;
    for &b in bytes {
        crc = (crc << 8) ^ table[((crc >> 8) as u8 ^ b) as usize];
    }
    crc
}

/// Exhaustive template search: every candidate shift, straight double loop.
pub fn brute_force_template_best(
    sequence: &[vigil::anomaly::FeatureVector],
    profiles: &[vigil::anomaly::FeatureVector],
) -> Option<(usize, f64)> {
    if sequence.len() < profiles.len() {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for w in 0..=sequence.len() - profiles.len() {
        let mut theta = 0.0;
        for (j, p) in profiles.iter().enumerate() {
            let dot: f64 = sequence[w + j].iter().zip(p).map(|(a, b)| a * b).sum();
            theta += dot.max(0.0);
        }
        if best.is_none_or(|(_, t)| theta > t) {
            best = Some((w, theta));
        }
    }
    best
}

/// The scenario pack used by the detection-quality gate.
pub const SCENE_PACK: [(&str, &str); 6] = [
    ("loiter", include_str!("../scenarios/loiter.toml")),
    ("fast", include_str!("../scenarios/fast.toml")),
    ("circle", include_str!("../scenarios/circle.toml")),
    ("jump", include_str!("../scenarios/jump.toml")),
    ("gather", include_str!("../scenarios/gather.toml")),
    ("disperse", include_str!("../scenarios/disperse.toml")),
];

pub const NORMAL_SCENE: &str = include_str!("../scenarios/normal.toml");
