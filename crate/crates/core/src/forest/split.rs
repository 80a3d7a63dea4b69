//! Exhaustive midpoint split search for regression-tree nodes.
//!
//! Poisson mode: for a node S predicted at its own rate Σy/ΣE, the Poisson
//! deviance is a row-wise constant plus `2·φ(S)` with
//! `φ(S) = −(Σy)·ln(Σy/ΣE)`, so the deviance reduction of a split needs only
//! the children's count and exposure totals:
//! `gain = 2·(φ(parent) − φ(left) − φ(right))`.
//!
//! Squared mode: with node loss Σ(y−ȳ)² = Σy² − (Σy)²/n, the loss reduction
//! needs only the children's response sums, square sums, and row counts;
//! exposures play no role.

/// Node loss driving the split search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Poisson deviance of counts at rate Σy/ΣE with exposure offsets.
    Poisson,
    /// Squared error around the node mean.
    Squared,
}

/// Partition-dependent half-deviance term; zero-count nodes contribute 0.
pub(crate) fn phi(sum_y: f64, sum_e: f64) -> f64 {
    if sum_y <= 0.0 {
        0.0
    } else {
        -sum_y * (sum_y / sum_e).ln()
    }
}

/// Squared-error loss of a node from its sufficient statistics.
fn sse(sum_y: f64, sum_y2: f64, n: usize) -> f64 {
    sum_y2 - sum_y * sum_y / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestSplit {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Scans every midpoint of every candidate feature (ascending index order)
/// and returns the split with the largest loss reduction, requiring both
/// children to keep `min_leaf` rows and the gain to clear `min_gain`.
/// Ties keep the first candidate encountered, so the choice is deterministic
/// in (feature index, threshold) order.
#[allow(clippy::too_many_arguments)]
pub fn best_split(
    features: &[Vec<f64>],
    y: &[f64],
    e: &[f64],
    rows: &[u32],
    candidates: &[usize],
    min_leaf: usize,
    min_gain: f64,
    mode: SplitMode,
) -> Option<BestSplit> {
    if rows.len() < 2 * min_leaf {
        return None;
    }
    let mut total_y = 0.0;
    let mut total_e = 0.0;
    let mut total_y2 = 0.0;
    for &r in rows {
        total_y += y[r as usize];
        total_e += e[r as usize];
        total_y2 += y[r as usize] * y[r as usize];
    }
    let n = rows.len();
    let parent_loss = match mode {
        SplitMode::Poisson => 2.0 * phi(total_y, total_e),
        SplitMode::Squared => sse(total_y, total_y2, n),
    };
    let mut best: Option<BestSplit> = None;
    let mut sorted: Vec<u32> = Vec::with_capacity(n);
    for &f in candidates {
        let col = &features[f];
        sorted.clear();
        sorted.extend_from_slice(rows);
        sorted.sort_unstable_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
        let mut left_y = 0.0;
        let mut left_e = 0.0;
        let mut left_y2 = 0.0;
        for i in 0..n - 1 {
            let r = sorted[i] as usize;
            left_y += y[r];
            left_e += e[r];
            left_y2 += y[r] * y[r];
            let v = col[r];
            let next = col[sorted[i + 1] as usize];
            if v == next {
                continue;
            }
            let left_n = i + 1;
            if left_n < min_leaf || n - left_n < min_leaf {
                continue;
            }
            // Midpoint threshold; if rounding pushes it onto the upper value,
            // fall back to the lower value so `x <= threshold` reproduces the
            // training partition exactly.
            let mut threshold = 0.5 * (v + next);
            if threshold >= next {
                threshold = v;
            }
            let child_loss = match mode {
                SplitMode::Poisson => {
                    2.0 * (phi(left_y, left_e) + phi(total_y - left_y, total_e - left_e))
                }
                SplitMode::Squared => {
                    sse(left_y, left_y2, left_n)
                        + sse(total_y - left_y, total_y2 - left_y2, n - left_n)
                }
            };
            let gain = parent_loss - child_loss;
            if gain > min_gain && best.is_none_or(|b| gain > b.gain) {
                best = Some(BestSplit { feature: f, threshold, gain });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Direct Poisson deviance of predicting a row set at its pooled rate.
    fn node_deviance(y: &[f64], e: &[f64], rows: &[u32]) -> f64 {
        let sum_y: f64 = rows.iter().map(|&r| y[r as usize]).sum();
        let sum_e: f64 = rows.iter().map(|&r| e[r as usize]).sum();
        let rate = sum_y / sum_e;
        rows.iter()
            .map(|&r| {
                let (yi, mu) = (y[r as usize], e[r as usize] * rate);
                let ylny = if yi > 0.0 { yi * (yi / mu).ln() } else { 0.0 };
                2.0 * (ylny - (yi - mu))
            })
            .sum()
    }

    /// Direct squared loss around the subset mean.
    fn node_sse(y: &[f64], rows: &[u32]) -> f64 {
        let mean: f64 = rows.iter().map(|&r| y[r as usize]).sum::<f64>() / rows.len() as f64;
        rows.iter().map(|&r| (y[r as usize] - mean).powi(2)).sum()
    }

    fn random_node(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<u32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| (rng.random::<f64>() * 8.0).round() / 4.0).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0u32..6))).collect();
        let e: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(5u32..50))).collect();
        let rows: Vec<u32> = (0..n as u32).collect();
        (features, y, e, rows)
    }

    #[test]
    fn gain_identity_matches_direct_deviance_difference() {
        let (features, y, e, rows) = random_node(11, 40);
        let parent_dev = node_deviance(&y, &e, &rows);
        for col in &features {
            let mut values: Vec<f64> = rows.iter().map(|&r| col[r as usize]).collect();
            values.sort_unstable_by(f64::total_cmp);
            values.dedup();
            for w in values.windows(2) {
                let threshold = 0.5 * (w[0] + w[1]);
                let (left, right): (Vec<u32>, Vec<u32>) =
                    rows.iter().copied().partition(|&r| col[r as usize] <= threshold);
                if left.is_empty() || right.is_empty() {
                    continue;
                }
                let direct = parent_dev - node_deviance(&y, &e, &left) - node_deviance(&y, &e, &right);
                let ly: f64 = left.iter().map(|&r| y[r as usize]).sum();
                let le: f64 = left.iter().map(|&r| e[r as usize]).sum();
                let ty: f64 = rows.iter().map(|&r| y[r as usize]).sum();
                let te: f64 = rows.iter().map(|&r| e[r as usize]).sum();
                let via_phi = 2.0 * (phi(ty, te) - phi(ly, le) - phi(ty - ly, te - le));
                assert_relative_eq!(direct, via_phi, epsilon = 1e-9, max_relative = 1e-9);
            }
        }
    }

    /// Independent quadratic-time scan over all (feature, midpoint) pairs.
    fn brute_force(
        features: &[Vec<f64>],
        y: &[f64],
        e: &[f64],
        rows: &[u32],
        min_leaf: usize,
        mode: SplitMode,
    ) -> Option<(usize, f64, f64)> {
        let parent = match mode {
            SplitMode::Poisson => node_deviance(y, e, rows),
            SplitMode::Squared => node_sse(y, rows),
        };
        let mut best: Option<(usize, f64, f64)> = None;
        for (f, col) in features.iter().enumerate() {
            let mut values: Vec<f64> = rows.iter().map(|&r| col[r as usize]).collect();
            values.sort_unstable_by(f64::total_cmp);
            values.dedup();
            for w in values.windows(2) {
                let mut threshold = 0.5 * (w[0] + w[1]);
                if threshold >= w[1] {
                    threshold = w[0];
                }
                let (left, right): (Vec<u32>, Vec<u32>) =
                    rows.iter().copied().partition(|&r| col[r as usize] <= threshold);
                if left.len() < min_leaf || right.len() < min_leaf {
                    continue;
                }
                let children = match mode {
                    SplitMode::Poisson => {
                        node_deviance(y, e, &left) + node_deviance(y, e, &right)
                    }
                    SplitMode::Squared => node_sse(y, &left) + node_sse(y, &right),
                };
                let gain = parent - children;
                if best.is_none_or(|b| gain > b.2) {
                    best = Some((f, threshold, gain));
                }
            }
        }
        best
    }

    #[test]
    fn matches_brute_force_search_in_both_modes() {
        for mode in [SplitMode::Poisson, SplitMode::Squared] {
            for seed in [3u64, 17, 40] {
                let (features, y, e, rows) = random_node(seed, 60);
                let got =
                    best_split(&features, &y, &e, &rows, &[0, 1, 2], 5, 1e-12, mode).unwrap();
                let (bf_f, bf_t, bf_gain) =
                    brute_force(&features, &y, &e, &rows, 5, mode).unwrap();
                assert_eq!(got.feature, bf_f, "seed {seed} mode {mode:?}");
                assert_relative_eq!(got.threshold, bf_t, epsilon = 1e-12);
                assert_relative_eq!(got.gain, bf_gain, epsilon = 1e-9, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn squared_mode_separates_a_step_perfectly() {
        // Two groups at 0 and 10: split at 2.5, gain = the whole squared
        // loss Σ(y−5)² = 100, children pure.
        let features = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let y = vec![0.0, 0.0, 10.0, 10.0];
        let e = vec![1.0; 4];
        let rows: Vec<u32> = (0..4).collect();
        let got =
            best_split(&features, &y, &e, &rows, &[0], 1, 1e-12, SplitMode::Squared).unwrap();
        assert_relative_eq!(got.threshold, 2.5);
        assert_relative_eq!(got.gain, 100.0, epsilon = 1e-12);
        // Exposures are irrelevant in squared mode.
        let e2 = vec![9.0, 1.0, 4.0, 25.0];
        let again =
            best_split(&features, &y, &e2, &rows, &[0], 1, 1e-12, SplitMode::Squared).unwrap();
        assert_eq!(got, again);
    }

    #[test]
    fn ties_resolve_to_lowest_feature_index() {
        // Feature 1 duplicates feature 0, so every split gain ties; the
        // winner must come from feature 0.
        let col = vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0];
        let features = vec![col.clone(), col];
        let y = vec![0.0, 1.0, 2.0, 3.0, 9.0, 7.0];
        let e = vec![10.0; 6];
        let rows: Vec<u32> = (0..6).collect();
        for mode in [SplitMode::Poisson, SplitMode::Squared] {
            let got = best_split(&features, &y, &e, &rows, &[0, 1], 1, 1e-12, mode).unwrap();
            assert_eq!(got.feature, 0, "mode {mode:?}");
        }
    }

    #[test]
    fn respects_min_leaf_and_min_gain() {
        let features = vec![vec![0.0, 1.0, 2.0, 3.0]];
        let y = vec![1.0, 1.0, 5.0, 5.0];
        let e = vec![10.0; 4];
        let rows: Vec<u32> = (0..4).collect();
        for mode in [SplitMode::Poisson, SplitMode::Squared] {
            // min_leaf 2 forbids the 1|3 and 3|1 partitions.
            let got = best_split(&features, &y, &e, &rows, &[0], 2, 1e-12, mode).unwrap();
            assert_relative_eq!(got.threshold, 1.5);
            // A constant response has no gain anywhere.
            let flat = vec![2.0; 4];
            assert!(best_split(&features, &flat, &e, &rows, &[0], 1, 1e-12, mode).is_none());
        }
    }
}
