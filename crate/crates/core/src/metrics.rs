//! Validation metrics against a ground-truth table.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::table::ContingencyTable;

/// Per-cell means and sorted sample values of an ensemble of matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSummary {
    rows: usize,
    cols: usize,
    count: usize,
    means: Vec<f64>,
    /// Cell-major: the sorted samples of cell `k` are `sorted[k * count..(k + 1) * count]`.
    sorted: Vec<f64>,
}

impl SampleSummary {
    /// Summarizes row-major samples, each of length `rows * cols`.
    pub fn new<S: AsRef<[f64]>>(rows: usize, cols: usize, samples: &[S]) -> Result<Self> {
        let cells = rows * cols;
        let count = samples.len();
        if count == 0 {
            return Err(Error::InvalidArgument("no samples to summarize".into()));
        }
        let mut sorted = vec![0.0; cells * count];
        for (s, sample) in samples.iter().enumerate() {
            let sample = sample.as_ref();
            if sample.len() != cells {
                return Err(Error::LengthMismatch {
                    what: "sample",
                    expected: cells,
                    got: sample.len(),
                });
            }
            for (k, v) in sample.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument("non-finite sample value".into()));
                }
                sorted[k * count + s] = *v;
            }
        }
        let mut means = Vec::with_capacity(cells);
        for chunk in sorted.chunks_exact_mut(count) {
            means.push(chunk.iter().sum::<f64>() / count as f64);
            chunk.sort_by(f64::total_cmp);
        }
        Ok(Self {
            rows,
            cols,
            count,
            means,
            sorted,
        })
    }

    pub fn from_tables(tables: &[ContingencyTable]) -> Result<Self> {
        let first = tables
            .first()
            .ok_or_else(|| Error::InvalidArgument("no samples to summarize".into()))?;
        let samples: Vec<Vec<f64>> = tables.iter().map(ContingencyTable::to_f64).collect();
        Self::new(first.rows(), first.cols(), &samples)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sorted_cell(&self, k: usize) -> &[f64] {
        &self.sorted[k * self.count..(k + 1) * self.count]
    }

    fn check(&self, truth: &ContingencyTable) -> Result<()> {
        if (truth.rows(), truth.cols()) != (self.rows, self.cols) {
            return Err(Error::ShapeMismatch {
                expected_rows: self.rows,
                expected_cols: self.cols,
                rows: truth.rows(),
                cols: truth.cols(),
            });
        }
        Ok(())
    }
}

/// `sqrt(mean((m - t)^2)) / mean(m)` for an estimate `m` and truth `t`.
pub fn srmse_values(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "truth",
            expected: estimate.len(),
            got: truth.len(),
        });
    }
    let n = estimate.len() as f64;
    let mean = estimate.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(Error::ZeroNormalizer("SRMSE"));
    }
    let mse = estimate.iter().zip(truth).map(|(m, t)| (m - t) * (m - t)).sum::<f64>() / n;
    Ok(math::sqrt(mse) / mean)
}

/// `mean(2 min(m, t) / (m + t))`, a cell with `m = t = 0` counting as 1.
pub fn ssi_values(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "truth",
            expected: estimate.len(),
            got: truth.len(),
        });
    }
    let s: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(&m, &t)| if m + t > 0.0 { 2.0 * m.min(t) / (m + t) } else { 1.0 })
        .sum();
    Ok(s / estimate.len() as f64)
}

fn truth_values(truth: &ContingencyTable) -> Vec<f64> {
    truth.to_f64()
}

/// SRMSE of the sample mean against the ground truth.
pub fn srmse(summary: &SampleSummary, truth: &ContingencyTable) -> Result<f64> {
    summary.check(truth)?;
    srmse_values(summary.means(), &truth_values(truth))
}

/// Sorensen similarity of the sample mean and the ground truth.
pub fn ssi(summary: &SampleSummary, truth: &ContingencyTable) -> Result<f64> {
    summary.check(truth)?;
    ssi_values(summary.means(), &truth_values(truth))
}

/// How the per-cell `q%` interval is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntervalKind {
    /// Shortest window holding `ceil(q n / 100)` sorted samples; ties go to
    /// the lowest window. On multimodal samples the window can move to
    /// another mode as `q` grows, so coverage need not be monotone in `q`.
    #[default]
    HighestDensity,
    /// Equal-tailed empirical quantiles. Nested in `q`.
    Central,
}

/// The per-cell interval `[L_q, U_q]`.
pub fn cell_interval(sorted: &[f64], q: f64, kind: IntervalKind) -> (f64, f64) {
    let n = sorted.len();
    let k = (math::ceil(q * n as f64 / 100.0) as usize).clamp(1, n);
    match kind {
        IntervalKind::HighestDensity => {
            let mut best = 0;
            let mut width = f64::INFINITY;
            for i in 0..=n - k {
                let w = sorted[i + k - 1] - sorted[i];
                if w < width {
                    width = w;
                    best = i;
                }
            }
            (sorted[best], sorted[best + k - 1])
        }
        IntervalKind::Central => {
            let lo = (n - k) / 2;
            (sorted[lo], sorted[lo + k - 1])
        }
    }
}

/// Fraction of cells whose ground-truth value lies in its `q%` interval.
pub fn coverage_probability(
    summary: &SampleSummary,
    truth: &ContingencyTable,
    q: f64,
    kind: IntervalKind,
) -> Result<f64> {
    summary.check(truth)?;
    if !(q > 0.0 && q <= 100.0) {
        return Err(Error::InvalidArgument("coverage level must lie in (0, 100]".into()));
    }
    let t = truth_values(truth);
    let covered = (0..t.len())
        .filter(|&k| {
            let (lo, hi) = cell_interval(summary.sorted_cell(k), q, kind);
            lo <= t[k] && t[k] <= hi
        })
        .count();
    Ok(covered as f64 / t.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, Poisson};

    fn truth() -> ContingencyTable {
        ContingencyTable::from_rows(&[[3u64, 0, 7], [1, 12, 5]]).unwrap()
    }

    #[test]
    fn perfect_stream() {
        let t = truth();
        let s = SampleSummary::from_tables(&[t.clone(), t.clone(), t.clone()]).unwrap();
        assert_eq!(srmse(&s, &t).unwrap(), 0.0);
        assert_eq!(ssi(&s, &t).unwrap(), 1.0);
        assert_eq!(coverage_probability(&s, &t, 99.0, IntervalKind::HighestDensity).unwrap(), 1.0);
    }

    #[test]
    fn shifted_stream() {
        let t = truth();
        let shifted: Vec<Vec<f64>> = (0..4).map(|_| t.to_f64().iter().map(|v| v + 1.0).collect()).collect();
        let s = SampleSummary::new(2, 3, &shifted).unwrap();
        assert_eq!(coverage_probability(&s, &t, 99.0, IntervalKind::HighestDensity).unwrap(), 0.0);
        // numerator |c| = 1, denominator mean(T* + 1) = 34 / 6
        assert!((srmse(&s, &t).unwrap() - 6.0 / 34.0).abs() < 1e-12);
    }

    #[test]
    fn ssi_hand_values() {
        let t = [1.0, 2.0, 3.0];
        let m = [2.0, 4.0, 6.0];
        assert!((ssi_values(&m, &t).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ssi_values(&[0.0, 5.0], &[3.0, 0.0]).unwrap(), 0.0);
        assert_eq!(ssi_values(&[0.0], &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn zero_estimate_is_an_error() {
        assert_eq!(srmse_values(&[0.0, 0.0], &[1.0, 2.0]), Err(Error::ZeroNormalizer("SRMSE")));
    }

    #[test]
    fn highest_density_window() {
        let s = [0.0, 10.0, 11.0, 12.0, 30.0];
        assert_eq!(cell_interval(&s, 60.0, IntervalKind::HighestDensity), (10.0, 12.0));
        assert_eq!(cell_interval(&s, 60.0, IntervalKind::Central), (10.0, 12.0));
        assert_eq!(cell_interval(&s, 20.0, IntervalKind::HighestDensity), (0.0, 0.0));
        assert_eq!(cell_interval(&[1.0, 2.0], 0.1, IntervalKind::HighestDensity), (1.0, 1.0));
    }

    #[test]
    fn poisson_around_truth_covers() {
        let t = ContingencyTable::from_rows(&[[3u64, 20, 7, 50], [1, 12, 5, 100]]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let samples: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                t.cells()
                    .iter()
                    .map(|&v| Poisson::new(v as f64).unwrap().sample(&mut rng))
                    .collect()
            })
            .collect();
        let s = SampleSummary::new(2, 4, &samples).unwrap();
        let cp99 = coverage_probability(&s, &t, 99.0, IntervalKind::HighestDensity).unwrap();
        let cp50 = coverage_probability(&s, &t, 50.0, IntervalKind::HighestDensity).unwrap();
        assert!(cp99 >= 0.95);
        assert!(cp99 >= cp50);
    }

    #[test]
    fn shortest_window_can_jump_between_modes() {
        let t = ContingencyTable::from_rows(&[[0u64]]).unwrap();
        let samples: Vec<[f64; 1]> = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 5.0].map(|v| [v]).to_vec();
        let s = SampleSummary::new(1, 1, &samples).unwrap();
        let hd = |q| coverage_probability(&s, &t, q, IntervalKind::HighestDensity).unwrap();
        assert_eq!(hd(300.0 / 7.0), 1.0);
        assert_eq!(hd(400.0 / 7.0), 0.0);
        let central = |q| coverage_probability(&s, &t, q, IntervalKind::Central).unwrap();
        assert!(central(300.0 / 7.0) <= central(400.0 / 7.0));
    }

    #[test]
    fn shortest_window_is_monotone_on_unimodal_draws() {
        let t = ContingencyTable::from_rows(&[[4u64, 9, 1], [0, 30, 2]]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..20 {
            let samples: Vec<Vec<f64>> = (0..200)
                .map(|_| {
                    t.cells()
                        .iter()
                        .map(|&v| Poisson::new(v as f64 + 0.5).unwrap().sample(&mut rng))
                        .collect()
                })
                .collect();
            let s = SampleSummary::new(2, 3, &samples).unwrap();
            let mut last = 0.0;
            for q in [10.0, 50.0, 90.0, 99.0] {
                let cp = coverage_probability(&s, &t, q, IntervalKind::HighestDensity).unwrap();
                assert!(cp >= last);
                last = cp;
            }
        }
    }

    proptest! {
        #[test]
        fn srmse_is_scale_free_and_ssi_symmetric(
            m in proptest::collection::vec(0.1f64..100.0, 6),
            t in proptest::collection::vec(0.0f64..100.0, 6),
            k in 0.1f64..10.0,
        ) {
            let a = srmse_values(&m, &t).unwrap();
            let mk: Vec<f64> = m.iter().map(|v| v * k).collect();
            let tk: Vec<f64> = t.iter().map(|v| v * k).collect();
            prop_assert!((a - srmse_values(&mk, &tk).unwrap()).abs() <= 1e-9 * a.max(1.0));
            prop_assert!(a >= 0.0);
            let s1 = ssi_values(&m, &t).unwrap();
            let s2 = ssi_values(&t, &m).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&s1));
        }

        #[test]
        fn coverage_is_monotone_in_q(
            samples in proptest::collection::vec(proptest::collection::vec(0u64..20, 4), 2..40),
            truth in proptest::collection::vec(0u64..20, 4),
            q1 in 1.0f64..100.0,
            q2 in 1.0f64..100.0,
        ) {
            let tables: Vec<ContingencyTable> =
                samples.into_iter().map(|c| ContingencyTable::new(2, 2, c).unwrap()).collect();
            let s = SampleSummary::from_tables(&tables).unwrap();
            let t = ContingencyTable::new(2, 2, truth).unwrap();
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            let a = coverage_probability(&s, &t, lo, IntervalKind::Central).unwrap();
            let b = coverage_probability(&s, &t, hi, IntervalKind::Central).unwrap();
            prop_assert!(a <= b, "{a} > {b}");
        }
    }
}
