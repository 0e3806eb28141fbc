//! Pain score and accuracy metrics.

use crate::data::AuMap;
use crate::error::{Error, Result};

/// Prkachin-Solomon pain intensity from action-unit intensities:
/// AU4 + max(AU6, AU7) + max(AU9, AU10) + AU43.
pub fn prkachin_solomon(au: &AuMap) -> Result<f64> {
    let get = |id: u8| -> Result<f64> {
        au.get(&id).copied().ok_or(Error::MissingActionUnit(id))
    };
    Ok(get(4)? + get(6)?.max(get(7)?) + get(9)?.max(get(10)?) + get(43)?)
}

/// Mean squared error between two equally long series.
pub fn mse(truth: &[f64], est: &[f64]) -> Result<f64> {
    check_lengths(truth, est)?;
    let n = truth.len() as f64;
    Ok(truth
        .iter()
        .zip(est)
        .map(|(t, e)| (t - e) * (t - e))
        .sum::<f64>()
        / n)
}

/// Pearson correlation coefficient. Errors when either series is constant.
pub fn pearson(truth: &[f64], est: &[f64]) -> Result<f64> {
    check_lengths(truth, est)?;
    let n = truth.len() as f64;
    let mt = truth.iter().sum::<f64>() / n;
    let me = est.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vt = 0.0;
    let mut ve = 0.0;
    for (t, e) in truth.iter().zip(est) {
        let dt = t - mt;
        let de = e - me;
        cov += dt * de;
        vt += dt * dt;
        ve += de * de;
    }
    if vt <= 0.0 || ve <= 0.0 {
        return Err(Error::MetricUndefined {
            metric: "pearson",
            detail: "constant input series".into(),
        });
    }
    Ok((cov / (vt * ve).sqrt()).clamp(-1.0, 1.0))
}

/// Area under the ROC curve by the Mann-Whitney pair statistic: the fraction
/// of (positive, negative) pairs ranked correctly, ties counting half.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    // sort once; equal-score runs contribute tie credit
    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    for (&l, &s) in labels.iter().zip(scores) {
        if l {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::MetricUndefined {
            metric: "auc",
            detail: "both classes must be present".into(),
        });
    }
    pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    neg.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // for each positive, count negatives strictly below and ties via two pointers
    let mut below = 0usize; // negatives < current positive
    let mut tied_end = 0usize; // negatives <= current positive
    let mut acc = 0.0f64;
    for &p in &pos {
        while below < neg.len() && neg[below] < p {
            below += 1;
        }
        if tied_end < below {
            tied_end = below;
        }
        while tied_end < neg.len() && neg[tied_end] <= p {
            tied_end += 1;
        }
        acc += below as f64 + 0.5 * (tied_end - below) as f64;
    }
    Ok(acc / (pos.len() as f64 * neg.len() as f64))
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::MetricUndefined {
            metric: "series",
            detail: "empty input".into(),
        });
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PAIN_ACTION_UNITS;

    fn au_map(vals: [f64; 6]) -> AuMap {
        PAIN_ACTION_UNITS.iter().copied().zip(vals).collect()
    }

    #[test]
    fn pspi_worked_examples() {
        assert_eq!(prkachin_solomon(&au_map([0.0; 6])).unwrap(), 0.0);
        // AU4=3, AU6=2, AU7=4, AU9=0, AU10=1, AU43=1
        assert_eq!(
            prkachin_solomon(&au_map([3.0, 2.0, 4.0, 0.0, 1.0, 1.0])).unwrap(),
            9.0
        );
        // formula maximum
        assert_eq!(
            prkachin_solomon(&au_map([5.0, 5.0, 0.0, 5.0, 0.0, 1.0])).unwrap(),
            16.0
        );
    }

    #[test]
    fn pspi_requires_all_units() {
        let mut au = au_map([1.0; 6]);
        au.remove(&9);
        assert!(matches!(
            prkachin_solomon(&au),
            Err(Error::MissingActionUnit(9))
        ));
    }

    #[test]
    fn pspi_is_monotone_in_each_unit() {
        let base = [2.0, 1.0, 3.0, 0.5, 2.5, 0.0];
        let reference = prkachin_solomon(&au_map(base)).unwrap();
        for k in 0..6 {
            let mut bumped = base;
            bumped[k] += if k == 5 { 1.0 } else { 0.5 };
            let v = prkachin_solomon(&au_map(bumped)).unwrap();
            assert!(v >= reference, "AU index {k} not monotone");
        }
    }

    #[test]
    fn mse_pearson_basics() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
        assert!((pearson(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((pearson(&t, &neg).unwrap() + 1.0).abs() < 1e-12);
        // symmetric in its arguments
        let e = [2.0, 0.0, 5.0];
        assert_eq!(mse(&t, &e).unwrap(), mse(&e, &t).unwrap());
    }

    #[test]
    fn worked_mse_pearson_example() {
        // truth [0,1,2], est [0,1,5]: mse = 3, pearson = 5/sqrt(28)
        let t = [0.0, 1.0, 2.0];
        let e = [0.0, 1.0, 5.0];
        assert_eq!(mse(&t, &e).unwrap(), 3.0);
        let r = pearson(&t, &e).unwrap();
        assert!((r - 5.0 / 28.0f64.sqrt()).abs() < 1e-12, "r = {r}");
    }

    #[test]
    fn pearson_rejects_constant_series() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn pearson_affine_invariance() {
        let t = [0.3, 1.7, 2.2, -0.4, 5.5];
        let e = [1.0, 0.2, 3.3, 2.0, 4.1];
        let r = pearson(&t, &e).unwrap();
        let t2: Vec<f64> = t.iter().map(|v| 3.5 * v + 11.0).collect();
        let e2: Vec<f64> = e.iter().map(|v| 0.25 * v - 2.0).collect();
        assert!((pearson(&t2, &e2).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn auc_worked_examples() {
        // perfectly separated
        let labels = [true, true, false, false];
        let scores = [0.9, 0.8, 0.2, 0.1];
        assert_eq!(auc(&labels, &scores).unwrap(), 1.0);
        // 2 pairs, one ordered correctly
        let labels = [true, false, true];
        let scores = [0.9, 0.8, 0.3];
        assert_eq!(auc(&labels, &scores).unwrap(), 0.5);
        // all tied
        let labels = [true, false, true, false];
        let scores = [1.0; 4];
        assert_eq!(auc(&labels, &scores).unwrap(), 0.5);
        // single class errors
        assert!(auc(&[true, true], &[0.1, 0.2]).is_err());
    }

    /// Brute-force all-pairs oracle, independent of the sorted implementation.
    fn auc_brute(labels: &[bool], scores: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut count = 0usize;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                count += 1;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / count as f64
    }

    #[test]
    fn auc_matches_brute_force() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for n in [5usize, 20, 100, 200] {
            for _ in 0..5 {
                let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
                if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                    continue;
                }
                // quantized scores force plenty of ties
                let scores: Vec<f64> =
                    (0..n).map(|_| (rng.random_range(0..8) as f64) / 4.0).collect();
                let fast = auc(&labels, &scores).unwrap();
                let slow = auc_brute(&labels, &scores);
                assert_eq!(fast, slow, "n={n}");
            }
        }
    }
}
