//! Rank statistics: Spearman correlation, Wilcoxon signed-rank test and a
//! permutation test for a positive rank correlation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-based ranks with ties sharing the average of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!("sample lengths differ: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::Validation(format!("need at least 3 pairs, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Domain("samples must be finite".into()));
    }
    Ok(())
}

/// Spearman rank correlation: Pearson correlation of the average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys)).ok_or(Error::UndefinedCorrelation("constant sample"))
}

/// One-sided permutation p-value for a positive Spearman correlation:
/// `(1 + #{ρ_perm >= ρ_obs}) / (n_perm + 1)`.
pub fn spearman_permutation_p(xs: &[f64], ys: &[f64], n_perm: usize, seed: u64) -> Result<f64> {
    check_pair(xs, ys)?;
    let rx = average_ranks(xs);
    let mut ry = average_ranks(ys);
    let observed = pearson(&rx, &ry).ok_or(Error::UndefinedCorrelation("constant sample"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n_perm {
        ry.shuffle(&mut rng);
        // shuffling preserves the rank variance, so Pearson stays defined
        if pearson(&rx, &ry).unwrap_or(0.0) >= observed {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (n_perm + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    /// Every difference was zero.
    NoDifferences,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences.
    pub w_plus: f64,
    /// Number of nonzero differences.
    pub n_nonzero: usize,
    /// Two-sided p-value.
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Largest nonzero count that is still enumerated exactly.
pub const WILCOXON_EXACT_MAX: usize = 25;

/// Signed ranks under Pratt's convention: zeros take part in the ranking of
/// `|d|` and are dropped afterwards. Returned ranks are doubled so they are
/// always integers.
fn pratt_doubled_ranks(d: &[f64]) -> (Vec<u64>, Vec<bool>) {
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let mut r2 = Vec::new();
    let mut positive = Vec::new();
    for (v, r) in d.iter().zip(ranks) {
        if *v != 0.0 {
            r2.push((2.0 * r).round() as u64);
            positive.push(*v > 0.0);
        }
    }
    (r2, positive)
}

/// Wilcoxon signed-rank test on paired differences `d = a - b`, two-sided.
///
/// Up to [`WILCOXON_EXACT_MAX`] nonzero differences the null distribution is
/// enumerated exactly over all sign assignments; above that the normal
/// approximation with the tie-corrected variance is used.
pub fn wilcoxon_signed_rank(d: &[f64]) -> Result<WilcoxonResult> {
    if d.is_empty() {
        return Err(Error::Validation("no paired differences".into()));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("differences must be finite".into()));
    }
    let (r2, positive) = pratt_doubled_ranks(d);
    let m = r2.len();
    if m == 0 {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            n_nonzero: 0,
            p_value: 1.0,
            method: WilcoxonMethod::NoDifferences,
        });
    }
    let w2: u64 = r2.iter().zip(&positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let total2: u64 = r2.iter().sum();
    let w_plus = w2 as f64 / 2.0;

    if m <= WILCOXON_EXACT_MAX {
        // counts[s] = number of sign assignments whose doubled W+ equals s
        let mut counts = vec![0.0f64; total2 as usize + 1];
        counts[0] = 1.0;
        let mut reach = 0usize;
        for &r in &r2 {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] != 0.0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        // two-sided: |W+ - E| at least as large as observed, E = total / 2;
        // in doubled units 2|W2 - total/2| = |2 W2 - total|
        let obs = (2 * w2 as i64 - total2 as i64).abs();
        let all = 2f64.powi(m as i32);
        let tail: f64 = counts
            .iter()
            .enumerate()
            .filter(|&(s, _)| (2 * s as i64 - total2 as i64).abs() >= obs)
            .map(|(_, c)| c)
            .sum();
        return Ok(WilcoxonResult {
            w_plus,
            n_nonzero: m,
            p_value: (tail / all).min(1.0),
            method: WilcoxonMethod::Exact,
        });
    }

    let mean = total2 as f64 / 4.0;
    let var: f64 = r2.iter().map(|&r| (r as f64 / 2.0).powi(2)).sum::<f64>() / 4.0;
    let z = (w_plus - mean) / var.sqrt();
    Ok(WilcoxonResult {
        w_plus,
        n_nonzero: m,
        p_value: libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0),
        method: WilcoxonMethod::Normal,
    })
}

/// Paired test of `a` against `b`.
pub fn wilcoxon_paired(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    wilcoxon_signed_rank(&d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
    fn counting_ranks(xs: &[f64]) -> Vec<f64> {
        xs.iter()
            .map(|&x| {
                let less = xs.iter().filter(|&&y| y < x).count() as f64;
                let eq = xs.iter().filter(|&&y| y == x).count() as f64;
                1.0 + less + (eq - 1.0) / 2.0
            })
            .collect()
    }

    fn spearman_oracle(xs: &[f64], ys: &[f64]) -> Option<f64> {
        let (rx, ry) = (counting_ranks(xs), counting_ranks(ys));
        let n = xs.len() as f64;
        let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
        (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
    }

    /// Two-sided exact p-value by walking every sign assignment.
    fn wilcoxon_oracle(d: &[f64]) -> f64 {
        let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
        let ranks = counting_ranks(&abs);
        let nz: Vec<(f64, bool)> = d.iter().zip(&ranks).filter(|(v, _)| **v != 0.0).map(|(v, r)| (*r, *v > 0.0)).collect();
        if nz.is_empty() {
            return 1.0;
        }
        let total: f64 = nz.iter().map(|p| p.0).sum();
        let w: f64 = nz.iter().filter(|p| p.1).map(|p| p.0).sum();
        let obs = (w - total / 2.0).abs();
        let m = nz.len();
        let mut hits = 0u64;
        for mask in 0u64..(1 << m) {
            let s: f64 = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| nz[i].0).sum();
            if (s - total / 2.0).abs() >= obs - 1e-9 {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << m) as f64
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 30.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn spearman_examples() {
        let inc = [1.0, 2.0, 3.0, 4.0, 5.0];
        let dec = [9.0, 7.0, 5.0, 3.0, 1.0];
        assert_eq!(spearman(&inc, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap(), 1.0);
        assert_eq!(spearman(&inc, &dec).unwrap(), -1.0);
        let (xs, ys) = ([1.0, 2.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0]);
        // ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4): cov 4.5, var 4.5 and 5
        let expect = 4.5 / (4.5f64 * 5.0).sqrt();
        assert!((spearman(&xs, &ys).unwrap() - expect).abs() < 1e-15);
        assert!(matches!(spearman(&[1.0, 1.0, 1.0], &inc[..3]), Err(Error::UndefinedCorrelation(_))));
        assert!(spearman(&inc[..2], &dec[..2]).is_err());
    }

    #[test]
    fn spearman_is_invariant_to_monotone_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..10.0)).collect();
        let ys: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..10.0)).collect();
        let a = spearman(&xs, &ys).unwrap();
        let xt: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let yt: Vec<f64> = ys.iter().map(|y| 3.0 * y - 7.0).collect();
        assert!((a - spearman(&xt, &yt).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn spearman_matches_oracle_on_small_tied_inputs() {
        // every ys in {0,1,2}^n against a fixed tied xs
        for n in 3..=7usize {
            let xs: Vec<f64> = (0..n).map(|i| (i / 2) as f64).collect();
            for code in 0..3usize.pow(n as u32) {
                let ys: Vec<f64> = (0..n).map(|i| (code / 3usize.pow(i as u32) % 3) as f64).collect();
                match (spearman(&xs, &ys), spearman_oracle(&xs, &ys)) {
                    (Ok(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                    (Err(_), None) => {}
                    (a, b) => panic!("{xs:?} {ys:?}: {a:?} vs {b:?}"),
                }
            }
        }
    }

    #[test]
    fn wilcoxon_matches_enumeration_oracle() {
        for n in 1..=6usize {
            for code in 0..5usize.pow(n as u32) {
                let d: Vec<f64> = (0..n).map(|i| (code / 5usize.pow(i as u32) % 5) as f64 - 2.0).collect();
                let got = wilcoxon_signed_rank(&d).unwrap();
                assert!((got.p_value - wilcoxon_oracle(&d)).abs() < 1e-12, "{d:?}");
            }
        }
    }

    #[test]
    fn wilcoxon_examples() {
        let r = wilcoxon_signed_rank(&[0.0; 5]).unwrap();
        assert_eq!((r.p_value, r.method), (1.0, WilcoxonMethod::NoDifferences));
        // n = 5 all positive: only 1 of 32 assignments is as extreme on each side
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(r.w_plus, 15.0);
        assert!((r.p_value - 2.0 / 32.0).abs() < 1e-15);
        let same = [1.0, 2.0, 3.0];
        assert_eq!(wilcoxon_paired(&same, &same).unwrap().p_value, 1.0);
    }

    #[test]
    fn wilcoxon_normal_branch_is_close_to_exact_near_the_switch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..2.0)).collect();
        let exact = wilcoxon_signed_rank(&d).unwrap();
        let mut longer = d.clone();
        longer.push(0.5);
        let normal = wilcoxon_signed_rank(&longer).unwrap();
        assert_eq!(exact.method, WilcoxonMethod::Exact);
        assert_eq!(normal.method, WilcoxonMethod::Normal);
        assert!((0.0..=1.0).contains(&normal.p_value));
        assert!((exact.p_value.ln() - normal.p_value.ln()).abs() < 1.0);
    }

    #[test]
    fn permutation_p_is_small_for_strong_and_large_for_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + rng.random_range(0.0..0.3)).collect();
        assert!(spearman_permutation_p(&xs, &ys, 999, 1).unwrap() <= 0.002);
        let noise: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
        assert!(spearman_permutation_p(&xs, &noise, 999, 1).unwrap() > 0.01);
    }

    #[test]
    fn independent_permutation_has_tiny_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let errs: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..5.0)).collect();
        let mut sig = errs.clone();
        sig.shuffle(&mut rng);
        assert!(spearman(&errs, &sig).unwrap().abs() < 0.05);
    }
}
