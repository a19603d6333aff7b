/// Calls `f` on every `k`-subset of `0..n` in lexicographic order until it
/// returns `false`. Returns whether the enumeration ran to completion.
pub(crate) fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    if k > n {
        return true;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if !f(&idx) {
            return false;
        }
        let Some(pos) = (0..k).rev().find(|&p| idx[p] != p + n - k) else { return true };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

#[cfg(test)]
fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_all_subsets_once() {
        for n in 0..8 {
            for k in 0..=n + 1 {
                let mut seen = std::collections::BTreeSet::new();
                for_each_combination(n, k, |s| {
                    assert!(s.windows(2).all(|w| w[0] < w[1]));
                    assert!(seen.insert(s.to_vec()));
                    true
                });
                assert_eq!(seen.len() as f64, binomial(n, k), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn early_exit() {
        let mut count = 0;
        assert!(!for_each_combination(6, 3, |_| {
            count += 1;
            count < 4
        }));
        assert_eq!(count, 4);
    }
}
