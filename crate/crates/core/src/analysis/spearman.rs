/// 1-based ranks, ties sharing the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman correlation over positions present in both inputs. `None` when
/// fewer than two positions remain or either side has no rank variance.
pub fn spearman(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "spearman inputs differ in length");
    let (x, y): (Vec<f64>, Vec<f64>) = a.iter().zip(b).filter_map(|(p, q)| Some(((*p)?, (*q)?))).unzip();
    spearman_dense(&x, &y)
}

pub fn spearman_dense(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "spearman inputs differ in length");
    let n = a.len();
    if n < 2 {
        return None;
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mean, y - mean);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    if ra == rb {
        return Some(1.0);
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(spearman_dense(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Some(1.0));
        assert_eq!(spearman_dense(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        let r = spearman_dense(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - (1.0 - 6.0 * 2.0 / (4.0 * 15.0))).abs() < 1e-15);
        assert_eq!(spearman_dense(&[1.0], &[1.0]), None);
        assert_eq!(spearman_dense(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), None);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn pairwise_deletion() {
        let a = [Some(1.0), None, Some(2.0), Some(3.0)];
        let b = [Some(5.0), Some(0.0), None, Some(9.0)];
        assert_eq!(spearman(&a, &b), Some(1.0));
        let c = [Some(1.0), None, None, None];
        assert_eq!(spearman(&a, &c), None);
    }

    proptest! {
        #[test]
        fn symmetric_bounded_and_monotone_invariant(
            pairs in proptest::collection::vec((-5i32..5, -5i32..5), 2..30),
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let r = spearman_dense(&a, &b);
            prop_assert_eq!(r, spearman_dense(&b, &a));
            let fa: Vec<f64> = a.iter().map(|x| (x * 0.7).exp() + x * 3.0).collect();
            match (r, spearman_dense(&fa, &b)) {
                (Some(x), Some(y)) => {
                    prop_assert!((-1.0..=1.0).contains(&x));
                    prop_assert!((x - y).abs() < 1e-12);
                }
                (None, None) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}
