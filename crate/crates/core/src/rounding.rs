//! Efficient rounding of approximate designs to replication counts.

use alloc::vec::Vec;

use crate::error::{DesignError, Result};
use crate::model::Design;

/// Integer counts `n_i >= 1` with `sum n_i = n`.
///
/// Starts from `ceil((n - k/2) xi_i)`, then repeatedly increments the index
/// with the largest `xi_j / n_j` (ties to the smallest index) while the total
/// is short, or decrements the index with the smallest `xi_j / (n_j - 1)`
/// among `n_j >= 2` (ties to the largest index) while it is over.
pub fn efficient_round(design: &Design, n: usize) -> Result<Vec<usize>> {
    let k = design.len();
    if n < k {
        return Err(DesignError::SampleTooSmall { n, k });
    }
    let scale = n as f64 - 0.5 * k as f64;
    let w = design.weights();
    let mut counts: Vec<usize> = w
        .iter()
        .map(|&xi| (libm::ceil(scale * xi) as usize).max(1))
        .collect();
    let mut total: usize = counts.iter().sum();

    while total < n {
        let mut best = 0;
        for j in 1..k {
            if w[j] / counts[j] as f64 > w[best] / counts[best] as f64 {
                best = j;
            }
        }
        counts[best] += 1;
        total += 1;
    }
    while total > n {
        let mut pick: Option<usize> = None;
        for j in 0..k {
            if counts[j] < 2 {
                continue;
            }
            let r = w[j] / (counts[j] - 1) as f64;
            match pick {
                Some(p) if r > w[p] / (counts[p] - 1) as f64 => {}
                _ => pick = Some(j),
            }
        }
        // total > n >= k guarantees some count of at least 2
        let j = pick.expect("a count above one exists");
        counts[j] -= 1;
        total -= 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DesignSpace;
    use alloc::vec;

    fn space() -> DesignSpace {
        DesignSpace::new(0.0, 8.0).unwrap()
    }

    #[test]
    fn exact_multiples() {
        let d = Design::uniform(vec![0.0, 2.0, 4.0, 6.0, 8.0], &space()).unwrap();
        assert_eq!(efficient_round(&d, 150).unwrap(), vec![30; 5]);
    }

    #[test]
    fn too_small_sample() {
        let d = Design::uniform(vec![0.0, 2.0, 4.0], &space()).unwrap();
        assert!(matches!(
            efficient_round(&d, 2),
            Err(DesignError::SampleTooSmall { n: 2, k: 3 })
        ));
        assert_eq!(efficient_round(&d, 3).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn tie_rules() {
        // two equal weights, odd n: ceil((3 - 1) * 0.5) = 1 each, one increment to the first
        let d = Design::uniform(vec![1.0, 2.0], &space()).unwrap();
        assert_eq!(efficient_round(&d, 3).unwrap(), vec![2, 1]);
        // three equal weights, n = 4: ceil(2.5 / 3) = 1 each, increment the first
        let d = Design::uniform(vec![1.0, 2.0, 3.0], &space()).unwrap();
        assert_eq!(efficient_round(&d, 4).unwrap(), vec![2, 1, 1]);
    }

    #[test]
    fn decrement_path() {
        let d = Design::new(vec![1.0, 2.0, 3.0], vec![0.45, 0.45, 0.1], &space()).unwrap();
        // ceil(4.5 * 0.45) = 3, 3, ceil(0.45) = 1: total 7 > 6, tie -> index 1
        assert_eq!(efficient_round(&d, 6).unwrap(), vec![3, 2, 1]);
    }
}
