/// Optimal warping between a reference and a query sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct DtwPath {
    /// `(reference index, query index)` pairs from `(0, 0)` to the last
    /// frame of both.
    pub steps: Vec<(usize, usize)>,
    pub cost: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Dynamic time warping with steps (1,0), (0,1), (1,1) and squared
/// Euclidean frame cost. Ties during backtracking prefer the diagonal.
pub fn dtw_align(reference: &[Vec<f64>], query: &[Vec<f64>]) -> DtwPath {
    let (n, m) = (reference.len(), query.len());
    assert!(n > 0 && m > 0, "dtw_align needs nonempty sequences");
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let c = sq_dist(&reference[i], &query[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i * m + j] = c + best;
        }
    }
    let mut steps = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
        let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
        let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        steps.push((i, j));
    }
    steps.reverse();
    DtwPath {
        steps,
        cost: acc[n * m - 1],
    }
}
