//! Sleep-composition dictionary (k-means), distance encoding and z-scoring.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative objective improvement drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 300,
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    /// One word per row, `k x d`.
    pub centers: Array2<f64>,
    pub iterations: usize,
    pub objective: f64,
    /// Sum of squared distances after every assignment step.
    pub objective_history: Vec<f64>,
}

impl Dictionary {
    pub fn from_centers(centers: Array2<f64>) -> Result<Self> {
        if centers.nrows() == 0 || centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "dictionary needs at least one finite center".into(),
            ));
        }
        Ok(Dictionary {
            centers,
            iterations: 0,
            objective: f64::NAN,
            objective_history: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center (lowest index on ties) and its squared distance.
fn nearest(x: ArrayView1<f64>, centers: &Array2<f64>) -> (usize, f64) {
    let xs = x.as_slice();
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.outer_iter().enumerate() {
        let d = match (xs, c.as_slice()) {
            (Some(xs), Some(cs)) => {
                let mut acc = 0.0;
                for (p, q) in xs.iter().zip(cs) {
                    acc += (p - q) * (p - q);
                    if acc >= best.1 {
                        break;
                    }
                }
                acc
            }
            _ => sq_dist(x, c),
        };
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding.
fn seed_centers(samples: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = samples.nrows();
    let mut centers = Array2::zeros((k, samples.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&samples.row(first));
    let mut d2: Vec<f64> = samples
        .outer_iter()
        .map(|x| sq_dist(x, centers.row(0)))
        .collect();
    for j in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).unwrap();
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(j).assign(&samples.row(pick));
        for (i, x) in samples.outer_iter().enumerate() {
            let d = sq_dist(x, centers.row(j));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

/// Lloyd's algorithm from k-means++ seeds. Each center update is the mean
/// of the samples assigned to it; a center that loses all its samples stays
/// where it was.
pub fn kmeans_fit(samples: ArrayView2<f64>, cfg: &KMeansConfig) -> Result<Dictionary> {
    let (n, d) = samples.dim();
    if cfg.k == 0 {
        return Err(Error::Config("dictionary size must be at least 1".into()));
    }
    if n < cfg.k {
        return Err(Error::Validation(format!(
            "k-means needs at least k = {} samples, got {n}",
            cfg.k
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite k-means sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centers = seed_centers(samples, cfg.k, &mut rng);
    let mut assign = vec![0usize; n];
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        let mut objective = 0.0;
        for (i, x) in samples.outer_iter().enumerate() {
            let (j, dist) = nearest(x, &centers);
            assign[i] = j;
            objective += dist;
        }
        if let Some(&prev) = history.last() {
            let improved = prev - objective;
            history.push(objective);
            if prev == 0.0 || improved < cfg.tol * prev {
                converged = true;
                break;
            }
        } else {
            history.push(objective);
        }

        let mut sums = Array2::<f64>::zeros((cfg.k, d));
        let mut counts = vec![0usize; cfg.k];
        for (i, x) in samples.outer_iter().enumerate() {
            let mut row = sums.row_mut(assign[i]);
            row += &x;
            counts[assign[i]] += 1;
        }
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                let mean = &sums.row(j) / c as f64;
                centers.row_mut(j).assign(&mean);
            }
        }
        iterations += 1;
    }
    if !converged {
        let objective = samples
            .outer_iter()
            .map(|x| nearest(x, &centers).1)
            .sum();
        history.push(objective);
    }
    Ok(Dictionary {
        centers,
        iterations,
        objective: *history.last().unwrap(),
        objective_history: history,
    })
}

/// Euclidean distance from `f` to every dictionary word.
pub fn bow_encode(f: ArrayView1<f64>, dict: &Dictionary) -> Result<Array1<f64>> {
    if f.len() != dict.dim() {
        return Err(Error::dim("bag-of-words input", dict.dim(), f.len()));
    }
    Ok(dict
        .centers
        .outer_iter()
        .map(|c| sq_dist(f, c).sqrt())
        .collect())
}

/// [`bow_encode`] applied to every row.
pub fn bow_encode_rows(features: ArrayView2<f64>, dict: &Dictionary) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((features.nrows(), dict.k()));
    for (i, f) in features.outer_iter().enumerate() {
        out.row_mut(i).assign(&bow_encode(f, dict)?);
    }
    Ok(out)
}

/// Final per-epoch feature, `[low-level | distances]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalFeature(pub Array1<f64>);

impl FinalFeature {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub fn assemble_final(
    low: ArrayView1<f64>,
    mid: ArrayView1<f64>,
    low_dim: usize,
    k: usize,
) -> Result<FinalFeature> {
    if low.len() != low_dim {
        return Err(Error::dim("low-level feature", low_dim, low.len()));
    }
    if mid.len() != k {
        return Err(Error::dim("mid-level feature", k, mid.len()));
    }
    Ok(FinalFeature(concatenate![Axis(0), low, mid]))
}

/// Row-wise `[low | bow_encode(low)]` for a whole recording.
pub fn final_features(low: ArrayView2<f64>, dict: &Dictionary) -> Result<Array2<f64>> {
    let mid = bow_encode_rows(low, dict)?;
    Ok(concatenate![Axis(1), low, mid])
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Array1<f64>,
    /// Population standard deviation.
    pub std: Array1<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Per-dimension mean and population standard deviation over training rows.
pub fn zscore_fit(train: ArrayView2<f64>) -> Result<NormStats> {
    let n = train.nrows();
    if n < 2 {
        return Err(Error::Validation(format!(
            "z-score statistics need at least 2 training rows, got {n}"
        )));
    }
    let mean = train.sum_axis(Axis(0)) / n as f64;
    let mut var = Array1::<f64>::zeros(train.ncols());
    for row in train.outer_iter() {
        for ((v, &x), &m) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.mapv(|v| (v / n as f64).sqrt());
    Ok(NormStats { mean, std })
}

/// `(f - mean) / std`; dimensions with zero spread map to 0.
pub fn zscore_apply(f: ArrayView1<f64>, stats: &NormStats) -> Result<Array1<f64>> {
    if f.len() != stats.dim() {
        return Err(Error::dim("z-score input", stats.dim(), f.len()));
    }
    Ok(f.iter()
        .zip(stats.mean.iter())
        .zip(stats.std.iter())
        .map(|((&x, &m), &s)| if s > 0.0 { (x - m) / s } else { 0.0 })
        .collect())
}

pub fn zscore_apply_rows(features: ArrayView2<f64>, stats: &NormStats) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(features.raw_dim());
    for (i, f) in features.outer_iter().enumerate() {
        out.row_mut(i).assign(&zscore_apply(f, stats)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn distinct_points_are_recovered_exactly() {
        let pts = array![[0.0, 0.0], [5.0, 1.0], [-3.0, 2.0], [1.0, -7.0]];
        let cfg = KMeansConfig { k: 4, seed: 3, ..KMeansConfig::default() };
        let dict = kmeans_fit(pts.view(), &cfg).unwrap();
        assert_eq!(dict.objective, 0.0);
        let mut got: Vec<Vec<f64>> = dict.centers.outer_iter().map(|r| r.to_vec()).collect();
        let mut want: Vec<Vec<f64>> = pts.outer_iter().map(|r| r.to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn too_few_samples() {
        let pts = array![[0.0], [1.0]];
        let cfg = KMeansConfig { k: 3, ..KMeansConfig::default() };
        assert!(kmeans_fit(pts.view(), &cfg).is_err());
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let pts = Array::from_shape_fn((300, 5), |_| normal.sample(&mut rng));
        let cfg = KMeansConfig { k: 12, seed: 5, ..KMeansConfig::default() };
        let dict = kmeans_fit(pts.view(), &cfg).unwrap();
        assert!(dict.objective_history.len() > 2);
        for w in dict.objective_history.windows(2) {
            assert!(w[1] <= w[0], "{:?}", dict.objective_history);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = Array::from_shape_fn((120, 3), |_| rng.random::<f64>());
        let cfg = KMeansConfig { k: 7, seed: 9, ..KMeansConfig::default() };
        assert_eq!(kmeans_fit(pts.view(), &cfg).unwrap(), kmeans_fit(pts.view(), &cfg).unwrap());
    }

    #[test]
    fn encode_examples() {
        let dict = Dictionary::from_centers(array![[0.0, 0.0], [3.0, 4.0]]).unwrap();
        let e = bow_encode(array![3.0, 4.0].view(), &dict).unwrap();
        assert_eq!(e.to_vec(), vec![5.0, 0.0]);
        assert!(bow_encode(array![1.0].view(), &dict).is_err());
    }

    proptest! {
        #[test]
        fn distances_satisfy_triangle_inequality(
            a in proptest::collection::vec(-5.0f64..5.0, 4),
            b in proptest::collection::vec(-5.0f64..5.0, 4),
            c in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            let dict = Dictionary::from_centers(Array2::from_shape_vec((1, 4), c).unwrap()).unwrap();
            let da = bow_encode(Array1::from(a.clone()).view(), &dict).unwrap()[0];
            let db = bow_encode(Array1::from(b.clone()).view(), &dict).unwrap()[0];
            let dab = sq_dist(Array1::from(a).view(), Array1::from(b).view()).sqrt();
            prop_assert!(da >= 0.0 && db >= 0.0);
            prop_assert!(da <= dab + db + 1e-12);
        }
    }

    #[test]
    fn assemble_layout() {
        let low = Array1::from_shape_fn(220, |i| i as f64 + 1.0);
        let mid = Array1::from_shape_fn(300, |i| -(i as f64) - 1.0);
        let f = assemble_final(low.view(), mid.view(), 220, 300).unwrap();
        assert_eq!(f.dim(), 520);
        assert_eq!(f.0[0], 1.0);
        assert_eq!(f.0[220], -1.0);
        let z = assemble_final(Array1::zeros(220).view(), Array1::zeros(300).view(), 220, 300).unwrap();
        assert!(z.0.iter().all(|&v| v == 0.0));
        assert!(assemble_final(low.view(), low.view(), 220, 300).is_err());
    }

    #[test]
    fn zscore_examples() {
        let train = array![[0.0, 7.0], [2.0, 7.0]];
        let stats = zscore_fit(train.view()).unwrap();
        assert_eq!(stats.mean.to_vec(), vec![1.0, 7.0]);
        assert_eq!(stats.std.to_vec(), vec![1.0, 0.0]);
        let z = zscore_apply(array![5.0, 9.0].view(), &stats).unwrap();
        assert_eq!(z.to_vec(), vec![4.0, 0.0]);
        let at_mean = zscore_apply(stats.mean.view(), &stats).unwrap();
        assert!(at_mean.iter().all(|&v| v == 0.0));
        assert!(zscore_fit(array![[1.0, 2.0]].view()).is_err());
        assert!(zscore_apply(array![1.0].view(), &stats).is_err());
    }

    #[test]
    fn zscored_training_set_is_standardised() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let train = Array::from_shape_fn((50, 6), |(_, j)| rng.random::<f64>() * (j as f64 + 1.0) + 3.0);
        let stats = zscore_fit(train.view()).unwrap();
        let z = zscore_apply_rows(train.view(), &stats).unwrap();
        let n = z.nrows() as f64;
        for col in z.axis_iter(Axis(1)) {
            let m = col.sum() / n;
            let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            assert!(m.abs() < 1e-9);
            assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
