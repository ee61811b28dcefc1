use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::correlation::{centres, matrix_blocks, pair_moments, panel_blocks, Blocks};
use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Per-feature mean and sample standard deviation (n - 1 denominator).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn apply(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| (data[(i, j)] - self.means[j]) / self.sds[j])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub feature_names: Vec<String>,
    /// Components x features; rows are unit-length eigenvectors.
    pub loadings: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub n_components: usize,
    pub standardizer: Standardizer,
    /// Complete rows used for the fit.
    pub n_rows: usize,
}

impl PcaResult {
    /// Scores of standardized `data` on the retained components.
    pub fn transform(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        self.standardizer.apply(data) * self.loadings.transpose()
    }

    /// Maps scores back to standardized coordinates.
    pub fn reconstruct(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        scores * &self.loadings
    }

    pub fn cumulative_ratio(&self) -> Vec<f64> {
        self.explained_variance_ratio
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }
}

fn fit_blocks(names: &[String], blocks: &Blocks<'_>, n_components: usize) -> Result<PcaResult> {
    let f = names.len();
    if f == 0 {
        return Err(Error::Empty("no features for PCA".into()));
    }
    let shift = centres(blocks, f);
    let m = pair_moments(blocks, &shift, true);
    let n = m.count[(0, 0)];
    if n < 2.0 {
        return Err(Error::InsufficientData(format!("PCA needs 2 complete rows, found {n}")));
    }
    let limit = f.min(n as usize);
    if n_components == 0 || n_components > limit {
        return Err(Error::invalid(format!("n_components {n_components} must be between 1 and {limit}")));
    }
    let mut means = Vec::with_capacity(f);
    let mut sds = Vec::with_capacity(f);
    for j in 0..f {
        let s = m.sum[(j, j)];
        let var = (m.sum_sq[(j, j)] - s * s / n) / (n - 1.0);
        if !(var > 0.0) {
            return Err(Error::ZeroVariance(names[j].clone()));
        }
        means.push(shift[j] + s / n);
        sds.push(var.sqrt());
    }
    let cov = DMatrix::from_fn(f, f, |a, b| {
        let c = (m.cross[(a, b)] - m.sum[(a, a)] * m.sum[(b, b)] / n) / (n - 1.0);
        c / (sds[a] * sds[b])
    });
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut loadings = DMatrix::zeros(n_components, f);
    let mut eigenvalues = Vec::with_capacity(n_components);
    let mut ratios = Vec::with_capacity(n_components);
    for (row, &k) in order.iter().take(n_components).enumerate() {
        let v = eig.eigenvectors.column(k);
        let lead = (0..f).fold(0, |best, j| if v[j].abs() > v[best].abs() { j } else { best });
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..f {
            loadings[(row, j)] = sign * v[j];
        }
        let lambda = eig.eigenvalues[k].max(0.0);
        eigenvalues.push(lambda);
        ratios.push(lambda / total);
    }
    Ok(PcaResult {
        feature_names: names.to_vec(),
        loadings,
        eigenvalues,
        explained_variance_ratio: ratios,
        n_components,
        standardizer: Standardizer { means, sds },
        n_rows: n as usize,
    })
}

/// PCA of the z-scored features over the complete (county, hour) rows of the
/// panel. Components are sorted by decreasing eigenvalue and each one's
/// largest-magnitude loading is positive.
pub fn pca_fit(panel: &PanelDataset, features: &[String], n_components: usize) -> Result<PcaResult> {
    fit_blocks(features, &panel_blocks(panel, features)?, n_components)
}

/// [`pca_fit`] on the columns of an in-memory matrix.
pub fn pca_fit_matrix(names: &[String], data: &DMatrix<f64>, n_components: usize) -> Result<PcaResult> {
    if names.len() != data.ncols() {
        return Err(Error::invalid("column names do not match the data"));
    }
    fit_blocks(names, &matrix_blocks(data), n_components)
}

/// For each of the first `n_pcs` components, the `per_pc` features with the
/// largest absolute loading. Duplicates are dropped, keeping first occurrence.
pub fn pca_top_features(pca: &PcaResult, n_pcs: usize, per_pc: usize) -> Result<Vec<String>> {
    if n_pcs > pca.n_components {
        return Err(Error::invalid(format!(
            "asked for {n_pcs} components, PCA retained {}",
            pca.n_components
        )));
    }
    let mut out: Vec<String> = Vec::new();
    for c in 0..n_pcs {
        let mut idx: Vec<usize> = (0..pca.feature_names.len()).collect();
        idx.sort_by(|&a, &b| {
            pca.loadings[(c, b)]
                .abs()
                .total_cmp(&pca.loadings[(c, a)].abs())
                .then(a.cmp(&b))
        });
        for &j in idx.iter().take(per_pc) {
            let name = &pca.feature_names[j];
            if !out.contains(name) {
                out.push(name.clone());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn rank_one_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.7 - 1.0).collect();
        let data = DMatrix::from_fn(10, 2, |i, _| x[i]);
        let pca = pca_fit_matrix(&names(2), &data, 1).unwrap();
        assert!((pca.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        let full = pca_fit_matrix(&names(2), &data, 2).unwrap();
        assert!(full.explained_variance_ratio[1].abs() < 1e-12);
    }

    #[test]
    fn isotropic_sample_splits_evenly() {
        let pca = pca_fit_matrix(&names(2), &gaussian(20_000, 2, 4), 2).unwrap();
        for r in &pca.explained_variance_ratio {
            assert!((r - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn ratios_and_orthonormality() {
        let mut data = gaussian(200, 5, 8);
        for i in 0..200 {
            data[(i, 1)] += 2.0 * data[(i, 0)];
            data[(i, 4)] -= data[(i, 2)];
        }
        let pca = pca_fit_matrix(&names(5), &data, 5).unwrap();
        let r = &pca.explained_variance_ratio;
        assert!(r.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.iter().all(|v| *v >= 0.0));
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let gram = &pca.loadings * pca.loadings.transpose();
        assert!((gram - DMatrix::<f64>::identity(5, 5)).amax() < 1e-8);
        for c in 0..5 {
            let row = pca.loadings.row(c);
            let lead = row.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn full_rank_reconstruction() {
        let data = gaussian(50, 4, 2);
        let pca = pca_fit_matrix(&names(4), &data, 4).unwrap();
        let z = pca.standardizer.apply(&data);
        let back = pca.reconstruct(&pca.transform(&data));
        assert!((back - z).amax() < 1e-8);
    }

    #[test]
    fn top_features() {
        let pca = PcaResult {
            feature_names: names(2),
            loadings: DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]),
            eigenvalues: vec![1.0, 1.0],
            explained_variance_ratio: vec![0.5, 0.5],
            n_components: 2,
            standardizer: Standardizer {
                means: vec![0.0; 2],
                sds: vec![1.0; 2],
            },
            n_rows: 2,
        };
        assert_eq!(pca_top_features(&pca, 2, 1).unwrap(), vec!["f0", "f1"]);
        let mut same = pca.clone();
        same.loadings = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.8, -0.2]);
        assert_eq!(pca_top_features(&same, 2, 1).unwrap(), vec!["f0"]);
        assert!(pca_top_features(&pca, 3, 1).is_err());
    }

    #[test]
    fn errors() {
        let mut data = gaussian(10, 2, 1);
        assert!(pca_fit_matrix(&names(2), &data, 3).is_err());
        assert!(pca_fit_matrix(&names(2), &data, 0).is_err());
        data.column_mut(1).fill(3.0);
        assert!(matches!(pca_fit_matrix(&names(2), &data, 1), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn sign_flip_of_non_dominant_feature() {
        let mut data = gaussian(300, 4, 6);
        for i in 0..300 {
            data[(i, 1)] += 0.5 * data[(i, 0)];
            data[(i, 3)] += 0.3 * data[(i, 2)];
        }
        let base = pca_fit_matrix(&names(4), &data, 4).unwrap();
        for f in 0..4 {
            let mut flipped = data.clone();
            flipped.column_mut(f).neg_mut();
            let other = pca_fit_matrix(&names(4), &flipped, 4).unwrap();
            for (a, b) in base.explained_variance_ratio.iter().zip(&other.explained_variance_ratio) {
                assert!((a - b).abs() < 1e-12);
            }
            for c in 0..4 {
                let row = base.loadings.row(c);
                let lead = (0..4).fold(0, |b, j| if row[j].abs() > row[b].abs() { j } else { b });
                if lead == f {
                    continue;
                }
                for j in 0..4 {
                    let expect = if j == f { -row[j] } else { row[j] };
                    assert!((other.loadings[(c, j)] - expect).abs() < 1e-8);
                }
            }
        }
    }
}
