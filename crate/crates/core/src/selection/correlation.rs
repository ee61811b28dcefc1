use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::{is_missing, PanelDataset};

/// Symmetric matrix of pooled Pearson correlations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    names: Vec<String>,
    #[serde(serialize_with = "serialize_rows")]
    values: DMatrix<f64>,
}

/// Entrywise `1 - |R|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceMatrix {
    names: Vec<String>,
    #[serde(serialize_with = "serialize_rows")]
    values: DMatrix<f64>,
}

fn serialize_rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    rows.serialize(s)
}

macro_rules! square_accessors {
    ($t:ty) => {
        impl $t {
            pub fn names(&self) -> &[String] {
                &self.names
            }

            pub fn len(&self) -> usize {
                self.names.len()
            }

            pub fn is_empty(&self) -> bool {
                self.names.is_empty()
            }

            pub fn get(&self, i: usize, j: usize) -> f64 {
                self.values[(i, j)]
            }

            pub fn matrix(&self) -> &DMatrix<f64> {
                &self.values
            }

            pub fn index_of(&self, name: &str) -> Option<usize> {
                self.names.iter().position(|n| n == name)
            }
        }
    };
}

square_accessors!(CorrelationMatrix);
square_accessors!(DistanceMatrix);

impl CorrelationMatrix {
    /// Wraps a precomputed matrix. It must be square, symmetric, with unit
    /// diagonal and entries in [-1, 1].
    pub fn new(names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        let n = names.len();
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::invalid("correlation matrix shape does not match names"));
        }
        for i in 0..n {
            if values[(i, i)] != 1.0 {
                return Err(Error::invalid("correlation diagonal must be 1"));
            }
            for j in 0..n {
                let v = values[(i, j)];
                if !(-1.0..=1.0).contains(&v) || v != values[(j, i)] {
                    return Err(Error::invalid("correlation entries must be symmetric and in [-1, 1]"));
                }
            }
        }
        Ok(Self { names, values })
    }
}

impl DistanceMatrix {
    /// Wraps a precomputed matrix: square, symmetric, zero diagonal, entries
    /// in [0, 1].
    pub fn new(names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        let n = names.len();
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::invalid("distance matrix shape does not match names"));
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[(i, j)];
                if !(0.0..=1.0).contains(&v) || v != values[(j, i)] || (i == j && v != 0.0) {
                    return Err(Error::invalid("distances must be symmetric, in [0, 1], zero on the diagonal"));
                }
            }
        }
        Ok(Self { names, values })
    }
}

/// Sums over rows where both features of a pair are present, with every
/// feature shifted by a fixed centre for numerical stability.
#[derive(Clone, Debug)]
pub(crate) struct PairMoments {
    pub count: DMatrix<f64>,
    /// `sum_i[(a, b)]`: sum of feature `a` over rows where `b` is present.
    pub sum: DMatrix<f64>,
    pub sum_sq: DMatrix<f64>,
    pub cross: DMatrix<f64>,
}

impl PairMoments {
    fn zeros(f: usize) -> Self {
        Self {
            count: DMatrix::zeros(f, f),
            sum: DMatrix::zeros(f, f),
            sum_sq: DMatrix::zeros(f, f),
            cross: DMatrix::zeros(f, f),
        }
    }

    fn add(mut self, other: Self) -> Self {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.cross += other.cross;
        self
    }
}

/// Column-oriented data in blocks (one block per county). Each block holds
/// one equally long slice per feature.
pub(crate) type Blocks<'a> = Vec<Vec<&'a [f64]>>;

pub(crate) fn panel_blocks<'a>(panel: &'a PanelDataset, features: &[String]) -> Result<Blocks<'a>> {
    let idx: Vec<usize> = features
        .iter()
        .map(|f| panel.feature_index(f).ok_or_else(|| Error::UnknownFeature(f.clone())))
        .collect::<Result<_>>()?;
    Ok((0..panel.n_counties())
        .map(|c| idx.iter().map(|&f| panel.weather(f, c)).collect())
        .collect())
}

pub(crate) fn matrix_blocks(m: &DMatrix<f64>) -> Blocks<'_> {
    let n = m.nrows();
    vec![(0..m.ncols()).map(|j| &m.as_slice()[j * n..(j + 1) * n]).collect()]
}

/// Mean of each feature over its present values.
pub(crate) fn centres(blocks: &Blocks<'_>, f: usize) -> Vec<f64> {
    (0..f)
        .map(|j| {
            let (s, n) = blocks
                .iter()
                .flat_map(|b| b[j].iter())
                .filter(|v| !is_missing(**v))
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 {
                0.0
            } else {
                s / n as f64
            }
        })
        .collect()
}

/// Pairwise-complete moments. With `complete_rows`, only rows where every
/// feature is present contribute.
pub(crate) fn pair_moments(blocks: &Blocks<'_>, shift: &[f64], complete_rows: bool) -> PairMoments {
    let f = shift.len();
    blocks
        .par_iter()
        .map(|block| {
            let len = block.first().map_or(0, |c| c.len());
            if block.iter().all(|col| col.iter().all(|v| !is_missing(*v))) {
                return dense_moments(block, shift, len);
            }
            let mut m = PairMoments::zeros(f);
            let mut row = vec![0.0; f];
            let mut present = Vec::with_capacity(f);
            for t in 0..len {
                present.clear();
                for j in 0..f {
                    let v = block[j][t];
                    if !is_missing(v) {
                        row[j] = v - shift[j];
                        present.push(j);
                    }
                }
                if complete_rows && present.len() < f {
                    continue;
                }
                for &a in &present {
                    let x = row[a];
                    for &b in &present {
                        m.count[(a, b)] += 1.0;
                        m.sum[(a, b)] += x;
                        m.sum_sq[(a, b)] += x * x;
                        m.cross[(a, b)] += x * row[b];
                    }
                }
            }
            m
        })
        .reduce(|| PairMoments::zeros(f), PairMoments::add)
}

/// Moments of a block without missing cells, via one matrix product.
fn dense_moments(block: &[&[f64]], shift: &[f64], len: usize) -> PairMoments {
    let f = shift.len();
    let x = DMatrix::from_fn(len, f, |t, j| block[j][t] - shift[j]);
    let cross = x.tr_mul(&x);
    let sums: Vec<f64> = (0..f).map(|j| x.column(j).sum()).collect();
    PairMoments {
        count: DMatrix::from_element(f, f, len as f64),
        sum: DMatrix::from_fn(f, f, |a, _| sums[a]),
        sum_sq: DMatrix::from_fn(f, f, |a, _| cross[(a, a)]),
        cross,
    }
}

fn correlation_from_blocks(names: &[String], blocks: &Blocks<'_>) -> Result<CorrelationMatrix> {
    let f = names.len();
    let shift = centres(blocks, f);
    let m = pair_moments(blocks, &shift, false);
    for j in 0..f {
        let n = m.count[(j, j)];
        let var = m.sum_sq[(j, j)] - m.sum[(j, j)].powi(2) / n.max(1.0);
        if n < 1.0 || !(var > 0.0) {
            return Err(Error::ZeroVariance(names[j].clone()));
        }
    }
    let mut values = DMatrix::identity(f, f);
    for a in 0..f {
        for b in a + 1..f {
            let n = m.count[(a, b)];
            if n < 3.0 {
                return Err(Error::InsufficientData(format!(
                    "features {} and {} share {} complete observations (need 3)",
                    names[a], names[b], n
                )));
            }
            let sxx = m.sum_sq[(a, b)] - m.sum[(a, b)].powi(2) / n;
            let syy = m.sum_sq[(b, a)] - m.sum[(b, a)].powi(2) / n;
            let sxy = m.cross[(a, b)] - m.sum[(a, b)] * m.sum[(b, a)] / n;
            if !(sxx > 0.0 && syy > 0.0) {
                return Err(Error::invalid(format!(
                    "features {} and {} have no variation over their shared observations",
                    names[a], names[b]
                )));
            }
            let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
            values[(a, b)] = r;
            values[(b, a)] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: names.to_vec(),
        values,
    })
}

/// Pearson correlations pooled over every (county, hour) cell, each pair
/// using the cells where both features are present.
pub fn correlation_matrix(panel: &PanelDataset, features: &[String]) -> Result<CorrelationMatrix> {
    let blocks = panel_blocks(panel, features)?;
    correlation_from_blocks(features, &blocks)
}

/// Correlations between the columns of `data` (NaN marks missing cells).
pub fn correlation_of_columns(names: &[String], data: &DMatrix<f64>) -> Result<CorrelationMatrix> {
    if names.len() != data.ncols() {
        return Err(Error::invalid("column names do not match the data"));
    }
    correlation_from_blocks(names, &matrix_blocks(data))
}

pub fn correlation_distance(r: &CorrelationMatrix) -> DistanceMatrix {
    let mut values = r.values.map(|v| 1.0 - v.abs());
    values.fill_diagonal(0.0);
    DistanceMatrix {
        names: r.names.clone(),
        values,
    }
}
