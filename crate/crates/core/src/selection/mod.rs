//! Weather feature selection: correlation-distance clustering (hierarchical
//! and k-means), PCA loading picks, and greedy correlation pruning.
//!
//! Representatives found by both clustering methods form the consensus set.
//! PCA picks are added on top, and pruning then removes features that are
//! too strongly correlated with a feature kept earlier. PCA picks are
//! scanned first, consensus features follow in cluster order.

mod cluster;
mod correlation;
mod pca;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{PanelDataset, WeatherCategory};

pub use cluster::{
    cluster_representatives, hierarchical_clusters, kmeans_clusters, ClusterMethod, ClusterModel, LLOYD_MAX_ITER,
};
pub use correlation::{correlation_distance, correlation_matrix, correlation_of_columns, CorrelationMatrix, DistanceMatrix};
pub use pca::{pca_fit, pca_fit_matrix, pca_top_features, PcaResult, Standardizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Clusters per method.
    pub k: usize,
    pub pca_components: usize,
    /// Components scanned for picks, one feature each. 0 disables PCA picks.
    pub pca_picks: usize,
    pub prune_threshold: f64,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            k: 40,
            pca_components: 20,
            pca_picks: 3,
            prune_threshold: 0.95,
            kmeans_restarts: 10,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be positive"));
        }
        if !(self.prune_threshold > 0.0 && self.prune_threshold <= 1.0) {
            return Err(Error::invalid("prune threshold must be in (0, 1]"));
        }
        if self.pca_picks > self.pca_components {
            return Err(Error::invalid("pca_picks cannot exceed pca_components"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    ClusterRedundant,
    CorrelationPruned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ClusteringConsensus,
    PcaPick,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeptFeature {
    pub feature: String,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub feature: String,
    pub reason: DropReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub kept: Vec<KeptFeature>,
    pub dropped: Vec<DroppedFeature>,
    pub hierarchical_representatives: Vec<String>,
    pub kmeans_representatives: Vec<String>,
    pub pca_picks: Vec<String>,
}

impl SelectionReport {
    pub fn kept_names(&self) -> Vec<String> {
        self.kept.iter().map(|k| k.feature.clone()).collect()
    }

    /// Kept features grouped by weather category, unknown names last.
    pub fn by_category(&self) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for k in &self.kept {
            let label = WeatherCategory::classify(&k.feature).map_or("Other", |c| c.label());
            out.entry(label.to_string()).or_default().push(k.feature.clone());
        }
        out
    }

    /// Plain-text table of the kept features grouped by category.
    pub fn category_table(&self) -> String {
        let groups = self.by_category();
        let width = groups.keys().map(String::len).max().unwrap_or(8).max(8);
        let mut s = format!("{:<width$}  {:>5}  Features\n", "Category", "Count");
        for (cat, feats) in &groups {
            s.push_str(&format!("{cat:<width$}  {:>5}  {}\n", feats.len(), feats.join(", ")));
        }
        s.push_str(&format!("{:<width$}  {:>5}\n", "Total", self.kept.len()));
        s
    }
}

/// Greedy scan of `priority`: a feature is dropped when its absolute
/// correlation with an already kept feature exceeds `threshold`. Returns
/// `(kept, dropped)`.
pub fn correlation_prune(
    r: &CorrelationMatrix,
    priority: &[String],
    threshold: f64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid("threshold must be in (0, 1]"));
    }
    let idx: Vec<usize> = priority
        .iter()
        .map(|f| r.index_of(f).ok_or_else(|| Error::UnknownFeature(f.clone())))
        .collect::<Result<_>>()?;
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for (name, &i) in priority.iter().zip(&idx) {
        if kept.iter().any(|&k| r.get(i, k).abs() > threshold) {
            dropped.push(name.clone());
        } else {
            kept.push(i);
        }
    }
    Ok((kept.iter().map(|&i| r.names()[i].clone()).collect(), dropped))
}

/// Assembles a report from the two representative sets and the PCA picks.
/// `hierarchical` gives the cluster order used for consensus priority.
pub fn assemble_selection(
    r: &CorrelationMatrix,
    hierarchical: &[String],
    kmeans: &[String],
    pca_picks: &[String],
    threshold: f64,
) -> Result<SelectionReport> {
    let consensus: Vec<String> = hierarchical.iter().filter(|f| kmeans.contains(f)).cloned().collect();
    let mut priority: Vec<String> = Vec::new();
    for f in pca_picks.iter().chain(&consensus) {
        if !priority.contains(f) {
            priority.push(f.clone());
        }
    }
    if priority.is_empty() {
        return Err(Error::Empty("no consensus features and no PCA picks".into()));
    }
    let (kept, pruned) = correlation_prune(r, &priority, threshold)?;
    let kept = kept
        .into_iter()
        .map(|feature| {
            let provenance = match (consensus.contains(&feature), pca_picks.contains(&feature)) {
                (true, true) => Provenance::Both,
                (false, true) => Provenance::PcaPick,
                _ => Provenance::ClusteringConsensus,
            };
            KeptFeature { feature, provenance }
        })
        .collect();
    let dropped = r
        .names()
        .iter()
        .filter_map(|f| {
            if pruned.contains(f) {
                Some(DroppedFeature {
                    feature: f.clone(),
                    reason: DropReason::CorrelationPruned,
                })
            } else if !priority.contains(f) {
                Some(DroppedFeature {
                    feature: f.clone(),
                    reason: DropReason::ClusterRedundant,
                })
            } else {
                None
            }
        })
        .collect();
    Ok(SelectionReport {
        kept,
        dropped,
        hierarchical_representatives: hierarchical.to_vec(),
        kmeans_representatives: kmeans.to_vec(),
        pca_picks: pca_picks.to_vec(),
    })
}

/// Everything computed during selection, for reporting.
#[derive(Clone, Debug)]
pub struct Selection {
    pub report: SelectionReport,
    pub correlation: CorrelationMatrix,
    pub hierarchical: ClusterModel,
    pub kmeans: ClusterModel,
    pub pca: Option<PcaResult>,
}

/// Runs the full selection over every weather feature of the panel.
pub fn select_features(panel: &PanelDataset, config: &SelectionConfig) -> Result<Selection> {
    config.validate()?;
    let features = panel.feature_names();
    if features.is_empty() {
        return Err(Error::Empty("panel has no weather features".into()));
    }
    let r = correlation_matrix(panel, &features)?;
    let d = correlation_distance(&r);
    let hierarchical = hierarchical_clusters(&d, config.k)?;
    let kmeans = kmeans_clusters(&d, config.k, config.seed, config.kmeans_restarts)?;
    let names = |idx: Vec<usize>| -> Vec<String> { idx.into_iter().map(|i| features[i].clone()).collect() };
    let h_reps = names(cluster_representatives(&hierarchical, &d)?);
    let k_reps = names(cluster_representatives(&kmeans, &d)?);
    let (pca, picks) = if config.pca_picks > 0 {
        let n_comp = config.pca_components.min(features.len());
        let pca = pca_fit(panel, &features, n_comp)?;
        let picks = pca_top_features(&pca, config.pca_picks.min(n_comp), 1)?;
        (Some(pca), picks)
    } else {
        (None, Vec::new())
    };
    let report = assemble_selection(&r, &h_reps, &k_reps, &picks, config.prune_threshold)?;
    Ok(Selection {
        report,
        correlation: r,
        hierarchical,
        kmeans,
        pca,
    })
}
