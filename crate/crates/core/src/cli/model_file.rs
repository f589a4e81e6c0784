//! Versioned JSON persistence for fitted models.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::data::MinMax;
use crate::boosting::{BoostConfig, FittedModel};
use crate::distributions::{self, ThetaVector};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
    pub timestamp: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    /// `mvn-<p>` for a joint model, `univariate-set` for independent ones.
    pub family: String,
    pub p: usize,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub config: BoostConfig,
    pub x_scaling: Option<MinMax>,
    pub y_scaling: Option<MinMax>,
    pub metadata: TrainingMetadata,
    pub model: FittedModel,
}

impl ModelFile {
    pub fn new(
        model: FittedModel,
        feature_names: Vec<String>,
        target_names: Vec<String>,
        config: BoostConfig,
        x_scaling: Option<MinMax>,
        y_scaling: Option<MinMax>,
        metadata: TrainingMetadata,
    ) -> Self {
        let p = model.target_dim();
        let family = match &model {
            FittedModel::Joint(_) => format!("mvn-{p}"),
            FittedModel::Independent(_) => "univariate-set".to_string(),
        };
        Self {
            format_version: FORMAT_VERSION,
            family,
            p,
            feature_names,
            target_names,
            config,
            x_scaling,
            y_scaling,
            metadata,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(s)?;
        let version = raw
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::ModelFile("missing format_version".into()))?;
        if version > u64::from(FORMAT_VERSION) {
            return Err(Error::ModelFile(format!(
                "format_version {version} is newer than the supported version {FORMAT_VERSION}"
            )));
        }
        let file: ModelFile = serde_json::from_value(raw)?;
        file.check()?;
        Ok(file)
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ModelFile(msg));
        if self.p != self.model.target_dim() || self.target_names.len() != self.p {
            return bad(format!("p = {} disagrees with the stored model", self.p));
        }
        if self.feature_names.len() != self.model.n_features() {
            return bad("feature_names disagree with the stored model".into());
        }
        if self.x_scaling.as_ref().is_some_and(|s| s.min.len() != self.feature_names.len())
            || self.y_scaling.as_ref().is_some_and(|s| s.min.len() != self.p)
        {
            return bad("scaling vectors have the wrong length".into());
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json(&s)
    }

    /// θ per row in the original target units, from raw (unscaled) features.
    pub fn predict_theta(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let theta = match &self.x_scaling {
            Some(s) => self.model.predict_theta(s.apply(x).view())?,
            None => self.model.predict_theta(x)?,
        };
        match &self.y_scaling {
            Some(s) => unscale_theta(theta.view(), s, self.p),
            None => Ok(theta),
        }
    }
}

/// Maps θ fitted on min-max scaled targets back to original units.
fn unscale_theta(theta: ArrayView2<f64>, s: &MinMax, p: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(theta.dim());
    for (i, row) in theta.outer_iter().enumerate() {
        let moments = distributions::to_moment_form(&ThetaVector::new(p, row.to_vec())?);
        let mean: Vec<f64> = (0..p).map(|j| moments.mean[j] * s.range(j) + s.min[j]).collect();
        let cov = Array2::from_shape_fn((p, p), |(a, b)| moments.covariance[[a, b]] * s.range(a) * s.range(b));
        let t = distributions::fit_theta_from_moments(&mean, cov.view())?;
        out.row_mut(i).assign(&ndarray::ArrayView1::from(t.values()));
    }
    Ok(out)
}
