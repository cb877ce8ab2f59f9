use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMoments {
    pub name: String,
    pub survived_mean: f64,
    pub survived_sd: f64,
    pub failed_mean: f64,
    pub failed_sd: f64,
}

/// Class-conditional means and standard deviations plus the default rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMoments {
    pub features: Vec<FeatureMoments>,
    pub default_rate: f64,
}

fn fm(name: &str, sm: f64, ss: f64, fm: f64, fs: f64) -> FeatureMoments {
    FeatureMoments {
        name: name.to_string(),
        survived_mean: sm,
        survived_sd: ss,
        failed_mean: fm,
        failed_sd: fs,
    }
}

impl ClassMoments {
    /// Italian manufacturing SMEs, 2016 accounts (105,058 firms, 1.72% defaults).
    /// Ratios in %, Sales and Total assets in thousands of euros.
    pub fn italian_smes() -> Self {
        Self {
            features: vec![
                fm("cash_flow", 236.802, 934.877, -278.521, 1636.028),
                fm("gearing_ratio", 24.807, 23.093, 22.166, 26.01),
                fm("employees", 16.506, 24.385, 11.08, 19.531),
                fm("profit_margin", -2.736, 610.488, -106.845, 2190.012),
                fm("roce", 12.335, 516.765, 66.367, 2284.001),
                fm("roe", 23.02, 314.135, 7.146, 971.112),
                fm("sales", 3427.163, 6301.229, 1259.695, 2940.01),
                fm("solvency_ratio", 27.101, 24.315, -1.044, 37.342),
                fm("total_assets", 3904.129, 12098.09, 1921.689, 5149.559),
            ],
            default_rate: 0.0172,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(DatasetError::InvalidMoments("no features".into()));
        }
        if !(self.default_rate > 0.0 && self.default_rate < 1.0) {
            return Err(DatasetError::InvalidMoments(format!(
                "default rate {} outside (0, 1)",
                self.default_rate
            )));
        }
        for f in &self.features {
            let vals = [f.survived_mean, f.survived_sd, f.failed_mean, f.failed_sd];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::InvalidMoments(format!(
                    "non-finite moment for {}",
                    f.name
                )));
            }
            if f.survived_sd < 0.0 || f.failed_sd < 0.0 {
                return Err(DatasetError::InvalidMoments(format!("negative sd for {}", f.name)));
            }
        }
        let mut names: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(DatasetError::InvalidMoments("duplicate feature name".into()));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&s)
    }

    /// Empirical class moments (population sd) of a dataset.
    pub fn of_dataset(d: &Dataset) -> Self {
        let stats = |j: usize, class: u8| {
            let vals: Vec<f64> = d
                .column(j)
                .iter()
                .zip(d.labels())
                .filter(|(_, &y)| y == class)
                .map(|(&v, _)| v)
                .collect();
            mean_sd(&vals)
        };
        let features = d
            .feature_names()
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let (sm, ss) = stats(j, 0);
                let (fmean, fs) = stats(j, 1);
                fm(name, sm, ss, fmean, fs)
            })
            .collect();
        Self {
            features,
            default_rate: d.positives() as f64 / d.n() as f64,
        }
    }
}

pub(crate) fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
