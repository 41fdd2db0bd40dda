//! Scores where higher means more likely adversarial.

mod iforest;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Ensemble;
use crate::ocspace::{oc_score_with, Kernel, ReferenceSet};

pub use iforest::{average_path_length, fit_iforest, score_iforest, IsolationForest, DEFAULT_SUBSAMPLE, DEFAULT_TREES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorId {
    #[serde(rename = "ocscore")]
    OcScore,
    #[serde(rename = "ambig")]
    Ambiguity,
    #[serde(rename = "mlloo")]
    MlLoo,
    #[serde(rename = "iforest")]
    IForest,
}

impl DetectorId {
    pub const ALL: [DetectorId; 4] = [
        DetectorId::OcScore,
        DetectorId::Ambiguity,
        DetectorId::MlLoo,
        DetectorId::IForest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorId::OcScore => "ocscore",
            DetectorId::Ambiguity => "ambig",
            DetectorId::MlLoo => "mlloo",
            DetectorId::IForest => "iforest",
        }
    }

    /// Parses a comma separated list such as `ocscore,ambig`.
    pub fn parse_list(s: &str) -> Result<Vec<DetectorId>> {
        let ids = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(DetectorId::from_str)
            .collect::<Result<Vec<_>>>()?;
        if ids.is_empty() {
            return Err(Error::EmptyList);
        }
        Ok(ids)
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorId::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown detector '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorScore {
    pub name: DetectorId,
    pub score: f64,
}

pub fn score_ocscore(e: &Ensemble, r: &ReferenceSet, x: &[f64]) -> Result<DetectorScore> {
    score_ocscore_with(e, r, x, Kernel::detect())
}

pub fn score_ocscore_with(e: &Ensemble, r: &ReferenceSet, x: &[f64], kernel: Kernel) -> Result<DetectorScore> {
    let oc = e.leaf_path(x)?;
    let label = e.predict_oc(&oc).label;
    let score = oc_score_with(r, &oc, label, kernel)?;
    Ok(DetectorScore {
        name: DetectorId::OcScore,
        score: score as f64,
    })
}

pub fn score_ambiguity(e: &Ensemble, x: &[f64]) -> Result<DetectorScore> {
    let p = e.evaluate(x)?.prob;
    Ok(DetectorScore {
        name: DetectorId::Ambiguity,
        score: 1.0 - (2.0 * p - 1.0).abs(),
    })
}

/// Population standard deviation of the probability change when each feature
/// in turn is set to 0.
pub fn score_mlloo(e: &Ensemble, x: &[f64]) -> Result<DetectorScore> {
    let p = e.evaluate(x)?.prob;
    let mut probe = x.to_vec();
    let mut deltas = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let saved = probe[k];
        probe[k] = 0.0;
        deltas.push(p - e.evaluate(&probe)?.prob);
        probe[k] = saved;
    }
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let var = deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    Ok(DetectorScore {
        name: DetectorId::MlLoo,
        score: var.sqrt(),
    })
}

/// Fitted state for every detector, shared by batch scoring.
#[derive(Debug, Clone)]
pub struct Detectors<'a> {
    pub ensemble: &'a Ensemble,
    pub reference: Option<&'a ReferenceSet>,
    pub iforest: Option<&'a IsolationForest>,
    pub kernel: Kernel,
}

impl<'a> Detectors<'a> {
    pub fn new(ensemble: &'a Ensemble) -> Self {
        Detectors {
            ensemble,
            reference: None,
            iforest: None,
            kernel: Kernel::detect(),
        }
    }

    pub fn score(&self, id: DetectorId, x: &[f64]) -> Result<DetectorScore> {
        match id {
            DetectorId::OcScore => {
                let r = self
                    .reference
                    .ok_or_else(|| Error::InvalidArgument("ocscore needs a reference set".into()))?;
                score_ocscore_with(self.ensemble, r, x, self.kernel)
            }
            DetectorId::Ambiguity => score_ambiguity(self.ensemble, x),
            DetectorId::MlLoo => score_mlloo(self.ensemble, x),
            DetectorId::IForest => {
                let f = self
                    .iforest
                    .ok_or_else(|| Error::InvalidArgument("iforest needs a fitted forest".into()))?;
                self.ensemble.check_input(x)?;
                Ok(score_iforest(f, x))
            }
        }
    }
}
