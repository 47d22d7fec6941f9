use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::composer::ArtistTagProfile;
use crate::corpus::ArtistId;
use crate::tagmatch::ReferenceIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonalityBin {
    pub commonality: usize,
    pub count: usize,
}

/// How many other reference artists share each signature of a subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonalityDistribution {
    /// One value per subject signature, in signature order.
    pub samples: Vec<usize>,
    pub histogram: Vec<CommonalityBin>,
}

impl CommonalityDistribution {
    pub fn from_samples(samples: Vec<usize>) -> Self {
        let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
        for &s in &samples {
            *bins.entry(s).or_default() += 1;
        }
        let histogram = bins
            .into_iter()
            .map(|(commonality, count)| CommonalityBin { commonality, count })
            .collect();
        CommonalityDistribution { samples, histogram }
    }

    /// Pools several distributions.
    pub fn merge(parts: impl IntoIterator<Item = CommonalityDistribution>) -> Self {
        Self::from_samples(parts.into_iter().flat_map(|p| p.samples).collect())
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.samples.is_empty())
            .then(|| self.samples.iter().sum::<usize>() as f64 / self.samples.len() as f64)
    }
}

/// Commonality of each signature in `subject`. For a real artist pass its
/// id as `own_artist` so that it is not counted among the sharers; a
/// generated set is not a reference artist and passes `None`.
pub fn tag_commonality_distribution(
    index: &ReferenceIndex,
    subject: &ArtistTagProfile,
    own_artist: Option<ArtistId>,
) -> CommonalityDistribution {
    let samples = subject
        .signatures()
        .keys()
        .map(|sig| index.holders(sig).filter(|&a| Some(a) != own_artist).count())
        .collect();
    CommonalityDistribution::from_samples(samples)
}
