//! Numeric encoding of cases.
//!
//! Ordinal features map to one coordinate holding the level normalized to
//! `[0, 1]`. Categorical features map to a one-hot block scaled by `1/sqrt(2)`,
//! so any two distinct values sit at Euclidean distance exactly 1 within the
//! block.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::{Case, FeatureKind, FeatureSchema};

#[derive(Debug, Clone)]
enum BlockKind {
    Ordinal(Vec<f64>),
    Categorical(usize),
}

#[derive(Debug, Clone)]
struct Block {
    feature: usize,
    offset: usize,
    kind: BlockKind,
}

impl Block {
    fn width(&self) -> usize {
        match &self.kind {
            BlockKind::Ordinal(_) => 1,
            BlockKind::Categorical(k) => *k,
        }
    }
}

/// Name of one encoded coordinate: the feature, plus the value for one-hot
/// coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coordinate {
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    blocks: Vec<Block>,
    dim: usize,
    coordinate_feature: Vec<usize>,
    coordinates: Vec<Coordinate>,
}

impl Encoder {
    pub fn new(schema: &FeatureSchema) -> Self {
        Self::with_excluded(schema, &[])
    }

    /// Encoder over every feature except those at the `excluded` indices;
    /// excluded features contribute no coordinates at all.
    pub fn with_excluded(schema: &FeatureSchema, excluded: &[usize]) -> Self {
        let mut blocks = Vec::new();
        let mut coordinate_feature = Vec::new();
        let mut coordinates = Vec::new();
        let mut offset = 0;
        for (i, f) in schema.features().iter().enumerate() {
            if excluded.contains(&i) {
                continue;
            }
            let kind = match f.kind {
                FeatureKind::Ordinal => {
                    let levels = f.levels.as_ref().expect("validated ordinal levels");
                    let lo = levels[0];
                    let span = levels[levels.len() - 1] - lo;
                    coordinates.push(Coordinate {
                        feature: f.name.clone(),
                        value: None,
                    });
                    BlockKind::Ordinal(levels.iter().map(|l| (l - lo) / span).collect())
                }
                FeatureKind::Categorical => {
                    coordinates.extend(f.values.iter().map(|v| Coordinate {
                        feature: f.name.clone(),
                        value: Some(v.clone()),
                    }));
                    BlockKind::Categorical(f.values.len())
                }
            };
            let block = Block {
                feature: i,
                offset,
                kind,
            };
            offset += block.width();
            coordinate_feature.extend(std::iter::repeat_n(i, block.width()));
            blocks.push(block);
        }
        Encoder {
            blocks,
            dim: offset,
            coordinate_feature,
            coordinates,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Schema feature index owning each coordinate.
    pub fn coordinate_features(&self) -> &[usize] {
        &self.coordinate_feature
    }

    pub fn coordinates(&self) -> &[Coordinate] {
        &self.coordinates
    }

    /// Coordinate range of the block for schema feature `feature`, if encoded.
    pub fn block(&self, feature: usize) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .find(|b| b.feature == feature)
            .map(|b| b.offset..b.offset + b.width())
    }

    /// Encodes raw value indices (one per schema feature) into `out`.
    pub fn encode_into(&self, values: &[u32], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        for b in &self.blocks {
            let v = values[b.feature] as usize;
            match &b.kind {
                BlockKind::Ordinal(levels) => out[b.offset] = levels[v],
                BlockKind::Categorical(k) => {
                    out[b.offset..b.offset + k].fill(0.0);
                    out[b.offset + v] = FRAC_1_SQRT_2;
                }
            }
        }
    }

    pub fn encode(&self, case: &Case) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.encode_into(&case.values, &mut out);
        out
    }
}
