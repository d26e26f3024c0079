//! Promptable segmenter backends.
//!
//! A backend embeds an image once and then answers any number of prompted
//! decode requests against that embedding.

pub mod bridge;
pub mod framing;
pub mod mock;
pub mod protocol;
pub mod tensor_file;

use crate::error::{Error, Result};
use crate::types::{FeatureMap, Image, MaskProposal, PromptSet};

pub use bridge::{BridgeAddress, BridgeClient};
pub use mock::{MockOracle, OracleScene};

/// Number of proposals a decode returns unless asked otherwise.
pub const DEFAULT_PROPOSALS: usize = 3;

pub trait SegmenterBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Upper bound on in-flight requests callers may issue.
    fn max_concurrent_requests(&self) -> usize {
        1
    }

    fn embed(&self, image: &Image) -> Result<FeatureMap>;

    /// Returns exactly `req.proposals_requested` proposals.
    fn decode(&self, req: &DecodeRequest<'_>) -> Result<Vec<MaskProposal>>;
}

impl<B: SegmenterBackend + ?Sized> SegmenterBackend for &B {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn max_concurrent_requests(&self) -> usize {
        (**self).max_concurrent_requests()
    }
    fn embed(&self, image: &Image) -> Result<FeatureMap> {
        (**self).embed(image)
    }
    fn decode(&self, req: &DecodeRequest<'_>) -> Result<Vec<MaskProposal>> {
        (**self).decode(req)
    }
}

#[derive(Clone, Debug)]
pub struct DecodeRequest<'a> {
    pub features: &'a FeatureMap,
    pub prompts: PromptSet,
    pub proposals_requested: usize,
}

impl<'a> DecodeRequest<'a> {
    pub fn new(features: &'a FeatureMap, prompts: PromptSet) -> Self {
        Self {
            features,
            prompts,
            proposals_requested: DEFAULT_PROPOSALS,
        }
    }

    pub fn with_proposals(mut self, k: usize) -> Self {
        self.proposals_requested = k;
        self
    }

    /// Checks `K >= 1` and that every prompt lies inside the embedded image.
    pub fn validate(&self) -> Result<()> {
        if self.proposals_requested == 0 {
            return Err(Error::InvalidArgument("at least one proposal must be requested".into()));
        }
        let (w, h) = self.features.image_dims();
        for p in &self.prompts.points {
            p.check_within(w, h)?;
        }
        if let Some(b) = &self.prompts.box_prompt {
            b.check_within(w, h)?;
        }
        if let Some(m) = &self.prompts.mask_prompt {
            if m.dims() != (w, h) {
                return Err(Error::DimensionMismatch {
                    expected: (w, h),
                    found: m.dims(),
                });
            }
        }
        Ok(())
    }
}
