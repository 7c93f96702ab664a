// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::crypto::{hash, Digest};
use crate::wire::Writer;

use super::GovernanceError;

const MANIFEST_CONTEXT: &[u8] = b"teestack/app-manifest/v1";
const BUILD_CONTEXT: &[u8] = b"teestack/in-cc-build/v1";

/// A deployment descriptor: compose file, image digests and configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppManifest {
    pub compose_text: String,
    pub image_digests: Vec<Digest>,
    pub config: String,
}

impl AppManifest {
    pub fn new(
        compose_text: impl Into<String>,
        image_digests: Vec<Digest>,
        config: impl Into<String>,
    ) -> Result<Self, GovernanceError> {
        let m = Self { compose_text: compose_text.into(), image_digests, config: config.into() };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), GovernanceError> {
        if self.image_digests.is_empty() {
            return Err(GovernanceError::InvalidManifest("image list is empty"));
        }
        Ok(())
    }

    /// The unit of code authorization.
    ///
    /// Each variable-length field is length-prefixed so that bytes cannot
    /// migrate between the compose text and the configuration.
    pub fn app_digest(&self) -> Digest {
        let mut w = Writer::new();
        w.raw(MANIFEST_CONTEXT).str(&self.compose_text).u32(self.image_digests.len() as u32);
        for d in &self.image_digests {
            w.digest(d);
        }
        w.str(&self.config);
        hash(&w.finish())
    }
}

/// Image digest produced by building `source_snapshot` inside the verified OS.
///
/// Any change to the source tree (a patched dependency, say) yields a
/// different image digest, and with it a different app digest.
pub fn in_cc_build(source_snapshot: &[u8]) -> Digest {
    let mut w = Writer::new();
    w.raw(BUILD_CONTEXT).bytes(source_snapshot);
    hash(&w.finish())
}
