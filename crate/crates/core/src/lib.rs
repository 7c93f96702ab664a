//! Deterministic model of a confidential-computing stack: simulated TEEs,
//! on-chain governance, a decentralized KMS, sealed storage and a
//! certificate-issuing gateway. See the `book/` directory for a guide.

pub mod cert;
pub mod crypto;
pub mod gateway;
pub mod governance;
pub mod harness;
pub mod kms;
pub mod sim;
pub mod storage;
pub mod tee;
pub mod wire;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/getting-started.md")]
    mod getting_started {}
    #[doc = include_str!("../../../book/src/governance.md")]
    mod governance {}
    #[doc = include_str!("../../../book/src/attestation.md")]
    mod attestation {}
    #[doc = include_str!("../../../book/src/kms.md")]
    mod kms {}
    #[doc = include_str!("../../../book/src/storage.md")]
    mod storage {}
    #[doc = include_str!("../../../book/src/gateway.md")]
    mod gateway {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
