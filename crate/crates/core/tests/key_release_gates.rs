mod common;

use common::{gate_case, GATE_ORDER};
use teestack::kms::{DenyReason, Gate, KmsError};
use teestack::tee::TeeError;

#[test]
fn honest_request_passes_every_gate() {
    assert!(gate_case(0, 1).is_ok());
}

#[test]
fn first_failing_gate_wins_in_all_fifteen_combinations() {
    for mask in 1u8..16 {
        let first = GATE_ORDER[mask.trailing_zeros() as usize];
        let err = gate_case(mask, u64::from(mask)).unwrap_err();
        assert_eq!(err.gate(), Some(first), "mask {mask:04b}: {err}");
        match first {
            Gate::Quote => assert!(matches!(err, KmsError::Attestation(TeeError::SpoofedQuote(_))), "{err}"),
            Gate::Os => assert!(matches!(err, KmsError::UntrustedOs(_)), "{err}"),
            Gate::Code => assert_eq!(err, KmsError::KeyReleaseDenied(DenyReason::CodeNotAuthorized)),
            Gate::Instance => assert_eq!(err, KmsError::InstanceNotAuthorized),
        }
    }
}
