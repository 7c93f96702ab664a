// SPDX-License-Identifier: Apache-2.0

//! Bytewise Shamir secret sharing over GF(2^8).
//!
//! Each of the 32 secret bytes is the constant term of its own random
//! polynomial of degree `threshold - 1`; a share holds the evaluations of all
//! 32 polynomials at the share's index.

use std::collections::BTreeSet;

use rand::{CryptoRng, RngCore};

use super::gf256;
use super::{CryptoError, KeyShare, SecretScalar};

pub const MAX_SHARES: usize = 255;

fn check_params(threshold: usize, count: usize) -> Result<(), CryptoError> {
    if threshold == 0 || threshold > count || count > MAX_SHARES {
        return Err(CryptoError::InvalidSharingParameters { threshold, count });
    }
    Ok(())
}

fn check_indices(shares: &[KeyShare]) -> Result<(), CryptoError> {
    let mut seen = BTreeSet::new();
    for s in shares {
        if s.index == 0 {
            return Err(CryptoError::ZeroIndex);
        }
        if !seen.insert(s.index) {
            return Err(CryptoError::DuplicateIndex(s.index));
        }
    }
    Ok(())
}

/// Random coefficients for degree `threshold - 1`, with `constant` as the
/// zero-degree term (one polynomial per byte, stored column-wise).
fn random_polynomial<R: RngCore + CryptoRng>(constant: [u8; 32], threshold: usize, rng: &mut R) -> Vec<[u8; 32]> {
    let mut coeffs = Vec::with_capacity(threshold);
    coeffs.push(constant);
    for _ in 1..threshold {
        let mut c = [0u8; 32];
        rng.fill_bytes(&mut c);
        coeffs.push(c);
    }
    coeffs
}

fn evaluate(coeffs: &[[u8; 32]], x: u8) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut column = Vec::with_capacity(coeffs.len());
    for (byte, slot) in out.iter_mut().enumerate() {
        column.clear();
        column.extend(coeffs.iter().map(|c| c[byte]));
        *slot = gf256::eval_poly(&column, x);
    }
    out
}

pub fn split<R: RngCore + CryptoRng>(
    secret: &SecretScalar,
    threshold: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<KeyShare>, CryptoError> {
    check_params(threshold, count)?;
    let indices: Vec<u8> = (1..=count as u8).collect();
    split_at(secret, threshold, &indices, rng)
}

/// Like [`split`], but issues shares at the given indices instead of `1..=n`.
pub fn split_at<R: RngCore + CryptoRng>(
    secret: &SecretScalar,
    threshold: usize,
    indices: &[u8],
    rng: &mut R,
) -> Result<Vec<KeyShare>, CryptoError> {
    check_params(threshold, indices.len())?;
    let shares: Vec<KeyShare> = indices.iter().map(|&x| KeyShare { index: x, payload: [0; 32] }).collect();
    check_indices(&shares)?;
    let coeffs = random_polynomial(*secret.expose(), threshold, rng);
    Ok(shares.into_iter().map(|s| KeyShare { payload: evaluate(&coeffs, s.index), ..s }).collect())
}

/// Lagrange interpolation of all given shares, evaluated at `x`.
///
/// No threshold checks: this is the raw primitive, also used to show that
/// too few shares interpolate to the wrong value.
pub fn interpolate_at(shares: &[KeyShare], x: u8) -> Result<[u8; 32], CryptoError> {
    check_indices(shares)?;
    let xs: Vec<u8> = shares.iter().map(|s| s.index).collect();
    let mut out = [0u8; 32];
    for (i, share) in shares.iter().enumerate() {
        let li = gf256::lagrange_coefficient(&xs, i, x);
        for (o, &y) in out.iter_mut().zip(share.payload.iter()) {
            *o ^= gf256::mul(li, y);
        }
    }
    Ok(out)
}

/// Reconstructs the secret from the first `threshold` shares.
pub fn reconstruct(shares: &[KeyShare], threshold: usize) -> Result<SecretScalar, CryptoError> {
    check_indices(shares)?;
    if threshold == 0 {
        return Err(CryptoError::InvalidSharingParameters { threshold, count: shares.len() });
    }
    if shares.len() < threshold {
        return Err(CryptoError::InsufficientShares { needed: threshold, got: shares.len() });
    }
    Ok(SecretScalar::from_bytes(interpolate_at(&shares[..threshold], 0)?))
}

/// Evaluations, at each of `indices`, of a fresh random polynomial of degree
/// `threshold - 1` whose constant term is zero.
pub fn zero_polynomial_evals<R: RngCore + CryptoRng>(threshold: usize, indices: &[u8], rng: &mut R) -> Vec<[u8; 32]> {
    let coeffs = random_polynomial([0u8; 32], threshold, rng);
    indices.iter().map(|&x| evaluate(&coeffs, x)).collect()
}

/// Checks that every share beyond the first `threshold` lies on the
/// polynomial those first shares define.
pub fn check_consistent(shares: &[KeyShare], threshold: usize) -> Result<(), CryptoError> {
    check_indices(shares)?;
    if threshold == 0 || shares.len() < threshold {
        return Err(CryptoError::InsufficientShares { needed: threshold.max(1), got: shares.len() });
    }
    let (base, rest) = shares.split_at(threshold);
    for extra in rest {
        if interpolate_at(base, extra.index)? != extra.payload {
            return Err(CryptoError::InconsistentShares);
        }
    }
    Ok(())
}

/// Proactive refresh: adds a random zero-constant polynomial to every share.
///
/// With `threshold == 1` the added polynomial is identically zero, so the
/// shares come back unchanged (each share already equals the secret).
pub fn zero_share_refresh<R: RngCore + CryptoRng>(
    old_shares: &[KeyShare],
    threshold: usize,
    rng: &mut R,
) -> Result<Vec<KeyShare>, CryptoError> {
    check_consistent(old_shares, threshold)?;
    let indices: Vec<u8> = old_shares.iter().map(|s| s.index).collect();
    let deltas = zero_polynomial_evals(threshold, &indices, rng);
    Ok(old_shares
        .iter()
        .zip(deltas)
        .map(|(s, d)| {
            let mut payload = s.payload;
            for (p, dv) in payload.iter_mut().zip(d) {
                *p ^= dv;
            }
            KeyShare { index: s.index, payload }
        })
        .collect())
}
