// SPDX-License-Identifier: Apache-2.0

//! Arithmetic in GF(2^8) with the AES reduction polynomial
//! `x^8 + x^4 + x^3 + x + 1` (0x11b).
//!
//! Multiplication goes through log/exp tables built at compile time from the
//! generator `0x03`. Addition and subtraction are both XOR.

const fn build_tables() -> ([u8; 256], [u8; 256]) {
    let mut exp = [0u8; 256];
    let mut log = [0u8; 256];
    let mut x: u8 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x;
        log[x as usize] = i as u8;
        // x <- x * 3 = xtime(x) ^ x
        let xt = (x << 1) ^ if x & 0x80 != 0 { 0x1b } else { 0 };
        x ^= xt;
        i += 1;
    }
    exp[255] = exp[0];
    (exp, log)
}

const TABLES: ([u8; 256], [u8; 256]) = build_tables();
const EXP: [u8; 256] = TABLES.0;
const LOG: [u8; 256] = TABLES.1;

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    let idx = (LOG[a as usize] as usize + LOG[b as usize] as usize) % 255;
    EXP[idx]
}

/// Multiplicative inverse. `inv(0)` is undefined and panics.
#[inline]
pub fn inv(a: u8) -> u8 {
    assert!(a != 0, "zero has no inverse in GF(2^8)");
    EXP[(255 - LOG[a as usize] as usize) % 255]
}

#[inline]
pub fn div(a: u8, b: u8) -> u8 {
    mul(a, inv(b))
}

/// Evaluates `coeffs[0] + coeffs[1]*x + ...` at `x` (Horner).
pub fn eval_poly(coeffs: &[u8], x: u8) -> u8 {
    coeffs.iter().rev().fold(0u8, |acc, &c| add(mul(acc, x), c))
}

/// Lagrange basis coefficient for `xs[i]`, evaluated at `x`.
///
/// `xs` must be distinct and non-empty.
pub fn lagrange_coefficient(xs: &[u8], i: usize, x: u8) -> u8 {
    let xi = xs[i];
    xs.iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .fold(1u8, |acc, (_, &xj)| mul(acc, div(add(x, xj), add(xi, xj))))
}
