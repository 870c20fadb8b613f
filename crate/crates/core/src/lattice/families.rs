//! Canonical generators and exact closest-point decoders for the named
//! lattice families. All decoders work in canonical (unit-scale) coordinates;
//! scaling is handled by the caller.
//!
//! Conventions that the rest of the crate relies on:
//! - rounding is half-up per coordinate (`floor(x + 0.5)`), so the Z^n cell is
//!   the half-open cube [-1/2, 1/2)^n and coset enumeration never
//!   double-counts boundary points;
//! - the D_n decoder flips the coordinate with the largest rounding residual
//!   (smallest index on residual ties, residual >= 0 flips up);
//! - union-of-cosets decoders (D_n^*, E8, Lambda16) keep the first coset on
//!   exact distance ties.

use nalgebra::DMatrix;

/// Round half up: 0.5 -> 1, -0.5 -> 0. Keeps the cell convention half-open.
#[inline]
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Canonical generator matrix (rows are basis vectors) for `Z^n`.
pub fn gen_integer(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Canonical generator for the checkerboard lattice `D_n` (even coordinate
/// sums); |det| = 2.
pub fn gen_dn(n: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n, n);
    g[(0, 0)] = -1.0;
    g[(0, 1)] = -1.0;
    for i in 1..n {
        g[(i, i - 1)] = 1.0;
        g[(i, i)] = -1.0;
    }
    g
}

/// Canonical generator for the dual lattice `D_n^* = Z^n ∪ (Z^n + h)`,
/// h = (1/2,...,1/2); |det| = 1/2.
pub fn gen_dn_dual(n: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        g[(i, i)] = 1.0;
    }
    for j in 0..n {
        g[(n - 1, j)] = 0.5;
    }
    g
}

/// Canonical generator for `E8` in the even coordinate system
/// (`E8 = D8 ∪ (D8 + h)`); |det| = 1.
pub fn gen_e8() -> DMatrix<f64> {
    let mut g = DMatrix::zeros(8, 8);
    g[(0, 0)] = 2.0;
    for i in 1..7 {
        g[(i, i - 1)] = -1.0;
        g[(i, i)] = 1.0;
    }
    for j in 0..8 {
        g[(7, j)] = 0.5;
    }
    g
}

/// Basis rows of the first-order Reed-Muller code RM(1,4) over F2
/// (all-ones plus the four coordinate-bit indicators).
fn rm14_basis() -> [[u8; 16]; 5] {
    let mut rows = [[0u8; 16]; 5];
    rows[0] = [1; 16];
    for b in 0..4 {
        for i in 0..16 {
            rows[b + 1][i] = ((i >> b) & 1) as u8;
        }
    }
    rows
}

/// The 32 codewords of RM(1,4), as 0/1 vectors.
pub fn rm14_codewords() -> Vec<[f64; 16]> {
    let basis = rm14_basis();
    let mut words = Vec::with_capacity(32);
    for mask in 0u32..32 {
        let mut w = [0u8; 16];
        for (b, row) in basis.iter().enumerate() {
            if (mask >> b) & 1 == 1 {
                for i in 0..16 {
                    w[i] ^= row[i];
                }
            }
        }
        let mut wf = [0.0f64; 16];
        for i in 0..16 {
            wf[i] = w[i] as f64;
        }
        words.push(wf);
    }
    words
}

/// Canonical generator for the Barnes-Wall lattice `Λ16 = RM(1,4) + 2·D16`
/// (Construction B); |det| = 4096. Hermite normal form basis of the stacked
/// code and 2·D16 generators.
pub fn gen_bw16() -> DMatrix<f64> {
    #[rustfmt::skip]
    const ROWS: [[i8; 16]; 16] = [
        [4,0,0,0, 0,0,0,0, 0,0,0,0, 0,0,0,0],
        [2,2,0,0, 0,0,0,0, 0,0,0,0, 0,0,0,0],
        [2,0,2,0, 0,0,0,0, 0,0,0,0, 0,0,0,0],
        [2,0,0,2, 0,0,0,0, 0,0,0,0, 0,0,0,0],
        [2,0,0,0, 2,0,0,0, 0,0,0,0, 0,0,0,0],
        [2,0,0,0, 0,2,0,0, 0,0,0,0, 0,0,0,0],
        [2,0,0,0, 0,0,2,0, 0,0,0,0, 0,0,0,0],
        [1,1,1,1, 1,1,1,1, 0,0,0,0, 0,0,0,0],
        [2,0,0,0, 0,0,0,0, 2,0,0,0, 0,0,0,0],
        [2,0,0,0, 0,0,0,0, 0,2,0,0, 0,0,0,0],
        [2,0,0,0, 0,0,0,0, 0,0,2,0, 0,0,0,0],
        [1,1,1,1, 0,0,0,0, 1,1,1,1, 0,0,0,0],
        [2,0,0,0, 0,0,0,0, 0,0,0,0, 2,0,0,0],
        [1,1,0,0, 1,1,0,0, 1,1,0,0, 1,1,0,0],
        [1,0,1,0, 1,0,1,0, 1,0,1,0, 1,0,1,0],
        [1,0,0,1, 0,1,1,0, 0,1,1,0, 1,0,0,1],
    ];
    DMatrix::from_fn(16, 16, |i, j| ROWS[i][j] as f64)
}

#[inline]
fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Closest point in `Z^n` (coordinate-wise rounding).
pub fn decode_integer(x: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = round_half_up(v);
    }
}

/// Closest point in `D_n`: round coordinate-wise; if the sum is odd, re-round
/// the worst coordinate the other way. Residuals equal up to float noise are
/// treated as tied and resolved to the lowest index, which keeps the decision
/// stable under lattice translations of the input (coset enumeration lands
/// fine points exactly on these ties).
pub fn decode_dn(x: &[f64], out: &mut [f64]) {
    decode_integer(x, out);
    let sum: f64 = out.iter().sum();
    if (sum as i64).rem_euclid(2) != 0 {
        let mut worst = 0;
        let mut worst_res = -1.0;
        for (i, (&xi, &fi)) in x.iter().zip(out.iter()).enumerate() {
            let r = (xi - fi).abs();
            if r > worst_res * (1.0 + 1e-9) + 1e-12 {
                worst_res = r;
                worst = i;
            }
        }
        out[worst] += if x[worst] - out[worst] >= 0.0 {
            1.0
        } else {
            -1.0
        };
    }
}

fn decode_coset_union<F>(x: &[f64], shift: f64, base: F, out: &mut [f64])
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut c0 = vec![0.0; n];
    base(x, &mut c0);
    let shifted: Vec<f64> = x.iter().map(|v| v - shift).collect();
    let mut c1 = vec![0.0; n];
    base(&shifted, &mut c1);
    for v in c1.iter_mut() {
        *v += shift;
    }
    if dist2(x, &c0) <= dist2(x, &c1) {
        out.copy_from_slice(&c0);
    } else {
        out.copy_from_slice(&c1);
    }
}

/// Closest point in `D_n^* = Z^n ∪ (Z^n + h)`.
pub fn decode_dn_dual(x: &[f64], out: &mut [f64]) {
    decode_coset_union(x, 0.5, decode_integer, out);
}

/// Closest point in `E8 = D8 ∪ (D8 + h)`.
pub fn decode_e8(x: &[f64], out: &mut [f64]) {
    decode_coset_union(x, 0.5, decode_dn, out);
}

/// Closest point in `Λ16`: exact search over the 32 RM(1,4) cosets of 2·D16.
pub fn decode_bw16(x: &[f64], codewords: &[[f64; 16]], out: &mut [f64]) {
    let mut best = f64::INFINITY;
    let mut half = [0.0f64; 16];
    let mut dec = [0.0f64; 16];
    let mut cand = [0.0f64; 16];
    for cw in codewords {
        for i in 0..16 {
            half[i] = (x[i] - cw[i]) * 0.5;
        }
        decode_dn(&half, &mut dec);
        for i in 0..16 {
            cand[i] = cw[i] + 2.0 * dec[i];
        }
        let d = dist2(x, &cand);
        if d < best {
            best = d;
            out.copy_from_slice(&cand);
        }
    }
}
