//! Voronoi-cell-uniform dither sampling and nested-lattice discrete dithers
//! for finite shared randomness.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// Hard cap on the number of enumerable cosets (Γ^n).
pub const COSET_ENUMERATION_CAP: u128 = 10_000_000;

/// Sample `u ~ Unif(V0(Λ))`: draw w uniform on `[0,1)^n`, map through the
/// generator to get a fundamental-parallelepiped-uniform point, and reduce
/// mod Λ. The mod-reduction of any fundamental-domain-uniform sample is
/// Voronoi-uniform.
pub fn sample_cell_uniform(lattice: &Lattice, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = lattice.dim();
    let g = lattice.generator();
    let mut z = vec![0.0; n];
    for i in 0..n {
        let w: f64 = rng.gen();
        if w == 0.0 {
            continue;
        }
        for j in 0..n {
            z[j] += w * g[(i, j)];
        }
    }
    mod_lattice(lattice, &z).expect("parallelepiped point is finite")
}

/// Reduce `x` modulo the lattice: `x - Q_Λ(x)`, a point of the half-open
/// Voronoi cell.
pub fn mod_lattice(lattice: &Lattice, x: &[f64]) -> Result<Vec<f64>> {
    let q = lattice.nearest_point(x)?;
    Ok(x.iter().zip(&q.embedding).map(|(a, b)| a - b).collect())
}

/// A self-similar nested pair Λ = Γ·Λ_f with enumerated coset representatives.
#[derive(Debug, Clone)]
pub struct NestedPair {
    coarse: Lattice,
    fine: Lattice,
    nesting_ratio: u32,
    /// The Γ^n coset representatives of Λ/Λ_f, each reduced into V0(Λ).
    representatives: Vec<Vec<f64>>,
}

impl NestedPair {
    /// Build the pair from a coarse lattice and integer nesting ratio Γ;
    /// the fine lattice is Λ_f = (1/Γ)·Λ.
    pub fn new(coarse: Lattice, nesting_ratio: u32) -> Result<Self> {
        if nesting_ratio < 1 {
            return Err(Error::Config("nesting ratio must be >= 1".into()));
        }
        let n = coarse.dim();
        let count = (nesting_ratio as u128).pow(n as u32);
        if count > COSET_ENUMERATION_CAP {
            return Err(Error::Config(format!(
                "Γ^n = {count} cosets exceeds the enumeration cap {COSET_ENUMERATION_CAP}"
            )));
        }
        let fine = coarse.with_scale(coarse.scale() / nesting_ratio as f64)?;
        let representatives = enumerate_representatives(&coarse, nesting_ratio)?;
        debug_assert_eq!(representatives.len() as u128, count);
        Ok(NestedPair {
            coarse,
            fine,
            nesting_ratio,
            representatives,
        })
    }

    pub fn coarse(&self) -> &Lattice {
        &self.coarse
    }

    pub fn fine(&self) -> &Lattice {
        &self.fine
    }

    pub fn nesting_ratio(&self) -> u32 {
        self.nesting_ratio
    }

    pub fn coset_count(&self) -> usize {
        self.representatives.len()
    }

    /// Shared-randomness rate `R_c = log2(Γ)` bits per dimension.
    pub fn shared_randomness_rate(&self) -> f64 {
        (self.nesting_ratio as f64).log2()
    }

    /// The coset representatives: exactly Γ^n fine-lattice points inside the
    /// half-open cell of Λ, pairwise distinct mod Λ.
    pub fn coset_representatives(&self) -> &[Vec<f64>] {
        &self.representatives
    }

    /// Draw a discrete dither `û ~ Unif(Λ/Λ_f)`. Returns the coset index and
    /// the representative. Γ = 1 consumes no randomness (û = 0 always).
    pub fn sample_coset_uniform<'a>(&'a self, rng: &mut ChaCha8Rng) -> (usize, &'a [f64]) {
        if self.representatives.len() == 1 {
            return (0, &self.representatives[0]);
        }
        let idx = rng.gen_range(0..self.representatives.len());
        (idx, &self.representatives[idx])
    }

    /// Representative by index (decoder side of the shared record).
    pub fn representative(&self, idx: usize) -> Result<&[f64]> {
        self.representatives
            .get(idx)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Protocol(format!("coset index {idx} out of range")))
    }
}

/// Enumerate `k ∈ {0,..,Γ-1}^n`, form `G^T k / Γ`, and reduce mod Λ.
fn enumerate_representatives(coarse: &Lattice, gamma: u32) -> Result<Vec<Vec<f64>>> {
    let n = coarse.dim();
    let g = coarse.generator();
    let count = (gamma as u128).pow(n as u32) as usize;
    let mut reps = Vec::with_capacity(count);
    let mut k = vec![0u32; n];
    let inv_gamma = 1.0 / gamma as f64;
    loop {
        let mut fine_pt = vec![0.0; n];
        for (i, &ki) in k.iter().enumerate() {
            if ki == 0 {
                continue;
            }
            let kf = ki as f64 * inv_gamma;
            for j in 0..n {
                fine_pt[j] += kf * g[(i, j)];
            }
        }
        reps.push(reduce_half_open(coarse, &fine_pt)?);
        // odometer increment
        let mut carry = true;
        for slot in k.iter_mut() {
            if *slot + 1 < gamma {
                *slot += 1;
                carry = false;
                break;
            }
            *slot = 0;
        }
        if carry {
            break;
        }
    }
    Ok(reps)
}

/// Reduce a point into the half-open cell for coset enumeration. Boundary
/// fine points land exactly on Voronoi walls, where the fast decoder's pick
/// depends on float rounding noise and is not stable under lattice
/// translations; here ties (detected up to tolerance) resolve to the
/// lexicographically largest coordinate vector, which reproduces
/// round-half-up on Z^n and shifts uniformly under translations, keeping
/// |Λ/Λ_f| = Γ^n exact with a well-defined representative per coset.
fn reduce_half_open(lattice: &Lattice, x: &[f64]) -> Result<Vec<f64>> {
    let q = lattice.nearest_point(x)?;
    let d2_min: f64 = x
        .iter()
        .zip(&q.embedding)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let radius = d2_min.sqrt() * (1.0 + 1e-7) + 1e-9;
    let candidates = lattice.enumerate_within(x, radius, 1 << 16)?;
    let tol = 1e-9 * (1.0 + d2_min);
    let mut best: Option<&crate::lattice::LatticePoint> = None;
    for cand in &candidates {
        let d2: f64 = x
            .iter()
            .zip(&cand.embedding)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d2 <= d2_min + tol {
            best = match best {
                Some(b) if b.coords >= cand.coords => Some(b),
                _ => Some(cand),
            };
        }
    }
    let lam = best.expect("nearest point is among the candidates");
    Ok(x.iter().zip(&lam.embedding).map(|(a, b)| a - b).collect())
}
