//! Lattice representations, exact closest-point decoding, and geometric
//! quantities (volume, second moment, NSM).
//!
//! A [`Lattice`] is a named family instance: a canonical generator matrix
//! (rows are basis vectors) times a positive scale. All published geometric
//! quantities are computed from the stored generator, never from family
//! lore, so scaling bugs surface in the scaling invariants.

mod families;
mod oracle;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use crate::dither;
use crate::error::{Error, Result};

/// The lattice families supported by the fast exact decoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatticeFamily {
    /// Integer lattice Z^n.
    IntegerZ,
    /// Checkerboard lattice D_n (even coordinate sums).
    DnChecker,
    /// Dual checkerboard D_n^*.
    DnDual,
    /// Gosset lattice E8.
    E8,
    /// Barnes-Wall lattice Λ16.
    BarnesWall16,
}

impl LatticeFamily {
    pub fn name(&self) -> &'static str {
        match self {
            LatticeFamily::IntegerZ => "IntegerZ",
            LatticeFamily::DnChecker => "DnChecker",
            LatticeFamily::DnDual => "DnDual",
            LatticeFamily::E8 => "E8",
            LatticeFamily::BarnesWall16 => "BarnesWall16",
        }
    }

    /// Parse the family name used in config files.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "IntegerZ" | "Z" | "Zn" => Ok(LatticeFamily::IntegerZ),
            "DnChecker" | "Dn" | "D8" => Ok(LatticeFamily::DnChecker),
            "DnDual" | "Dn*" => Ok(LatticeFamily::DnDual),
            "E8" => Ok(LatticeFamily::E8),
            "BarnesWall16" | "Lambda16" | "BW16" => Ok(LatticeFamily::BarnesWall16),
            other => Err(Error::Config(format!("unknown lattice family '{other}'"))),
        }
    }
}

/// A lattice point: integer basis coordinates and the embedding `G^T k`.
///
/// The embedding is always recomputed from the coordinates, so
/// `embedding == G^T coords` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePoint {
    pub coords: Vec<i64>,
    pub embedding: Vec<f64>,
}

/// A named lattice family instance with generator, scale, and exact decoder.
#[derive(Debug, Clone)]
pub struct Lattice {
    family: LatticeFamily,
    dim: usize,
    scale: f64,
    /// Canonical (unit-scale) generator; rows are basis vectors.
    canonical: DMatrix<f64>,
    /// LU factorization of canonical^T, for coordinate solves.
    gt_lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Upper-triangular R with Gram = R^T R (canonical), for enumeration.
    chol_r: DMatrix<f64>,
    canonical_volume: f64,
    bw_codewords: Option<Vec<[f64; 16]>>,
}

/// Build a lattice from a family, dimension, and scale multiplier.
pub fn build_lattice(family: LatticeFamily, n: usize, scale: f64) -> Result<Lattice> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Config(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let canonical = match family {
        LatticeFamily::IntegerZ => {
            if n == 0 {
                return Err(Error::Config("IntegerZ requires n >= 1".into()));
            }
            families::gen_integer(n)
        }
        LatticeFamily::DnChecker => {
            if n < 2 {
                return Err(Error::Config("DnChecker requires n >= 2".into()));
            }
            families::gen_dn(n)
        }
        LatticeFamily::DnDual => {
            if n < 2 {
                return Err(Error::Config("DnDual requires n >= 2".into()));
            }
            families::gen_dn_dual(n)
        }
        LatticeFamily::E8 => {
            if n != 8 {
                return Err(Error::Config(format!("E8 requires n = 8, got {n}")));
            }
            families::gen_e8()
        }
        LatticeFamily::BarnesWall16 => {
            if n != 16 {
                return Err(Error::Config(format!(
                    "BarnesWall16 requires n = 16, got {n}"
                )));
            }
            families::gen_bw16()
        }
    };
    let gt = canonical.transpose();
    let gt_lu = gt.clone().lu();
    let det = gt_lu.determinant();
    if det.abs() < 1e-12 {
        return Err(Error::Config("generator is singular".into()));
    }
    let gram = &canonical * &canonical.transpose();
    let chol = nalgebra::linalg::Cholesky::new(gram)
        .ok_or_else(|| Error::Config("Gram matrix is not positive definite".into()))?;
    let chol_r = chol.l().transpose();
    let bw_codewords = match family {
        LatticeFamily::BarnesWall16 => Some(families::rm14_codewords()),
        _ => None,
    };
    Ok(Lattice {
        family,
        dim: n,
        scale,
        canonical,
        gt_lu,
        chol_r,
        canonical_volume: det.abs(),
        bw_codewords,
    })
}

impl Lattice {
    pub fn family(&self) -> LatticeFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The scaled generator matrix (rows are basis vectors).
    pub fn generator(&self) -> DMatrix<f64> {
        &self.canonical * self.scale
    }

    /// Same lattice at a different scale multiplier.
    pub fn with_scale(&self, scale: f64) -> Result<Lattice> {
        build_lattice(self.family, self.dim, scale)
    }

    pub(crate) fn chol_r(&self) -> &DMatrix<f64> {
        &self.chol_r
    }

    /// Solve canonical coordinates of an arbitrary canonical-space vector.
    pub(crate) fn solve_coords_canonical(&self, xc: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(xc);
        let sol = self.gt_lu.solve(&b).expect("generator is invertible");
        sol.as_slice().to_vec()
    }

    /// Reconstruct a lattice point (embedding `scale * canonical^T k`) from
    /// integer coordinates.
    pub fn point_from_coords(&self, coords: &[i64]) -> LatticePoint {
        let mut emb = vec![0.0; self.dim];
        for (i, &ki) in coords.iter().enumerate() {
            if ki == 0 {
                continue;
            }
            let kf = ki as f64;
            for j in 0..self.dim {
                emb[j] += kf * self.canonical[(i, j)];
            }
        }
        for v in emb.iter_mut() {
            *v *= self.scale;
        }
        LatticePoint {
            coords: coords.to_vec(),
            embedding: emb,
        }
    }

    /// The zero point.
    pub fn zero_point(&self) -> LatticePoint {
        LatticePoint {
            coords: vec![0; self.dim],
            embedding: vec![0.0; self.dim],
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Input(format!(
                "expected dimension {}, got {}",
                self.dim,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite input coordinate".into()));
        }
        Ok(())
    }

    /// Exact closest lattice point to `x` (the lattice quantizer `Q_Λ`).
    pub fn nearest_point(&self, x: &[f64]) -> Result<LatticePoint> {
        self.check_input(x)?;
        // True division: exact whenever x/scale is representable, which keeps
        // half-open boundary decisions consistent for dyadic-rational inputs
        // (coset enumeration depends on this).
        let xc: Vec<f64> = x.iter().map(|v| v / self.scale).collect();
        let mut emb = vec![0.0; self.dim];
        match self.family {
            LatticeFamily::IntegerZ => families::decode_integer(&xc, &mut emb),
            LatticeFamily::DnChecker => families::decode_dn(&xc, &mut emb),
            LatticeFamily::DnDual => families::decode_dn_dual(&xc, &mut emb),
            LatticeFamily::E8 => families::decode_e8(&xc, &mut emb),
            LatticeFamily::BarnesWall16 => {
                families::decode_bw16(&xc, self.bw_codewords.as_ref().unwrap(), &mut emb)
            }
        }
        let kr = self.solve_coords_canonical(&emb);
        let mut coords = Vec::with_capacity(self.dim);
        for v in &kr {
            let r = v.round();
            debug_assert!((v - r).abs() < 1e-9, "decoder output left the lattice");
            coords.push(r as i64);
        }
        Ok(self.point_from_coords(&coords))
    }

    /// Exhaustive closest-point search within `radius` of `x`; certifies
    /// `nearest_point`. Ties resolve to the lexicographically smallest
    /// coordinate vector.
    pub fn nearest_point_oracle(&self, x: &[f64], radius: f64) -> Result<LatticePoint> {
        self.check_input(x)?;
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::Input("radius must be nonnegative and finite".into()));
        }
        oracle::enumerate_nearest(self, x, radius)
    }

    /// All lattice points within `radius` of `x`, capped at `cap` points
    /// (configuration error beyond that).
    pub fn enumerate_within(
        &self,
        x: &[f64],
        radius: f64,
        cap: usize,
    ) -> Result<Vec<LatticePoint>> {
        self.check_input(x)?;
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::Input("radius must be nonnegative and finite".into()));
        }
        oracle::enumerate_ball(self, x, radius, cap)
    }

    /// Upper bound on the Voronoi covering radius from the Gram-Schmidt
    /// norms: `r_cov <= (1/2)·sqrt(Σ_i ||b~_i||²)` (Babai bound).
    pub fn covering_radius_bound(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            let d = self.chol_r[(i, i)];
            acc += d * d;
        }
        0.5 * acc.sqrt() * self.scale
    }

    /// Lattice volume `|det G|`.
    pub fn volume(&self) -> f64 {
        self.canonical_volume * self.scale.powi(self.dim as i32)
    }

    /// Monte-Carlo estimate of the per-dimension second moment
    /// `σ²(Λ) = E||u||²/n` for `u` uniform over the Voronoi cell.
    /// Returns `(estimate, standard_error)`.
    pub fn second_moment_mc(&self, num_samples: usize, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
        if num_samples < 1000 {
            return Err(Error::Input(
                "second_moment_mc needs at least 1000 samples".into(),
            ));
        }
        let n = self.dim as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..num_samples {
            let u = dither::sample_cell_uniform(self, rng);
            let v = u.iter().map(|a| a * a).sum::<f64>() / n;
            sum += v;
            sum_sq += v * v;
        }
        let m = num_samples as f64;
        let mean = sum / m;
        let var = (sum_sq / m - mean * mean) * m / (m - 1.0);
        Ok((mean, (var / m).sqrt()))
    }

    /// Monte-Carlo estimate of the normalized second moment
    /// `G(Λ) = σ²(Λ) / V(Λ)^{2/n}`; scale-invariant.
    pub fn nsm_mc(&self, num_samples: usize, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
        let (sm, se) = self.second_moment_mc(num_samples, rng)?;
        let norm = self.volume().powf(2.0 / self.dim as f64);
        Ok((sm / norm, se / norm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn dist2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    #[test]
    fn build_examples() {
        let z8 = build_lattice(LatticeFamily::IntegerZ, 8, 1.0).unwrap();
        assert_eq!(z8.generator(), DMatrix::identity(8, 8));
        assert!((z8.volume() - 1.0).abs() < 1e-12);

        let e8 = build_lattice(LatticeFamily::E8, 8, 1.0).unwrap();
        assert!((e8.volume() - 1.0).abs() < 1e-10);

        let z2 = build_lattice(LatticeFamily::IntegerZ, 2, 0.5).unwrap();
        assert!((z2.volume() - 0.25).abs() < 1e-12);

        let z4 = build_lattice(LatticeFamily::IntegerZ, 4, 3.0).unwrap();
        assert!((z4.volume() - 81.0).abs() < 1e-9);

        let d8 = build_lattice(LatticeFamily::DnChecker, 8, 1.0).unwrap();
        assert!((d8.volume() - 2.0).abs() < 1e-10);

        let d8d = build_lattice(LatticeFamily::DnDual, 8, 1.0).unwrap();
        assert!((d8d.volume() - 0.5).abs() < 1e-10);

        let bw = build_lattice(LatticeFamily::BarnesWall16, 16, 1.0).unwrap();
        assert!((bw.volume() - 4096.0).abs() < 1e-6);
    }

    #[test]
    fn family_dimension_mismatch_is_config_error() {
        assert!(build_lattice(LatticeFamily::E8, 7, 1.0).is_err());
        assert!(build_lattice(LatticeFamily::BarnesWall16, 8, 1.0).is_err());
        assert!(build_lattice(LatticeFamily::DnChecker, 1, 1.0).is_err());
        assert!(build_lattice(LatticeFamily::IntegerZ, 8, 0.0).is_err());
    }

    #[test]
    fn nearest_point_examples() {
        let z2 = build_lattice(LatticeFamily::IntegerZ, 2, 1.0).unwrap();
        let p = z2.nearest_point(&[0.4, -1.6]).unwrap();
        assert_eq!(p.embedding, vec![0.0, -2.0]);

        let d4 = build_lattice(LatticeFamily::DnChecker, 4, 1.0).unwrap();
        let x = [0.6, 0.6, 0.6, 0.6];
        let p = d4.nearest_point(&x).unwrap();
        assert_eq!(p.embedding, vec![1.0, 1.0, 1.0, 1.0]);
        assert!((dist2(&x, &p.embedding) - 0.64).abs() < 1e-12);

        let e8 = build_lattice(LatticeFamily::E8, 8, 1.0).unwrap();
        let p = e8.nearest_point(&[0.0; 8]).unwrap();
        assert_eq!(p.embedding, vec![0.0; 8]);
        assert_eq!(p.coords, vec![0; 8]);
    }

    #[test]
    fn nearest_point_rejects_bad_input() {
        let z2 = build_lattice(LatticeFamily::IntegerZ, 2, 1.0).unwrap();
        assert!(z2.nearest_point(&[f64::NAN, 0.0]).is_err());
        assert!(z2.nearest_point(&[0.0]).is_err());
    }

    #[test]
    fn oracle_examples() {
        let z1 = build_lattice(LatticeFamily::IntegerZ, 1, 1.0).unwrap();
        let p = z1.nearest_point_oracle(&[0.49], 2.0).unwrap();
        assert_eq!(p.embedding, vec![0.0]);

        // Radius too small: no candidate.
        assert!(z1.nearest_point_oracle(&[0.49], 0.2).is_err());
    }

    #[test]
    fn oracle_tie_break_is_lexicographic() {
        // (1/2,...,1/2) in D4 has eight closest points at squared distance
        // exactly 1; the lexicographically smallest coordinate vector among
        // them maps to the embedding (1,1,1,1).
        let d4 = build_lattice(LatticeFamily::DnChecker, 4, 1.0).unwrap();
        let x = [0.5, 0.5, 0.5, 0.5];
        let p = d4.nearest_point_oracle(&x, 1.5).unwrap();
        assert_eq!(dist2(&x, &p.embedding), 1.0);
        assert_eq!(p.embedding, vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(p.coords, vec![-2, -1, -2, -1]);
    }

    #[test]
    fn scaling_laws_are_exact_at_fixed_seed() {
        // Same substream: the cell sample of a*Λ is exactly a times the cell
        // sample of Λ, so the second-moment ratio is exactly a².
        let base = build_lattice(LatticeFamily::E8, 8, 1.0).unwrap();
        let scaled = base.with_scale(2.0).unwrap();
        let (m1, _) = base
            .second_moment_mc(2000, &mut substream(11, "sm", 0))
            .unwrap();
        let (m2, _) = scaled
            .second_moment_mc(2000, &mut substream(11, "sm", 0))
            .unwrap();
        assert!((m2 / m1 - 4.0).abs() < 1e-12);
        assert!((scaled.volume() / base.volume() - 256.0).abs() < 1e-9);
    }

    #[test]
    fn second_moment_matches_analytic_for_cubic() {
        let z8 = build_lattice(LatticeFamily::IntegerZ, 8, 1.0).unwrap();
        let (m, se) = z8
            .second_moment_mc(200_000, &mut substream(3, "sm", 1))
            .unwrap();
        assert!((m - 1.0 / 12.0).abs() < 3.0 * se, "m={m} se={se}");

        let z8b = z8.with_scale(2.0).unwrap();
        let (m2, se2) = z8b
            .second_moment_mc(200_000, &mut substream(3, "sm", 2))
            .unwrap();
        assert!((m2 - 4.0 / 12.0).abs() < 3.0 * se2);
    }

    #[test]
    fn nsm_is_scale_invariant() {
        let e8 = build_lattice(LatticeFamily::E8, 8, 1.0).unwrap();
        let (g1, se1) = e8.nsm_mc(100_000, &mut substream(5, "nsm", 0)).unwrap();
        let (g2, se2) = e8
            .with_scale(0.5)
            .unwrap()
            .nsm_mc(100_000, &mut substream(5, "nsm", 1))
            .unwrap();
        let se = (se1 * se1 + se2 * se2).sqrt();
        assert!((g1 - g2).abs() < 3.0 * se);
    }
}
