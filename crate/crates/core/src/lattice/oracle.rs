//! Exhaustive closest-point search by sphere enumeration, used to certify the
//! fast family decoders.
//!
//! The search runs over integer coordinate vectors k with
//! ||G^T k - x|| <= radius, via the Cholesky factor of the Gram matrix
//! (Fincke-Pohst with interval pruning). Distances of surviving candidates
//! are recomputed in embedding space with the same arithmetic as
//! `nearest_point`, so equality checks between the two paths are exact.

use super::{Lattice, LatticePoint};
use crate::error::{Error, Result};

pub(super) fn enumerate_nearest(lattice: &Lattice, x: &[f64], radius: f64) -> Result<LatticePoint> {
    let n = lattice.dim();
    // Work in canonical coordinates; the quadratic form is (k-t)^T Gram (k-t).
    let xc: Vec<f64> = x.iter().map(|v| v / lattice.scale()).collect();
    let t = lattice.solve_coords_canonical(&xc);
    let r = lattice.chol_r();
    let rc = radius / lattice.scale();
    // Small inflation defends against Cholesky round-off excluding the
    // boundary candidate that defined the radius.
    let budget = rc * rc * (1.0 + 1e-9) + 1e-12;

    let mut k = vec![0i64; n];
    let mut best: Option<(f64, Vec<i64>)> = None;

    // Depth-first over levels n-1 .. 0; `used` is the quadratic form consumed
    // by levels above the current one.
    fn descend(
        level: usize,
        used: f64,
        budget: f64,
        r: &nalgebra::DMatrix<f64>,
        t: &[f64],
        k: &mut [i64],
        lattice: &Lattice,
        x: &[f64],
        best: &mut Option<(f64, Vec<i64>)>,
    ) {
        let n = t.len();
        let rem = budget - used;
        if rem < 0.0 {
            return;
        }
        let mut inner = 0.0;
        for j in level + 1..n {
            inner += r[(level, j)] * (k[j] as f64 - t[j]);
        }
        let rii = r[(level, level)];
        let half_width = rem.sqrt();
        let lo = (t[level] + (-half_width - inner) / rii).ceil() as i64;
        let hi = (t[level] + (half_width - inner) / rii).floor() as i64;
        for ki in lo..=hi {
            let term = rii * (ki as f64 - t[level]) + inner;
            let used2 = used + term * term;
            if used2 > budget {
                continue;
            }
            k[level] = ki;
            if level == 0 {
                let cand = lattice.point_from_coords(k);
                let d = dist2(x, &cand.embedding);
                match best {
                    Some((bd, bk)) => {
                        if d < *bd || (d == *bd && &*k < bk.as_slice()) {
                            *best = Some((d, k.to_vec()));
                        }
                    }
                    None => *best = Some((d, k.to_vec())),
                }
            } else {
                descend(level - 1, used2, budget, r, t, k, lattice, x, best);
            }
        }
    }

    descend(n - 1, 0.0, budget, r, &t, &mut k, lattice, x, &mut best);

    match best {
        Some((_, coords)) => Ok(lattice.point_from_coords(&coords)),
        None => Err(Error::Oracle(format!(
            "no lattice point within radius {radius}; retry with a larger radius"
        ))),
    }
}

/// Collect every lattice point within `radius` of `x` (at most `cap` points).
pub(super) fn enumerate_ball(
    lattice: &Lattice,
    x: &[f64],
    radius: f64,
    cap: usize,
) -> Result<Vec<LatticePoint>> {
    let n = lattice.dim();
    let xc: Vec<f64> = x.iter().map(|v| v / lattice.scale()).collect();
    let t = lattice.solve_coords_canonical(&xc);
    let r = lattice.chol_r();
    let rc = radius / lattice.scale();
    let budget = rc * rc * (1.0 + 1e-9) + 1e-12;

    struct Ctx<'a> {
        r: &'a nalgebra::DMatrix<f64>,
        t: Vec<f64>,
        budget: f64,
        cap: usize,
    }

    fn descend(
        ctx: &Ctx,
        level: usize,
        used: f64,
        k: &mut [i64],
        out: &mut Vec<Vec<i64>>,
    ) -> Result<()> {
        let n = ctx.t.len();
        let rem = ctx.budget - used;
        if rem < 0.0 {
            return Ok(());
        }
        let mut inner = 0.0;
        for j in level + 1..n {
            inner += ctx.r[(level, j)] * (k[j] as f64 - ctx.t[j]);
        }
        let rii = ctx.r[(level, level)];
        let half_width = rem.sqrt();
        let lo = (ctx.t[level] + (-half_width - inner) / rii).ceil() as i64;
        let hi = (ctx.t[level] + (half_width - inner) / rii).floor() as i64;
        for ki in lo..=hi {
            let term = rii * (ki as f64 - ctx.t[level]) + inner;
            let used2 = used + term * term;
            if used2 > ctx.budget {
                continue;
            }
            k[level] = ki;
            if level == 0 {
                if out.len() >= ctx.cap {
                    return Err(Error::Config(format!(
                        "ball enumeration exceeds the cap of {} points",
                        ctx.cap
                    )));
                }
                out.push(k.to_vec());
            } else {
                descend(ctx, level - 1, used2, k, out)?;
            }
        }
        Ok(())
    }

    let ctx = Ctx { r, t, budget, cap };
    let mut k = vec![0i64; n];
    let mut coords = Vec::new();
    descend(&ctx, n - 1, 0.0, &mut k, &mut coords)?;
    Ok(coords
        .iter()
        .map(|c| lattice.point_from_coords(c))
        .collect())
}

#[inline]
fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}
