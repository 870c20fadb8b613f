//! Reduced-budget verification suites: oracle equivalence, the crypto lemma,
//! the PD/SD error decomposition, rate-estimator agreement, and the Γ=1
//! exactness of the quantized shared dither.

use ltc_core::codec::{
    verify_pd_sd_identity, AffineTransform, Codec, CodecConfig, CodecMode, EvalBudget,
    PerceptionMetric,
};
use ltc_core::dither::sample_cell_uniform;
use ltc_core::lattice::{build_lattice, LatticeFamily};
use ltc_core::metrics::GaussianSpec;
use ltc_core::rng::substream;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn identity_codec(mode: CodecMode, family: LatticeFamily, scale: f64) -> Codec {
    let source = GaussianSpec::iid(8, 0.0, 1.0).unwrap();
    let lat = build_lattice(family, 8, scale).unwrap();
    Codec::new(
        CodecConfig::for_source(
            mode,
            lat,
            AffineTransform::identity(8),
            AffineTransform::identity(8),
            &source,
        )
        .unwrap(),
    )
    .unwrap()
}

fn suite_oracle(seed: u64, quick: bool) -> SuiteResult {
    let families = [
        (LatticeFamily::IntegerZ, 8usize),
        (LatticeFamily::DnChecker, 8),
        (LatticeFamily::DnDual, 8),
        (LatticeFamily::E8, 8),
        (LatticeFamily::BarnesWall16, 16),
    ];
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    for (fam, n) in families {
        let pts = if quick {
            80
        } else if n == 16 {
            300
        } else {
            800
        };
        let lat = build_lattice(fam, n, 1.0).unwrap();
        let mut rng = substream(seed, "selftest-oracle", n as u64);
        for _ in 0..pts {
            let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let fast = lat.nearest_point(&x).unwrap();
            let d = dist2(&x, &fast.embedding);
            let oracle = lat.nearest_point_oracle(&x, d.sqrt() + 1e-9).unwrap();
            checked += 1;
            if dist2(&x, &oracle.embedding) != d || oracle.coords != fast.coords {
                mismatches += 1;
            }
        }
    }
    SuiteResult {
        name: "oracle-equivalence",
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches over {checked} inputs"),
    }
}

fn suite_crypto(seed: u64, quick: bool) -> SuiteResult {
    let n = if quick { 5_000 } else { 20_000 };
    let lat = build_lattice(LatticeFamily::IntegerZ, 8, 1.0).unwrap();
    let source = GaussianSpec::iid(8, 0.0, 1.0).unwrap();
    let codec = identity_codec(CodecMode::Sd, LatticeFamily::IntegerZ, 1.0);
    let mut rng = substream(seed, "selftest-crypto", 0);
    let mut resid = vec![Vec::with_capacity(n); 8];
    let mut ind = vec![Vec::with_capacity(n); 8];
    for _ in 0..n {
        let x = source.sample(&mut rng);
        let xh = codec.roundtrip(&x, &mut rng).unwrap();
        let u = sample_cell_uniform(&lat, &mut rng);
        for k in 0..8 {
            resid[k].push(xh[k] - x[k]);
            ind[k].push(u[k]);
        }
    }
    let crit = 1.628 * ((2 * n) as f64 / (n as f64 * n as f64)).sqrt();
    let mut worst: f64 = 0.0;
    for k in 0..8 {
        resid[k].sort_by(f64::total_cmp);
        ind[k].sort_by(f64::total_cmp);
        let (mut i, mut j) = (0usize, 0usize);
        let mut d: f64 = 0.0;
        while i < n && j < n {
            if resid[k][i] <= ind[k][j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 - j as f64).abs() / n as f64);
        }
        worst = worst.max(d);
    }
    SuiteResult {
        name: "crypto-lemma",
        pass: worst < crit,
        detail: format!("worst per-coordinate KS {worst:.5} vs critical {crit:.5}"),
    }
}

fn suite_pd_sd_identity(seed: u64, quick: bool) -> SuiteResult {
    let n = if quick { 10_000 } else { 40_000 };
    let z8 = build_lattice(LatticeFamily::IntegerZ, 8, 1.0).unwrap();
    let r = verify_pd_sd_identity(&z8, 1.5, n, &mut substream(seed, "selftest-prop", 0)).unwrap();
    let margin = r.residual.abs() / r.residual_se.max(1e-12);
    SuiteResult {
        name: "pd-sd-identity",
        pass: margin < 3.0,
        detail: format!("residual {:.2e} = {margin:.2} SE", r.residual),
    }
}

fn suite_rate_equivalence(seed: u64, quick: bool) -> SuiteResult {
    let (outer, inner) = if quick { (1000, 64) } else { (2000, 128) };
    let source = GaussianSpec::iid(8, 0.0, 1.0).unwrap();
    let codec = identity_codec(CodecMode::Sd, LatticeFamily::IntegerZ, 1.0);
    let a = codec
        .rate_conditional_mc(
            &source,
            outer,
            inner,
            &mut substream(seed, "selftest-r4", 0),
        )
        .unwrap();
    let b = codec
        .rate_noisy_proxy_mc(
            &source,
            outer,
            inner,
            &mut substream(seed, "selftest-r6", 0),
        )
        .unwrap();
    let se = (a.se.powi(2) + b.se.powi(2)).sqrt();
    let gap = (a.bits_per_dim - b.bits_per_dim).abs();
    SuiteResult {
        name: "rate-equivalence",
        pass: gap < 3.0 * se,
        detail: format!("|Δ| = {gap:.4} bits vs 3·SE = {:.4}", 3.0 * se),
    }
}

fn suite_qsd_gamma1(seed: u64, quick: bool) -> SuiteResult {
    let trials = if quick { 50 } else { 200 };
    let source = GaussianSpec::iid(8, 0.0, 1.0).unwrap();
    let pd = identity_codec(CodecMode::Pd { s: 1.25 }, LatticeFamily::E8, 1.0);
    let qsd = identity_codec(CodecMode::Qsd { gamma: 1, s: 1.25 }, LatticeFamily::E8, 1.0);
    let mut r1 = substream(seed, "selftest-qsd", 0);
    let mut r2 = substream(seed, "selftest-qsd", 0);
    let mut src = substream(seed, "selftest-qsd-src", 0);
    let mut identical = true;
    for _ in 0..trials {
        let x = source.sample(&mut src);
        let (c1, rec1) = pd.encode(&x, &mut r1).unwrap();
        let (c2, rec2) = qsd.encode(&x, &mut r2).unwrap();
        let d1 = pd.decode(&c1, &rec1, &mut r1).unwrap();
        let d2 = qsd.decode(&c2, &rec2, &mut r2).unwrap();
        if c1 != c2 || d1 != d2 {
            identical = false;
            break;
        }
    }
    let budget = EvalBudget {
        rate_plugin: 10_000,
        distortion: 1_000,
        perception: 500,
        projections: 8,
        ..EvalBudget::default()
    };
    let p1 = pd
        .evaluate(&source, &budget, PerceptionMetric::SlicedW2Sq, seed)
        .unwrap();
    let p2 = qsd
        .evaluate(&source, &budget, PerceptionMetric::SlicedW2Sq, seed)
        .unwrap();
    let evals_equal = p1 == p2;
    SuiteResult {
        name: "qsd-gamma1-exactness",
        pass: identical && evals_equal,
        detail: format!(
            "roundtrips bit-identical: {identical}; evaluations identical: {evals_equal}"
        ),
    }
}

/// Run all suites at reduced budgets (further reduced when `quick`).
pub fn run_selftest(seed: u64, quick: bool) -> Vec<SuiteResult> {
    vec![
        suite_oracle(seed, quick),
        suite_crypto(seed, quick),
        suite_pd_sd_identity(seed, quick),
        suite_rate_equivalence(seed, quick),
        suite_qsd_gamma1(seed, quick),
    ]
}
