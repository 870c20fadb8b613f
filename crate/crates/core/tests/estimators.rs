//! Distributional and estimator-level checks: the crypto lemma, coset
//! uniformity, rate-estimator agreement against analytic oracles, and the
//! PD/SD error decomposition.

use ltc_core::codec::{
    verify_pd_sd_identity, AffineTransform, Codec, CodecConfig, CodecMode, DitherRecord,
    EvalBudget, PerceptionMetric,
};
use ltc_core::dither::{sample_cell_uniform, NestedPair};
use ltc_core::lattice::{build_lattice, Lattice, LatticeFamily};
use ltc_core::metrics::GaussianSpec;
use ltc_core::rng::substream;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn identity_codec(mode: CodecMode, lattice: Lattice, source: &GaussianSpec) -> Codec {
    let n = lattice.dim();
    Codec::new(
        CodecConfig::for_source(
            mode,
            lattice,
            AffineTransform::identity(n),
            AffineTransform::identity(n),
            source,
        )
        .unwrap(),
    )
    .unwrap()
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn ks_critical(alpha_coeff: f64, na: usize, nb: usize) -> f64 {
    alpha_coeff * ((na + nb) as f64 / (na as f64 * nb as f64)).sqrt()
}

#[test]
fn crypto_lemma_fixed_input() {
    // For fixed x and cell-uniform u, Q(x-u)+u-x is distributed as an
    // independent cell-uniform sample: equal first/second moments within
    // 3 SE and per-coordinate KS below the 1% critical value.
    let lat = build_lattice(LatticeFamily::E8, 8, 1.0).unwrap();
    let x = [0.31, -1.2, 0.05, 2.4, -0.7, 0.0, 1.9, -0.44];
    let n = 100_000usize;
    let mut rng = substream(31, "crypto", 0);
    let mut resid = vec![Vec::with_capacity(n); 8];
    let mut ind = vec![Vec::with_capacity(n); 8];
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for _ in 0..n {
        let u = sample_cell_uniform(&lat, &mut rng);
        let shifted: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a - b).collect();
        let q = lat.nearest_point(&shifted).unwrap();
        let e: Vec<f64> = q
            .embedding
            .iter()
            .zip(&u)
            .zip(&x)
            .map(|((c, ui), xi)| c + ui - xi)
            .collect();
        let v = sample_cell_uniform(&lat, &mut rng);
        for k in 0..8 {
            resid[k].push(e[k]);
            ind[k].push(v[k]);
        }
        let en = e.iter().map(|a| a * a).sum::<f64>() / 8.0;
        let vn = v.iter().map(|a| a * a).sum::<f64>() / 8.0;
        r1 += en;
        r2 += en * en;
        m1 += vn;
        m2 += vn * vn;
    }
    let nf = n as f64;
    let (ra, va) = (r1 / nf, (r2 / nf - (r1 / nf).powi(2)) / nf);
    let (rb, vb) = (m1 / nf, (m2 / nf - (m1 / nf).powi(2)) / nf);
    let se = (va + vb).sqrt();
    assert!((ra - rb).abs() < 3.0 * se, "second moments {ra} vs {rb}");
    let crit = ks_critical(1.628, n, n);
    for k in 0..8 {
        let d = ks_statistic(&mut resid[k], &mut ind[k]);
        assert!(d < crit, "coordinate {k}: KS {d} >= {crit}");
    }
}

#[test]
fn coset_uniformity_chi_square_z8_gamma2() {
    let z8 = build_lattice(LatticeFamily::IntegerZ, 8, 1.0).unwrap();
    let pair = NestedPair::new(z8, 2).unwrap();
    assert_eq!(pair.coset_count(), 256);
    let draws = 400_000usize;
    let mut counts = vec![0u64; 256];
    let mut rng = substream(32, "chi", 0);
    for _ in 0..draws {
        let (idx, _) = pair.sample_coset_uniform(&mut rng);
        counts[idx] += 1;
    }
    let expected = draws as f64 / 256.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let crit = ChiSquared::new(255.0).unwrap().inverse_cdf(0.999);
    assert!(chi2 < crit, "chi2={chi2} crit={crit}");
}

#[test]
fn sd_rate_equals_noisy_proxy_across_lattices_and_scales() {
    let source = GaussianSpec::iid(8, 0.0, 1.0).unwrap();
    for (li, family) in [LatticeFamily::IntegerZ, LatticeFamily::E8]
        .into_iter()
        .enumerate()
    {
        for (si, scale) in [0.5, 1.0, 2.0].into_iter().enumerate() {
            let lat = build_lattice(family, 8, scale).unwrap();
            let codec = identity_codec(CodecMode::Sd, lat, &source);
            let idx = (li * 3 + si) as u64;
            let a = codec
                .rate_conditional_mc(&source, 3000, 192, &mut substream(33, "eq4", idx))
                .unwrap();
            let b = codec
                .rate_noisy_proxy_mc(&source, 3000, 192, &mut substream(33, "eq6", idx))
                .unwrap();
            let se = (a.se.powi(2) + b.se.powi(2)).sqrt();
            assert!(
                (a.bits_per_dim - b.bits_per_dim).abs() < 3.0 * se,
                "{family:?} scale {scale}: {} vs {} (se {se})",
                a.bits_per_dim,
                b.bits_per_dim
            );
        }
    }
}

#[test]
fn plugin_entropy_matches_binned_gaussian_on_z1() {
    // Analytic oracle: codeword probabilities of the unit integer bins of a
    // standard Gaussian are Phi(k+1/2) - Phi(k-1/2).
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut h_true = 0.0;
    for k in -12i64..=12 {
        let p = normal.cdf(k as f64 + 0.5) - normal.cdf(k as f64 - 0.5);
        if p > 0.0 {
            h_true -= p * p.log2();
        }
    }
    let source = GaussianSpec::iid(1, 0.0, 1.0).unwrap();
    let z1 = build_lattice(LatticeFamily::IntegerZ, 1, 1.0).unwrap();
    let codec = identity_codec(CodecMode::Deterministic, z1, &source);
    let r = codec
        .rate_plugin_entropy(&source, 100_000, &mut substream(34, "plugin", 0))
        .unwrap();
    assert!(
        (r.bits_per_dim - h_true).abs() < 0.02,
        "plug-in {} vs analytic {h_true}",
        r.bits_per_dim
    );
    assert!(!r.plugin_bias_flagged);
}

#[test]
fn sd_distortion_equals_lattice_second_moment() {
    let source = GaussianSpec::iid(8, 0.0, 1.0).unwrap();
    for family in [LatticeFamily::IntegerZ, LatticeFamily::E8] {
        let lat = build_lattice(family, 8, 1.3).unwrap();
        let (sm, sm_se) = lat
            .second_moment_mc(200_000, &mut substream(35, "sm", 0))
            .unwrap();
        let codec = identity_codec(CodecMode::Sd, lat, &source);
        let budget = EvalBudget {
            rate_outer: 1000,
            rate_inner: 64,
            distortion: 100_000,
            perception: 1000,
            projections: 8,
            ..EvalBudget::default()
        };
        let p = codec
            .evaluate(&source, &budget, PerceptionMetric::SlicedW2Sq, 35)
            .unwrap();
        let se = (sm_se.powi(2) + p.mse_se.powi(2)).sqrt();
        assert!(
            (p.mse_per_dim - sm).abs() < 3.0 * se,
            "{family:?}: mse {} vs second moment {sm}",
            p.mse_per_dim
        );
    }
}

#[test]
fn pd_distortion_is_second_moment_plus_quantization_error() {
    // s = 1, identity transforms: E|x - x̂|²/n = σ²(Λ) + E|x - Q(x)|²/n.
    let source = GaussianSpec::iid(8, 0.0, 1.0).unwrap();
    let lat = build_lattice(LatticeFamily::E8, 8, 1.1).unwrap();
    let (sm, _) = lat
        .second_moment_mc(300_000, &mut substream(36, "sm", 0))
        .unwrap();
    let mut rng = substream(36, "qerr", 0);
    let mut qerr = 0.0;
    let nq = 100_000;
    for _ in 0..nq {
        let x = source.sample(&mut rng);
        let q = lat.nearest_point(&x).unwrap();
        qerr += x
            .iter()
            .zip(&q.embedding)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 8.0;
    }
    qerr /= nq as f64;

    let codec = identity_codec(CodecMode::Pd { s: 1.0 }, lat, &source);
    let budget = EvalBudget {
        rate_plugin: 20_000,
        distortion: 200_000,
        perception: 1000,
        projections: 8,
        ..EvalBudget::default()
    };
    let p = codec
        .evaluate(&source, &budget, PerceptionMetric::SlicedW2Sq, 36)
        .unwrap();
    assert!(
        (p.mse_per_dim - (sm + qerr)).abs() < 4.0 * p.mse_se + 0.002,
        "pd mse {} vs {} + {}",
        p.mse_per_dim,
        sm,
        qerr
    );
}

#[test]
fn pd_sd_identity_examples() {
    let z8 = build_lattice(LatticeFamily::IntegerZ, 8, 1.0).unwrap();
    let r = verify_pd_sd_identity(&z8, 1.0, 50_000, &mut substream(37, "prop", 0)).unwrap();
    assert!(r.residual.abs() < 3.0 * r.residual_se, "{r:?}");

    let e8 = build_lattice(LatticeFamily::E8, 8, 1.0).unwrap();
    let r = verify_pd_sd_identity(&e8, 2.0, 50_000, &mut substream(37, "prop", 1)).unwrap();
    assert!(r.residual.abs() < 3.0 * r.residual_se, "{r:?}");
}

#[test]
fn inner_bias_diagnostic_is_small_at_default_budget() {
    let source = GaussianSpec::iid(8, 0.0, 1.0).unwrap();
    let codec = identity_codec(
        CodecMode::Sd,
        build_lattice(LatticeFamily::IntegerZ, 8, 1.0).unwrap(),
        &source,
    );
    let shift = codec.rate_inner_bias_shift(&source, 3000, 256, 38).unwrap();
    assert!(shift.abs() < 0.01, "doubling shift {shift}");
}

#[test]
fn sd_roundtrip_residual_distribution_via_decode() {
    // Full-pipeline version of the crypto lemma: SD roundtrip with identity
    // transforms leaves x̂ - x distributed as a cell-uniform sample.
    let source = GaussianSpec::iid(8, 0.0, 1.0).unwrap();
    let lat = build_lattice(LatticeFamily::IntegerZ, 8, 1.0).unwrap();
    let codec = identity_codec(CodecMode::Sd, lat.clone(), &source);
    let n = 50_000;
    let mut rng = substream(39, "roundtrip", 0);
    let mut resid = vec![Vec::with_capacity(n); 8];
    let mut ind = vec![Vec::with_capacity(n); 8];
    for _ in 0..n {
        let x = source.sample(&mut rng);
        let (c, rec) = codec.encode(&x, &mut rng).unwrap();
        let xh = codec.decode(&c, &rec, &mut rng).unwrap();
        let u = sample_cell_uniform(&lat, &mut rng);
        for k in 0..8 {
            resid[k].push(xh[k] - x[k]);
            ind[k].push(u[k]);
        }
        match rec {
            DitherRecord::SharedCell(_) => {}
            other => panic!("unexpected record {other:?}"),
        }
    }
    let crit = ks_critical(1.628, n, n);
    for k in 0..8 {
        let d = ks_statistic(&mut resid[k], &mut ind[k]);
        assert!(d < crit, "coordinate {k}: KS {d} >= {crit}");
    }
}

#[test]
fn qsd_rate_between_pd_and_sd_at_matched_effective_noise() {
    // Γ = 2 on Z8 at matched distortion target sits between the SD and PD
    // rates (finite shared randomness interpolates).
    let source = GaussianSpec::iid(8, 0.0, 1.0).unwrap();
    let d_target = 0.3;
    let gam = 1.0 - d_target / 2.0;
    let m_eff = 1.0 / (gam * gam) - 1.0;

    let mk = |mode: CodecMode, m: f64| {
        let scale = (m / (1.0 / 12.0)).sqrt();
        let lat = build_lattice(LatticeFamily::IntegerZ, 8, scale).unwrap();
        Codec::new(
            CodecConfig::for_source(
                mode,
                lat,
                AffineTransform::identity(8),
                AffineTransform::scalar(8, gam),
                &source,
            )
            .unwrap(),
        )
        .unwrap()
    };
    let sd = mk(CodecMode::Sd, m_eff);
    let qsd3 = mk(
        CodecMode::Qsd { gamma: 3, s: 1.0 },
        m_eff / (1.0 + 1.0 / 9.0),
    );
    let qsd2 = mk(CodecMode::Qsd { gamma: 2, s: 1.0 }, m_eff / (1.0 + 0.25));
    let r_sd = sd
        .rate_conditional_mc(&source, 4000, 192, &mut substream(40, "r", 0))
        .unwrap();
    let r_qsd3 = qsd3
        .rate_conditional_mc(&source, 4000, 192, &mut substream(40, "r", 2))
        .unwrap();
    let r_qsd2 = qsd2
        .rate_conditional_mc(&source, 4000, 192, &mut substream(40, "r", 1))
        .unwrap();
    // more shared randomness is never worse: SD (Γ=∞) <= Γ=3 <= Γ=2
    let se32 = (r_sd.se.powi(2) + r_qsd3.se.powi(2)).sqrt();
    assert!(
        r_sd.bits_per_dim <= r_qsd3.bits_per_dim + 3.0 * se32,
        "sd {} qsd3 {}",
        r_sd.bits_per_dim,
        r_qsd3.bits_per_dim
    );
    let se23 = (r_qsd2.se.powi(2) + r_qsd3.se.powi(2)).sqrt();
    assert!(
        r_qsd3.bits_per_dim <= r_qsd2.bits_per_dim + 3.0 * se23,
        "qsd3 {} qsd2 {}",
        r_qsd3.bits_per_dim,
        r_qsd2.bits_per_dim
    );
}
