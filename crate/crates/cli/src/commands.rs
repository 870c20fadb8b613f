//! Command implementations, each returning its textual output so tests can
//! drive them without a process boundary.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::csv;
use crate::error::{CliError, Result};
use ltc_core::codec::RDPoint;
use ltc_core::lattice::{build_lattice, LatticeFamily};
use ltc_core::metrics::{gaussian_rdp, GaussianSpec};
use ltc_core::rcc::{rcc_evaluate, RccConfig};
use ltc_core::rng::{subseed, substream};
use ltc_core::theory::{flatness_estimate, pd_params, sd_params, LatticeGaussian};

/// Result of `eval`: the file paths written and the emitted rows.
#[derive(Debug)]
pub struct EvalReport {
    pub csv_path: std::path::PathBuf,
    pub sidecar_path: std::path::PathBuf,
    pub rows: Vec<String>,
}

/// Evaluate every codec descriptor in the config and write one CSV row per
/// run (rows computed concurrently, written in config order) plus a JSON
/// sidecar echoing the config and environment stamp.
pub fn cmd_eval(config_path: &Path) -> Result<EvalReport> {
    let cfg = RunConfig::load(config_path)?;
    let rows = cfg.rows()?;
    let source = cfg.source_spec()?;
    let budget = cfg.budgets.to_eval_budget();
    let metric = cfg.metric();
    let hash = cfg.hash();

    let points: Vec<(usize, RDPoint)> = rows
        .par_iter()
        .map(|row| -> Result<(usize, RDPoint)> {
            let codec = cfg.build_codec(row)?;
            let row_seed = subseed(cfg.seed, "row", row.run_id as u64);
            let point = codec.evaluate(&source, &budget, metric, row_seed)?;
            Ok((row.run_id, point))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut lines = Vec::with_capacity(rows.len() + 1);
    lines.push(csv::header());
    for (row, (_, point)) in rows.iter().zip(points.iter()) {
        lines.push(csv::format_row(
            row.run_id,
            row.mode,
            csv::family_name(row.family),
            row.scale,
            point,
            &hash,
        ));
    }

    let csv_path = std::path::PathBuf::from(&cfg.output.path);
    if let Some(parent) = csv_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::fs::File::create(&csv_path)?;
    for line in &lines {
        writeln!(f, "{line}")?;
    }

    let sidecar_path = csv_path.with_extension("meta.json");
    // the shared-randomness rate R_c in bits/dim: log2(Γ) for the quantized
    // shared dither, 0 without shared randomness, unbounded for SD
    let row_meta: Vec<serde_json::Value> = rows
        .iter()
        .map(|row| {
            let r_c = match row.mode {
                ltc_core::codec::CodecMode::Deterministic
                | ltc_core::codec::CodecMode::Pd { .. } => serde_json::json!(0.0),
                ltc_core::codec::CodecMode::Sd => serde_json::json!("inf"),
                ltc_core::codec::CodecMode::Qsd { gamma, .. } => {
                    serde_json::json!((gamma as f64).log2())
                }
            };
            serde_json::json!({
                "run_id": row.run_id,
                "mode": row.mode.name(),
                "family": row.family.name(),
                "scale": row.scale,
                "shared_randomness_rate_bits": r_c,
            })
        })
        .collect();
    let sidecar = serde_json::json!({
        "config": cfg,
        "config_hash": hash,
        "seed": cfg.seed,
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "columns": csv::CSV_COLUMNS,
        "row_count": rows.len(),
        "rows": row_meta,
    });
    std::fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;

    Ok(EvalReport {
        csv_path,
        sidecar_path,
        rows: lines,
    })
}

/// Closed-form bound table: one row per D with `R(D, P)` for each requested
/// P and the no-shared-randomness reference `R(D/2, ∞)`. Domain errors
/// surface per-cell as `nan`.
pub fn cmd_bounds(sigma2: f64, d_grid: &[f64], p_list: &[f64]) -> Result<String> {
    let mut header = vec!["d".to_string()];
    for p in p_list {
        if p.is_infinite() {
            header.push("r_pinf".into());
        } else {
            header.push(format!("r_p{p}"));
        }
    }
    header.push("r_dhalf_pinf".into());
    let mut out = header.join(",");
    out.push('\n');
    for &d in d_grid {
        let mut cells = vec![format!("{d}")];
        for &p in p_list {
            match gaussian_rdp(sigma2, d, p) {
                Ok(r) => cells.push(format!("{r}")),
                Err(_) => cells.push("nan".into()),
            }
        }
        match gaussian_rdp(sigma2, d / 2.0, f64::INFINITY) {
            Ok(r) => cells.push(format!("{r}")),
            Err(_) => cells.push("nan".into()),
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// RCC baseline run; emits one RDPoint row in the standard CSV schema with
/// `mode = rcc`.
pub fn cmd_rcc(
    sigma2: f64,
    d: f64,
    p: f64,
    dim: usize,
    codebook: usize,
    trials: usize,
    seed: u64,
) -> Result<String> {
    let cfg = RccConfig {
        source: GaussianSpec::iid(dim, 0.0, sigma2)?,
        target_d: d,
        target_p: p,
        codebook_size: codebook,
        seed,
    };
    let point = rcc_evaluate(&cfg, trials)?;
    let mut h = Sha256::new();
    h.update(format!("rcc:{sigma2}:{d}:{p}:{dim}:{codebook}:{trials}:{seed}").as_bytes());
    let hash: String = h.finalize()[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let mut out = csv::header();
    out.push('\n');
    out.push_str(&format!(
        "0,{seed},rcc,,{dim},,,{},{},{},{},{},{},{},{},{},{},{hash}\n",
        point.rate_bits_per_dim,
        point.rate_se,
        point.mse_per_dim,
        point.mse_se,
        point.perception_per_dim,
        point.perception_se,
        point.perception_metric.name(),
        point.n_rate,
        point.n_dist,
        point.n_perc,
    ));
    Ok(out)
}

/// Monte-Carlo NSM for a named lattice.
pub fn cmd_nsm(family: &str, n: usize, scale: f64, samples: usize, seed: u64) -> Result<String> {
    let fam = LatticeFamily::parse(family)?;
    let lat = build_lattice(fam, n, scale)?;
    let (sm, sm_se) = lat.second_moment_mc(samples, &mut substream(seed, "nsm-sm", 0))?;
    let (g, g_se) = lat.nsm_mc(samples, &mut substream(seed, "nsm", 0))?;
    let mut out = String::from(
        "family,dim,scale,volume,second_moment,second_moment_se,nsm,nsm_se,samples,seed\n",
    );
    out.push_str(&format!(
        "{},{n},{scale},{},{sm},{sm_se},{g},{g_se},{samples},{seed}\n",
        fam.name(),
        lat.volume()
    ));
    Ok(out)
}

/// Shared-dither construction parameter table.
pub fn cmd_construct_sd(sigma2: f64, d: f64, p: f64) -> Result<String> {
    let c = sd_params(sigma2, d, p)?;
    let rate = gaussian_rdp(sigma2, d, p)?;
    let mut out = String::from(
        "sigma2,d,p,branch,lattice_second_moment,analysis_scale,synthesis_scale,rdp_bits\n",
    );
    out.push_str(&format!(
        "{sigma2},{d},{p},{:?},{},{},{},{rate}\n",
        c.branch, c.lattice_second_moment, c.analysis_scale, c.synthesis_scale
    ));
    Ok(out)
}

/// Private-dither construction parameter table.
pub fn cmd_construct_pd(sigma2: f64, d: f64) -> Result<String> {
    let c = pd_params(sigma2, d)?;
    let residual = ltc_core::theory::lemma_constraint_residual(sigma2, c.nu, c.s, c.beta);
    let reference = gaussian_rdp(sigma2, d / 2.0, f64::INFINITY)?;
    let mut out = String::from("sigma2,d,nu,alpha,beta,s,constraint_residual,r_dhalf_pinf_bits\n");
    out.push_str(&format!(
        "{sigma2},{d},{},{},{},{},{residual},{reference}\n",
        c.nu, c.alpha, c.beta, c.s
    ));
    Ok(out)
}

/// Lattice-Gaussian sampler diagnostics: support size, truncation bound, and
/// empirical moments against the Banaszczyk second-moment property.
pub fn cmd_diag_lattice_gaussian(
    family: &str,
    n: usize,
    scale: f64,
    sigma2: f64,
    samples: usize,
    seed: u64,
) -> Result<String> {
    let fam = LatticeFamily::parse(family)?;
    let lat = build_lattice(fam, n, scale)?;
    let center = vec![0.0; n];
    let lg = LatticeGaussian::new(&lat, &center, sigma2)?;
    let mut rng = substream(seed, "diag-lg", 0);
    let mut mean = vec![0.0; n];
    let mut mom2 = 0.0;
    for _ in 0..samples {
        let y = lg.sample(&mut rng);
        for (m, v) in mean.iter_mut().zip(&y.embedding) {
            *m += v;
        }
        mom2 += y.embedding.iter().map(|v| v * v).sum::<f64>() / n as f64;
    }
    for m in mean.iter_mut() {
        *m /= samples as f64;
    }
    mom2 /= samples as f64;
    let mean_norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = String::from(
        "family,dim,scale,sigma2,support_size,truncation_mass_bound,empirical_mean_norm,per_dim_second_moment,samples,seed\n",
    );
    out.push_str(&format!(
        "{},{n},{scale},{sigma2},{},{:e},{mean_norm},{mom2},{samples},{seed}\n",
        fam.name(),
        lg.support_size(),
        lg.truncation_mass_bound,
    ));
    Ok(out)
}

/// Flatness-factor diagnostics over a gamma list.
pub fn cmd_diag_flatness(
    family: &str,
    n: usize,
    scale: f64,
    gammas: &[f64],
    probes: usize,
    seed: u64,
) -> Result<String> {
    let fam = LatticeFamily::parse(family)?;
    let lat = build_lattice(fam, n, scale)?;
    let mut out = String::from(
        "family,dim,scale,gamma,flatness_lower_bound,truncation_error_bound,probes,seed\n",
    );
    for (i, &g) in gammas.iter().enumerate() {
        let f = flatness_estimate(&lat, g, probes, &mut substream(seed, "diag-flat", i as u64))?;
        out.push_str(&format!(
            "{},{n},{scale},{g},{},{:e},{},{seed}\n",
            fam.name(),
            f.lower_bound,
            f.truncation_error_bound,
            f.probes_used
        ));
    }
    Ok(out)
}

/// Run the reduced-budget verification suites; `Err(SelftestFailed)` lists
/// the violated invariants.
pub fn cmd_selftest(seed: u64, quick: bool) -> Result<String> {
    let suites = crate::selftest::run_selftest(seed, quick);
    let mut out = String::new();
    let mut failures = Vec::new();
    for s in &suites {
        out.push_str(&format!(
            "{}: {} ({})\n",
            s.name,
            if s.pass { "PASS" } else { "FAIL" },
            s.detail
        ));
        if !s.pass {
            failures.push(format!("{}: {}", s.name, s.detail));
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(CliError::SelftestFailed(failures.join("; ")))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("json serialization: {e}"))
    }
}
