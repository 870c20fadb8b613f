//! The stable CSV row contract for RDP result emission.

use ltc_core::codec::{CodecMode, RDPoint};
use ltc_core::lattice::LatticeFamily;

/// Exactly these columns, in this order.
pub const CSV_COLUMNS: [&str; 18] = [
    "run_id",
    "seed",
    "mode",
    "lattice_family",
    "lattice_scale",
    "gamma",
    "s",
    "rate_bits_per_dim",
    "rate_se",
    "mse_per_dim",
    "mse_se",
    "perception_per_dim",
    "perception_se",
    "perception_metric",
    "n_rate",
    "n_dist",
    "n_perc",
    "config_hash",
];

pub fn header() -> String {
    CSV_COLUMNS.join(",")
}

pub fn format_row(
    run_id: usize,
    mode: CodecMode,
    family_name: &str,
    scale: f64,
    point: &RDPoint,
    config_hash: &str,
) -> String {
    let (gamma, s) = match mode {
        CodecMode::Deterministic | CodecMode::Sd => (String::new(), String::new()),
        CodecMode::Pd { s } => (String::new(), format!("{s}")),
        CodecMode::Qsd { gamma, s } => (format!("{gamma}"), format!("{s}")),
    };
    format!(
        "{run_id},{seed},{mode},{family},{scale},{gamma},{s},{rate},{rate_se},{mse},{mse_se},{perc},{perc_se},{metric},{n_rate},{n_dist},{n_perc},{hash}",
        seed = point.seed,
        mode = mode.name(),
        family = family_name,
        scale = scale,
        rate = point.rate_bits_per_dim,
        rate_se = point.rate_se,
        mse = point.mse_per_dim,
        mse_se = point.mse_se,
        perc = point.perception_per_dim,
        perc_se = point.perception_se,
        metric = point.perception_metric.name(),
        n_rate = point.n_rate,
        n_dist = point.n_dist,
        n_perc = point.n_perc,
        hash = config_hash,
    )
}

pub fn family_name(f: LatticeFamily) -> &'static str {
    f.name()
}
