//! The dithered compressor pipelines (shared-, private-, and
//! quantized-shared-dither) plus the deterministic baseline, their
//! reconstructions, and their operational rate estimators.
//!
//! Encoder/decoder conventions, with y = g_a(x) and lattice quantizer Q:
//! - deterministic: c = Q(y), x̂ = g_s(c)
//! - private dither (PD): c = Q(y), x̂ = g_s(c + s·u), u private cell-uniform
//! - shared dither (SD): c = Q(y - u), x̂ = g_s(c + u), u shared cell-uniform
//! - quantized shared dither (QSD): c = Q(y - û), x̂ = g_s(c + û + s·u_f),
//!   û shared coset-uniform over Λ/Λ_f, u_f private cell-uniform on Λ_f.
//!
//! Rates are information-theoretic (no bitstream coder): conditional entropy
//! H(c|dither) for SD/QSD via Monte-Carlo cell integrals of the analytic
//! latent density, plug-in entropy H(ŷ) for deterministic/PD.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::dither::{mod_lattice, sample_cell_uniform, NestedPair};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, LatticePoint};
use crate::metrics::{gaussian_w2sq_from_moments, sliced_w2sq, GaussianSpec};
use crate::rng::substream;

/// Dense affine map `y = A x + b` (rows of `matrix` are output components).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTransform {
    matrix: Vec<f64>,
    n_out: usize,
    n_in: usize,
    offset: Vec<f64>,
}

impl AffineTransform {
    pub fn new(matrix: Vec<f64>, n_out: usize, n_in: usize, offset: Vec<f64>) -> Result<Self> {
        if matrix.len() != n_out * n_in || offset.len() != n_out {
            return Err(Error::Config("affine transform shape mismatch".into()));
        }
        if matrix.iter().chain(&offset).any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "affine transform entries must be finite".into(),
            ));
        }
        Ok(AffineTransform {
            matrix,
            n_out,
            n_in,
            offset,
        })
    }

    /// `y = c x` on `dim` coordinates.
    pub fn scalar(dim: usize, c: f64) -> Self {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = c;
        }
        AffineTransform {
            matrix: m,
            n_out: dim,
            n_in: dim,
            offset: vec![0.0; dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.offset.clone();
        for i in 0..self.n_out {
            let row = &self.matrix[i * self.n_in..(i + 1) * self.n_in];
            y[i] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        y
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.n_in..(i + 1) * self.n_in]
    }
}

/// Analytic Gaussian latent density of `y = g_a(x)` for a Gaussian source
/// under an affine analysis transform with (effectively) diagonal image
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDensity {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl LatentDensity {
    /// Derive the latent Gaussian from the source and analysis transform.
    /// Errors if `A diag(Σ) A^T` has off-diagonal mass (the analytic density
    /// only covers the product case; all closed-form constructions are
    /// scalar).
    pub fn from_source(source: &GaussianSpec, analysis: &AffineTransform) -> Result<Self> {
        if analysis.n_in() != source.dim() {
            return Err(Error::Config(
                "analysis input dimension != source dimension".into(),
            ));
        }
        let n = analysis.n_out();
        let mean = analysis.apply(&source.mean);
        let mut var = vec![0.0; n];
        for i in 0..n {
            let ri = analysis.row(i);
            var[i] = ri
                .iter()
                .zip(&source.diag_cov)
                .map(|(a, v)| a * a * v)
                .sum();
            if var[i] <= 0.0 {
                return Err(Error::Config(
                    "latent covariance must be positive on the diagonal".into(),
                ));
            }
            for j in 0..i {
                let rj = analysis.row(j);
                let off: f64 = ri
                    .iter()
                    .zip(rj)
                    .zip(&source.diag_cov)
                    .map(|((a, b), v)| a * b * v)
                    .sum();
                if off.abs() > 1e-9 * (var[i].max(1.0)) {
                    return Err(Error::Config(
                        "analysis transform induces a non-diagonal latent covariance".into(),
                    ));
                }
            }
        }
        Ok(LatentDensity { mean, var })
    }

    pub fn log_pdf(&self, y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&m, &v), &yi) in self.mean.iter().zip(&self.var).zip(y) {
            let d = yi - m;
            acc += -0.5 * (d * d / v + (2.0 * std::f64::consts::PI * v).ln());
        }
        acc
    }
}

/// Codec mode with its mode-specific parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CodecMode {
    Deterministic,
    /// Private decoder-side dither scaled by `s >= 1`.
    Pd {
        s: f64,
    },
    /// Continuous shared dither.
    Sd,
    /// Discrete shared dither over Λ/Λ_f plus private fine dither scaled by
    /// `s >= 1`.
    Qsd {
        gamma: u32,
        s: f64,
    },
}

impl CodecMode {
    pub fn name(&self) -> &'static str {
        match self {
            CodecMode::Deterministic => "deterministic",
            CodecMode::Pd { .. } => "pd",
            CodecMode::Sd => "sd",
            CodecMode::Qsd { .. } => "qsd",
        }
    }
}

/// One compressor: mode, lattice, transforms, and the analytic latent.
#[derive(Debug, Clone)]
pub struct CodecConfig {
    pub mode: CodecMode,
    pub lattice: Lattice,
    pub analysis: AffineTransform,
    pub synthesis: AffineTransform,
    pub latent: LatentDensity,
}

impl CodecConfig {
    /// Build a config for a given source, deriving the latent density.
    pub fn for_source(
        mode: CodecMode,
        lattice: Lattice,
        analysis: AffineTransform,
        synthesis: AffineTransform,
        source: &GaussianSpec,
    ) -> Result<Self> {
        let latent = LatentDensity::from_source(source, &analysis)?;
        let cfg = CodecConfig {
            mode,
            lattice,
            analysis,
            synthesis,
            latent,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lattice.dim();
        if self.analysis.n_out() != n {
            return Err(Error::Config(
                "analysis output dimension != lattice dimension".into(),
            ));
        }
        if self.synthesis.n_in() != n {
            return Err(Error::Config(
                "synthesis input dimension != lattice dimension".into(),
            ));
        }
        if self.latent.mean.len() != n {
            return Err(Error::Config(
                "latent dimension != lattice dimension".into(),
            ));
        }
        match self.mode {
            CodecMode::Pd { s } => {
                // s < 1 leaves gaps in the reconstruction support inside each
                // cell; rejected at validation.
                if !(s >= 1.0) || !s.is_finite() {
                    return Err(Error::Config(format!("PD requires s >= 1, got {s}")));
                }
            }
            CodecMode::Qsd { gamma, s } => {
                if gamma < 1 {
                    return Err(Error::Config("QSD requires gamma >= 1".into()));
                }
                if !(s >= 1.0) || !s.is_finite() {
                    return Err(Error::Config(format!("QSD requires s >= 1, got {s}")));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Shared-dither record carried from encoder to decoder.
#[derive(Debug, Clone, PartialEq)]
pub enum DitherRecord {
    /// Deterministic and PD modes: the encoder uses no randomness.
    None,
    /// SD: the continuous shared dither vector.
    SharedCell(Vec<f64>),
    /// QSD: the index of the shared coset dither.
    SharedCoset(usize),
}

/// Mode after Γ=1 normalization: QSD with a single coset *is* PD (û = 0,
/// Λ_f = Λ), and routing it through the PD code path makes the equivalence
/// bit-exact under shared seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
enum EffectiveMode {
    Deterministic,
    Pd { s: f64 },
    Sd,
    Qsd { s: f64 },
}

/// A runnable codec: validated config plus precomputed coset structure.
#[derive(Debug, Clone)]
pub struct Codec {
    config: CodecConfig,
    effective: EffectiveMode,
    nested: Option<NestedPair>,
}

impl Codec {
    pub fn new(config: CodecConfig) -> Result<Self> {
        config.validate()?;
        let (effective, nested) = match config.mode {
            CodecMode::Deterministic => (EffectiveMode::Deterministic, None),
            CodecMode::Pd { s } => (EffectiveMode::Pd { s }, None),
            CodecMode::Sd => (EffectiveMode::Sd, None),
            CodecMode::Qsd { gamma: 1, s } => (EffectiveMode::Pd { s }, None),
            CodecMode::Qsd { gamma, s } => {
                let pair = NestedPair::new(config.lattice.clone(), gamma)?;
                (EffectiveMode::Qsd { s }, Some(pair))
            }
        };
        Ok(Codec {
            config,
            effective,
            nested,
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn nested_pair(&self) -> Option<&NestedPair> {
        self.nested.as_ref()
    }

    fn lattice(&self) -> &Lattice {
        &self.config.lattice
    }

    /// Encode one source vector. Returns the codeword and the shared-dither
    /// record the decoder needs.
    pub fn encode(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<(LatticePoint, DitherRecord)> {
        if x.len() != self.config.analysis.n_in() {
            return Err(Error::Input("source vector has wrong dimension".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite source vector".into()));
        }
        let y = self.config.analysis.apply(x);
        match self.effective {
            EffectiveMode::Deterministic | EffectiveMode::Pd { .. } => {
                Ok((self.lattice().nearest_point(&y)?, DitherRecord::None))
            }
            EffectiveMode::Sd => {
                let u = sample_cell_uniform(self.lattice(), rng);
                let shifted: Vec<f64> = y.iter().zip(&u).map(|(a, b)| a - b).collect();
                Ok((
                    self.lattice().nearest_point(&shifted)?,
                    DitherRecord::SharedCell(u),
                ))
            }
            EffectiveMode::Qsd { .. } => {
                let pair = self.nested.as_ref().unwrap();
                let (idx, rep) = pair.sample_coset_uniform(rng);
                let shifted: Vec<f64> = y.iter().zip(rep).map(|(a, b)| a - b).collect();
                Ok((
                    self.lattice().nearest_point(&shifted)?,
                    DitherRecord::SharedCoset(idx),
                ))
            }
        }
    }

    /// Decode a codeword back to a reconstruction, drawing any private dither
    /// from `rng`.
    pub fn decode(
        &self,
        codeword: &LatticePoint,
        record: &DitherRecord,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let n = self.lattice().dim();
        if codeword.embedding.len() != n {
            return Err(Error::Input("codeword has wrong dimension".into()));
        }
        let z = match (self.effective, record) {
            (EffectiveMode::Deterministic, DitherRecord::None) => codeword.embedding.clone(),
            (EffectiveMode::Pd { s }, DitherRecord::None) => {
                let u = sample_cell_uniform(self.lattice(), rng);
                codeword
                    .embedding
                    .iter()
                    .zip(&u)
                    .map(|(c, ui)| c + s * ui)
                    .collect()
            }
            (EffectiveMode::Sd, DitherRecord::SharedCell(u)) => {
                if u.len() != n {
                    return Err(Error::Protocol("shared dither has wrong dimension".into()));
                }
                codeword
                    .embedding
                    .iter()
                    .zip(u)
                    .map(|(c, ui)| c + ui)
                    .collect()
            }
            (EffectiveMode::Qsd { s }, DitherRecord::SharedCoset(idx)) => {
                let pair = self.nested.as_ref().unwrap();
                let rep = pair.representative(*idx)?;
                let uf = sample_cell_uniform(pair.fine(), rng);
                codeword
                    .embedding
                    .iter()
                    .zip(rep)
                    .zip(&uf)
                    .map(|((c, r), u)| c + r + s * u)
                    .collect()
            }
            _ => {
                return Err(Error::Protocol(format!(
                    "dither record {record:?} does not match mode {}",
                    self.config.mode.name()
                )))
            }
        };
        Ok(self.config.synthesis.apply(&z))
    }

    /// Encode-then-decode convenience.
    pub fn roundtrip(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let (c, rec) = self.encode(x, rng)?;
        self.decode(&c, &rec, rng)
    }

    fn check_latent(&self, source: &GaussianSpec) -> Result<()> {
        let derived = LatentDensity::from_source(source, &self.config.analysis)?;
        let ok = derived
            .mean
            .iter()
            .zip(&self.config.latent.mean)
            .all(|(a, b)| (a - b).abs() < 1e-9)
            && derived
                .var
                .iter()
                .zip(&self.config.latent.var)
                .all(|(a, b)| (a - b).abs() < 1e-9 * a.max(1.0));
        if !ok {
            return Err(Error::Contract(
                "latent density inconsistent with (source, analysis transform)".into(),
            ));
        }
        Ok(())
    }

    /// Conditional-entropy rate H(c|dither) in bits per dimension, for SD and
    /// QSD. Outer loop samples (x, dither); the inner loop estimates the cell
    /// integral Pr[c|dither] = V(Λ)·E_{u'}[p_y(c + dither + u')] over fresh
    /// cell-uniform u'. The log of an inner Monte-Carlo average is biased
    /// upward at small `n_inner`; see [`Codec::rate_inner_bias_shift`].
    pub fn rate_conditional_mc(
        &self,
        source: &GaussianSpec,
        n_outer: usize,
        n_inner: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<RateEstimate> {
        match self.config.mode {
            CodecMode::Sd | CodecMode::Qsd { .. } => {}
            _ => {
                return Err(Error::Contract(
                    "rate_conditional_mc applies to SD and QSD modes".into(),
                ))
            }
        }
        if n_outer < 1000 || n_inner < 64 {
            return Err(Error::Input(
                "need n_outer >= 1000 and n_inner >= 64".into(),
            ));
        }
        self.check_latent(source)?;
        self.rate_cell_integral(source, n_outer, n_inner, rng, true)
    }

    /// Noisy-proxy rate (additive channel equivalence), SD only: the same
    /// estimator shape evaluated at y + u + u' with no quantizer call. For
    /// QSD the equivalence does not hold and the call is rejected.
    pub fn rate_noisy_proxy_mc(
        &self,
        source: &GaussianSpec,
        n_outer: usize,
        n_inner: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<RateEstimate> {
        if !matches!(self.config.mode, CodecMode::Sd) {
            return Err(Error::Contract(
                "rate_noisy_proxy_mc applies to SD only (additive equivalence)".into(),
            ));
        }
        if n_outer < 1000 || n_inner < 64 {
            return Err(Error::Input(
                "need n_outer >= 1000 and n_inner >= 64".into(),
            ));
        }
        self.check_latent(source)?;
        self.rate_cell_integral(source, n_outer, n_inner, rng, false)
    }

    fn rate_cell_integral(
        &self,
        source: &GaussianSpec,
        n_outer: usize,
        n_inner: usize,
        rng: &mut ChaCha8Rng,
        quantize: bool,
    ) -> Result<RateEstimate> {
        let lat = self.lattice();
        let n = lat.dim() as f64;
        let log_v = lat.volume().ln();
        let log_floor = 1e-300f64.ln();
        let ln2 = std::f64::consts::LN_2;
        // Two regimes for the inner cell integral ∫_{V0+z} p_y:
        // fine/moderate cells average p_y over cell-uniform u' (times V);
        // very coarse cells (width >~ 8 latent sigmas) would need ~V/mass
        // uniform samples to see the mass at all, so there the same integral
        // is estimated in indicator form Pr_{y'~p_y}[y' - z in V0].
        let max_var = self.config.latent.var.iter().cloned().fold(0.0, f64::max);
        let coarse = lat.volume().powf(2.0 / n) > 64.0 * max_var;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut clamped = 0u64;
        let mut logs = vec![0.0; n_inner];
        let latent_spec = GaussianSpec::new(
            self.config.latent.mean.clone(),
            self.config.latent.var.clone(),
        )?;
        for _ in 0..n_outer {
            let x = source.sample(rng);
            let y = self.config.analysis.apply(&x);
            let dither: Vec<f64> = match self.effective {
                EffectiveMode::Sd => sample_cell_uniform(lat, rng),
                EffectiveMode::Qsd { .. } => {
                    let (_, rep) = self.nested.as_ref().unwrap().sample_coset_uniform(rng);
                    rep.to_vec()
                }
                // Γ=1: û = 0 and H(c|û) = H(c).
                EffectiveMode::Pd { .. } | EffectiveMode::Deterministic => vec![0.0; lat.dim()],
            };
            let z: Vec<f64> = if quantize {
                let shifted: Vec<f64> = y.iter().zip(&dither).map(|(a, b)| a - b).collect();
                let c = lat.nearest_point(&shifted)?;
                c.embedding
                    .iter()
                    .zip(&dither)
                    .map(|(a, b)| a + b)
                    .collect()
            } else {
                let u = sample_cell_uniform(lat, rng);
                y.iter().zip(&u).map(|(a, b)| a + b).collect()
            };
            let mut log_prob = if coarse {
                let mut hits = 0usize;
                for _ in 0..n_inner {
                    let yp = latent_spec.sample(rng);
                    let shifted: Vec<f64> = yp.iter().zip(&z).map(|(a, b)| a - b).collect();
                    if lat.nearest_point(&shifted)?.coords.iter().all(|&k| k == 0) {
                        hits += 1;
                    }
                }
                // Krichevsky-Trofimov smoothing keeps -log finite when a
                // boundary-straddling cell sees no hits.
                ((hits as f64 + 0.5) / (n_inner as f64 + 1.0)).ln()
            } else {
                for slot in logs.iter_mut() {
                    let up = sample_cell_uniform(lat, rng);
                    let point: Vec<f64> = z.iter().zip(&up).map(|(a, b)| a + b).collect();
                    *slot = self.config.latent.log_pdf(&point);
                }
                // log of the inner average via log-sum-exp, then the
                // cell-volume factor turns the average into the cell integral.
                let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                lse - (n_inner as f64).ln() + log_v
            };
            if log_prob < log_floor {
                log_prob = log_floor;
                clamped += 1;
            }
            // probability mass: guard against a cell integral estimate > 1
            let bits = (-log_prob / ln2).max(0.0) / n;
            sum += bits;
            sum_sq += bits * bits;
        }
        let m = n_outer as f64;
        let mean = sum / m;
        let var = ((sum_sq / m - mean * mean) * m / (m - 1.0)).max(0.0);
        Ok(RateEstimate {
            bits_per_dim: mean,
            se: (var / m).sqrt(),
            clamped_inner: clamped,
            distinct_codewords: None,
            plugin_bias_flagged: false,
        })
    }

    /// Doubling diagnostic for the inner-MC bias: returns
    /// `rate(n_inner) - rate(2·n_inner)` on a common outer budget (shared
    /// substreams), an estimate of the upward bias at `n_inner`.
    pub fn rate_inner_bias_shift(
        &self,
        source: &GaussianSpec,
        n_outer: usize,
        n_inner: usize,
        seed: u64,
    ) -> Result<f64> {
        let a = self.rate_cell_integral(
            source,
            n_outer,
            n_inner,
            &mut substream(seed, "rate-bias", 1),
            true,
        )?;
        let b = self.rate_cell_integral(
            source,
            n_outer,
            2 * n_inner,
            &mut substream(seed, "rate-bias", 1),
            true,
        )?;
        Ok(a.bits_per_dim - b.bits_per_dim)
    }

    /// Plug-in entropy rate H(ŷ) for deterministic and PD modes (the PD
    /// encoder is the deterministic encoder; the dither is decoder-side).
    /// Standard error by delete-one-block jackknife over 10 blocks. Plug-in
    /// entropy is negatively biased; flagged when the distinct-codeword count
    /// exceeds n_samples/20.
    pub fn rate_plugin_entropy(
        &self,
        source: &GaussianSpec,
        n_samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<RateEstimate> {
        match self.effective {
            EffectiveMode::Deterministic | EffectiveMode::Pd { .. } => {}
            _ => {
                return Err(Error::Contract(
                    "rate_plugin_entropy applies to deterministic and PD modes".into(),
                ))
            }
        }
        if n_samples < 10_000 {
            return Err(Error::Input("need n_samples >= 10^4".into()));
        }
        self.check_latent(source)?;
        let lat = self.lattice();
        let n = lat.dim() as f64;
        const BLOCKS: usize = 10;
        let mut totals: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
        let mut blocks: Vec<BTreeMap<Vec<i64>, u64>> = vec![BTreeMap::new(); BLOCKS];
        for i in 0..n_samples {
            let x = source.sample(rng);
            let y = self.config.analysis.apply(&x);
            let c = lat.nearest_point(&y)?;
            let b = i * BLOCKS / n_samples;
            *totals.entry(c.coords.clone()).or_insert(0) += 1;
            *blocks[b].entry(c.coords).or_insert(0) += 1;
        }
        let entropy_bits = |counts: &BTreeMap<Vec<i64>, u64>, total: f64| -> f64 {
            let mut h = 0.0;
            for &c in counts.values() {
                if c == 0 {
                    continue;
                }
                let p = c as f64 / total;
                h -= p * p.log2();
            }
            h / n
        };
        let h = entropy_bits(&totals, n_samples as f64);
        // jackknife over blocks
        let mut loo = Vec::with_capacity(BLOCKS);
        for b in &blocks {
            let block_total: u64 = b.values().sum();
            let mut rest = totals.clone();
            for (k, v) in b {
                if let Some(slot) = rest.get_mut(k) {
                    *slot -= v;
                }
            }
            loo.push(entropy_bits(&rest, (n_samples as u64 - block_total) as f64));
        }
        let loo_mean = loo.iter().sum::<f64>() / BLOCKS as f64;
        let se = ((BLOCKS - 1) as f64 / BLOCKS as f64
            * loo
                .iter()
                .map(|v| (v - loo_mean) * (v - loo_mean))
                .sum::<f64>())
        .sqrt();
        let distinct = totals.len();
        Ok(RateEstimate {
            bits_per_dim: h,
            se,
            clamped_inner: 0,
            distinct_codewords: Some(distinct),
            plugin_bias_flagged: distinct > n_samples / 20,
        })
    }

    /// Full operational evaluation: mode-appropriate rate, fresh-roundtrip
    /// distortion, and perception on paired fresh sample sets. Deterministic
    /// for a fixed seed and budgets; rate/distortion/perception use
    /// independent substreams of `seed`.
    pub fn evaluate(
        &self,
        source: &GaussianSpec,
        budget: &EvalBudget,
        metric: PerceptionMetric,
        seed: u64,
    ) -> Result<RDPoint> {
        budget.validate()?;
        if self.config.synthesis.n_out() != source.dim() {
            return Err(Error::Config(
                "synthesis output dimension != source dimension".into(),
            ));
        }
        let rate = match self.effective {
            EffectiveMode::Deterministic | EffectiveMode::Pd { .. } => self.rate_plugin_entropy(
                source,
                budget.rate_plugin,
                &mut substream(seed, "rate", 0),
            )?,
            EffectiveMode::Sd | EffectiveMode::Qsd { .. } => self.rate_conditional_mc(
                source,
                budget.rate_outer,
                budget.rate_inner,
                &mut substream(seed, "rate", 0),
            )?,
        };
        let n_rate = match self.effective {
            EffectiveMode::Deterministic | EffectiveMode::Pd { .. } => budget.rate_plugin,
            _ => budget.rate_outer,
        };

        // distortion on fresh roundtrips
        let mut rng_d = substream(seed, "dist", 0);
        let n = source.dim() as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..budget.distortion {
            let x = source.sample(&mut rng_d);
            let xh = self.roundtrip(&x, &mut rng_d)?;
            let v = x
                .iter()
                .zip(&xh)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n;
            sum += v;
            sum_sq += v * v;
        }
        let m = budget.distortion as f64;
        let mse = sum / m;
        let mse_var = ((sum_sq / m - mse * mse) * m / (m - 1.0)).max(0.0);
        let mse_se = (mse_var / m).sqrt();

        // perception on paired fresh sets of equal size
        let mut rng_p = substream(seed, "perc", 0);
        let src_batch: Vec<Vec<f64>> = (0..budget.perception)
            .map(|_| source.sample(&mut rng_p))
            .collect();
        let rec_batch: Vec<Vec<f64>> = (0..budget.perception)
            .map(|_| {
                let x = source.sample(&mut rng_p);
                self.roundtrip(&x, &mut rng_p)
            })
            .collect::<Result<_>>()?;
        let (perc, perc_se) = match metric {
            PerceptionMetric::SlicedW2Sq => {
                sliced_w2sq(&src_batch, &rec_batch, budget.projections, &mut rng_p)?
            }
            PerceptionMetric::ExactGaussianW2Sq => {
                let (mean, var) = GaussianSpec::from_moments(&rec_batch)?;
                let v = gaussian_w2sq_from_moments(&source.mean, &source.diag_cov, &mean, &var)?;
                // delete-one-block jackknife on the reconstruction batch
                const BLOCKS: usize = 10;
                let bs = rec_batch.len() / BLOCKS;
                let mut loo = Vec::with_capacity(BLOCKS);
                for b in 0..BLOCKS {
                    let rest: Vec<Vec<f64>> = rec_batch
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| i / bs.max(1) != b)
                        .map(|(_, v)| v.clone())
                        .collect();
                    let (mm, vv) = GaussianSpec::from_moments(&rest)?;
                    loo.push(gaussian_w2sq_from_moments(
                        &source.mean,
                        &source.diag_cov,
                        &mm,
                        &vv,
                    )?);
                }
                let lm = loo.iter().sum::<f64>() / BLOCKS as f64;
                let se = ((BLOCKS - 1) as f64 / BLOCKS as f64
                    * loo.iter().map(|x| (x - lm) * (x - lm)).sum::<f64>())
                .sqrt();
                (v, se)
            }
        };

        Ok(RDPoint {
            rate_bits_per_dim: rate.bits_per_dim,
            rate_se: rate.se,
            mse_per_dim: mse,
            mse_se,
            perception_per_dim: perc,
            perception_se: perc_se,
            perception_metric: metric,
            n_rate,
            n_dist: budget.distortion,
            n_perc: budget.perception,
            seed,
            rate_clamped_inner: rate.clamped_inner,
        })
    }
}

/// Rate estimate with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub bits_per_dim: f64,
    pub se: f64,
    /// Number of outer samples whose inner cell-integral underflowed the
    /// probability floor (1e-300).
    pub clamped_inner: u64,
    /// Plug-in path: number of distinct codewords observed.
    pub distinct_codewords: Option<usize>,
    /// Plug-in path: set when the support size makes the negative bias of
    /// plug-in entropy worth noting (distinct > n/20).
    pub plugin_bias_flagged: bool,
}

/// Which perception metric `evaluate` reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerceptionMetric {
    SlicedW2Sq,
    ExactGaussianW2Sq,
}

impl PerceptionMetric {
    pub fn name(&self) -> &'static str {
        match self {
            PerceptionMetric::SlicedW2Sq => "sliced_w2sq",
            PerceptionMetric::ExactGaussianW2Sq => "exact_gaussian_w2sq",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sliced_w2sq" => Ok(PerceptionMetric::SlicedW2Sq),
            "exact_gaussian_w2sq" => Ok(PerceptionMetric::ExactGaussianW2Sq),
            other => Err(Error::Config(format!(
                "unknown perception metric '{other}'"
            ))),
        }
    }
}

/// Sample budgets for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBudget {
    pub rate_outer: usize,
    pub rate_inner: usize,
    pub rate_plugin: usize,
    pub distortion: usize,
    pub perception: usize,
    pub projections: usize,
}

impl Default for EvalBudget {
    fn default() -> Self {
        EvalBudget {
            rate_outer: 4000,
            rate_inner: 256,
            rate_plugin: 200_000,
            distortion: 100_000,
            perception: 10_000,
            projections: 50,
        }
    }
}

impl EvalBudget {
    pub fn validate(&self) -> Result<()> {
        if self.rate_outer < 1000 || self.rate_inner < 64 {
            return Err(Error::Config(
                "rate budget too small (outer >= 1000, inner >= 64)".into(),
            ));
        }
        if self.rate_plugin < 10_000 {
            return Err(Error::Config("plug-in rate budget must be >= 10^4".into()));
        }
        if self.distortion < 100 {
            return Err(Error::Config("distortion budget must be >= 100".into()));
        }
        // perception estimation pairs two equal-size sample sets
        if self.perception < 100 {
            return Err(Error::Config("perception budget must be >= 100".into()));
        }
        if self.projections == 0 {
            return Err(Error::Config("need at least one projection".into()));
        }
        Ok(())
    }
}

/// An operational (rate, distortion, perception) triple with Monte-Carlo
/// standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RDPoint {
    pub rate_bits_per_dim: f64,
    pub rate_se: f64,
    pub mse_per_dim: f64,
    pub mse_se: f64,
    pub perception_per_dim: f64,
    pub perception_se: f64,
    pub perception_metric: PerceptionMetric,
    pub n_rate: usize,
    pub n_dist: usize,
    pub n_perc: usize,
    pub seed: u64,
    pub rate_clamped_inner: u64,
}

/// Monte-Carlo check of the PD/SD error decomposition
/// `E||x - x̂_PD||² = s²·E||x - x̂_SD||² + E||x - Q(x)||²`
/// on shared standard-normal inputs with identity transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct PdSdIdentityReport {
    pub pd_mse_per_dim: f64,
    pub sd_mse_per_dim: f64,
    pub det_mse_per_dim: f64,
    /// Mean of (pd - s²·sd - det) per dimension, paired per sample.
    pub residual: f64,
    pub residual_se: f64,
}

pub fn verify_pd_sd_identity(
    lattice: &Lattice,
    s: f64,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PdSdIdentityReport> {
    if !(s >= 1.0) {
        return Err(Error::Config(format!(
            "identity check requires s >= 1, got {s}"
        )));
    }
    if n_samples < 1000 {
        return Err(Error::Input("need at least 1000 samples".into()));
    }
    let n = lattice.dim();
    let source = GaussianSpec::iid(n, 0.0, 1.0)?;
    let nf = n as f64;
    let (mut pd, mut sd, mut det) = (0.0, 0.0, 0.0);
    let mut res_sum = 0.0;
    let mut res_sq = 0.0;
    for _ in 0..n_samples {
        let x = source.sample(rng);
        let q = lattice.nearest_point(&x)?;
        let u1 = sample_cell_uniform(lattice, rng);
        let u2 = sample_cell_uniform(lattice, rng);
        let a = x
            .iter()
            .zip(&q.embedding)
            .zip(&u1)
            .map(|((xi, qi), ui)| {
                let d = xi - qi - s * ui;
                d * d
            })
            .sum::<f64>()
            / nf;
        let shifted: Vec<f64> = x.iter().zip(&u2).map(|(a, b)| a - b).collect();
        let b = mod_lattice(lattice, &shifted)?
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            / nf;
        let c = x
            .iter()
            .zip(&q.embedding)
            .map(|(xi, qi)| (xi - qi) * (xi - qi))
            .sum::<f64>()
            / nf;
        pd += a;
        sd += b;
        det += c;
        let r = a - s * s * b - c;
        res_sum += r;
        res_sq += r * r;
    }
    let m = n_samples as f64;
    let res_mean = res_sum / m;
    let res_var = ((res_sq / m - res_mean * res_mean) * m / (m - 1.0)).max(0.0);
    Ok(PdSdIdentityReport {
        pd_mse_per_dim: pd / m,
        sd_mse_per_dim: sd / m,
        det_mse_per_dim: det / m,
        residual: res_mean,
        residual_se: (res_var / m).sqrt(),
    })
}
