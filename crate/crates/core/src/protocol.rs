//! The correlated Gaussian source model, the one-round key generation
//! protocol (dithered randomized quantization, Wyner-Ziv style public
//! message, modulo extraction), the eavesdropper's analytic key posterior,
//! and the rate trade-off formulas.

use nalgebra::{DVector, Matrix3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chain::NestedChain;
use crate::error::{Error, Result};
use crate::flatness::{l1_flatness, FlatnessReport, L1Method};
use crate::gauss::DiscreteGaussian;
use crate::lattice::{CosetTable, RegionKind};
use crate::rng::stream;
use crate::stats::Estimate;

/// Jointly Gaussian zero-mean triple (X, Y, Z) described by standard
/// deviations and pairwise correlations, with the derived conditional noise
/// scales sigma_1 (Bob) and sigma_2 (Eve).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSourceModel {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
    pub rho_xy: f64,
    pub rho_xz: f64,
    pub rho_yz: f64,
    pub sigma_1: f64,
    pub sigma_2: f64,
    pub sigma_hat_y: f64,
    pub sigma_hat_z: f64,
}

impl GaussianSourceModel {
    /// Builds the model; `rho_yz = None` selects the degraded-equivalent
    /// value rho_xz / rho_xy for which the one-way protocol's hypotheses hold
    /// by construction. An explicit admissible rho_yz is accepted with a
    /// warning.
    pub fn new(
        sigma_x: f64,
        sigma_y: f64,
        sigma_z: f64,
        rho_xy: f64,
        rho_xz: f64,
        rho_yz: Option<f64>,
    ) -> Result<Self> {
        for (name, s) in [("sigma_x", sigma_x), ("sigma_y", sigma_y), ("sigma_z", sigma_z)] {
            if !(s > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        for (name, r) in [("rho_xy", rho_xy), ("rho_xz", rho_xz)] {
            if !(r.abs() < 1.0) {
                return Err(Error::InvalidParameter(format!("|{name}| must be below 1")));
            }
        }
        if rho_xz.abs() >= rho_xy.abs() {
            return Err(Error::NotDegradable);
        }
        let derived_rho_yz = rho_xz / rho_xy;
        let rho_yz = match rho_yz {
            None => derived_rho_yz,
            Some(r) => {
                if !(r.abs() <= 1.0) {
                    return Err(Error::InvalidParameter("|rho_yz| must be at most 1".into()));
                }
                if (r - derived_rho_yz).abs() > 1e-12 {
                    log::warn!(
                        "rho_yz = {r} differs from the degraded-equivalent value {derived_rho_yz}; \
                         the achievability hypotheses are not guaranteed"
                    );
                }
                r
            }
        };
        let det = 1.0 + 2.0 * rho_xy * rho_xz * rho_yz
            - rho_xy * rho_xy
            - rho_xz * rho_xz
            - rho_yz * rho_yz;
        if det < -1e-12 {
            return Err(Error::NotPsd(det));
        }
        Ok(GaussianSourceModel {
            sigma_x,
            sigma_y,
            sigma_z,
            rho_xy,
            rho_xz,
            rho_yz,
            sigma_1: sigma_x * (1.0 - rho_xy * rho_xy).sqrt(),
            sigma_2: sigma_x * (1.0 - rho_xz * rho_xz).sqrt(),
            sigma_hat_y: rho_xy * sigma_x,
            sigma_hat_z: rho_xz * sigma_x,
        })
    }

    /// The degraded surrogate: same marginals and (sigma_1, sigma_2), with
    /// rho_yz replaced by the Markov-chain value.
    pub fn degraded_surrogate(&self) -> GaussianSourceModel {
        GaussianSourceModel::new(
            self.sigma_x,
            self.sigma_y,
            self.sigma_z,
            self.rho_xy,
            self.rho_xz,
            None,
        )
        .expect("surrogate of a valid model is valid")
    }

    fn covariance(&self) -> Matrix3<f64> {
        let (sx, sy, sz) = (self.sigma_x, self.sigma_y, self.sigma_z);
        Matrix3::new(
            sx * sx,
            self.rho_xy * sx * sy,
            self.rho_xz * sx * sz,
            self.rho_xy * sx * sy,
            sy * sy,
            self.rho_yz * sy * sz,
            self.rho_xz * sx * sz,
            self.rho_yz * sy * sz,
            sz * sz,
        )
    }

    /// Draws n i.i.d. components of (X, Y, Z) with the model covariance.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let chol = self
            .covariance()
            .cholesky()
            .ok_or(Error::NotPsd(self.covariance().determinant()))?;
        let l = chol.l();
        let mut x = DVector::zeros(n);
        let mut y = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let g0: f64 = StandardNormal.sample(rng);
            let g1: f64 = StandardNormal.sample(rng);
            let g2: f64 = StandardNormal.sample(rng);
            x[i] = l[(0, 0)] * g0;
            y[i] = l[(1, 0)] * g0 + l[(1, 1)] * g1;
            z[i] = l[(2, 0)] * g0 + l[(2, 1)] * g1 + l[(2, 2)] * g2;
        }
        Ok((x, y, z))
    }

    /// Scaling that turns Y into the MMSE-aligned estimate of X.
    pub fn y_scale(&self) -> f64 {
        self.rho_xy * self.sigma_x / self.sigma_y
    }

    pub fn z_scale(&self) -> f64 {
        self.rho_xz * self.sigma_x / self.sigma_z
    }
}

/// Quantizer width and the derived effective noise scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub sigma_q: f64,
    pub sigma_tilde_1: f64,
    pub sigma_tilde_2: f64,
    pub sigma_tilde_x: f64,
    /// Fundamental region used for the key extraction modulo Lambda3. The
    /// parallelepiped is the default; any region is admissible.
    pub key_region: RegionKind,
}

impl QuantizerConfig {
    pub fn new(model: &GaussianSourceModel, sigma_q: f64) -> Result<Self> {
        if !(sigma_q > 0.0) {
            return Err(Error::NonPositiveSigma(sigma_q));
        }
        let q2 = sigma_q * sigma_q;
        let cfg = QuantizerConfig {
            sigma_q,
            sigma_tilde_1: (model.sigma_1 * model.sigma_1 + q2).sqrt(),
            sigma_tilde_2: (model.sigma_2 * model.sigma_2 + q2).sqrt(),
            sigma_tilde_x: (model.sigma_x * model.sigma_x + q2).sqrt(),
            key_region: RegionKind::Parallelepiped,
        };
        debug_assert!(cfg.sigma_tilde_1 < cfg.sigma_tilde_2 && cfg.sigma_tilde_2 <= cfg.sigma_tilde_x);
        Ok(cfg)
    }

    pub fn with_key_region(mut self, kind: RegionKind) -> Self {
        self.key_region = kind;
        self
    }
}

/// Alice's outputs for one round.
#[derive(Debug, Clone)]
pub struct AliceOutput {
    pub x_q: DVector<f64>,
    pub s: DVector<f64>,
    pub k: DVector<f64>,
}

/// Bob's outputs for one round.
#[derive(Debug, Clone)]
pub struct BobOutput {
    pub x_hat_q: DVector<f64>,
    pub k_hat: DVector<f64>,
}

/// One protocol round, serializable as a JSON line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub x_q: Vec<f64>,
    pub x_bar_q: Vec<f64>,
    pub s: Vec<f64>,
    pub k: Vec<f64>,
    pub k_hat: Vec<f64>,
    /// Key agreement K == K-hat.
    pub success: bool,
    /// Quantized-point agreement X_Q == X-hat_Q; implies `success`.
    pub decode_success: bool,
}

/// Serializes transcripts as JSON Lines, one round per line.
pub fn write_transcripts<W: std::io::Write>(
    mut w: W,
    transcripts: &[ProtocolTranscript],
) -> std::io::Result<()> {
    for t in transcripts {
        serde_json::to_writer(&mut w, t)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_transcripts<R: std::io::BufRead>(r: R) -> Result<Vec<ProtocolTranscript>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::InvalidParameter(format!("transcript read: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::InvalidParameter(format!("transcript JSON: {e}")))?,
        );
    }
    Ok(out)
}

/// Protocol context: the chain with its source model and quantizer, plus the
/// coset tables used for key indexing.
#[derive(Debug, Clone)]
pub struct Protocol {
    chain: NestedChain,
    model: GaussianSourceModel,
    cfg: QuantizerConfig,
    key_table: CosetTable,
    quotient_table: CosetTable,
}

impl Protocol {
    pub fn new(
        chain: NestedChain,
        model: GaussianSourceModel,
        cfg: QuantizerConfig,
    ) -> Result<Self> {
        let key_table = CosetTable::new(chain.lambda2(), chain.lambda3())?;
        let quotient_table = CosetTable::new(chain.lambda1(), chain.lambda3())?;
        Ok(Protocol { chain, model, cfg, key_table, quotient_table })
    }

    pub fn chain(&self) -> &NestedChain {
        &self.chain
    }

    pub fn model(&self) -> &GaussianSourceModel {
        &self.model
    }

    pub fn cfg(&self) -> &QuantizerConfig {
        &self.cfg
    }

    /// |K| = |Lambda2 / Lambda3|.
    pub fn key_space(&self) -> u64 {
        self.key_table.index()
    }

    pub fn key_table(&self) -> &CosetTable {
        &self.key_table
    }

    pub fn quotient_table(&self) -> &CosetTable {
        &self.quotient_table
    }

    /// Uniform dither over the fundamental parallelepiped of Lambda1.
    pub fn sample_dither<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.chain.n();
        let t = DVector::from_fn(n, |_, _| rng.random::<f64>());
        self.chain.lambda1().basis() * t
    }

    /// Alice: randomized rounding of x + u onto Lambda1, then the public
    /// message modulo the Voronoi region of Lambda2 and the key modulo the
    /// configured region of Lambda3.
    pub fn alice_encode<R: Rng + ?Sized>(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        rng: &mut R,
    ) -> Result<AliceOutput> {
        let target = x + u;
        let dg = DiscreteGaussian::new(self.chain.lambda1(), self.cfg.sigma_q, &target)?;
        let x_q = dg.sample_point(rng);
        let q2 = self.chain.lambda2().reduce(RegionKind::Voronoi, &x_q)?;
        let s = q2.residue.clone();
        let k = self
            .chain
            .lambda3()
            .reduce(self.cfg.key_region, &q2.lattice_point)?
            .residue;
        Ok(AliceOutput { x_q, s, k })
    }

    /// Checks that s is a legal public message: a point of Lambda1 inside
    /// the Voronoi region of Lambda2.
    pub fn validate_public_message(&self, s: &DVector<f64>) -> Result<()> {
        if !self.chain.lambda1().contains(s) {
            return Err(Error::InvalidPublicMessage);
        }
        let q = self.chain.lambda2().reduce(RegionKind::Voronoi, s)?;
        if q.coords.iter().any(|&c| c != 0) {
            return Err(Error::InvalidPublicMessage);
        }
        Ok(())
    }

    /// Bob: reconstructs X_Q from the scaled side information and computes
    /// his key.
    pub fn bob_decode(
        &self,
        y: &DVector<f64>,
        u: &DVector<f64>,
        s: &DVector<f64>,
    ) -> Result<BobOutput> {
        self.validate_public_message(s)?;
        let y_hat = y * self.model.y_scale();
        let shifted = &y_hat + u - s;
        let q = self.chain.lambda2().reduce(RegionKind::Voronoi, &shifted)?;
        let x_hat_q = s + q.lattice_point;
        let q2 = self.chain.lambda2().reduce(RegionKind::Voronoi, &x_hat_q)?;
        let k_hat = self
            .chain
            .lambda3()
            .reduce(self.cfg.key_region, &q2.lattice_point)?
            .residue;
        Ok(BobOutput { x_hat_q, k_hat })
    }

    /// Rebuilds x-bar_Q from the pair (s, k): their sum reduced modulo the
    /// key region of Lambda3.
    pub fn recombine(&self, s: &DVector<f64>, k: &DVector<f64>) -> Result<DVector<f64>> {
        let sum = s + k;
        Ok(self.chain.lambda3().reduce(self.cfg.key_region, &sum)?.residue)
    }

    /// Key coset index of a point of Lambda2.
    pub fn key_index(&self, k: &DVector<f64>) -> Result<usize> {
        self.key_table.index_of_point(k)
    }

    /// Nearest-plane reliability predicate: the scaled side information
    /// falls in x_Q - u + V(Lambda2), evaluated as a nearest-point test.
    pub fn reliability_condition(
        &self,
        x_q: &DVector<f64>,
        y: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<bool> {
        let y_hat = y * self.model.y_scale();
        let v = &y_hat + u - x_q;
        let q = self.chain.lambda2().reduce(RegionKind::Voronoi, &v)?;
        Ok(q.coords.iter().all(|&c| c == 0))
    }

    /// Runs one full round.
    pub fn run_round<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ProtocolTranscript> {
        let (x, y, z) = self.model.sample(self.chain.n(), rng)?;
        let u = self.sample_dither(rng);
        let alice = self.alice_encode(&x, &u, rng)?;
        let bob = self.bob_decode(&y, &u, &alice.s)?;
        let x_bar_q = self
            .chain
            .lambda3()
            .reduce(self.cfg.key_region, &alice.x_q)?
            .residue;
        let k_idx = self.key_index(&alice.k)?;
        let k_hat_idx = self.key_index(&bob.k_hat)?;
        let decode_success = self.chain.lambda1().integer_coordinates(&alice.x_q)?
            == self.chain.lambda1().integer_coordinates(&bob.x_hat_q)?;
        Ok(ProtocolTranscript {
            u: u.iter().copied().collect(),
            x: x.iter().copied().collect(),
            y: y.iter().copied().collect(),
            z: z.iter().copied().collect(),
            x_q: alice.x_q.iter().copied().collect(),
            x_bar_q: x_bar_q.iter().copied().collect(),
            s: alice.s.iter().copied().collect(),
            k: alice.k.iter().copied().collect(),
            k_hat: bob.k_hat.iter().copied().collect(),
            success: k_idx == k_hat_idx,
            decode_success,
        })
    }
}

/// Eve's analytic posterior over the cosets Lambda1 / Lambda3 for the
/// quantized value, given her scaled observation and the dither.
///
/// The posterior is the law of randomized rounding applied to W2 + z-hat + u
/// with W2 ~ N(0, sigma_2^2 I). The Gaussian integral over W2 is evaluated
/// on a fixed set of deterministic nodes (a seeded stream independent of the
/// arguments), with the exact conditional pmf -- a truncated coset sum --
/// computed analytically at every node. Results are therefore reproducible
/// and smooth in (z, u).
#[derive(Debug, Clone)]
pub struct EvePosterior {
    chain: NestedChain,
    cfg: QuantizerConfig,
    sigma_2: f64,
    z_scale: f64,
    table: CosetTable,
    nodes: Vec<DVector<f64>>,
}

/// Default number of integration nodes for the W2 average.
pub const EVE_DEFAULT_NODES: usize = 4096;

impl EvePosterior {
    pub fn new(
        chain: &NestedChain,
        cfg: &QuantizerConfig,
        model: &GaussianSourceModel,
        sigma_2: f64,
        node_count: usize,
    ) -> Result<Self> {
        if !(sigma_2 > 0.0) {
            return Err(Error::NonPositiveSigma(sigma_2));
        }
        let table = CosetTable::new(chain.lambda1(), chain.lambda3()).map_err(|e| match e {
            Error::IndexTooLarge { index, limit } => Error::EnumerationTooLarge {
                count: index,
                limit,
            },
            other => other,
        })?;
        let n = chain.n();
        // fixed node stream: independent of (z, u) so the posterior is a
        // smooth deterministic function of its arguments
        let mut node_rng = stream(0x45564550, 0, 0);
        let nodes = (0..node_count)
            .map(|_| {
                DVector::from_fn(n, |_, _| {
                    let g: f64 = StandardNormal.sample(&mut node_rng);
                    g
                })
            })
            .collect();
        Ok(EvePosterior {
            chain: chain.clone(),
            cfg: *cfg,
            sigma_2,
            z_scale: model.z_scale(),
            table,
            nodes,
        })
    }

    pub fn coset_count(&self) -> usize {
        self.table.index() as usize
    }

    pub fn table(&self) -> &CosetTable {
        &self.table
    }

    /// pmf over Lambda1/Lambda3 cosets (indexed by the shared coset table).
    pub fn pmf(&self, z: &DVector<f64>, u: &DVector<f64>) -> Result<Vec<f64>> {
        let t = z * self.z_scale + u;
        let m = self.coset_count();
        let mut out = vec![0.0f64; m];
        let mut mass = vec![0.0f64; m];
        let sigma_q = self.cfg.sigma_q;
        let inv = 1.0 / (2.0 * sigma_q * sigma_q);
        // radius covering all but ~1e-12 of each conditional pmf
        let pad = (2.0 * ((1e12f64).ln() + self.chain.n() as f64 * 3f64.ln() + 6.0)).sqrt();
        for g in &self.nodes {
            let center = g * self.sigma_2 + &t;
            let nearest = self.chain.lambda1().nearest_point(&center)?;
            let d0sq = nearest.residue.norm_squared();
            let radius = d0sq.sqrt() + pad * sigma_q;
            mass.iter_mut().for_each(|v| *v = 0.0);
            let mut total = 0.0;
            self.chain.lambda1().for_each_in_ball(
                &center,
                radius,
                50_000_000,
                &mut |zc, d2| {
                    let w = (-(d2 - d0sq) * inv).exp();
                    let idx = self.table.index_of_coords(zc);
                    mass[idx] += w;
                    total += w;
                },
            )?;
            for (o, &v) in out.iter_mut().zip(mass.iter()) {
                *o += v / total;
            }
        }
        let count = self.nodes.len() as f64;
        out.iter_mut().for_each(|v| *v /= count);
        Ok(out)
    }
}

/// Convenience wrapper constructing the posterior context per call.
pub fn eve_key_posterior(
    chain: &NestedChain,
    cfg: &QuantizerConfig,
    model: &GaussianSourceModel,
    sigma_2: f64,
    z: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<Vec<f64>> {
    EvePosterior::new(chain, cfg, model, sigma_2, EVE_DEFAULT_NODES)?.pmf(z, u)
}

/// Optimal secret-key rate at public rate R_P:
/// (1/2) log(e^(-2 R_P) + (sigma_2^2/sigma_1^2)(1 - e^(-2 R_P))).
pub fn tradeoff_bound(sigma_1: f64, sigma_2: f64, r_p: f64) -> f64 {
    let ratio = (sigma_2 * sigma_2) / (sigma_1 * sigma_1);
    let e = (-2.0 * r_p).exp();
    0.5 * (e + ratio * (1.0 - e)).ln()
}

/// Secret key capacity (1/2) log(sigma_2^2 / sigma_1^2).
pub fn secret_key_capacity(sigma_1: f64, sigma_2: f64) -> f64 {
    (sigma_2 / sigma_1).ln()
}

/// Rate achievable with quantizer width sigma_Q:
/// (1/2) log((sigma_2^2 + sigma_Q^2) / (sigma_1^2 + sigma_Q^2)).
pub fn achievable_bound(sigma_1: f64, sigma_2: f64, sigma_q: f64) -> f64 {
    0.5 * ((sigma_2 * sigma_2 + sigma_q * sigma_q) / (sigma_1 * sigma_1 + sigma_q * sigma_q))
        .ln()
}

/// Public rate matched to a quantizer width:
/// (1/2) log((sigma_1^2 + sigma_Q^2) / sigma_Q^2).
pub fn matched_public_rate(sigma_1: f64, sigma_q: f64) -> f64 {
    0.5 * ((sigma_1 * sigma_1 + sigma_q * sigma_q) / (sigma_q * sigma_q)).ln()
}

/// Quantizer width realizing a given public rate, the inverse of
/// `matched_public_rate`.
pub fn sigma_q_for_public_rate(sigma_1: f64, r_p: f64) -> f64 {
    sigma_1 / ((2.0 * r_p).exp_m1()).sqrt()
}

/// Chain rates with the information-theoretic reference quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub r_p: f64,
    pub r_k: f64,
    pub c_s: f64,
    pub r_bar_k: f64,
    pub achievable_bound: f64,
}

pub fn rate_report(
    chain: &NestedChain,
    model: &GaussianSourceModel,
    cfg: &QuantizerConfig,
) -> RateReport {
    let (r_p, r_k) = chain.rates();
    RateReport {
        r_p,
        r_k,
        c_s: secret_key_capacity(model.sigma_1, model.sigma_2),
        r_bar_k: tradeoff_bound(model.sigma_1, model.sigma_2, r_p),
        achievable_bound: achievable_bound(model.sigma_1, model.sigma_2, cfg.sigma_q),
    }
}

/// Flatness estimates in the roles the chain members play, with the three
/// volume conditions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChainFlatnessReport {
    /// L1 flatness of Lambda1 at sigma_Q (quantization smoothing).
    pub eps1_lambda1: FlatnessReport,
    /// L1 flatness of Lambda3 at sigma-tilde_2 (randomness extraction).
    pub eps1_lambda3: FlatnessReport,
    pub vnr_lambda1_sigma_q: f64,
    pub vnr_lambda2_sigma_tilde_1: f64,
    pub vnr_lambda3_sigma_tilde_2: f64,
    /// vnr(Lambda1, sigma_Q) < 2 pi e.
    pub condition_quantizer: bool,
    /// vnr(Lambda2, sigma-tilde_1) > 2 pi e.
    pub condition_awgn: bool,
    /// vnr(Lambda3, sigma-tilde_2) < 2 pi e.
    pub condition_extractor: bool,
}

pub fn chain_flatness_report<R: Rng + ?Sized>(
    chain: &NestedChain,
    cfg: &QuantizerConfig,
    samples: u64,
    rng: &mut R,
) -> Result<ChainFlatnessReport> {
    let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
    let eps1_lambda1 =
        l1_flatness(chain.lambda1(), cfg.sigma_q, L1Method::MonteCarlo, samples, rng)?;
    let eps1_lambda3 =
        l1_flatness(chain.lambda3(), cfg.sigma_tilde_2, L1Method::MonteCarlo, samples, rng)?;
    let v1 = chain.lambda1().vnr(cfg.sigma_q)?;
    let v2 = chain.lambda2().vnr(cfg.sigma_tilde_1)?;
    let v3 = chain.lambda3().vnr(cfg.sigma_tilde_2)?;
    Ok(ChainFlatnessReport {
        eps1_lambda1,
        eps1_lambda3,
        vnr_lambda1_sigma_q: v1,
        vnr_lambda2_sigma_tilde_1: v2,
        vnr_lambda3_sigma_tilde_2: v3,
        condition_quantizer: v1 < two_pi_e,
        condition_awgn: v2 > two_pi_e,
        condition_extractor: v3 < two_pi_e,
    })
}

/// Corollary-style uniformity/leakage budget 2 eps1_{Lambda1}(sigma_Q) +
/// 2 eps1_{Lambda3}(sigma-tilde_2), with the combined estimator CI.
pub fn corollary_budget(report: &ChainFlatnessReport) -> Estimate {
    Estimate {
        value: 2.0 * report.eps1_lambda1.value + 2.0 * report.eps1_lambda3.value,
        ci_halfwidth: 2.0 * report.eps1_lambda1.ci_halfwidth
            + 2.0 * report.eps1_lambda3.ci_halfwidth,
        samples: report.eps1_lambda1.samples.min(report.eps1_lambda3.samples),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainTargets;
    use crate::rng::stream;

    fn test_model() -> GaussianSourceModel {
        GaussianSourceModel::new(1.0, 1.0, 1.0, 0.9, 0.5, None).unwrap()
    }

    #[test]
    fn source_model_examples() {
        let m = test_model();
        assert!((m.sigma_1 * m.sigma_1 - 0.19).abs() < 1e-12);
        assert!((m.sigma_2 * m.sigma_2 - 0.75).abs() < 1e-12);
        assert!((m.rho_yz - 0.5 / 0.9).abs() < 1e-12);
        assert!((m.rho_yz - 0.5556).abs() < 1e-4);
    }

    #[test]
    fn source_model_rejects_non_degradable() {
        assert!(matches!(
            GaussianSourceModel::new(1.0, 1.0, 1.0, 0.5, 0.5, None),
            Err(Error::NotDegradable)
        ));
    }

    #[test]
    fn source_model_accepts_admissible_rho_yz() {
        let m = GaussianSourceModel::new(1.0, 1.0, 1.0, 0.5, 0.1, Some(0.2)).unwrap();
        let det = 1.0 + 2.0 * 0.5 * 0.1 * 0.2 - 0.25 - 0.01 - 0.04;
        assert!(det > 0.0);
        assert_eq!(m.rho_yz, 0.2);
    }

    #[test]
    fn source_model_rejects_non_psd() {
        assert!(matches!(
            GaussianSourceModel::new(1.0, 1.0, 1.0, 0.9, 0.5, Some(-0.9)),
            Err(Error::NotPsd(_))
        ));
    }

    #[test]
    fn degraded_surrogate_is_fixed_point() {
        let m = test_model();
        let s = m.degraded_surrogate();
        assert_eq!(m, s);
        // C_s depends only on (sigma_1, sigma_2), which the surrogate keeps
        let m2 = GaussianSourceModel::new(1.0, 1.0, 1.0, 0.9, 0.5, Some(0.7)).unwrap();
        let s2 = m2.degraded_surrogate();
        assert_eq!(m2.sigma_1, s2.sigma_1);
        assert_eq!(m2.sigma_2, s2.sigma_2);
    }

    #[test]
    fn sampled_covariance_matches_model() {
        let m = test_model();
        let mut rng = stream(41, 0, 0);
        let n = 100_000;
        let (x, y, z) = m.sample(n, &mut rng).unwrap();
        let nf = n as f64;
        let tol = 4.0 / nf.sqrt();
        let mean = |v: &DVector<f64>| v.sum() / nf;
        assert!(mean(&x).abs() < tol && mean(&y).abs() < tol && mean(&z).abs() < tol);
        let dot = |a: &DVector<f64>, b: &DVector<f64>| a.dot(b) / nf;
        assert!((dot(&x, &x) - 1.0).abs() < 4.0 * tol);
        assert!((dot(&x, &y) - 0.9).abs() < 4.0 * tol);
        assert!((dot(&x, &z) - 0.5).abs() < 4.0 * tol);
        assert!((dot(&y, &z) - m.rho_yz).abs() < 4.0 * tol);
        // W1 = X - scaled Y must be uncorrelated with Y
        let w1 = &x - &y * m.y_scale();
        assert!(dot(&w1, &y).abs() < 4.0 * tol);
    }

    fn test_protocol(seed: u64) -> Protocol {
        let mut rng = stream(seed, 7, 0);
        let targets = ChainTargets::new(0.05, 0.2, 0.8).unwrap();
        let chain = NestedChain::build(4, targets, &mut rng).unwrap();
        let model = GaussianSourceModel::new(3.0, 3.0, 3.0, 0.999, 0.5, None).unwrap();
        let cfg = QuantizerConfig::new(&model, 0.35).unwrap();
        Protocol::new(chain, model, cfg).unwrap()
    }

    #[test]
    fn round_invariants() {
        let protocol = test_protocol(50);
        let mut rng = stream(51, 0, 0);
        for _ in 0..200 {
            let t = protocol.run_round(&mut rng).unwrap();
            let s = DVector::from_vec(t.s.clone());
            let k = DVector::from_vec(t.k.clone());
            let x_q = DVector::from_vec(t.x_q.clone());
            // s is a Lambda1 point inside the Voronoi region of Lambda2
            assert!(protocol.chain().lambda1().contains(&s));
            protocol.validate_public_message(&s).unwrap();
            // k is a Lambda2 point inside the Lambda3 parallelepiped
            assert!(protocol.chain().lambda2().contains(&k));
            let kr = protocol
                .chain()
                .lambda3()
                .reduce_parallelepiped(&k)
                .unwrap();
            assert!(kr.lattice_point.norm() < 1e-9);
            // bijection: s + k reduces to x_bar_q
            let recombined = protocol.recombine(&s, &k).unwrap();
            let x_bar = DVector::from_vec(t.x_bar_q.clone());
            assert!((recombined - x_bar).norm() < 1e-8);
            // reliability predicate agrees with decode success
            let y = DVector::from_vec(t.y.clone());
            let u = DVector::from_vec(t.u.clone());
            let cond = protocol.reliability_condition(&x_q, &y, &u).unwrap();
            assert_eq!(cond, t.decode_success);
            if t.decode_success {
                assert!(t.success);
            }
        }
    }

    #[test]
    fn corrupted_public_message_rejected() {
        let protocol = test_protocol(52);
        let mut rng = stream(53, 0, 0);
        let t = protocol.run_round(&mut rng).unwrap();
        let y = DVector::from_vec(t.y.clone());
        let u = DVector::from_vec(t.u.clone());
        // not a Lambda1 point at all
        let bad = DVector::from_element(4, 0.1234567);
        assert!(matches!(
            protocol.bob_decode(&y, &u, &bad),
            Err(Error::InvalidPublicMessage)
        ));
        // a Lambda1 point outside the Voronoi region of Lambda2
        let far = protocol.chain().lambda1().point(&[40, 0, 0, 0]);
        assert!(matches!(
            protocol.bob_decode(&y, &u, &far),
            Err(Error::InvalidPublicMessage)
        ));
    }

    #[test]
    fn transcript_jsonl_round_trip() {
        let protocol = test_protocol(54);
        let mut rng = stream(55, 0, 0);
        let ts: Vec<_> = (0..5).map(|_| protocol.run_round(&mut rng).unwrap()).collect();
        let mut buf = Vec::new();
        write_transcripts(&mut buf, &ts).unwrap();
        let back = read_transcripts(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in ts.iter().zip(&back) {
            assert_eq!(a.x_q, b.x_q);
            assert_eq!(a.success, b.success);
        }
    }

    #[test]
    fn eve_posterior_normalizes() {
        let protocol = test_protocol(56);
        let model = *protocol.model();
        let eve = EvePosterior::new(
            protocol.chain(),
            protocol.cfg(),
            &model,
            model.sigma_2,
            256,
        )
        .unwrap();
        let mut rng = stream(57, 0, 0);
        let (_, _, z) = model.sample(4, &mut rng).unwrap();
        let u = protocol.sample_dither(&mut rng);
        let pmf = eve.pmf(&z, &u).unwrap();
        assert_eq!(pmf.len(), 121);
        let total: f64 = pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn eve_posterior_trivial_quotient() {
        // k1 == k3 makes Lambda1 == Lambda3 and the posterior a single atom
        let mut rng = stream(58, 0, 0);
        let targets = ChainTargets::new(0.19, 0.2, 0.21).unwrap();
        let chain = NestedChain::build(2, targets, &mut rng).unwrap();
        assert_eq!(chain.dims().k1, chain.dims().k3);
        let model = test_model();
        let cfg = QuantizerConfig::new(&model, 0.4).unwrap();
        let eve = EvePosterior::new(&chain, &cfg, &model, model.sigma_2, 64).unwrap();
        let (_, _, z) = model.sample(2, &mut rng).unwrap();
        let u = DVector::zeros(2);
        let pmf = eve.pmf(&z, &u).unwrap();
        assert_eq!(pmf, vec![1.0]);
    }

    #[test]
    fn eve_posterior_invariant_under_dither_shift() {
        let protocol = test_protocol(59);
        let model = *protocol.model();
        let eve = EvePosterior::new(
            protocol.chain(),
            protocol.cfg(),
            &model,
            model.sigma_2,
            128,
        )
        .unwrap();
        let mut rng = stream(60, 0, 0);
        let (_, _, z) = model.sample(4, &mut rng).unwrap();
        let u = protocol.sample_dither(&mut rng);
        let shifted = &u + protocol.chain().lambda1().point(&[1, -2, 0, 3]);
        let reduced = protocol
            .chain()
            .lambda1()
            .reduce_parallelepiped(&shifted)
            .unwrap()
            .residue;
        let a = eve.pmf(&z, &u).unwrap();
        let b = eve.pmf(&z, &reduced).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn tradeoff_formulas() {
        assert!(tradeoff_bound(1.0, 2.0, 0.0).abs() < 1e-15);
        let c_s = secret_key_capacity(1.0, 2.0);
        assert!((c_s - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((tradeoff_bound(1.0, 2.0, 40.0) - c_s).abs() < 1e-12);
        // sigma_1^2 = 1, sigma_2^2 = 4, R_P = (1/2) ln 2 -> (1/2) ln 2.5
        let v = tradeoff_bound(1.0, 2.0, 0.5 * std::f64::consts::LN_2);
        assert!((v - 0.5 * 2.5f64.ln()).abs() < 1e-12);
        assert!((v - 0.45815).abs() < 1e-5);
        // invariance of C_s under common scaling
        assert!(
            (secret_key_capacity(0.3, 0.6) - secret_key_capacity(3.0, 6.0)).abs() < 1e-15
        );
    }

    #[test]
    fn achievable_bound_limits_and_identity() {
        let (s1, s2) = (1.0, 2.0);
        let c_s = secret_key_capacity(s1, s2);
        assert!((achievable_bound(s1, s2, 1e-9) - c_s).abs() < 1e-9);
        assert!(achievable_bound(s1, s2, 1e9) < 1e-9);
        // matched-rate identity, exact to machine precision
        for i in 1..=20 {
            let sigma_q = 0.05 * i as f64;
            let r_p = matched_public_rate(s1, sigma_q);
            let lhs = achievable_bound(s1, s2, sigma_q);
            let rhs = tradeoff_bound(s1, s2, r_p);
            assert!((lhs - rhs).abs() < 1e-12, "sigma_q={sigma_q}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn tradeoff_monotone_in_public_rate() {
        let mut prev = -1.0;
        for i in 0..=40 {
            let r_p = 0.1 * i as f64;
            let v = tradeoff_bound(1.0, 2.0, r_p);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn rate_report_respects_capacity_bounds() {
        let protocol = test_protocol(61);
        let report = rate_report(protocol.chain(), protocol.model(), protocol.cfg());
        assert!(report.r_p >= 0.0 && report.r_k >= 0.0);
        assert!(report.r_bar_k >= 0.0 && report.r_bar_k <= report.c_s + 1e-12);
        assert!(report.achievable_bound <= report.c_s + 1e-12);
    }

    #[test]
    fn tradeoff_concave_in_exp_variable() {
        // as a function of t = e^(-2 R_P) the bound is ln of an affine map,
        // so second differences on a uniform t grid must be nonpositive
        let vals: Vec<f64> = (1..=40)
            .map(|i| {
                let t = i as f64 / 41.0;
                let r_p = -0.5 * t.ln();
                tradeoff_bound(1.0, 2.0, r_p)
            })
            .collect();
        for w in vals.windows(3) {
            assert!(w[2] - 2.0 * w[1] + w[0] <= 1e-12);
        }
    }
}
