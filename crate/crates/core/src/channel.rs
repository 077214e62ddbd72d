//! Stochastic channels for the gNodeB → RIS → UE link.
//!
//! Small-scale fading is a clustered multipath model: each cluster has a
//! delay, a power and mean departure/arrival directions, and contributes a
//! few rays that are rank-one outer products of array steering vectors with
//! complex Gaussian gains. Frequency selectivity comes from the per-cluster
//! delays evaluated at the centre frequency of each subband. Doppler is zero.
//!
//! Path loss is kept out of the small-scale matrices and applied as a scalar.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::ris::RisConfiguration;
use crate::seed;

/// Array sizes needed to draw a channel realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelDims {
    pub n_ris_x: usize,
    pub n_ris_y: usize,
    /// Horizontal ports per polarization at the gNodeB.
    pub n1: usize,
    /// Vertical ports per polarization at the gNodeB.
    pub n2: usize,
    /// UE receive antennas.
    pub n_r: usize,
    /// Number of subbands.
    pub n3: usize,
}

impl ChannelDims {
    pub fn n_ris(&self) -> usize {
        self.n_ris_x * self.n_ris_y
    }

    /// Dual-polarized port count `2·N1·N2`.
    pub fn p_csirs(&self) -> usize {
        2 * self.n1 * self.n2
    }

    fn validate(&self) -> Result<()> {
        let all = [self.n_ris_x, self.n_ris_y, self.n1, self.n2, self.n_r, self.n3];
        if all.contains(&0) {
            return Err(Error::Config(format!("channel dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// One entry of an externally supplied cluster profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterTap {
    pub delay_ns: f64,
    pub power_db: f64,
    pub aod_deg: f64,
    pub aoa_deg: f64,
}

/// Parameters of the clustered small-scale model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub clusters: usize,
    pub rays_per_cluster: usize,
    /// Standard deviation of ray angles around the cluster mean.
    pub angle_spread_deg: f64,
    /// Each cluster becomes an i.i.d. Gaussian matrix (isotropic scattering).
    pub isotropic: bool,
    pub delay_spread_ns: f64,
    pub carrier_frequency_hz: f64,
    pub subcarrier_spacing_hz: f64,
    /// Subband width in physical resource blocks of 12 subcarriers.
    pub subband_size_prbs: usize,
    /// Fixed cluster profile overriding the random one (used for both hops).
    pub taps: Option<Vec<ClusterTap>>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            clusters: 3,
            rays_per_cluster: 10,
            angle_spread_deg: 5.0,
            isotropic: false,
            delay_spread_ns: 300.0,
            carrier_frequency_hz: 4.0e9,
            subcarrier_spacing_hz: 30.0e3,
            subband_size_prbs: 4,
            taps: None,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let cluster_count = self.taps.as_ref().map_or(self.clusters, Vec::len);
        if cluster_count == 0 || self.rays_per_cluster == 0 {
            return Err(Error::Config("channel needs at least one cluster and one ray".into()));
        }
        let positive = [
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.delay_spread_ns.is_finite() && self.delay_spread_ns >= 0.0) {
            return Err(Error::Config(format!("delay spread must be non-negative, got {}", self.delay_spread_ns)));
        }
        if !(self.angle_spread_deg.is_finite() && self.angle_spread_deg >= 0.0) {
            return Err(Error::Config("angle spread must be non-negative".into()));
        }
        if self.subband_size_prbs == 0 {
            return Err(Error::Config("subband size must be at least one PRB".into()));
        }
        if let Some(taps) = &self.taps {
            for t in taps {
                let vals = [t.delay_ns, t.power_db, t.aod_deg, t.aoa_deg];
                if vals.iter().any(|v| !v.is_finite()) || t.delay_ns < 0.0 {
                    return Err(Error::Config(format!("invalid cluster tap {t:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        299_792_458.0 / self.carrier_frequency_hz
    }

    pub fn subband_bandwidth_hz(&self) -> f64 {
        self.subband_size_prbs as f64 * 12.0 * self.subcarrier_spacing_hz
    }

    /// Baseband centre frequency of each of `n3` contiguous subbands.
    pub fn subband_offsets_hz(&self, n3: usize) -> Vec<f64> {
        let bw = self.subband_bandwidth_hz();
        let mid = (n3 as f64 - 1.0) / 2.0;
        (0..n3).map(|t| (t as f64 - mid) * bw).collect()
    }

    /// Loads a tap profile (`[{delay_ns, power_db, aod_deg, aoa_deg}, …]`).
    pub fn taps_from_json(json: &str) -> Result<Vec<ClusterTap>> {
        Ok(serde_json::from_str(json)?)
    }
}

/// One channel realization, per subband.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// gNodeB → RIS, each `N_RIS × P_CSI-RS`.
    pub h: Vec<ComplexMatrix>,
    /// RIS → UE, each `N_R × N_RIS`.
    pub g: Vec<ComplexMatrix>,
    pub seed: u64,
}

impl ChannelSet {
    pub fn n_subbands(&self) -> usize {
        self.h.len()
    }

    pub fn n_ris(&self) -> usize {
        self.h[0].rows()
    }

    pub fn n_r(&self) -> usize {
        self.g[0].rows()
    }

    pub fn p_csirs(&self) -> usize {
        self.h[0].cols()
    }
}

#[derive(Clone, Copy, Debug)]
enum Array {
    /// Planar array, `nx × ny` elements at half-wavelength spacing.
    Planar { nx: usize, ny: usize },
    /// Dual-polarized planar array; ports ordered polarization-major.
    DualPolarized { n1: usize, n2: usize },
    Linear { n: usize },
}

impl Array {
    fn len(&self) -> usize {
        match *self {
            Array::Planar { nx, ny } => nx * ny,
            Array::DualPolarized { n1, n2 } => 2 * n1 * n2,
            Array::Linear { n } => n,
        }
    }

    fn steering(&self, az: f64, el: f64, rng: &mut ChaCha8Rng) -> Vec<C64> {
        let u = az.sin() * el.cos();
        let w = el.sin();
        let planar = |nx: usize, ny: usize| -> Vec<C64> {
            let mut v = Vec::with_capacity(nx * ny);
            for p in 0..nx {
                for q in 0..ny {
                    v.push(C64::from_polar(1.0, PI * (p as f64 * u + q as f64 * w)));
                }
            }
            v
        };
        match *self {
            Array::Planar { nx, ny } => planar(nx, ny),
            Array::DualPolarized { n1, n2 } => {
                let base = planar(n1, n2);
                let pols: [C64; 2] = std::array::from_fn(|_| C64::from_polar(1.0, rng.random_range(0.0..TAU)));
                pols.iter().flat_map(|&pol| base.iter().map(move |&b| b * pol)).collect()
            }
            Array::Linear { n } => (0..n).map(|p| C64::from_polar(1.0, PI * p as f64 * u)).collect(),
        }
    }
}

struct Cluster {
    delay_s: f64,
    power: f64,
    aod: (f64, f64),
    aoa: (f64, f64),
}

fn cluster_profile(params: &ChannelParams, rng: &mut ChaCha8Rng) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = match &params.taps {
        Some(taps) => taps
            .iter()
            .map(|t| Cluster {
                delay_s: t.delay_ns * 1e-9,
                power: 10f64.powf(t.power_db / 10.0),
                aod: (t.aod_deg.to_radians(), 0.0),
                aoa: (t.aoa_deg.to_radians(), 0.0),
            })
            .collect(),
        None => {
            let ds = params.delay_spread_ns * 1e-9;
            let shadow = Normal::new(0.0, 3.0).expect("valid normal");
            let draw_angle = |rng: &mut ChaCha8Rng| {
                (rng.random_range(-PI / 3.0..PI / 3.0), rng.random_range(-PI / 9.0..PI / 9.0))
            };
            (0..params.clusters)
                .map(|c| {
                    let delay_s = if c == 0 { 0.0 } else { -ds * (1.0 - rng.random::<f64>()).ln() };
                    let decay = if ds > 0.0 { (-delay_s / ds).exp() } else { 1.0 };
                    let power = decay * 10f64.powf(-shadow.sample(rng) / 10.0);
                    Cluster { delay_s, power, aod: draw_angle(rng), aoa: draw_angle(rng) }
                })
                .collect()
        }
    };
    let total: f64 = clusters.iter().map(|c| c.power).sum();
    for c in &mut clusters {
        c.power /= total;
    }
    clusters
}

fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

fn generate_hop(rx: Array, tx: Array, params: &ChannelParams, freqs: &[f64], rng: &mut ChaCha8Rng) -> Vec<ComplexMatrix> {
    let (nr, nt) = (rx.len(), tx.len());
    let mut out = vec![ComplexMatrix::zeros(nr, nt); freqs.len()];
    let spread = params.angle_spread_deg.to_radians();
    let rays = params.rays_per_cluster;
    for cluster in cluster_profile(params, rng) {
        let delay_rot: Vec<C64> = freqs.iter().map(|f| C64::from_polar(1.0, -TAU * f * cluster.delay_s)).collect();
        if params.isotropic {
            let m = ComplexMatrix::from_fn(nr, nt, |_, _| complex_gaussian(rng, cluster.power));
            for (sub, &rot) in out.iter_mut().zip(&delay_rot) {
                sub.axpy(rot, &m);
            }
            continue;
        }
        for _ in 0..rays {
            let jitter = |rng: &mut ChaCha8Rng| spread * rng.sample::<f64, _>(StandardNormal);
            let aod = (cluster.aod.0 + jitter(rng), cluster.aod.1 + jitter(rng));
            let aoa = (cluster.aoa.0 + jitter(rng), cluster.aoa.1 + jitter(rng));
            let gain = complex_gaussian(rng, cluster.power / rays as f64);
            let a_rx = rx.steering(aoa.0, aoa.1, rng);
            let a_tx = tx.steering(aod.0, aod.1, rng);
            let outer = ComplexMatrix::from_fn(nr, nt, |i, j| a_rx[i] * a_tx[j]);
            for (sub, &rot) in out.iter_mut().zip(&delay_rot) {
                sub.axpy(gain * rot, &outer);
            }
        }
    }
    out
}

/// Draws `H` and `G` for every subband; a pure function of `seed`.
pub fn generate_channels(dims: &ChannelDims, params: &ChannelParams, seed: u64) -> Result<ChannelSet> {
    dims.validate()?;
    params.validate()?;
    let freqs = params.subband_offsets_hz(dims.n3);
    let mut rng = seed::rng(seed);
    let ris = Array::Planar { nx: dims.n_ris_x, ny: dims.n_ris_y };
    let gnb = Array::DualPolarized { n1: dims.n1, n2: dims.n2 };
    let ue = Array::Linear { n: dims.n_r };
    let h = generate_hop(ris, gnb, params, &freqs, &mut rng);
    let g = generate_hop(ue, ris, params, &freqs, &mut rng);
    Ok(ChannelSet { h, g, seed })
}

fn check_cascade_dims(channels: &ChannelSet, phi: &RisConfiguration) -> Result<()> {
    if channels.h.is_empty() || channels.h.len() != channels.g.len() {
        return Err(Error::Dimension("channel set needs matching non-empty H and G lists".into()));
    }
    let n = phi.len();
    for (h, g) in channels.h.iter().zip(&channels.g) {
        if h.rows() != n || g.cols() != n {
            return Err(Error::Dimension(format!(
                "RIS size {n} does not match H {:?} / G {:?}",
                h.shape(),
                g.shape()
            )));
        }
    }
    Ok(())
}

fn cascade_one(h: &ComplexMatrix, g: &ComplexMatrix, coeffs: &[C64]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(g.rows(), h.cols());
    for (n, &phi) in coeffs.iter().enumerate() {
        for i in 0..g.rows() {
            let gp = g[(i, n)] * phi;
            for j in 0..h.cols() {
                out[(i, j)] += gp * h[(n, j)];
            }
        }
    }
    out
}

/// Cascaded channel `F_t = G_t Φ H_t` of subband `t`.
pub fn cascade_subband(channels: &ChannelSet, phi: &RisConfiguration, t: usize) -> Result<ComplexMatrix> {
    check_cascade_dims(channels, phi)?;
    let (h, g) = channels
        .h
        .get(t)
        .zip(channels.g.get(t))
        .ok_or_else(|| Error::Dimension(format!("subband {t} out of range")))?;
    Ok(cascade_one(h, g, &phi.coefficients()))
}

/// Per-subband cascaded channels.
pub fn cascade_all(channels: &ChannelSet, phi: &RisConfiguration) -> Result<Vec<ComplexMatrix>> {
    check_cascade_dims(channels, phi)?;
    let coeffs = phi.coefficients();
    Ok(channels.h.iter().zip(&channels.g).map(|(h, g)| cascade_one(h, g, &coeffs)).collect())
}

/// Wideband cascaded channel: the average of `G_t Φ H_t` over subbands.
/// With a single subband this is exactly `G Φ H`.
pub fn cascade(channels: &ChannelSet, phi: &RisConfiguration) -> Result<ComplexMatrix> {
    let subs = cascade_all(channels, phi)?;
    Ok(band_average(&subs))
}

pub fn band_average(subbands: &[ComplexMatrix]) -> ComplexMatrix {
    let mut acc = ComplexMatrix::zeros(subbands[0].rows(), subbands[0].cols());
    let w = C64::new(1.0 / subbands.len() as f64, 0.0);
    for f in subbands {
        acc.axpy(w, f);
    }
    acc
}

/// Precomputed per-element terms of the wideband cascade.
///
/// `F(Φ) = Σ_n φ_n K_n` with `K_n = mean_t g_t[:, n] h_t[n, :]`, which makes
/// each evaluation `O(N_RIS · N_R · P)` independent of the subband count.
pub struct CascadeBasis {
    terms: Vec<ComplexMatrix>,
}

impl CascadeBasis {
    pub fn new(channels: &ChannelSet) -> Result<Self> {
        let probe = RisConfiguration::uniform(channels.n_ris(), 1, 1.0)?;
        check_cascade_dims(channels, &probe)?;
        let (nr, p) = (channels.n_r(), channels.p_csirs());
        let w = 1.0 / channels.n_subbands() as f64;
        let terms = (0..channels.n_ris())
            .map(|n| {
                let mut k = ComplexMatrix::zeros(nr, p);
                for (h, g) in channels.h.iter().zip(&channels.g) {
                    for i in 0..nr {
                        let gi = g[(i, n)] * w;
                        for j in 0..p {
                            k[(i, j)] += gi * h[(n, j)];
                        }
                    }
                }
                k
            })
            .collect();
        Ok(CascadeBasis { terms })
    }

    pub fn n_ris(&self) -> usize {
        self.terms.len()
    }

    pub fn wideband(&self, phi: &RisConfiguration) -> Result<ComplexMatrix> {
        if phi.len() != self.terms.len() {
            return Err(Error::Dimension(format!("RIS size {} vs basis {}", phi.len(), self.terms.len())));
        }
        let (r, c) = self.terms[0].shape();
        let mut out = ComplexMatrix::zeros(r, c);
        for (k, coeff) in self.terms.iter().zip(phi.coefficients()) {
            out.axpy(coeff, k);
        }
        Ok(out)
    }
}

/// Far-field geometry of the RIS path-loss model. Angles in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossParams {
    pub d_t: f64,
    pub d_r: f64,
    pub d_x: f64,
    pub d_y: f64,
    /// Wavelength.
    pub z: f64,
    pub g_t: f64,
    pub g_r: f64,
    pub alpha_t: f64,
    pub alpha_r: f64,
    pub beta_t: f64,
    pub beta_r: f64,
    pub a_n: f64,
    pub n_ris: usize,
}

impl PathLossParams {
    /// 4 GHz geometry: 38 m / 20 m hops, λ/5 elements, unit gains, 10°
    /// elevation on both sides, lossless reflection.
    pub fn reference(n_ris: usize) -> Self {
        let z = 0.075;
        PathLossParams {
            d_t: 38.0,
            d_r: 20.0,
            d_x: z / 5.0,
            d_y: z / 5.0,
            z,
            g_t: 1.0,
            g_r: 1.0,
            alpha_t: 10f64.to_radians(),
            alpha_r: 10f64.to_radians(),
            beta_t: 0.0,
            beta_r: 0.0,
            a_n: 1.0,
            n_ris,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_t", self.d_t),
            ("d_r", self.d_r),
            ("d_x", self.d_x),
            ("d_y", self.d_y),
            ("z", self.z),
            ("g_t", self.g_t),
            ("g_r", self.g_r),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.a_n) {
            return Err(Error::Domain(format!("a_n must lie in [0, 1], got {}", self.a_n)));
        }
        if self.n_ris == 0 {
            return Err(Error::Domain("n_ris must be positive".into()));
        }
        Ok(())
    }
}

/// Normalized element pattern: `cos³α` on the front half-space, zero behind.
pub fn radiation_pattern(alpha: f64, beta: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&alpha) || !(0.0..=TAU).contains(&beta) {
        return Err(Error::Domain(format!("angles (α={alpha}, β={beta}) outside [0, π] × [0, 2π]")));
    }
    if alpha >= FRAC_PI_2 {
        return Ok(0.0);
    }
    Ok(alpha.cos().powi(3))
}

/// Element scattering gain `4π d_x d_y / z²`.
pub fn scattering_gain(p: &PathLossParams) -> f64 {
    4.0 * PI * p.d_x * p.d_y / (p.z * p.z)
}

/// Far-field RIS path loss as a linear power ratio (≥ 1 means loss).
pub fn path_loss(p: &PathLossParams) -> Result<f64> {
    p.validate()?;
    let pattern = radiation_pattern(p.alpha_t, p.beta_t)? * radiation_pattern(p.alpha_r, p.beta_r)?;
    if pattern <= 0.0 || p.a_n == 0.0 {
        return Err(Error::Domain("zero radiation pattern or amplitude: path loss is infinite".into()));
    }
    let n = p.n_ris as f64;
    let num = 64.0 * PI.powi(3) * (p.d_t * p.d_r).powi(2);
    let den = p.g_t * p.g_r * scattering_gain(p) * n * n * p.d_x * p.d_y * p.z * p.z * pattern * p.a_n * p.a_n;
    Ok(num / den)
}
