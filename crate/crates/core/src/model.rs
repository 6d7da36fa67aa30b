//! Scenario parameters, topology sampling and the additive CSI-error channel model.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every scalar that defines a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub num_aps: usize,
    pub num_ues: usize,
    /// Per-AP fronthaul capacity in bits/s/Hz.
    pub fronthaul_capacity: f64,
    /// Per-AP transmit power budget (linear).
    pub tx_power: f64,
    /// Receiver noise power (linear).
    pub noise_power: f64,
    /// Fraction of the path loss carried by the estimation error, in [0, 1].
    pub relative_csi_error: f64,
    pub region_radius: f64,
    pub ref_distance: f64,
    pub pathloss_exponent: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_aps: 3,
            num_ues: 4,
            fronthaul_capacity: 10.0,
            tx_power: 100.0,
            noise_power: 1.0,
            relative_csi_error: 0.1,
            region_radius: 100.0,
            ref_distance: 30.0,
            pathloss_exponent: 3.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.num_aps == 0 {
            return fail("num_aps must be positive");
        }
        if self.num_ues == 0 {
            return fail("num_ues must be positive");
        }
        for (name, v) in [
            ("fronthaul_capacity", self.fronthaul_capacity),
            ("tx_power", self.tx_power),
            ("noise_power", self.noise_power),
            ("region_radius", self.region_radius),
            ("ref_distance", self.ref_distance),
            ("pathloss_exponent", self.pathloss_exponent),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and > 0 (got {v})")));
            }
        }
        if !(0.0..=1.0).contains(&self.relative_csi_error) {
            return fail("relative_csi_error must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn beta(&self) -> Result<f64> {
        beta_from_fronthaul(self.fronthaul_capacity)
    }

    /// Transmit SNR `P_tx / σ²` in dB.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.tx_power / self.noise_power).log10()
    }

    /// Sets `tx_power` so that `P_tx / σ²` equals the given SNR.
    pub fn set_snr_db(&mut self, snr_db: f64) {
        self.tx_power = self.noise_power * 10f64.powf(snr_db / 10.0);
    }
}

/// Quantization-noise scaling `β = 1/(2^C − 1)` implied by the fronthaul capacity.
pub fn beta_from_fronthaul(capacity: f64) -> Result<f64> {
    if !(capacity.is_finite() && capacity > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "fronthaul capacity must be finite and > 0 (got {capacity})"
        )));
    }
    Ok(1.0 / (capacity.exp2() - 1.0))
}

/// AP and UE placements and the resulting large-scale path losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub ap_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    /// `pathloss[(k, i)]` between UE `k` and AP `i`.
    pub pathloss: DMatrix<f64>,
}

impl Topology {
    /// Builds the topology from explicit positions.
    pub fn from_positions(
        ap_positions: Vec<[f64; 2]>,
        ue_positions: Vec<[f64; 2]>,
        ref_distance: f64,
        exponent: f64,
    ) -> Self {
        let pathloss = DMatrix::from_fn(ue_positions.len(), ap_positions.len(), |k, i| {
            let d = distance(ue_positions[k], ap_positions[i]);
            pathloss_at(d, ref_distance, exponent)
        });
        Self { ap_positions, ue_positions, pathloss }
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// `(d / d_ref)^(-η)`.
pub fn pathloss_at(distance: f64, ref_distance: f64, exponent: f64) -> f64 {
    (distance / ref_distance).powf(-exponent)
}

/// Uniform point on a disk of the given radius (inverse-CDF radius).
pub fn sample_disk_point<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> [f64; 2] {
    let u: f64 = rng.gen();
    let r = radius * u.sqrt();
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    [r * theta.cos(), r * theta.sin()]
}

/// Draws `M` AP and `K` UE positions i.i.d. uniform on the disk.
pub fn sample_topology<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Topology {
    let aps = (0..cfg.num_aps).map(|_| sample_disk_point(cfg.region_radius, rng)).collect();
    let ues = (0..cfg.num_ues).map(|_| sample_disk_point(cfg.region_radius, rng)).collect();
    Topology::from_positions(aps, ues, cfg.ref_distance, cfg.pathloss_exponent)
}

/// Estimated channels, per-entry error variances and (optionally) a true draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// `estimated[(k, i)] = ĥ_{k,i}`.
    pub estimated: DMatrix<Complex64>,
    /// `error_variance[(k, i)] = z_{k,i}`.
    pub error_variance: DMatrix<f64>,
    pub true_channel: Option<DMatrix<Complex64>>,
}

impl ChannelSet {
    pub fn new(estimated: DMatrix<Complex64>, error_variance: DMatrix<f64>) -> Result<Self> {
        if estimated.shape() != error_variance.shape() {
            return Err(Error::Dimension(format!(
                "estimate {:?} vs error variance {:?}",
                estimated.shape(),
                error_variance.shape()
            )));
        }
        if error_variance.iter().any(|z| !(*z >= 0.0)) {
            return Err(Error::InvalidConfig("error variances must be nonnegative".into()));
        }
        Ok(Self { estimated, error_variance, true_channel: None })
    }

    pub fn num_ues(&self) -> usize {
        self.estimated.nrows()
    }

    pub fn num_aps(&self) -> usize {
        self.estimated.ncols()
    }

    /// `ĥ_k` as a column vector.
    pub fn estimate(&self, k: usize) -> DVector<Complex64> {
        self.estimated.row(k).transpose()
    }

    pub fn error_variances(&self, k: usize) -> DVector<f64> {
        self.error_variance.row(k).transpose()
    }

    pub fn gain(&self, k: usize) -> f64 {
        self.estimated.row(k).iter().map(|h| h.norm_sqr()).sum()
    }

    /// Copy with every error variance forced to zero (the non-robust design view).
    pub fn without_errors(&self) -> Self {
        Self {
            estimated: self.estimated.clone(),
            error_variance: DMatrix::zeros(self.num_ues(), self.num_aps()),
            true_channel: None,
        }
    }
}

/// Circularly-symmetric complex Gaussian with the given variance.
pub fn sample_cn<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Splits each path loss into estimate and error power and draws one fading realization.
pub fn sample_channels<R: Rng + ?Sized>(
    topology: &Topology,
    rho_z: f64,
    rng: &mut R,
) -> Result<ChannelSet> {
    if !(0.0..=1.0).contains(&rho_z) {
        return Err(Error::InvalidConfig(format!("relative CSI error {rho_z} outside [0, 1]")));
    }
    let (k_n, m_n) = topology.pathloss.shape();
    let mut estimated = DMatrix::zeros(k_n, m_n);
    let mut error = DMatrix::zeros(k_n, m_n);
    let mut truth = DMatrix::zeros(k_n, m_n);
    // Draw order is fixed (row-major, estimate then error) so that equal seeds
    // reproduce identical sets regardless of rho_z.
    for k in 0..k_n {
        for i in 0..m_n {
            let alpha = topology.pathloss[(k, i)];
            let h_hat = sample_cn((1.0 - rho_z) * alpha, rng);
            let e = sample_cn(rho_z * alpha, rng);
            estimated[(k, i)] = h_hat;
            error[(k, i)] = rho_z * alpha;
            truth[(k, i)] = h_hat + e;
        }
    }
    Ok(ChannelSet { estimated, error_variance: error, true_channel: Some(truth) })
}
