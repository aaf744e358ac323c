//! Per-slot channel gains and bursty packet arrivals.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use thiserror::Error;

use crate::topology::Topology;

/// Largest mean packet count per slot accepted by [`sample_arrivals`].
pub const MAX_MEAN_PACKETS_PER_SLOT: f64 = 1e9;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("invalid traffic parameters: {0}")]
    Invalid(String),
}

/// Instantaneous power gains, `h[k][j]` from transmitter `j` to receiver `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub h: Vec<Vec<f64>>,
}

/// Draws `H_kj = L_kj · X_kj` with `X_kj ~ Exp(1)` i.i.d. (Rayleigh fading).
/// Always consumes `K²` exponentials, row by row.
pub fn sample_csi<R: Rng + ?Sized>(topology: &Topology, rng: &mut R) -> ChannelSample {
    sample_gains(&topology.gain, rng)
}

pub fn sample_gains<R: Rng + ?Sized>(mean_gain: &[Vec<f64>], rng: &mut R) -> ChannelSample {
    let h = mean_gain
        .iter()
        .map(|row| {
            row.iter()
                .map(|&l| {
                    let x: f64 = Exp1.sample(rng);
                    l * x
                })
                .collect()
        })
        .collect();
    ChannelSample { h }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficParams {
    /// Mean arrival rate per flow, bits per second.
    pub lambda_bps: Vec<f64>,
    pub packet_bits: u64,
    pub slot_s: f64,
}

impl TrafficParams {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let mut bad = Vec::new();
        if self.lambda_bps.iter().any(|&l| !(l > 0.0)) {
            bad.push("every arrival rate must be > 0".to_string());
        }
        if self.packet_bits < 1 {
            bad.push("packet_bits must be >= 1".to_string());
        }
        if !(self.slot_s > 0.0) {
            bad.push(format!("slot duration must be > 0, got {}", self.slot_s));
        }
        for (k, &l) in self.lambda_bps.iter().enumerate() {
            let mean = l * self.slot_s / self.packet_bits as f64;
            if mean > MAX_MEAN_PACKETS_PER_SLOT {
                bad.push(format!(
                    "flow {k}: {mean:.3e} packets per slot exceeds {MAX_MEAN_PACKETS_PER_SLOT:e}"
                ));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(TrafficError::Invalid(bad.join("; ")))
        }
    }

    pub fn mean_packets_per_slot(&self, k: usize) -> f64 {
        self.lambda_bps[k] * self.slot_s / self.packet_bits as f64
    }
}

/// Bits arriving at the end of one slot, per flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSample {
    pub bits: Vec<f64>,
}

/// Poisson packet counts scaled by the packet size, so that the mean number
/// of bits per slot is `λ_k τ`.
pub fn sample_arrivals<R: Rng + ?Sized>(
    params: &TrafficParams,
    rng: &mut R,
) -> Result<ArrivalSample, TrafficError> {
    params.validate()?;
    Ok(sample_arrivals_unchecked(params, rng))
}

/// [`sample_arrivals`] without re-validating the parameters each slot.
pub fn sample_arrivals_unchecked<R: Rng + ?Sized>(
    params: &TrafficParams,
    rng: &mut R,
) -> ArrivalSample {
    let bits = (0..params.lambda_bps.len())
        .map(|k| {
            let mean = params.mean_packets_per_slot(k);
            let count = match Poisson::new(mean) {
                Ok(p) => p.sample(rng),
                Err(_) => 0.0,
            };
            // the sampler can yield -1 for vanishing means
            count.max(0.0) * params.packet_bits as f64
        })
        .collect();
    ArrivalSample { bits }
}

/// Per-flow mean rates drawn uniformly in `[mean(1-spread), mean(1+spread)]`.
pub fn draw_arrival_rates<R: Rng + ?Sized>(
    k: usize,
    mean_bps: f64,
    spread: f64,
    rng: &mut R,
) -> Vec<f64> {
    (0..k)
        .map(|_| {
            let u: f64 = rng.gen();
            mean_bps * (1.0 - spread + 2.0 * spread * u)
        })
        .collect()
}
