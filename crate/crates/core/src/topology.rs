//! Random D2D placements and the long-term quantities derived from them:
//! path gains, carrier-sensing neighbourhoods, access probabilities and the
//! worst-case cross gain beyond the sensing distance.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, Stream};

/// Transmitter–receiver distances are clamped to this before evaluating a
/// path-loss model.
pub const MIN_LINK_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid topology parameters: {0}")]
    InvalidParams(String),
    #[error("path_gain: distance must be > 0, got {0}")]
    NonPositiveDistance(f64),
    #[error("topology file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathLossModel {
    /// `G_r G_t λ² / (4π d)²`
    Friis {
        rx_gain: f64,
        tx_gain: f64,
        wavelength_m: f64,
    },
    /// Loss in dB of `intercept_db + slope_db · log10(d)`.
    LogDistanceDb { intercept_db: f64, slope_db: f64 },
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel::LogDistanceDb {
            intercept_db: 15.3,
            slope_db: 37.6,
        }
    }
}

/// Linear power gain at distance `d` metres.
pub fn path_gain(d: f64, model: PathLossModel) -> Result<f64, TopologyError> {
    if !(d > 0.0) {
        return Err(TopologyError::NonPositiveDistance(d));
    }
    Ok(match model {
        PathLossModel::Friis {
            rx_gain,
            tx_gain,
            wavelength_m,
        } => {
            let denom = 4.0 * std::f64::consts::PI * d;
            rx_gain * tx_gain * wavelength_m * wavelength_m / (denom * denom)
        }
        PathLossModel::LogDistanceDb {
            intercept_db,
            slope_db,
        } => 10f64.powf(-(intercept_db + slope_db * d.log10()) / 10.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyParams {
    pub num_pairs: usize,
    pub cell_radius_m: f64,
    pub d2d_range_m: f64,
    pub sensing_distance_m: f64,
    pub path_loss: PathLossModel,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            num_pairs: 10,
            cell_radius_m: 500.0,
            d2d_range_m: 50.0,
            sensing_distance_m: 100.0,
            path_loss: PathLossModel::default(),
        }
    }
}

impl TopologyParams {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let mut bad = Vec::new();
        if self.num_pairs < 1 {
            bad.push("num_pairs must be >= 1".to_string());
        }
        if !(self.cell_radius_m > 0.0) {
            bad.push(format!(
                "cell_radius must be > 0, got {}",
                self.cell_radius_m
            ));
        }
        if !(self.d2d_range_m > 0.0) {
            bad.push(format!("d2d_range must be > 0, got {}", self.d2d_range_m));
        }
        if !(self.sensing_distance_m > 0.0) {
            bad.push(format!(
                "sensing_distance must be > 0, got {}",
                self.sensing_distance_m
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(TopologyError::InvalidParams(bad.join("; ")))
        }
    }
}

pub type Point = [f64; 2];

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Output of [`sensing_neighbors`].
#[derive(Debug, Clone, PartialEq)]
pub struct SensingInfo {
    pub neighbors: Vec<Vec<usize>>,
    pub access_prob: Vec<f64>,
    pub worst_cross_gain: f64,
}

/// A fixed placement of `K` transmitter/receiver pairs.
///
/// `gain[k][j]` is the long-term gain from transmitter `j` to receiver `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub tx_positions: Vec<Point>,
    pub rx_positions: Vec<Point>,
    pub gain: Vec<Vec<f64>>,
    pub sensing_distance_m: f64,
    pub neighbors: Vec<Vec<usize>>,
    pub access_prob: Vec<f64>,
    pub worst_cross_gain: f64,
}

impl Topology {
    /// Builds a topology from explicit positions.
    pub fn from_positions(
        tx_positions: Vec<Point>,
        rx_positions: Vec<Point>,
        sensing_distance_m: f64,
        model: PathLossModel,
    ) -> Result<Self, TopologyError> {
        if tx_positions.len() != rx_positions.len() || tx_positions.is_empty() {
            return Err(TopologyError::InvalidParams(format!(
                "need equal, nonzero numbers of tx and rx positions (got {} and {})",
                tx_positions.len(),
                rx_positions.len()
            )));
        }
        if !(sensing_distance_m > 0.0) {
            return Err(TopologyError::InvalidParams(format!(
                "sensing_distance must be > 0, got {sensing_distance_m}"
            )));
        }
        let k = tx_positions.len();
        let mut gain = vec![vec![0.0; k]; k];
        for (rk, row) in gain.iter_mut().enumerate() {
            for (tj, g) in row.iter_mut().enumerate() {
                let d = dist(tx_positions[tj], rx_positions[rk]).max(MIN_LINK_DISTANCE_M);
                *g = path_gain(d, model)?;
            }
        }
        Ok(Self::from_gains(
            tx_positions,
            rx_positions,
            gain,
            sensing_distance_m,
        ))
    }

    /// Builds a topology from positions and an explicit gain matrix. Useful
    /// for hand-constructed test instances.
    pub fn from_gains(
        tx_positions: Vec<Point>,
        rx_positions: Vec<Point>,
        gain: Vec<Vec<f64>>,
        sensing_distance_m: f64,
    ) -> Self {
        let info = sensing_neighbors(&tx_positions, &rx_positions, &gain, sensing_distance_m);
        Self {
            tx_positions,
            rx_positions,
            gain,
            sensing_distance_m,
            neighbors: info.neighbors,
            access_prob: info.access_prob,
            worst_cross_gain: info.worst_cross_gain,
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.tx_positions.len()
    }

    /// `|N_k(δ)| + 1`
    pub fn reuse_count(&self, k: usize) -> usize {
        self.neighbors[k].len() + 1
    }

    pub fn are_neighbors(&self, k: usize, j: usize) -> bool {
        self.neighbors[k].binary_search(&j).is_ok()
    }

    /// Writes the topology as pretty-printed JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        let topo: Topology =
            serde_json::from_str(text).map_err(|e| TopologyError::Format(e.to_string()))?;
        let k = topo.tx_positions.len();
        if topo.rx_positions.len() != k
            || topo.gain.len() != k
            || topo.gain.iter().any(|r| r.len() != k)
        {
            return Err(TopologyError::Format("inconsistent dimensions".into()));
        }
        // derived fields are recomputed so a hand-edited file stays consistent
        Ok(Self::from_gains(
            topo.tx_positions,
            topo.rx_positions,
            topo.gain,
            topo.sensing_distance_m,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<(), TopologyError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TopologyError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// One line per pair: positions, reuse count and direct gain.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for k in 0..self.num_pairs() {
            let _ = writeln!(
                out,
                "pair {k}: tx=({:.1},{:.1}) rx=({:.1},{:.1}) |N|={} nu={:.3} L_kk={:.3e}",
                self.tx_positions[k][0],
                self.tx_positions[k][1],
                self.rx_positions[k][0],
                self.rx_positions[k][1],
                self.neighbors[k].len(),
                self.access_prob[k],
                self.gain[k][k]
            );
        }
        out
    }
}

/// Carrier-sensing neighbourhoods (closed ball on tx–tx distance), access
/// probabilities `1/(|N_k|+1)` and the largest cross gain `L_kj` among pairs
/// whose tx_j → rx_k distance exceeds `δ` (0 if there is none).
pub fn sensing_neighbors(
    tx_positions: &[Point],
    rx_positions: &[Point],
    gain: &[Vec<f64>],
    sensing_distance_m: f64,
) -> SensingInfo {
    let k = tx_positions.len();
    let mut neighbors = vec![Vec::new(); k];
    for a in 0..k {
        for b in 0..k {
            if a != b && dist(tx_positions[a], tx_positions[b]) <= sensing_distance_m {
                neighbors[a].push(b);
            }
        }
    }
    let access_prob = neighbors
        .iter()
        .map(|n| 1.0 / (n.len() as f64 + 1.0))
        .collect();
    let mut worst = 0.0f64;
    for rk in 0..k {
        for tj in 0..k {
            if rk != tj && dist(tx_positions[tj], rx_positions[rk]) > sensing_distance_m {
                worst = worst.max(gain[rk][tj]);
            }
        }
    }
    SensingInfo {
        neighbors,
        access_prob,
        worst_cross_gain: worst,
    }
}

fn uniform_in_disk<R: Rng>(rng: &mut R, center: Point, radius: f64) -> Point {
    let r = radius * rng.gen::<f64>().sqrt();
    let theta = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
}

/// Drops `K` transmitters uniformly in the cell and each receiver uniformly
/// within `d2d_range` of its transmitter.
pub fn generate_topology(params: &TopologyParams, seed: u64) -> Result<Topology, TopologyError> {
    params.validate()?;
    let mut rng = stream_rng(seed, Stream::Topology, 0);
    let mut tx = Vec::with_capacity(params.num_pairs);
    let mut rx = Vec::with_capacity(params.num_pairs);
    for _ in 0..params.num_pairs {
        let t = uniform_in_disk(&mut rng, [0.0, 0.0], params.cell_radius_m);
        let r = uniform_in_disk(&mut rng, t, params.d2d_range_m);
        tx.push(t);
        rx.push(r);
    }
    Topology::from_positions(tx, rx, params.sensing_distance_m, params.path_loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LOGD: PathLossModel = PathLossModel::LogDistanceDb {
        intercept_db: 15.3,
        slope_db: 37.6,
    };

    fn line(xs: &[f64], delta: f64) -> Topology {
        let tx: Vec<Point> = xs.iter().map(|&x| [x, 0.0]).collect();
        let rx: Vec<Point> = xs.iter().map(|&x| [x, 10.0]).collect();
        Topology::from_positions(tx, rx, delta, LOGD).unwrap()
    }

    #[test]
    fn friis_unit_cancellation() {
        let m = PathLossModel::Friis {
            rx_gain: 1.0,
            tx_gain: 1.0,
            wavelength_m: 1.0,
        };
        let g = path_gain(1.0 / (4.0 * std::f64::consts::PI), m).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
        let g1 = path_gain(3.0, m).unwrap();
        let g2 = path_gain(6.0, m).unwrap();
        assert!((g2 / g1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn log_distance_at_100m() {
        let g = path_gain(100.0, LOGD).unwrap();
        assert!((g / 10f64.powf(-9.05) - 1.0).abs() < 1e-12);
        assert!((g - 8.913e-10).abs() < 1e-12);
    }

    #[test]
    fn path_gain_rejects_nonpositive() {
        assert!(path_gain(0.0, LOGD).is_err());
        assert!(path_gain(-3.0, LOGD).is_err());
    }

    #[test]
    fn single_pair_has_no_neighbors() {
        let params = TopologyParams {
            num_pairs: 1,
            ..Default::default()
        };
        let t = generate_topology(&params, 99).unwrap();
        assert!(t.neighbors[0].is_empty());
        assert_eq!(t.access_prob[0], 1.0);
        assert_eq!(t.worst_cross_gain, 0.0);
    }

    #[test]
    fn two_pairs_within_sensing_range() {
        let t = line(&[0.0, 80.0], 100.0);
        assert_eq!(t.neighbors, vec![vec![1], vec![0]]);
        assert_eq!(t.access_prob, vec![0.5, 0.5]);
    }

    #[test]
    fn three_on_a_line() {
        let t = line(&[0.0, 90.0, 180.0], 100.0);
        assert_eq!(t.access_prob, vec![0.5, 1.0 / 3.0, 0.5]);
    }

    #[test]
    fn boundary_distance_is_inside() {
        let t = line(&[0.0, 100.0], 100.0);
        assert_eq!(t.neighbors[0], vec![1]);
    }

    #[test]
    fn just_outside_sensing_distance() {
        let tx = vec![[0.0, 0.0], [101.0, 0.0]];
        let rx = tx.clone();
        let t = Topology::from_positions(tx, rx, 100.0, LOGD).unwrap();
        assert!(t.neighbors[0].is_empty() && t.neighbors[1].is_empty());
        let expected = path_gain(101.0, LOGD).unwrap();
        assert_eq!(t.worst_cross_gain, expected);
        assert_eq!(t.gain[0][1], expected);
    }

    #[test]
    fn rx_clamped_at_minimum_distance() {
        let tx = vec![[0.0, 0.0]];
        let rx = vec![[0.0, 0.0]];
        let t = Topology::from_positions(tx, rx, 100.0, LOGD).unwrap();
        assert_eq!(t.gain[0][0], path_gain(1.0, LOGD).unwrap());
    }

    #[test]
    fn rejects_bad_params() {
        let p = TopologyParams {
            sensing_distance_m: -1.0,
            ..Default::default()
        };
        let err = generate_topology(&p, 1).unwrap_err().to_string();
        assert!(err.contains("sensing_distance"));
    }

    #[test]
    fn receivers_within_range_and_gains_positive() {
        let p = TopologyParams::default();
        let t = generate_topology(&p, 3).unwrap();
        for k in 0..t.num_pairs() {
            assert!(dist(t.tx_positions[k], [0.0, 0.0]) <= p.cell_radius_m);
            assert!(dist(t.tx_positions[k], t.rx_positions[k]) <= p.d2d_range_m);
            assert!(t.gain[k].iter().all(|&g| g > 0.0));
        }
    }

    #[test]
    fn json_round_trip() {
        let t = generate_topology(&TopologyParams::default(), 11).unwrap();
        let back = Topology::from_json(&t.to_json()).unwrap();
        assert_eq!(t, back);
    }

    proptest! {
        #[test]
        fn neighbor_relation_is_symmetric_and_consistent(seed in 0u64..10_000, k in 1usize..15) {
            let p = TopologyParams { num_pairs: k, ..Default::default() };
            let t = generate_topology(&p, seed).unwrap();
            for a in 0..k {
                for &b in &t.neighbors[a] {
                    prop_assert!(t.are_neighbors(b, a));
                }
                prop_assert_eq!(t.access_prob[a], 1.0 / (t.neighbors[a].len() as f64 + 1.0));
            }
            let degree_sum: usize = (0..k).map(|a| t.neighbors[a].len()).sum();
            let indicator_sum: usize = (0..k).map(|j| (0..k).filter(|&a| t.are_neighbors(a, j)).count()).sum();
            prop_assert_eq!(degree_sum, indicator_sum);
        }

        #[test]
        fn larger_sensing_distance_grows_neighborhoods(seed in 0u64..10_000, d1 in 10.0f64..300.0, extra in 0.0f64..300.0) {
            let base = TopologyParams { num_pairs: 8, sensing_distance_m: d1, ..Default::default() };
            let t1 = generate_topology(&base, seed).unwrap();
            let t2 = generate_topology(&TopologyParams { sensing_distance_m: d1 + extra, ..base }, seed).unwrap();
            prop_assert_eq!(&t1.tx_positions, &t2.tx_positions);
            for k in 0..8 {
                for j in &t1.neighbors[k] {
                    prop_assert!(t2.neighbors[k].contains(j));
                }
            }
            prop_assert!(t1.worst_cross_gain >= t2.worst_cross_gain);
        }

        #[test]
        fn same_seed_same_topology(seed in any::<u64>()) {
            let p = TopologyParams::default();
            prop_assert_eq!(generate_topology(&p, seed).unwrap(), generate_topology(&p, seed).unwrap());
        }
    }
}
