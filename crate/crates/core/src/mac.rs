//! Per-slot MAC output.
//!
//! Matérn type-II thinning: every node draws a uniform mark and accesses the
//! channel iff its mark is strictly the smallest in its sensing
//! neighbourhood. Node `k` is then active with probability exactly
//! `1/(|N_k|+1)`, no two neighbours are ever active together, and slots are
//! independent. The active set is independent but not necessarily maximal.

use rand::Rng;

use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacOutput {
    pub sigma: Vec<bool>,
    pub active: Vec<usize>,
}

impl MacOutput {
    pub fn from_sigma(sigma: Vec<bool>) -> Self {
        let active = sigma
            .iter()
            .enumerate()
            .filter_map(|(k, &s)| s.then_some(k))
            .collect();
        Self { sigma, active }
    }

    /// Everyone active; only meaningful for topologies without neighbours.
    pub fn all_active(k: usize) -> Self {
        Self::from_sigma(vec![true; k])
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.sigma[k]
    }

    /// True iff no two sensing neighbours are active together.
    pub fn is_feasible(&self, topology: &Topology) -> bool {
        self.active
            .iter()
            .all(|&k| topology.neighbors[k].iter().all(|&j| !self.sigma[j]))
    }
}

/// Samples one slot's MAC output. Draws exactly `K` uniforms from `rng`.
pub fn sample_mac_output<R: Rng + ?Sized>(topology: &Topology, rng: &mut R) -> MacOutput {
    let k = topology.num_pairs();
    let marks: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
    sigma_from_marks(topology, &marks)
}

/// The thinning rule applied to given marks. Equal marks go to the lower
/// index.
pub fn sigma_from_marks(topology: &Topology, marks: &[f64]) -> MacOutput {
    let wins = |k: usize, j: usize| marks[k] < marks[j] || (marks[k] == marks[j] && k < j);
    let sigma = (0..marks.len())
        .map(|k| topology.neighbors[k].iter().all(|&j| wins(k, j)))
        .collect();
    MacOutput::from_sigma(sigma)
}
