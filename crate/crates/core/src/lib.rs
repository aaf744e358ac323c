//! Delay-aware power control for D2D links sharing a channel under CSMA.
//!
//! The crate is organised bottom-up:
//!
//! - [`specfun`]: exponential integral, Lambert W, bracketed root finding
//! - [`topology`]: random drops, path loss, sensing neighbourhoods
//! - [`mac`]: per-slot carrier-sensing access
//! - [`traffic`]: Rayleigh fading and Poisson packet arrivals
//! - [`priority`]: closed-form approximate value function and its gradient
//! - [`controller`]: per-slot power solvers for the proposed policy and baselines
//! - [`sim`]: slotted queue simulation and Monte Carlo evaluation
//! - [`mdp`]: small-instance relative value iteration used as a reference
//! - [`config`] and [`cli`]: file configuration and the experiment driver

pub mod cli;
pub mod config;
pub mod controller;
pub mod mac;
pub mod mdp;
pub mod priority;
pub mod rng;
pub mod sim;
pub mod specfun;
pub mod topology;
pub mod traffic;
