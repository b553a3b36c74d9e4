//! Shared fixtures for the integration and acceptance suites.
#![allow(dead_code)] // not every test target uses every fixture

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use sgf_core::env::{CanvasConfig, Env};
use sgf_core::netlist::{parse_canonical, Module, Net, Netlist};

pub const TOY3_JSON: &str = r#"{
  "name": "toy3",
  "modules": [
    {"name": "A", "w": 2, "h": 2},
    {"name": "B", "w": 2, "h": 1},
    {"name": "C", "w": 1, "h": 1}
  ],
  "nets": [["A", "B"], ["B", "C"], ["A", "B"]]
}"#;

pub fn toy3() -> Netlist {
    parse_canonical(TOY3_JSON).unwrap()
}

pub fn toy3_env() -> Env {
    Env::new(toy3(), CanvasConfig::new(6, 6, 2).unwrap()).unwrap()
}

/// Fixed 10-module netlist used by the training-scale checks. Deterministic
/// by construction (seeded), small enough for a 16x16x2 canvas.
pub fn gen10() -> Netlist {
    random_netlist(10, 15, 4, 0xF10C)
}

/// Seeded random netlist: `n` modules with dimensions in 1..=max_dim and
/// `nets` random 2-3 pin nets (connected pairs distinct).
pub fn random_netlist(n: usize, nets: usize, max_dim: usize, seed: u64) -> Netlist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modules: Vec<Module> = (0..n)
        .map(|id| Module {
            id,
            name: format!("m{id}"),
            width: rng.random_range(1..=max_dim),
            height: rng.random_range(1..=max_dim),
        })
        .collect();
    let mut out_nets = Vec::new();
    while out_nets.len() < nets {
        let pins = if rng.random_bool(0.3) { 3 } else { 2 };
        let mut chosen: Vec<usize> = Vec::new();
        while chosen.len() < pins.min(n) {
            let pick = rng.random_range(0..n);
            if !chosen.contains(&pick) {
                chosen.push(pick);
            }
        }
        if chosen.len() < 2 {
            continue;
        }
        chosen.sort_unstable();
        out_nets.push(Net { id: out_nets.len(), pins: chosen });
    }
    Netlist { name: format!("rand{n}-{seed:x}"), modules, nets: out_nets }
}
