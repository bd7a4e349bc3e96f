//! Named simulation scenarios on the standard grids.

use super::SimScenario;
use crate::error::{Error, Result};

const PSIS: [f64; 3] = [0.1, 0.25, 0.5];

fn grid(prefix: &str, n_tot: u64, ns: [u64; 4], out: &mut Vec<(String, SimScenario)>) {
    for n in ns {
        for psi in PSIS {
            out.push((format!("{prefix}/N{n}/psi{psi}"), SimScenario::with_psi(n_tot, n, psi)));
        }
    }
}

/// All presets, in table order.
pub fn presets() -> Vec<(String, SimScenario)> {
    let mut out = Vec::new();
    grid("t5", 10_000, [500, 1000, 2500, 5000], &mut out);
    grid("t6", 1000, [50, 100, 250, 500], &mut out);
    grid("b1", 250, [13, 25, 63, 125], &mut out);
    grid("b2", 500, [25, 50, 125, 250], &mut out);
    for p_symp in [0.25, 0.5, 0.75, 0.9] {
        for p_s1 in [0.5, 0.75, 0.9] {
            let mut s = SimScenario::new(1029, 156, 200);
            s.p_symp_case = p_symp;
            s.p_s1_symp = p_s1;
            out.push((format!("b3/psymp{p_symp}/p1symp{p_s1}"), s));
        }
    }
    out
}

pub fn preset_names() -> Vec<String> {
    presets().into_iter().map(|(name, _)| name).collect()
}

pub fn preset(name: &str) -> Result<SimScenario> {
    presets()
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, s)| s)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}
