//! Verification suites behind `aztec verify`.

use crate::{Command, Manifest};
use aztec_core::heights::{loop_height, Flavor, HeightField};
use aztec_core::io::{import_covering, CoveringExport};
use aztec_core::kernels::ScaledPoint;
use aztec_core::lattice::{build_diamond, Covering};
use aztec_core::sampler::{boltzmann_chi_square, chi_square_against_enumeration};
use aztec_core::stats::slope;
use aztec_core::verify::{
    central_a_edge, coupling_tv, double_edge_report, loop_report, loop_symmetry, smooth_independence, tail_samples,
};
use aztec_core::Error;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::Path;

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Peierls,
    Coupling,
    Independence,
    Symmetry,
    Boltzmann,
    All,
}

/// One pass/fail line of a report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub pass: bool,
    /// Set on checks whose failure is a documented limitation of the
    /// finite-size setting; such failures do not fail the run.
    pub known_defect: Option<String>,
    pub detail: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub failures: usize,
    pub known_defect_failures: usize,
    pub pass: bool,
}

/// Known limitation of the coupling slope at m <= 16.
pub const COUPLING_SLOPE_NOTE: &str = "the m^(-1/3) rate is an upper bound; for m <= 16 the floor in the scaled \
location moves the box by up to 4/m^(1/3) Airy units and dominates the trend";

fn check(suite: &str, name: impl Into<String>, pass: bool, detail: serde_json::Value) -> Check {
    Check { suite: suite.into(), name: name.into(), pass, known_defect: None, detail }
}

pub fn run_suite(suite: Suite, seed: u64, samples: Option<usize>, samples_dir: Option<&Path>) -> Result<VerifyReport, Error> {
    let mut checks = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Boltzmann {
        boltzmann(&mut checks, seed, samples, samples_dir)?;
    }
    if all || suite == Suite::Peierls {
        peierls(&mut checks, seed, samples)?;
    }
    if all || suite == Suite::Coupling {
        coupling(&mut checks)?;
    }
    if all || suite == Suite::Independence {
        independence(&mut checks)?;
    }
    if all || suite == Suite::Symmetry {
        symmetry(&mut checks, seed, samples)?;
    }
    let failures = checks.iter().filter(|c| !c.pass && c.known_defect.is_none()).count();
    let known_defect_failures = checks.iter().filter(|c| !c.pass && c.known_defect.is_some()).count();
    Ok(VerifyReport { suite, seed, checks, failures, known_defect_failures, pass: failures == 0 })
}

const SIGNIFICANCE: f64 = 1e-3;

fn boltzmann(checks: &mut Vec<Check>, seed: u64, samples: Option<usize>, dir: Option<&Path>) -> Result<(), Error> {
    if let Some(dir) = dir {
        let man: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let Command::Sample { m, a, .. } = man.config else {
            return Err(Error::InvalidParameter(format!("{} is not a sample manifest", dir.display())));
        };
        let g = build_diamond(m, a, 1.0)?;
        let covs: Vec<Covering> = man
            .files
            .iter()
            .map(|f| {
                let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join(f))?)?;
                let ex: CoveringExport = serde_json::from_value(v["data"].clone())?;
                import_covering(&g.graph, &ex)
            })
            .collect::<Result<_, Error>>()?;
        let t = chi_square_against_enumeration(&g, &covs)?;
        checks.push(check(
            "boltzmann",
            format!("chi-square m={m} a={a} ({} files)", covs.len()),
            t.p_value > SIGNIFICANCE,
            json!(t),
        ));
        return Ok(());
    }
    let n = samples.unwrap_or(100_000);
    for a in [0.2, 0.5, 0.9] {
        let t = boltzmann_chi_square(4, a, seed, n)?;
        checks.push(check("boltzmann", format!("chi-square m=1 a={a}"), t.p_value > SIGNIFICANCE, json!({"samples": n, "test": t})));
    }
    Ok(())
}

fn peierls(checks: &mut Vec<Check>, seed: u64, samples: Option<usize>) -> Result<(), Error> {
    let (n, count) = (128, samples.unwrap_or(10_000));
    let s = [central_a_edge(n)];
    let ts = tail_samples(n, 0.2, &s, count, seed)?;
    for d in [4, 8] {
        let r = loop_report(&ts, 0.2, d, 1, n)?;
        checks.push(check("peierls", format!("loops a=0.2 d={d}"), r.pass, json!(r)));
    }
    for a in [0.5, 0.9] {
        let ts = tail_samples(n, a, &s, count, seed.wrapping_add(1))?;
        for d in [6, 10] {
            let r = double_edge_report(&ts, a, d, 1, n)?;
            checks.push(check("peierls", format!("double edges a={a} d={d}"), r.pass, json!(r)));
        }
    }
    Ok(())
}

fn coupling(checks: &mut Vec<Check>) -> Result<(), Error> {
    let loc = ScaledPoint { f: (1, 1), ..Default::default() };
    let ms = [4usize, 8, 16];
    let mut tv = Vec::new();
    for &m in &ms {
        let r = coupling_tv(m, 0.4, &loc)?;
        let ok = (r.sum_az - 1.0).abs() < 1e-8 && (r.sum_sm - 1.0).abs() < 1e-8;
        tv.push(r.d_tv);
        checks.push(check("coupling", format!("normalised m={m}"), ok, json!(r)));
    }
    let decreasing = tv.windows(2).all(|w| w[1] < w[0]);
    checks.push(check("coupling", "d_TV strictly decreasing in m", decreasing, json!({"m": ms, "d_tv": tv})));
    let x: Vec<f64> = ms.iter().map(|&m| (m as f64).ln()).collect();
    let y: Vec<f64> = tv.iter().map(|t| t.ln()).collect();
    let k = slope(&x, &y);
    let mut c = check("coupling", "log-log slope within -1/3 +- 0.2", (k + 1.0 / 3.0).abs() <= 0.2, json!({"slope": k}));
    if !c.pass {
        c.known_defect = Some(COUPLING_SLOPE_NOTE.into());
    }
    checks.push(c);
    Ok(())
}

fn independence(checks: &mut Vec<Check>) -> Result<(), Error> {
    let seps = [8, 16, 32];
    let mut d = Vec::new();
    for &s in &seps {
        let r = smooth_independence(0.5, (1, 1), s)?;
        d.push(r.discrepancy);
        checks.push(check("independence", format!("joint law normalised sep={s}"), (r.joint_sum - 1.0).abs() < 1e-8, json!(r)));
    }
    let decreasing = d.windows(2).all(|w| w[1] < w[0]);
    checks.push(check("independence", "discrepancy strictly decreasing", decreasing, json!({"separation": seps, "discrepancy": d})));
    checks.push(check("independence", "discrepancy at sep 32 below 1e-3", d[2] < 1e-3, json!({"discrepancy": d[2]})));
    let rejected = smooth_independence(0.5, (1, 1), 0).is_err();
    checks.push(check("independence", "separation 0 rejected", rejected, json!({})));
    Ok(())
}

fn symmetry(checks: &mut Vec<Check>, seed: u64, samples: Option<usize>) -> Result<(), Error> {
    let r = loop_symmetry(16, 0.3, (1, 1), samples.unwrap_or(10_000), seed)?;
    checks.push(check("symmetry", "mean loop height within 3 SE of 0", r.pass, json!(r)));
    checks.push(check(
        "symmetry",
        "flip invariance",
        r.flip_p_value > SIGNIFICANCE,
        json!({"p_value": r.flip_p_value}),
    ));
    let mut t = HeightField::empty(Flavor::AHeight, (-3, -3, 3, 3));
    for x in (-3..=3).step_by(2) {
        for y in (-3..=3).step_by(2) {
            t.set((x, y), 7);
        }
    }
    let hl = loop_height(&t, &[])?;
    let zero = hl.iter().all(|(_, v)| v == 0);
    checks.push(check("symmetry", "no loops gives zero loop height", zero, json!({})));
    Ok(())
}
