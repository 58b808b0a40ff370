mod common;

use std::path::Path;
use std::process::Command;

use common::*;
use jointmoco::forward::{ForwardModel, ForwardOptions};
use jointmoco::prior::{oracle_gaussian_prior, ExternalPrior, ScorePrior};
use jointmoco::sampler::{sample_joint, SamplerConfig, SamplerInit};
use jointmoco::sim::shepp_logan;
use jointmoco::{ComplexGrid, Error};

// score of N(0, (1 + sigma^2) I), computed out of process
const SCRIPT: &str = r#"
import json, sys
import numpy as np
inp, out, sigma = sys.argv[1], sys.argv[2], float(sys.argv[3])
hdr = json.load(open(inp + ".hdr.json"))
x = np.fromfile(inp + ".bin", dtype="<f8")
s = -x / (1.0 + sigma * sigma)
s.astype("<f8").tofile(out + ".bin")
hdr["semantic"] = "image"
json.dump(hdr, open(out + ".hdr.json", "w"))
"#;

fn python_available() -> bool {
    Command::new("python3")
        .args(["-c", "import numpy"])
        .status()
        .is_ok_and(|s| s.success())
}

fn script_prior(dir: &Path) -> ExternalPrior {
    let script = dir.join("score.py");
    std::fs::write(&script, SCRIPT).unwrap();
    ExternalPrior::new(
        vec![
            "python3".into(),
            script.display().to_string(),
            "{input}".into(),
            "{output}".into(),
            "{sigma}".into(),
        ],
        &dir.join("work"),
    )
    .unwrap()
}

#[test]
fn external_score_matches_in_process_score() {
    if !python_available() {
        eprintln!("python3 with numpy not found, skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let ext = script_prior(dir.path());
    let reference = oracle_gaussian_prior(ComplexGrid::zeros(16, 16), 1.0).unwrap();
    let x = random_image(16, 16, 2);
    for sigma in [1.0, 0.037, 1e-3] {
        let a = ext.score(&x, sigma).unwrap();
        let b = reference.score(&x, sigma).unwrap();
        let e = rel_l2(b.data(), a.data());
        assert!(e < 1e-14, "sigma {sigma}: {e}");
    }
}

#[test]
fn sampler_runs_with_external_prior() {
    if !python_available() {
        eprintln!("python3 with numpy not found, skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let ext = script_prior(dir.path());
    let reference = oracle_gaussian_prior(ComplexGrid::zeros(16, 16), 1.0).unwrap();
    let plan = random_plan(16, 16, 2.0, 2, 1);
    let m = random_motion(2, 0.02, 1.0, 1);
    let phi = random_phi(2, 1, 1);
    let y = ForwardModel::new(&plan, ForwardOptions::default())
        .forward(&shepp_logan(16, 16, 1.0).unwrap(), &m, &phi)
        .unwrap()
        .predicted;
    let cfg = SamplerConfig {
        steps: 3,
        inner_loops: 2,
        poly_order: 1,
        ..Default::default()
    };
    let a = sample_joint(&y, &plan, &ext, &cfg, &SamplerInit::default()).map_err(|f| f.error).unwrap();
    let b = sample_joint(&y, &plan, &reference, &cfg, &SamplerInit::default()).map_err(|f| f.error).unwrap();
    let e = rel_l2(b.x.data(), a.x.data());
    assert!(e < 1e-10, "{e}");
}

#[test]
fn failing_command_is_an_external_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = ExternalPrior::new(vec!["false".into()], dir.path()).unwrap();
    let e = p.score(&ComplexGrid::zeros(4, 4), 0.1).unwrap_err();
    assert!(matches!(e, Error::External(_)), "{e}");
    let p = ExternalPrior::new(vec!["/nonexistent/prior".into()], dir.path()).unwrap();
    assert!(matches!(p.score(&ComplexGrid::zeros(4, 4), 0.1), Err(Error::External(_))));
    assert!(ExternalPrior::new(vec![], dir.path()).is_err());
}
