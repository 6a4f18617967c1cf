//! Malformed command lines for robustness tests. Every case produced here
//! is invalid by construction and must exit with code 2.

#![allow(dead_code)]

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Case {
    pub label: String,
    pub args: Vec<String>,
    /// Contents of a config file passed with `--config`.
    pub config: Option<String>,
    /// Value for the thread-count variable.
    pub threads: Option<String>,
}

impl Case {
    fn new(label: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            label: label.into(),
            args,
            config: None,
            threads: None,
        }
    }

    /// Full argument vector, writing the config (if any) under `dir`.
    pub fn materialize(&self, dir: &Path, index: usize) -> Vec<String> {
        let mut args = vec!["isoflow".to_string()];
        args.extend(self.args.iter().cloned());
        if let Some(text) = &self.config {
            let path = dir.join(format!("config_{index}.json"));
            std::fs::write(&path, text).expect("write config");
            args.push("--config".into());
            args.push(path.display().to_string());
        }
        args
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Valid command lines the mutations start from.
const BASES: [&str; 6] = [
    "flow run --model concentric --n 2 --theta0 1.0",
    "flow run --model sphere-iso --g 2 --m0 1 --m1 2 --theta0 0.3 --check type1",
    "flow sweep --model sphere-iso --g 1 --grid 3",
    "catalog list --filter g=2",
    "sigma --K 1.25",
    "verify --suite sigma",
];

/// Values that no numeric flag accepts.
const JUNK: [&str; 8] = ["abc", "", "1e", "0x1p3", "1..2", "+-1", "1 2", "½"];

/// Invalid values per flag, valid for the flag's type but outside its domain.
fn out_of_range(flag: &str) -> &'static [&'static str] {
    match flag {
        "--rel-tol" => &["0", "-1", "NaN", "1", "inf"],
        "--abs-tol" => &["0", "-1", "NaN", "2"],
        "--step-ratio" => &["0", "0.9", "NaN", "-0.1"],
        "--target-samples" => &["0", "10000001"],
        "--sample-stride" => &["0"],
        "--t-max" => &["0", "-1", "NaN", "inf"],
        "--theta-stop" => &["0", "-1", "NaN"],
        "--epsilon" => &["0", "-0.1", "NaN", "inf"],
        "--grid" => &["0", "100001"],
        _ => &[],
    }
}

fn numeric_positions(args: &[String]) -> Vec<usize> {
    const NUMERIC: [&str; 7] = ["--n", "--g", "--m0", "--m1", "--theta0", "--grid", "--K"];
    args.iter()
        .enumerate()
        .filter(|(_, a)| NUMERIC.contains(&a.as_str()))
        .map(|(i, _)| i + 1)
        .collect()
}

fn flow_run_case<R: Rng>(rng: &mut R, extra: &str) -> Vec<String> {
    let base = if rng.random_bool(0.5) {
        "flow run --model concentric --n 3 --theta0 1.0"
    } else {
        "flow run --model sphere-iso --g 1 --theta0 1.0"
    };
    words(&format!("{base} {extra}"))
}

const VALID_CONFIG: &str =
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1}, "theta0": 0.3, "checks": ["type1"]}"#;

const BAD_CONFIGS: [&str; 16] = [
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1}, "theta0": 0.3, "colour": 1}"#,
    r#"{"model": {"kind": "torus", "n": 2}, "theta0": 0.3}"#,
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1, "extra": 1}, "theta0": 0.3}"#,
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1}, "theta0": "abc"}"#,
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1}, "theta0": "Sweep"}"#,
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1}, "theta0": 0.3, "grid": -1}"#,
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1}, "theta0": 0.3, "options": {"rel_tol": "x"}}"#,
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1}, "theta0": 0.3, "options": {"tolerance": 1}}"#,
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1}, "theta0": 0.3, "options": {"rel_tol": 0}}"#,
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1}, "theta0": 0.3, "checks": ["nope"]}"#,
    r#"{"model": {"kind": "concentric_spheres", "n": 1}, "theta0": 0.3}"#,
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1}, "theta0": 2.0}"#,
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1}, "theta0": 0.3, "epsilon": -1}"#,
    r#"{"model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 1}, "theta0": 0.3"#,
    "",
    "[1, 2, 3]",
];

/// `count` malformed invocations drawn deterministically from `seed`.
pub fn mutations(seed: u64, count: usize) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| mutation(&mut rng)).collect()
}

fn mutation<R: Rng>(rng: &mut R) -> Case {
    match rng.random_range(0..12) {
        0 => {
            let mut args = words(BASES.choose(rng).unwrap());
            let depth = if args[0] == "flow" || args[0] == "catalog" { 2 } else { 1 };
            let at = rng.random_range(depth..=args.len());
            args.insert(at, format!("--frobnicate-{}", rng.random_range(0..100)));
            Case::new("unknown flag", args)
        }
        1 => {
            let mut args = words(BASES.choose(rng).unwrap());
            let pos = numeric_positions(&args);
            if pos.is_empty() {
                args.push("--bogus".into());
                return Case::new("unknown flag", args);
            }
            let at = *pos.choose(rng).unwrap();
            args[at] = JUNK.choose(rng).unwrap().to_string();
            Case::new("junk numeric value", args)
        }
        2 => {
            let mut args = words(BASES.choose(rng).unwrap());
            let pos = numeric_positions(&args);
            if let Some(&at) = pos.choose(rng) {
                args.remove(at);
                Case::new("missing value", args)
            } else {
                args.pop();
                Case::new("missing value", args)
            }
        }
        3 => {
            let (base, bad): (&str, &[&str]) = match rng.random_range(0..3) {
                0 => ("flow run --model concentric --n 2 --theta0", &["0", "-1", "NaN", "-inf", "inf", "1e101"]),
                1 => (
                    "flow run --model sphere-iso --g 2 --theta0",
                    &["0", "1.5707963267948966", "2", "NaN", "-0.5"],
                ),
                _ => ("flow run --model sphere-iso --g 3 --m0 2 --theta0", &["0", "1.0471975511965976", "7"]),
            };
            let v = bad.choose(rng).unwrap();
            let mut args = words(base);
            args.push(v.to_string());
            Case::new("theta0 out of range", args)
        }
        4 => {
            let params: &[&str] = &[
                "--model concentric --n 0",
                "--model concentric --n 1",
                "--model concentric --n 10001",
                "--model concentric --n 2 --g 2",
                "--model concentric",
                "--model cylinders --k 0 --n 4",
                "--model cylinders --k 3 --n 4",
                "--model cylinders --n 4",
                "--model sphere-iso --g 0",
                "--model sphere-iso --g 4",
                "--model sphere-iso --g 6",
                "--model sphere-iso --g 2 --m0 0",
                "--model sphere-iso --g 2 --m1 0",
                "--model sphere-iso --g 1 --m0 1 --m1 2",
                "--model sphere-iso --g 3 --m0 2 --m1 4",
                "--model sphere-iso",
                "--model sphere-iso --g 2 --n 3",
                "--model torus --n 2",
                "--g 2",
                "--model sphere-iso --g 2 --m0 100000",
            ];
            let p = params.choose(rng).unwrap();
            Case::new("invalid model", words(&format!("flow run {p} --theta0 0.3")))
        }
        5 => {
            let flags = [
                "--rel-tol",
                "--abs-tol",
                "--step-ratio",
                "--target-samples",
                "--sample-stride",
                "--t-max",
                "--theta-stop",
                "--epsilon",
            ];
            let flag = flags.choose(rng).unwrap();
            let v = out_of_range(flag).choose(rng).unwrap();
            Case::new("option out of range", flow_run_case(rng, &format!("{flag} {v}")))
        }
        6 => {
            let v = ["-1", "NaN", "inf", "-inf", "abc"].choose(rng).unwrap();
            let sub = if rng.random_bool(0.5) { "sigma" } else { "verify --suite sigma" };
            Case::new("invalid K", words(&format!("{sub} --K {v}")))
        }
        7 => {
            let v = ["g", "x=1", "g=a", "=2", "g=", "kind", "D2=1", "ambient_dim=-1"].choose(rng).unwrap();
            Case::new("malformed filter", words(&format!("catalog list --filter {v}")))
        }
        8 => {
            let (sub, v) = match rng.random_range(0..4) {
                0 => ("verify --suite", *["nope", "ALL", "type-1"].choose(rng).unwrap()),
                1 => ("flow sweep --model sphere-iso --g 2 --grid", *out_of_range("--grid").choose(rng).unwrap()),
                2 => ("flow run --model sphere-iso --g 2 --theta0 0.3 --check", *["nope", "Type1", "type1,,"].choose(rng).unwrap()),
                _ => ("flow sweep --model concentric --n", "2"),
            };
            Case::new("invalid selection", words(&format!("{sub} {v}")))
        }
        9 => {
            let mut case = Case::new("invalid config", words("flow run"));
            case.config = Some(BAD_CONFIGS.choose(rng).unwrap().to_string());
            case
        }
        10 => {
            let mut case = Case::new("flag overrides config badly", words("flow run --theta0 -3"));
            case.config = Some(VALID_CONFIG.to_string());
            case
        }
        _ => {
            let mut case = Case::new("invalid thread count", words(BASES[4]));
            case.threads = Some(["0", "x", "", "-2", "1.5", "99999"].choose(rng).unwrap().to_string());
            case
        }
    }
}
