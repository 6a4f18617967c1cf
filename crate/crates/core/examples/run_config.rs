//! Drive the command-line front end in-process from a JSON run
//! configuration, overriding one field with a flag.

use isoflow::cli::{self, RunConfig};

const CONFIG: &str = r#"{
    "model": {"kind": "isoparametric_sphere", "g": 2, "m0": 1, "m1": 2},
    "theta0": 0.4,
    "checks": ["type1", "rate", "bounds", "gradient", "volume", "sigma", "extrinsic"],
    "epsilon": 0.1,
    "K": 1.0
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::from_json(CONFIG)?;
    println!("parsed config: {cfg:?}");
    let dir = std::env::temp_dir().join("isoflow_run_config");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("run.json");
    std::fs::write(&path, CONFIG)?;
    let args = ["isoflow", "flow", "run", "--config", path.to_str().unwrap(), "--seed", "7"];
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(args, &mut out, &mut err);
    print!("{}", String::from_utf8_lossy(&out));
    eprint!("{}", String::from_utf8_lossy(&err));
    println!("exit code {code}");
    Ok(())
}
